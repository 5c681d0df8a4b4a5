"""Backend selection for the hot elementwise kernels.

The compiled extension is used when it was built and ``WDNOPT_PURE_PYTHON``
is unset; otherwise the numpy fallback is used. Both expose the same
functions with identical semantics.
"""

import os

from . import _pykernels

BACKEND = "python"
if not os.environ.get("WDNOPT_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
else:
    _impl = _pykernels

hw_phi = _impl.hw_phi
qa_phi = _impl.qa_phi
sigmoid_pair = _impl.sigmoid_pair
nondominated_2d = _impl.nondominated_2d


def backends():
    """Available kernel modules keyed by name (for tests and benchmarks)."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
