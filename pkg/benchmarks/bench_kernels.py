"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 20] [--json out.json]
"""

import argparse
import json
import sys
import timeit

import numpy as np

from wdnopt import kernels


def cases(rng):
    n_links = 317 * 24
    q = rng.normal(0.0, 0.02, n_links)
    r = rng.uniform(10.0, 5e3, n_links)
    a, b = rng.uniform(1e2, 1e4, n_links), rng.uniform(0.0, 10.0, n_links)
    u = rng.normal(0.0, 0.5, n_links)
    f1, f2 = rng.normal(size=2000), rng.normal(size=2000)
    return {
        "hw_phi": lambda k: k.hw_phi(q, r, 1.852, 1e-6),
        "qa_phi": lambda k: k.qa_phi(q, a, b),
        "sigmoid_pair": lambda k: k.sigmoid_pair(u, 0.2, 50.0),
        "nondominated_2d": lambda k: k.nondominated_2d(f1, f2),
    }


def run(repeat=20, number=20):
    impls = kernels.backends()
    rows = []
    for name, fn in cases(np.random.default_rng(0)).items():
        row = {"kernel": name}
        for backend, mod in impls.items():
            fn(mod)  # warm up
            t = min(timeit.repeat(lambda: fn(mod), repeat=repeat, number=number)) / number
            row[f"{backend}_us"] = 1e6 * t
        if "cython" in impls:
            row["speedup"] = row["python_us"] / row["cython_us"]
        rows.append(row)
    return rows


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--json")
    args = p.parse_args(argv)
    rows = run(args.repeat)
    if "cython" not in kernels.backends():
        print("compiled kernels not built; timing the numpy fallback only", file=sys.stderr)
    for row in rows:
        cols = "  ".join(f"{k}={v:10.1f}" for k, v in row.items() if k != "kernel")
        print(f"{row['kernel']:16s} {cols}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
