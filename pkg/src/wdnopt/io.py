"""Run configuration, result files and manifests.

Every file is written atomically (temporary file in the target directory,
then ``os.replace``). Floats are written with ``repr`` so reruns of the same
command produce byte-identical files.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io as _io
import json
import math
import os
import platform
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import objectives as obj
from .control import SCPOptions, ValveConfig
from .errors import ValidationError
from .network import DEFAULT_ALPHA_MAX, DEFAULT_REGULATORY_HEAD, DEFAULT_U_MAX, DEFAULT_U_MIN
from .placement import PlacementOptions

DEFAULT_SEED = 20240601
DATA_DIR = Path(__file__).resolve().parent / "data"
BUILTIN_PREFIX = "builtin:"


def builtin_networks():
    """Names of the bundled networks."""
    return sorted(p.stem for p in DATA_DIR.glob("*.inp"))


def resolve_network_path(name):
    """Path of a network argument; ``builtin:<name>`` selects a bundled file."""
    if str(name).startswith(BUILTIN_PREFIX):
        stem = str(name)[len(BUILTIN_PREFIX):]
        path = DATA_DIR / f"{stem}.inp"
        if not path.exists():
            raise FileNotFoundError(f"no bundled network {stem!r}; available: {', '.join(builtin_networks())}")
        return path
    return Path(name)


# -- atomic writes -----------------------------------------------------------


def atomic_write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _plain(value):
    """JSON-ready copy: numpy scalars/arrays to Python, non-finite floats to ``None``."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else None
    return value


def dumps_json(data):
    return json.dumps(_plain(data), indent=2, sort_keys=True) + "\n"


def atomic_write_json(path, data):
    return atomic_write_text(path, dumps_json(data))


def _cell(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return repr(v) if math.isfinite(v) else ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return str(v)


def csv_text(header, rows):
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        vals = [r[h] for h in header] if isinstance(r, dict) else r
        w.writerow([_cell(v) for v in vals])
    return buf.getvalue()


def write_csv(path, header, rows):
    return atomic_write_text(path, csv_text(header, rows))


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# -- run configuration -------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """Scenario, bound, objective and solver options of one command."""

    steps: int | None = None
    step_minutes: float | None = None
    demand_scale: float = 1.0
    multipliers: tuple | None = None
    u_max: float = DEFAULT_U_MAX
    u_min: float = DEFAULT_U_MIN
    regulatory_head: float = DEFAULT_REGULATORY_HEAD
    alpha_max: float = DEFAULT_ALPHA_MAX
    rho: float = obj.DEFAULT_RHO
    seed: int = DEFAULT_SEED
    trials: int = 20
    obbt_rounds: int = 1
    obbt_fraction: float = 0.1
    enum_cap: int = 10
    local_search: int = 5
    search_starts: int = 3
    max_iter: int = 100
    rtol: float = 1e-6
    penalty: float = 1e3
    initial_radius: float = 0.2
    feas_tol: float = 1e-5
    refine_hw: bool = True
    pcv_candidates: tuple | None = None
    afv_candidates: tuple | None = None
    threads: int = 1

    _positive = ("step_minutes", "demand_scale", "u_max", "u_min", "rho", "trials", "enum_cap", "max_iter",
                 "rtol", "penalty", "initial_radius", "feas_tol", "threads", "search_starts")
    _nonnegative = ("regulatory_head", "alpha_max", "obbt_rounds", "obbt_fraction", "local_search", "seed")

    def __post_init__(self):
        for name in self._positive:
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValidationError(f"option {name} must be positive (got {v!r})", name)
        for name in self._nonnegative:
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValidationError(f"option {name} must be nonnegative (got {v!r})", name)
        if self.steps is not None and self.steps < 1:
            raise ValidationError("option steps must be >= 1", "steps")
        if self.u_min >= self.u_max:
            raise ValidationError("u_min must be below u_max", "u_min")
        if self.obbt_fraction > 1:
            raise ValidationError("obbt_fraction must lie in [0, 1]", "obbt_fraction")
        for name in ("multipliers", "pcv_candidates", "afv_candidates"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, tuple(v))

    @classmethod
    def fields(cls):
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_dict(cls, data):
        """Flat or sectioned (``scenario``, ``bounds``, ``objective``, ``solver``, ``candidates``) mapping."""
        flat = {}
        for key, value in (data or {}).items():
            if key in ("scenario", "bounds", "objective", "solver") and isinstance(value, dict):
                flat.update(value)
            elif key == "candidates" and isinstance(value, dict):
                if "pcv_links" in value:
                    flat["pcv_candidates"] = value["pcv_links"]
                if "afv_nodes" in value:
                    flat["afv_candidates"] = value["afv_nodes"]
            else:
                flat[key] = value
        known = set(cls.fields())
        unknown = sorted(set(flat) - known)
        if unknown:
            raise ValidationError(f"unknown config option(s): {', '.join(unknown)}", unknown[0])
        try:
            return cls(**flat)
        except TypeError as exc:
            raise ValidationError(f"bad config value: {exc}") from None

    def to_dict(self):
        return {f: _plain(getattr(self, f)) for f in self.fields()}

    def replace(self, **changes):
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})

    def scp_options(self):
        return SCPOptions(
            max_iter=self.max_iter, rtol=self.rtol, penalty=self.penalty, initial_radius=self.initial_radius,
            feas_tol=self.feas_tol, refine_hw=self.refine_hw,
        )

    def placement_options(self):
        return PlacementOptions(
            trials=self.trials, seed=self.seed, obbt_rounds=self.obbt_rounds, obbt_fraction=self.obbt_fraction,
            enum_cap=self.enum_cap, local_search=self.local_search, search_starts=self.search_starts,
            workers=self.threads, scp=self.scp_options(),
        )


def load_run_config(path):
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(data, dict):
        raise ValidationError(f"config {path}: top level must be an object")
    return RunConfig.from_dict(data)


def load_valve_config(path):
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"valve config {path}: invalid JSON ({exc.msg})") from None
    if isinstance(data, dict) and "config" in data and isinstance(data["config"], dict):
        data = data["config"]
    if not isinstance(data, dict):
        raise ValidationError(f"valve config {path}: expected an object")
    return ValveConfig.from_dict(data)


# -- result tables -----------------------------------------------------------

NODE_HEADER = ("step", "node", "head_m", "pressure_m", "flushing_lps")
LINK_HEADER = ("step", "link", "flow_m3s", "velocity_ms", "headloss_m", "setting_m")


def node_rows(model, state, settings=None):
    ids = [n.id for n in model.nodes]
    rows = []
    for t in range(state.n_t):
        p = state.h[t] - model.elevation
        a = settings.alpha[t] if settings is not None else np.zeros(model.n_nodes)
        for i, nid in enumerate(ids):
            rows.append((t + 1, nid, float(state.h[t, i]), float(p[i]), 1000.0 * float(a[i])))
    return rows


def link_rows(model, state, settings=None):
    ids = [l.id for l in model.links]
    rows = []
    for t in range(state.n_t):
        u = state.q[t] / model.area
        e = settings.eta[t] if settings is not None else np.zeros(model.n_links)
        for j, lid in enumerate(ids):
            rows.append((t + 1, lid, float(state.q[t, j]), float(u[j]), float(state.theta[t, j]), float(e[j])))
    return rows


def write_state(out_dir, model, state, settings=None):
    out_dir = Path(out_dir)
    return [
        write_csv(out_dir / "nodes.csv", NODE_HEADER, node_rows(model, state, settings)),
        write_csv(out_dir / "links.csv", LINK_HEADER, link_rows(model, state, settings)),
    ]


SETTINGS_HEADER = ("step", "element", "kind", "value")


def settings_rows(model, config, settings):
    rows = []
    for t in range(settings.n_t):
        for j in config.pcv_links:
            rows.append((t + 1, j, "pcv_headloss_m", float(settings.eta[t, model.link_index[j]])))
        for i in config.afv_nodes:
            rows.append((t + 1, i, "afv_flow_lps", 1000.0 * float(settings.alpha[t, model.node_index[i]])))
    return rows


FRONT_HEADER = ("omega", "azp_m", "scc_pct", "azp_norm", "scc_norm", "dominated", "config_id")


def front_rows(points):
    rows = []
    for p in points:
        rows.append((
            p.weight, p.azp, 100.0 * p.scc if p.ok else float("nan"), p.normalized[0], p.normalized[1],
            bool(p.dominated) if p.ok else "", p.config.config_id if p.config is not None else "",
        ))
    return rows


PLAN_HEADER = ("step", "mode", "azp_m", "scc_pct", "flushing_total_lps", "max_setting_change_m")
CDF_HEADER = ("range_m", "cum_fraction")


def read_settings_csv(path, model, n_t):
    """Control settings from a settings CSV (``step, element, kind, value``)."""
    from .hydraulics import ControlSettings

    settings = ControlSettings.zeros(model, n_t)
    for row in read_csv(path):
        t = int(row["step"]) - 1
        if not 0 <= t < n_t:
            raise ValidationError(f"settings step {row['step']} outside [1, {n_t}]")
        kind, el, val = row["kind"], row["element"], float(row["value"])
        if kind == "pcv_headloss_m":
            if el not in model.link_index:
                raise ValidationError(f"settings reference unknown link {el!r}", el)
            settings.eta[t, model.link_index[el]] = val
        elif kind == "afv_flow_lps":
            if el not in model.node_index:
                raise ValidationError(f"settings reference unknown node {el!r}", el)
            settings.alpha[t, model.node_index[el]] = val / 1000.0
        else:
            raise ValidationError(f"unknown settings kind {kind!r}")
    return settings


# -- manifest ----------------------------------------------------------------


def versions():
    import scipy

    from . import __version__, kernels

    return {
        "wdnopt": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
        "python": platform.python_version(), "kernels": kernels.BACKEND,
    }


@dataclass
class Manifest:
    command: str
    argv: list
    config: dict
    network: dict
    outputs: dict = field(default_factory=dict)
    versions: dict = field(default_factory=versions)

    def add_outputs(self, out_dir, paths):
        out_dir = Path(out_dir)
        for p in paths:
            p = Path(p)
            self.outputs[p.relative_to(out_dir).as_posix()] = sha256_file(p)

    def to_dict(self):
        return dataclasses.asdict(self)

    def write(self, out_dir):
        return atomic_write_json(Path(out_dir) / "manifest.json", self.to_dict())


def load_manifest(path):
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"manifest {path}: invalid JSON ({exc.msg})") from None
    for key in ("command", "argv", "network"):
        if key not in data:
            raise ValidationError(f"manifest {path} lacks {key!r}")
    return data
