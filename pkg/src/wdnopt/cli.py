"""Command-line interface: ``wdnopt {simulate,place,pareto,adapt,rerun}``.

Exit codes: 0 success, 1 solver failure, 2 input error, 3 internal error.
Failures print a JSON error document (``{"error": {"kind", "message", ...}}``)
on stderr and, when an output directory was given, to ``error.json`` there.
"""

from __future__ import annotations

import argparse
import os
import sys
import traceback
import warnings
from pathlib import Path

import numpy as np

from . import adaptive, hydraulics, io, objectives
from .control import Objective, feasibility_report
from .errors import InfeasibleError, InputError, SolverError, ValidationError, WdnoptError
from .inp import read_network
from .network import build_scenario
from .pareto import Design, compute_anchors, hierarchical_stages, weighted_sum_front
from .placement import solve_vp_minlp

EXIT_OK, EXIT_SOLVER, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3
THREADS_ENV = "WDNOPT_THREADS"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _threads_default():
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"{THREADS_ENV} must be a positive integer (got {raw!r})") from None
    if n < 1:
        raise ValidationError(f"{THREADS_ENV} must be a positive integer (got {raw!r})")
    return n


def _common(p):
    p.add_argument("network", help="INP file, or builtin:<name> for a bundled network")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="run configuration JSON")
    p.add_argument("--steps", type=int, help="number of time steps")
    p.add_argument("--step-minutes", type=float, help="step length [min]")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help=f"worker processes (default ${THREADS_ENV} or 1)")


def _solver_flags(p):
    p.add_argument("--trials", type=int, help="randomized rounding trials")
    p.add_argument("--obbt-rounds", type=int, help="bound tightening rounds (0 disables)")
    p.add_argument("--enum-cap", type=int, help="largest n_v for direction enumeration")
    p.add_argument("--local-search", type=int, help="adjacent-swap search rounds (0 disables)")


def build_parser():
    ap = _Parser(prog="wdnopt", description="Pressure-control and flushing valve placement and scheduling")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="extended-period simulation with optional settings")
    _common(p)
    p.add_argument("--model", choices=("hw", "qa"), default="hw", help="head-loss model")
    p.add_argument("--valves", help="valve config JSON (for settings)")
    p.add_argument("--settings", help="settings CSV written by place/adapt")

    p = sub.add_parser("place", help="joint valve placement and control")
    _common(p)
    _solver_flags(p)
    p.add_argument("--objective", choices=("azp", "scc"), default="azp")
    p.add_argument("--nv", type=int, required=True, help="number of PCVs")
    p.add_argument("--nf", type=int, required=True, help="number of AFVs")

    p = sub.add_parser("pareto", help="weighted-sum AZP-SCC front")
    _common(p)
    _solver_flags(p)
    p.add_argument("--design", default="joint", help="joint | hierarchical | fixed:<config.json>")
    p.add_argument("--nv", type=int, default=0)
    p.add_argument("--nf", type=int, default=0)
    p.add_argument("--weights", type=int, default=10, help="number of evenly spaced weights in [0, 1]")

    p = sub.add_parser("adapt", help="AZP control with an SCC window")
    _common(p)
    p.add_argument("--valves", required=True, help="valve config JSON (place output)")
    p.add_argument("--window", action="append", help="SCC window HH:MM-HH:MM (repeatable)")
    p.add_argument("--compare", action="store_true", help="also evaluate peak and minimum-demand windows")

    p = sub.add_parser("rerun", help="repeat a command from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    return ap


# -- helpers -------------------------------------------------------------------


def _run_config(args):
    if getattr(args, "resolved_config", None) is not None:
        return args.resolved_config
    cfg = io.load_run_config(args.config) if getattr(args, "config", None) else io.RunConfig()
    threads = args.threads if getattr(args, "threads", None) is not None else _threads_default()
    return cfg.replace(
        steps=getattr(args, "steps", None), step_minutes=getattr(args, "step_minutes", None),
        seed=getattr(args, "seed", None), threads=threads, trials=getattr(args, "trials", None),
        obbt_rounds=getattr(args, "obbt_rounds", None), enum_cap=getattr(args, "enum_cap", None),
        local_search=getattr(args, "local_search", None),
    )


def _load(args, cfg):
    path = io.resolve_network_path(args.network)
    if not path.exists():
        raise FileNotFoundError(f"network file not found: {path}")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model = read_network(path, u_max=cfg.u_max, u_min=cfg.u_min)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    if cfg.pcv_candidates is not None or cfg.afv_candidates is not None:
        model = model.with_candidates(cfg.pcv_candidates, cfg.afv_candidates)
    scenario = build_scenario(
        model, n_steps=cfg.steps, step_minutes=cfg.step_minutes, multipliers=cfg.multipliers,
        demand_scale=cfg.demand_scale, alpha_max=cfg.alpha_max, regulatory_head=cfg.regulatory_head,
    )
    net = {"path": str(path.resolve()), "sha256": io.sha256_file(path), "argument": args.network}
    return model, scenario, net


def _argv_for_manifest(argv):
    """Argument list without the output directory."""
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == "--out":
            skip = True
            continue
        if a.startswith("--out="):
            continue
        out.append(a)
    return out


def _finish(args, argv, cfg, net, out_dir, paths):
    m = io.Manifest(args.command, _argv_for_manifest(argv), cfg.to_dict(), net)
    m.add_outputs(out_dir, paths)
    m.write(out_dir)
    return EXIT_OK


def _objective_doc(model, state, rho):
    return objectives.evaluate(model, state, rho=rho).as_dict()


# -- commands ------------------------------------------------------------------


def cmd_simulate(args, argv):
    cfg = _run_config(args)
    model, scenario, net = _load(args, cfg)
    out = Path(args.out)
    settings = None
    if args.settings:
        settings = io.read_settings_csv(args.settings, model, scenario.n_t)
    state = hydraulics.solve_eps(model, scenario, settings, mode=args.model)
    e_res, m_res = hydraulics.residual_report(model, state, scenario, settings)
    doc = {
        "model": args.model,
        "n_steps": scenario.n_t,
        "objectives": _objective_doc(model, state, cfg.rho),
        "residuals": {"energy_max_m": float(e_res.max()), "mass_max_m3s": float(m_res.max()),
                      "energy_m": e_res, "mass_m3s": m_res},
        "iterations": state.iterations,
    }
    if args.valves:
        cfg_v = io.load_valve_config(args.valves)
        doc["feasibility"] = _feasibility(model, scenario, cfg_v, settings, state)
    paths = io.write_state(out, model, state, settings)
    paths.append(io.atomic_write_json(out / "objectives.json", doc))
    return _finish(args, argv, cfg, net, out, paths)


def _feasibility(model, scenario, config, settings, state):
    s = settings or hydraulics.ControlSettings.zeros(model, scenario.n_t)
    return feasibility_report(model, scenario, config, s, state)


def _control_doc(sol):
    return {
        "config": sol.config.to_dict(),
        "config_id": sol.config.config_id,
        "objectives": sol.objective.as_dict(),
        "scalar": sol.scalar,
        "qa_scalar": sol.qa_scalar,
        "qa_gap": sol.qa_gap,
        "converged": bool(sol.converged),
        "iterations": int(sol.iterations),
        "max_violation": sol.max_violation,
        "directions_tried": [
            {"directions": ["+" if d > 0 else "-" for d in dirs], "scalar": val} for dirs, val in sol.assignments
        ],
    }


def _write_control(out, model, sol, prefix=""):
    paths = [io.write_csv(out / f"{prefix}settings.csv", io.SETTINGS_HEADER, io.settings_rows(model, sol.config, sol.settings))]
    state = sol.state
    rows = []
    azp = objectives.azp_per_step(model, state)
    scc = objectives.scc_per_step(model, state)
    flush = sol.settings.alpha.sum(axis=1) * 1000.0
    for t in range(state.n_t):
        rows.append((t + 1, float(azp[t]), 100.0 * float(scc[t]), float(flush[t])))
    paths.append(io.write_csv(out / f"{prefix}timeseries.csv", ("step", "azp_m", "scc_pct", "flushing_total_lps"), rows))
    return paths


def cmd_place(args, argv):
    cfg = _run_config(args)
    model, scenario, net = _load(args, cfg)
    out = Path(args.out)
    if args.nv < 0 or args.nf < 0:
        raise ValidationError("--nv and --nf must be nonnegative")
    objective = Objective(args.objective, rho=cfg.rho)
    ps = solve_vp_minlp(model, scenario, args.nv, args.nf, objective, cfg.placement_options())
    doc = _control_doc(ps.control)
    doc.update(objective=args.objective, relaxation_bound=ps.relaxation_bound, gap=ps.gap, n_v=args.nv, n_f=args.nf)
    paths = [io.atomic_write_json(out / "config.json", doc)]
    paths += _write_control(out, model, ps.control)
    paths.append(io.write_csv(
        out / "candidates.csv", ("config_id", "pcv_links", "afv_nodes", "scalar"),
        [(cid, " ".join(l), " ".join(n), val) for cid, l, n, val in ps.candidates],
    ))
    return _finish(args, argv, cfg, net, out, paths)


def _design(args, model, scenario, cfg):
    d = args.design
    if d == "joint":
        return Design.joint(args.nv, args.nf), None
    if d == "hierarchical":
        h = hierarchical_stages(model, scenario, args.nv, args.nf, cfg.placement_options(), cfg.rho)
        return Design.fixed(h.config), h
    if d.startswith("fixed:"):
        vc = io.load_valve_config(d[len("fixed:"):])
        vc.validate(model)
        return Design.fixed(vc, enumerate_directions=False), None
    raise ValidationError(f"unknown design {d!r}; use joint, hierarchical or fixed:<config.json>")


def cmd_pareto(args, argv):
    cfg = _run_config(args)
    if args.weights < 1:
        raise ValidationError("--weights must be >= 1")
    model, scenario, net = _load(args, cfg)
    out = Path(args.out)
    design, stages = _design(args, model, scenario, cfg)
    opts = cfg.placement_options()
    anchors = compute_anchors(model, scenario, design, opts, cfg.rho)
    weights = [float(w) for w in np.linspace(0.0, 1.0, args.weights)] if args.weights > 1 else [0.0]
    points = weighted_sum_front(model, scenario, design, weights, anchors, opts, cfg.rho)
    paths = [io.write_csv(out / "front.csv", io.FRONT_HEADER, io.front_rows(points))]
    doc = {
        "design": args.design,
        "anchors": {
            "azp_anchor": {"azp_m": anchors.azp_anchor[0], "scc_pct": 100 * anchors.azp_anchor[1],
                           "config": anchors.azp_solution.config.to_dict()},
            "scc_anchor": {"azp_m": anchors.scc_anchor[0], "scc_pct": 100 * anchors.scc_anchor[1],
                           "config": anchors.scc_solution.config.to_dict()},
            "utopia": {"azp_m": anchors.utopia[0], "scc_pct": 100 * anchors.utopia[1]},
        },
        "points": [
            {"omega": p.weight, "config_id": p.config.config_id if p.config else None,
             "config": p.config.to_dict() if p.config else None, "dominated": p.dominated, "error": p.error}
            for p in points
        ],
    }
    if stages is not None:
        doc["hierarchical_config"] = stages.config.to_dict()
    paths.append(io.atomic_write_json(out / "front.json", doc))
    for k, p in enumerate(points):
        if p.ok:
            paths.append(io.write_csv(out / "settings" / f"point_{k:02d}.csv", io.SETTINGS_HEADER,
                                      io.settings_rows(model, p.config, p.solution.settings)))
    return _finish(args, argv, cfg, net, out, paths)


def cmd_adapt(args, argv):
    cfg = _run_config(args)
    model, scenario, net = _load(args, cfg)
    out = Path(args.out)
    vc = io.load_valve_config(args.valves)
    vc.validate(model)
    windows = {}
    for k, text in enumerate(args.window or []):
        windows[f"window_{k + 1}" if len(args.window) > 1 else "window"] = adaptive.parse_window(
            text, scenario.step_minutes, scenario.n_t
        )
    if args.compare:
        windows.setdefault("peak", adaptive.demand_window(scenario, 1.0, True))
        windows.setdefault("min_demand", adaptive.demand_window(scenario, 1.0, False))
    if not windows:
        raise ValidationError("adapt needs --window or --compare")
    comp = adaptive.compare_scenarios(model, scenario, vc, windows, cfg.scp_options(), cfg.rho)
    paths = []
    for name, plan in comp.plans.items():
        paths.append(io.write_csv(out / f"plan_{name}.csv", io.PLAN_HEADER, plan.rows(model)))
        paths.append(io.write_csv(out / f"cdf_{name}.csv", io.CDF_HEADER, [tuple(r) for r in plan.pv_stats[1]]))
        paths.append(io.write_csv(out / f"settings_{name}.csv", io.SETTINGS_HEADER,
                                  io.settings_rows(model, vc.canonical(model), plan.settings)))
    header = tuple(comp.rows[0].keys())
    paths.append(io.write_csv(out / "comparison.csv", header, comp.rows))
    return _finish(args, argv, cfg, net, out, paths)


def cmd_rerun(args, argv):
    data = io.load_manifest(args.manifest)
    net = data["network"]
    path = Path(net["path"])
    if not path.exists():
        raise FileNotFoundError(f"network file from the manifest not found: {path}")
    if io.sha256_file(path) != net["sha256"]:
        raise ValidationError(f"network file {path} changed since the manifest was written")
    inner = list(data["argv"])
    if data["command"] not in COMMANDS or data["command"] == "rerun":
        raise ValidationError(f"manifest command {data['command']!r} cannot be rerun")
    args2 = build_parser().parse_args(inner + ["--out", args.out])
    # the resolved options stored in the manifest win over flags and config files
    args2.resolved_config = io.RunConfig.from_dict(data["config"])
    args2.network = str(path)
    return COMMANDS[data["command"]](args2, inner)


COMMANDS = {"simulate": cmd_simulate, "place": cmd_place, "pareto": cmd_pareto, "adapt": cmd_adapt,
            "rerun": cmd_rerun}


def _error_doc(kind, message, exc=None):
    err = {"kind": kind, "message": message}
    for attr in ("line", "section", "entity", "step", "report"):
        v = getattr(exc, attr, None) if exc is not None else None
        if v is not None:
            err[attr] = v
    return {"error": err}


def _out_from_argv(argv):
    for i, a in enumerate(argv):
        if a == "--out" and i + 1 < len(argv):
            return argv[i + 1]
        if a.startswith("--out="):
            return a.split("=", 1)[1]
    return None


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    out_dir = None
    try:
        args = build_parser().parse_args(argv)
        out_dir = getattr(args, "out", None)
        return COMMANDS[args.command](args, argv)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except _UsageError as exc:
        out_dir = _out_from_argv(argv)
        code, doc = EXIT_INPUT, _error_doc("usage", str(exc))
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        code, doc = EXIT_INPUT, _error_doc("io", str(exc))
    except InputError as exc:
        code, doc = EXIT_INPUT, _error_doc(exc.kind, str(exc), exc)
    except SolverError as exc:
        kind = "infeasible" if isinstance(exc, InfeasibleError) else exc.kind
        code, doc = EXIT_SOLVER, _error_doc(kind, str(exc), exc)
    except WdnoptError as exc:
        code, doc = (EXIT_INPUT if exc.kind == "domain" else EXIT_INTERNAL), _error_doc(exc.kind, str(exc), exc)
    except Exception as exc:  # noqa: BLE001
        code, doc = EXIT_INTERNAL, _error_doc("internal", f"{type(exc).__name__}: {exc}")
        doc["error"]["traceback"] = traceback.format_exc().splitlines()[-6:]
    text = io.dumps_json(doc)
    print(text, file=sys.stderr, end="")
    if out_dir:
        try:
            io.atomic_write_text(Path(out_dir) / "error.json", text)
        except OSError:
            pass
    return code


if __name__ == "__main__":
    sys.exit(main())
