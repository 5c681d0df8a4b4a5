import json

import numpy as np
import pytest

from wdnopt import cli, io
from wdnopt.control import ValveConfig
from wdnopt.errors import ValidationError
from wdnopt.hydraulics import ControlSettings
from wdnopt.inp import read_network
from wdnopt.network import build_scenario


def run(*argv):
    return cli.main([str(a) for a in argv])


def error_doc(out):
    return json.loads((out / "error.json").read_text())["error"]


def test_simulate_outputs(tmp_path):
    out = tmp_path / "sim"
    assert run("simulate", "builtin:toy_a", "--out", out) == 0
    doc = json.loads((out / "objectives.json").read_text())
    assert doc["n_steps"] == 3
    assert doc["residuals"]["energy_max_m"] <= 1e-6 and doc["residuals"]["mass_max_m3s"] <= 1e-8
    nodes = io.read_csv(out / "nodes.csv")
    assert tuple(nodes[0]) == io.NODE_HEADER and len(nodes) == 3 * 5
    man = io.load_manifest(out / "manifest.json")
    assert set(man["outputs"]) == {"nodes.csv", "links.csv", "objectives.json"}


def test_simulate_qa_vs_hw(tmp_path, toys):
    for mode in ("hw", "qa"):
        assert run("simulate", "builtin:toy_b", "--model", mode, "--out", tmp_path / mode) == 0
    hw = np.array([float(r["head_m"]) for r in io.read_csv(tmp_path / "hw" / "nodes.csv")])
    qa = np.array([float(r["head_m"]) for r in io.read_csv(tmp_path / "qa" / "nodes.csv")])
    m, _ = toys["toy_b"]
    assert np.abs(hw - qa).max() <= 5 * max(l.qa_fit.max_abs_error for l in m.links)


def test_missing_file_is_io_error(tmp_path, capsys):
    out = tmp_path / "x"
    assert run("simulate", tmp_path / "nope.inp", "--out", out) == 2
    assert error_doc(out)["kind"] == "io"
    assert json.loads(capsys.readouterr().err)["error"]["kind"] == "io"


def test_usage_errors(tmp_path):
    assert run("place", "builtin:toy_a", "--out", tmp_path / "u") == 2
    assert error_doc(tmp_path / "u")["kind"] == "usage"
    assert run("bogus") == 2
    assert run("pareto", "builtin:toy_a", "--design", "weird", "--out", tmp_path / "d") == 2
    assert run("adapt", "builtin:toy_a", "--valves", tmp_path / "none.json", "--out", tmp_path / "v") == 2


def test_invalid_network_names_entity(tmp_path):
    text = io.resolve_network_path("builtin:toy_a").read_text().replace("P4\tJ2\tJ5", "P4\tJ2\tX9")
    bad = tmp_path / "bad.inp"
    bad.write_text(text)
    assert run("simulate", bad, "--out", tmp_path / "o") == 2
    err = error_doc(tmp_path / "o")
    assert err["kind"] == "validation" and err["entity"] == "X9"


def test_bad_option_value(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"solver": {"trials": 0}}))
    assert run("simulate", "builtin:toy_a", "--config", cfg, "--out", tmp_path / "o") == 2
    assert error_doc(tmp_path / "o")["entity"] == "trials"


def test_threads_env_validated(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "zero")
    assert run("simulate", "builtin:toy_a", "--out", tmp_path / "o") == 2


def test_infeasible_is_solver_error(tmp_path):
    cfg = tmp_path / "cfg.json"
    m = read_network(io.resolve_network_path("builtin:toy_a"))
    # the pressure floor leaves 1 mm of head at the highest junction
    head = build_scenario(m).source_heads.max()
    cfg.write_text(json.dumps({"bounds": {"regulatory_head": head - float(m.elevation.max()) - 1e-3}}))
    out = tmp_path / "o"
    code = run("place", "builtin:toy_a", "--nv", 1, "--nf", 0, "--trials", 2, "--local-search", 0,
               "--config", cfg, "--out", out)
    assert code == 1
    assert error_doc(out)["kind"] == "infeasible"


def test_place_zero_valves_matches_simulation(tmp_path):
    assert run("place", "builtin:toy_a", "--nv", 0, "--nf", 0, "--out", tmp_path / "p") == 0
    assert run("simulate", "builtin:toy_a", "--out", tmp_path / "s") == 0
    place = json.loads((tmp_path / "p" / "config.json").read_text())
    sim = json.loads((tmp_path / "s" / "objectives.json").read_text())
    assert place["config"] == {"pcv_links": [], "directions": [], "afv_nodes": []}
    assert place["objectives"]["azp_m"] == sim["objectives"]["azp_m"]


def test_valve_config_round_trip(tmp_path):
    cfg = ValveConfig(("P2", "P7"), (1, -1), ("J5",))
    p = tmp_path / "v.json"
    io.atomic_write_json(p, cfg.to_dict())
    assert io.load_valve_config(p) == cfg
    io.atomic_write_json(p, {"config": cfg.to_dict(), "scalar": 1.0})
    assert io.load_valve_config(p) == cfg


def test_settings_csv_round_trip(tmp_path, toys):
    m, sc = toys["toy_a"]
    cfg = ValveConfig(("P2",), (1,), ("J5",))
    eta = np.zeros((sc.n_t, m.n_links))
    alpha = np.zeros((sc.n_t, m.n_nodes))
    eta[:, 1] = [0.5, 1.25, 3.0]
    alpha[:, 4] = [0.001, 0.0, 0.0125]
    p = io.write_csv(tmp_path / "s.csv", io.SETTINGS_HEADER, io.settings_rows(m, cfg, ControlSettings(eta, alpha)))
    back = io.read_settings_csv(p, m, sc.n_t)
    assert np.array_equal(back.eta, eta) and back.alpha == pytest.approx(alpha, abs=1e-18)


def test_csv_floats_round_trip(tmp_path):
    vals = [0.1, 1 / 3, 1e-17, 123456.789012345]
    p = io.write_csv(tmp_path / "f.csv", ("x_m",), [(v,) for v in vals])
    assert [float(r["x_m"]) for r in io.read_csv(p)] == vals


def test_run_config_sections_and_unknown():
    cfg = io.RunConfig.from_dict({"scenario": {"steps": 2}, "solver": {"seed": 5}, "candidates": {"pcv_links": ["P1"]}})
    assert cfg.steps == 2 and cfg.seed == 5 and cfg.pcv_candidates == ("P1",)
    assert io.RunConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValidationError):
        io.RunConfig.from_dict({"colour": "red"})
    assert io.RunConfig().seed == io.DEFAULT_SEED


def test_manifest_completeness(tmp_path):
    out = tmp_path / "p"
    assert run("place", "builtin:toy_a", "--nv", 1, "--nf", 1, "--trials", 3, "--local-search", 0,
               "--seed", 4, "--out", out) == 0
    man = io.load_manifest(out / "manifest.json")
    assert set(io.RunConfig.fields()) <= set(man["config"])
    assert man["config"]["seed"] == 4 and man["config"]["trials"] == 3
    for key in ("command", "argv", "network", "outputs", "versions"):
        assert key in man
    assert "--out" not in man["argv"]
    for name, digest in man["outputs"].items():
        assert io.sha256_file(out / name) == digest


def test_all_csvs_have_unit_headers(tmp_path):
    out = tmp_path / "a"
    vc = tmp_path / "v.json"
    io.atomic_write_json(vc, ValveConfig(("P2", "P7"), (1, 1), ("J5",)).to_dict())
    assert run("adapt", "builtin:toy_a", "--valves", vc, "--window", "08:00-16:00", "--out", out) == 0
    allowed = {"step", "mode", "element", "kind", "value", "node", "link", "plan", "window", "omega", "dominated",
               "config_id", "pcv_links", "afv_nodes", "scalar", "cum_fraction"}
    for p in out.glob("*.csv"):
        header = p.read_text().splitlines()[0].split(",")
        for col in header:
            assert col in allowed or col.rsplit("_", 1)[-1] in {"m", "pct", "lps", "m2", "m3s", "ms", "norm",
                                                               "range"}, (p.name, col)


@pytest.mark.parametrize("command", [
    ("simulate", "builtin:toy_b"),
    ("place", "builtin:toy_a", "--nv", 1, "--nf", 1, "--trials", 3, "--local-search", 1),
    ("pareto", "builtin:toy_c", "--design", "hierarchical", "--nv", 1, "--nf", 1, "--weights", 3, "--trials", 3),
])
def test_rerun_byte_identical(tmp_path, command):
    first = tmp_path / "first"
    assert run(*command, "--out", first) == 0
    second = tmp_path / "second"
    assert run("rerun", first / "manifest.json", "--out", second) == 0
    man = io.load_manifest(first / "manifest.json")
    for name in man["outputs"]:
        assert (first / name).read_bytes() == (second / name).read_bytes(), name


def test_rerun_detects_changed_network(tmp_path):
    net = tmp_path / "n.inp"
    net.write_text(io.resolve_network_path("builtin:toy_a").read_text())
    assert run("simulate", net, "--out", tmp_path / "a") == 0
    net.write_text(net.read_text().replace("62.69", "63.00"))
    assert run("rerun", tmp_path / "a" / "manifest.json", "--out", tmp_path / "b") == 2
