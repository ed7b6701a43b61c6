import csv
import json
from pathlib import Path

import numpy as np
import pytest

from tethersim import cli
from tethersim.errors import ConfigInvalid
from tethersim.scenarios import build_initial_state, params_for, preset

GOLDEN = Path(__file__).parent / "golden" / "presets.json"


def _rows(outdir):
    with open(outdir / "run.csv") as fh:
        lines = fh.read().splitlines()
    header = next(csv.reader([lines[1]]))
    return lines, [dict(zip(header, map(float, row))) for row in csv.reader(lines[2:])]


def _summary(outdir):
    return json.loads((outdir / "summary.json").read_text())


def _args(*argv):
    return cli.build_parser().parse_args(list(argv))


def test_presets_match_golden_file():
    assert cli.serialize_presets() == GOLDEN.read_text().strip()


@pytest.mark.parametrize("name,h,tf,drum", [("case1", 0.05, 6000.0, "fixed"), ("case2", 0.05, 3848.0, "free"),
                                            ("case3", 0.01, 500.0, "fixed")])
def test_preset_values(name, h, tf, drum):
    sc = preset(name)
    assert (sc.h, sc.t_f, sc.N, sc.drum) == (h, tf, 20, drum)


def test_initial_state_examples():
    sc = preset("case1")
    p = params_for(sc)
    g, v = build_initial_state(sc, p)
    assert np.linalg.norm(v.xdot) == pytest.approx(7726.0, abs=1.0)
    d = np.linalg.norm(np.diff(g.r, axis=0), axis=1)
    assert np.allclose(d, (p.L - g.s_p) / p.N, rtol=1e-12)
    sc3 = preset("case3")
    g3, v3 = build_initial_state(sc3, params_for(sc3))
    assert np.linalg.norm(v3.xdot) == pytest.approx(1.15 * np.linalg.norm(v.xdot), rel=1e-14)


def test_unknown_scenario_is_rejected():
    with pytest.raises(ConfigInvalid):
        preset("case9")


def test_short_case1_run(tmp_path):
    rc = cli.main(["--scenario", "case1", "--tf", "20", "--out", str(tmp_path)])
    assert rc == cli.EXIT_OK
    s = _summary(tmp_path)
    assert s["status"] == "ok" and s["newton"]["converged_all"]
    assert s["newton"]["steps"] == 400
    lines, rows = _rows(tmp_path)
    assert lines[0].startswith("#")
    assert lines[1].split(",")[:3] == ["t", "E_total", "dE"]
    assert len(rows) == 21 and rows[-1]["t"] == 20.0
    assert all(abs(r["dE"]) <= 1e-7 * abs(rows[0]["E_total"]) for r in rows)
    # full round-trip precision
    e = lines[2].split(",")[1]
    assert float(e) == rows[0]["E_total"] and len(e.lstrip("-").replace(".", "").split("e")[0]) >= 15
    snaps = sorted((tmp_path / "snapshots").glob("snap_*.csv"))
    assert len(snaps) == 11


def test_runs_are_deterministic(tmp_path):
    for sub in ("a", "b"):
        assert cli.main(["--scenario", "case3", "--tf", "2", "--out", str(tmp_path / sub)]) == cli.EXIT_OK
    a, b = tmp_path / "a", tmp_path / "b"
    assert (a / "run.csv").read_bytes() == (b / "run.csv").read_bytes()
    for f in (a / "snapshots").iterdir():
        assert f.read_bytes() == (b / "snapshots" / f.name).read_bytes()


def test_rest_without_gravity(tmp_path):
    rc = cli.main(["--scenario", "case1", "--gm", "0", "--u", "0", "--tf", "5", "--out", str(tmp_path)])
    assert rc == cli.EXIT_OK
    _, rows = _rows(tmp_path)
    assert all(r["dE"] == 0.0 and r["E_total"] == 0.0 for r in rows)


def test_case1_600_s_converges(tmp_path):
    rc = cli.main(["--scenario", "case1", "--tf", "600", "--snapshot-every", "600", "--out", str(tmp_path)])
    s = _summary(tmp_path)
    assert rc == cli.EXIT_OK and s["newton"]["converged_all"]
    assert s["drift_stats"]["max_rel_dE"] <= 1e-7
    assert s["drift_stats"]["max_ortho_err"] <= 1e-12


def test_deployment_run_reels_out(tmp_path):
    rc = cli.main(["--scenario", "case2", "--tf", "10", "--out", str(tmp_path)])
    assert rc == cli.EXIT_OK
    _, rows = _rows(tmp_path)
    assert rows[-1]["s_p"] < rows[0]["s_p"]
    assert all(abs(r["carnot_balance"]) < 1.0 for r in rows)


def test_reference_integrator_run(tmp_path):
    rc = cli.main(["--scenario", "case1", "--integrator", "rk4", "--tf", "5", "--out", str(tmp_path)])
    assert rc == cli.EXIT_OK
    assert _summary(tmp_path)["drift_stats"] is None     # fewer than 100 records


def test_point_mass_period(tmp_path):
    assert cli.main(["--scenario", "point-mass", "--out", str(tmp_path)]) == cli.EXIT_OK
    assert _summary(tmp_path)["newton"]["orbit_period"] == pytest.approx(5431.18, abs=0.5)


@pytest.mark.parametrize("doc", ['{"not_a_key": 1}', "{broken", "[1, 2]", '{"drum": "spinning"}'])
def test_bad_config_exits_2(tmp_path, doc):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(doc)
    assert cli.main(["--config", str(cfg), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG


@pytest.mark.parametrize("argv", [["--h", "-1"], ["--tf", "0"], ["--elements", "0"],
                                  ["--scenario", "case2", "--integrator", "rk4"], ["--record-every", "0"]])
def test_bad_flags_exit_2(tmp_path, argv):
    assert cli.main([*argv, "--out", str(tmp_path)]) == cli.EXIT_CONFIG


def test_solver_failure_exits_3(tmp_path):
    rc = cli.main(["--scenario", "case1", "--tf", "1", "--tol", "0", "--out", str(tmp_path)])
    assert rc == cli.EXIT_SOLVER
    s = _summary(tmp_path)
    assert s["status"] == "failed" and "NoConvergence" in s["error"]


def test_flags_override_config_override_preset(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"scenario": "case3", "t_f": 7.0, "h": 0.02, "EA": 1.0e5,
                               "options": {"init": "legendre"}}))
    sc, p, opts = cli.resolve(_args("--config", str(cfg), "--h", "0.04"))
    assert sc.name == "case3" and sc.t_f == 7.0 and sc.h == 0.04 and p.h == 0.04
    assert p.EA == 1.0e5 and opts["init"] == "legendre"
    assert opts["record_every"] == 25
    sc, p, _ = cli.resolve(_args("--config", str(cfg)))
    assert sc.h == 0.02 and p.h == 0.02


def test_lvlh_frame_tracks_circular_observer():
    p = params_for(preset("case1"))
    radius = p.earth_radius + 300e3
    n = np.sqrt(p.GM / radius ** 3)
    for t in (0.0, 123.4, 2000.0):
        c, s = np.cos(n * t), np.sin(n * t)
        on_orbit = radius * np.array([[c, s, 0.0]])
        assert np.allclose(cli.lvlh(on_orbit, t, p, radius), 0.0, atol=1e-8)
        above = (radius + 5.0) * np.array([[c, s, 0.0]]) + [[0.0, 0.0, 2.0]]
        assert np.allclose(cli.lvlh(above, t, p, radius), [[5.0, 0.0, 2.0]], atol=1e-8)


def test_snapshot_points(tmp_path):
    assert cli.main(["--scenario", "case1", "--tf", "10", "--out", str(tmp_path)]) == cli.EXIT_OK
    with open(tmp_path / "snapshots" / "snap_0000.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["point"] for r in rows] == ["base"] + [f"node{j}" for j in range(21)] + ["sub"]
    assert float(rows[0]["lvlh_radial"]) == 0.0 and float(rows[0]["lvlh_along"]) == 0.0
    assert float(rows[-2]["lvlh_radial"]) < -1e4            # tether hangs toward Earth
