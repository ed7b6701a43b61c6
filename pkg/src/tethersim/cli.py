"""Command-line runner: presets, JSON config, deterministic CSV/JSON output.

Exit codes: 0 ok, 2 configuration error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import kernels, lgvi, refsim
from .diagnostics import CSV_COLUMNS, DiagRecord, carnot_balance, drift_stats, observe
from .errors import ConfigInvalid, InsufficientData, NoConvergence, StateInvalid, TetherSimError
from .liegroup import GroupConfig, GroupIncrement
from .model import PhysParams
from .scenarios import PRESETS, Perturbation, Scenario, build_initial_state, params_for, preset

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3

_PARAM_FIELDS = {f.name for f in fields(PhysParams)}
_SCENARIO_FIELDS = {f.name for f in fields(Scenario)}


def fmt(x) -> str:
    return "%.17g" % x


def serialize_presets() -> str:
    """Canonical JSON of all presets (pinned by a golden file)."""
    return json.dumps({k: v.to_dict() for k, v in sorted(PRESETS.items())}, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# Configuration


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigInvalid("config must be a JSON object")
    unknown = set(doc) - _PARAM_FIELDS - _SCENARIO_FIELDS - {"scenario", "options"}
    if unknown:
        raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
    return doc


def resolve(args) -> tuple[Scenario, PhysParams, dict]:
    """Merge preset, config file and command-line flags (later wins)."""
    doc = load_config(args.config) if args.config else {}
    name = args.scenario or doc.get("scenario", "case1")
    sc = preset(name)
    sc_kw = sc.to_dict()
    p_kw = {}
    for k, v in doc.items():
        if k in _SCENARIO_FIELDS and k != "name":
            sc_kw[k] = v
        if k in _PARAM_FIELDS and k not in ("h", "N"):
            p_kw[k] = v
    if "N" in doc:
        sc_kw["N"] = doc["N"]
    if "h" in doc:
        sc_kw["h"] = doc["h"]
    if args.tf is not None:
        sc_kw["t_f"] = args.tf
    if args.h is not None:
        sc_kw["h"] = args.h
    if args.elements is not None:
        sc_kw["N"] = args.elements
    if args.u is not None:
        sc_kw["u"] = args.u
    if args.stop_when_deployed:
        sc_kw["stop_when_deployed"] = True
    if args.gm is not None:
        p_kw["GM"] = args.gm
    opts = dict(doc.get("options", {}))
    for key in ("tol", "record_every", "integrator", "init", "snapshot_every", "forcing"):
        val = getattr(args, key)
        if val is not None:
            opts[key] = val
    try:
        if isinstance(sc_kw.get("perturbation"), dict):
            sc_kw["perturbation"] = Perturbation(**sc_kw["perturbation"])
        sc = Scenario(**sc_kw)
        params = params_for(sc, PhysParams(**p_kw) if p_kw else None)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(str(exc)) from exc
    opts.setdefault("tol", lgvi.DEFAULT_TOL)
    opts.setdefault("integrator", "lgvi")
    opts.setdefault("init", "velocity")
    opts.setdefault("forcing", "rectangle")
    opts.setdefault("record_every", max(1, int(round(1.0 / sc.h))))
    opts.setdefault("snapshot_every", sc.t_f / 10.0)
    if opts["integrator"] not in ("lgvi", "rk4"):
        raise ConfigInvalid(f"unknown integrator {opts['integrator']!r}")
    if opts["integrator"] == "rk4" and sc.drum == "free":
        raise ConfigInvalid("the rk4 reference integrator covers the locked drum only")
    if int(opts["record_every"]) < 1:
        raise ConfigInvalid("record_every must be >= 1")
    return sc, params, opts


# ---------------------------------------------------------------------------
# Output helpers


def lvlh(points: np.ndarray, t: float, params: PhysParams, radius: float) -> np.ndarray:
    """Coordinates relative to a circular-orbit observer in the initial orbit plane
    (radial, along-track, cross-track)."""
    n = np.sqrt(params.GM / radius ** 3) if params.GM > 0.0 else 0.0
    c, s = np.cos(n * t), np.sin(n * t)
    o = radius * np.array([c, s, 0.0])
    axes = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
    return (points - o) @ axes.T


def write_snapshot(path: Path, g: GroupConfig, t: float, params: PhysParams, radius: float):
    labels = ["base"] + [f"node{j}" for j in range(params.N + 1)] + ["sub"]
    pts = np.vstack([g.x[None, :], g.r, (g.r[-1] + g.R_s @ params.rho_s)[None, :]])
    loc = lvlh(pts, t, params, radius)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "point", "x", "y", "z", "lvlh_radial", "lvlh_along", "lvlh_cross"])
        for lab, p, q in zip(labels, pts, loc):
            w.writerow([fmt(t), lab, *map(fmt, p), *map(fmt, q)])


class _Output:
    def __init__(self, outdir: Path):
        self.outdir = outdir
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "snapshots").mkdir(exist_ok=True)
        self.fh = open(outdir / "run.csv", "w", newline="")
        self.fh.write("# velocities reconstructed from the discrete momentum (stepper) or taken "
                      "directly (rk4); angular rates in body frames\n")
        self.w = csv.writer(self.fh)
        self.w.writerow(CSV_COLUMNS)
        self.records: list[DiagRecord] = []
        self.n_snap = 0

    def record(self, rec: DiagRecord):
        self.records.append(rec)
        self.w.writerow([fmt(v) for v in rec.row()])

    def snapshot(self, g, t, params, radius):
        write_snapshot(self.outdir / "snapshots" / f"snap_{self.n_snap:04d}.csv", g, t, params, radius)
        self.n_snap += 1

    def close(self):
        self.fh.close()


# ---------------------------------------------------------------------------
# Runs


def _run_lgvi(sc, params, opts, out, radius):
    free = sc.drum == "free"
    g0, v0 = build_initial_state(sc, params)
    st = lgvi.Stepper(params, g0, v0, u=sc.u, free_s=free, init=opts["init"], tol=float(opts["tol"]),
                      forcing=opts["forcing"])
    every = int(opts["record_every"])
    snap_every = max(1, int(round(float(opts["snapshot_every"]) / params.h)))
    n = sc.n_steps

    def energy(g, f, u):
        return observe(g, f, params, 0.0, u=u).E_total

    rec0 = observe(st.g, st.f, params, 0.0, u=st.u(0.0))
    E0 = rec0.E_total
    rec0.dE = 0.0
    out.record(rec0)
    out.snapshot(st.g, 0.0, params, radius)
    E_prev = None
    for k in range(1, n + 1):
        if k % every == 0 or k == n:
            E_prev = energy(st.g, st.f, st.u(st.t))
        st.advance()
        if k % every == 0 or k == n:
            u = st.u(st.t)
            gp = lgvi.previous_config(st.g, st.f_prev)
            q = lgvi.carnot_forcing(gp, st.f_prev, params) / params.h
            rec = observe(st.g, st.f, params, st.t, u=u, E0=E0)
            rec.carnot_balance = carnot_balance(E_prev, rec.E_total, q, st.u(st.t - params.h),
                                                params.d, st.f_prev.ds)
            out.record(rec)
        if k % snap_every == 0 or k == n:
            out.snapshot(st.g, st.t, params, radius)
        if sc.stop_when_deployed and st.g.s_p <= params.L - 100e3:
            break
    its = [r.iterations for r in st.reports]
    newton = {"steps": len(st.reports), "converged_all": all(r.converged for r in st.reports),
              "max_iterations": max(its) if its else 0,
              "mean_iterations": float(np.mean(its)) if its else 0.0,
              "max_residual": max((r.residual for r in st.reports), default=0.0)}
    return newton


def _run_rk4(sc, params, opts, out, radius):
    g, v = build_initial_state(sc, params)
    every = int(opts["record_every"])
    snap_every = max(1, int(round(float(opts["snapshot_every"]) / params.h)))
    rec0 = observe(g, v, params, 0.0)
    E0 = rec0.E_total
    out.record(rec0)
    out.snapshot(g, 0.0, params, radius)
    E_prev = E0
    n = sc.n_steps
    for k in range(1, n + 1):
        g, v = refsim.rk4_step(g, v, params.h, params)
        t = k * params.h
        if k % every == 0 or k == n:
            rec = observe(g, v, params, t, E0=E0)
            rec.carnot_balance = rec.E_total - E_prev
            E_prev = rec.E_total
            out.record(rec)
        if k % snap_every == 0 or k == n:
            out.snapshot(g, t, params, radius)
    return {"steps": n, "converged_all": True, "max_iterations": 0, "mean_iterations": 0.0,
            "max_residual": 0.0}


def _run_point_mass(sc, params, opts, out, radius):
    """Single point mass of the total system mass on the circular orbit."""
    GM = params.GM
    m = params.total_mass
    x = np.array([radius, 0.0, 0.0])
    v = np.array([0.0, np.sqrt(GM / radius), 0.0])
    step = refsim.kepler_rk4_step if opts["integrator"] == "rk4" else refsim.kepler_verlet_step
    every = int(opts["record_every"])

    def rec(t, x, v, E0):
        T = 0.5 * m * (v @ v)
        V = -GM * m / np.linalg.norm(x)
        L = m * np.cross(x, v)
        z = np.zeros(3)
        return DiagRecord(t, T, 0.0, V, 0.0, T + V, 0.0 if E0 is None else T + V - E0, z, z, 0.0,
                          0.0, 0.0, np.zeros(0), 0.0, L, 0.0)

    r0 = rec(0.0, x, v, None)
    out.record(r0)
    n = sc.n_steps
    for k in range(1, n + 1):
        x, v = step(x, v, params.h, GM)
        if k % every == 0 or k == n:
            out.record(rec(k * params.h, x, v, r0.E_total))
    period = refsim.orbit_period([radius, 0, 0], [0, np.sqrt(GM / radius), 0], params.h, GM,
                                 t_max=10 * 2 * np.pi * np.sqrt(radius ** 3 / GM), stepper=step)
    return {"steps": n, "converged_all": True, "max_iterations": 0, "mean_iterations": 0.0,
            "max_residual": 0.0, "orbit_period": period}


def run(sc: Scenario, params: PhysParams, outdir, opts: dict) -> int:
    outdir = Path(outdir)
    radius = params.earth_radius + sc.altitude
    out = _Output(outdir)
    status, error = EXIT_OK, None
    t0 = time.perf_counter()
    newton = {}
    try:
        if sc.point_mass:
            newton = _run_point_mass(sc, params, opts, out, radius)
        elif opts["integrator"] == "rk4":
            newton = _run_rk4(sc, params, opts, out, radius)
        else:
            newton = _run_lgvi(sc, params, opts, out, radius)
    except (NoConvergence, StateInvalid, ArithmeticError) as exc:
        status, error = EXIT_SOLVER, f"{type(exc).__name__}: {exc}"
        newton = {"converged_all": False}
    except TetherSimError as exc:
        status, error = EXIT_CONFIG, f"{type(exc).__name__}: {exc}"
    finally:
        out.close()
    wall = time.perf_counter() - t0
    recs = out.records
    try:
        ds = drift_stats(recs)
        drift = {"max_rel_dE": ds.max_rel_dE, "dE_trend": ds.trend, "max_ortho_err": ds.max_ortho_err}
    except InsufficientData:
        drift = None
    L0 = recs[0].ang_mom if recs else np.zeros(3)
    dL = max((float(np.linalg.norm(r.ang_mom - L0)) for r in recs), default=0.0)
    summary = {
        "status": "ok" if status == EXIT_OK else "failed",
        "error": error,
        "scenario": sc.to_dict(),
        "params": params.to_dict(),
        "options": opts,
        "backend": kernels.BACKEND,
        "records": len(recs),
        "drift_stats": drift,
        "max_rel_angular_momentum_change": dL / float(np.linalg.norm(L0)) if np.linalg.norm(L0) > 0 else dL,
        "newton": newton,
        "wall_time_s": wall,
    }
    with open(outdir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=float)
    if error:
        print(f"error: {error}", file=sys.stderr)
    return status


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tethersim", description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", choices=sorted(PRESETS))
    ap.add_argument("--config", metavar="PATH")
    ap.add_argument("--tf", type=float, metavar="SECONDS")
    ap.add_argument("--h", type=float, metavar="SECONDS")
    ap.add_argument("--elements", type=int, metavar="N")
    ap.add_argument("--tol", type=float)
    ap.add_argument("--out", default="out", metavar="DIR")
    ap.add_argument("--record-every", dest="record_every", type=int, metavar="K")
    ap.add_argument("--snapshot-every", dest="snapshot_every", type=float, metavar="SECONDS")
    ap.add_argument("--integrator", choices=["lgvi", "rk4"])
    ap.add_argument("--init", choices=["velocity", "legendre"])
    ap.add_argument("--forcing", choices=["rectangle", "split"])
    ap.add_argument("--gm", type=float, metavar="VALUE")
    ap.add_argument("--u", type=float, metavar="VALUE")
    ap.add_argument("--stop-when-deployed", dest="stop_when_deployed", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sc, params, opts = resolve(args)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(sc, params, args.out, opts)


if __name__ == "__main__":
    sys.exit(main())
