"""Command-line entry point: one task per invocation, outputs plus a manifest."""
from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys
import time
import traceback
from pathlib import Path

SUBCOMMANDS = {
    "classical": "classical", "reduced": "reduced", "ensemble": "ensemble", "spectrum": "spectrum",
    "phase-space": "phase_space", "bohr-sommerfeld": "bohr_sommerfeld",
    "separatrix-scan": "separatrix_scan", "quantum": "quantum", "lz-cascade": "lz",
    "entropy": "entropy",
}

# figure number -> (task, overrides of the task block)
FIGURES = {
    1: ("classical", {}),
    2: ("classical", {}),
    3: ("bohr_sommerfeld", {}),
    4: ("reduced", {}),
    5: ("quantum", {"n_grid": 2048, "n_shift": 2048}),
    6: ("quantum", {}),
    7: ("spectrum", {}),
    8: ("quantum", {"n_snapshots": 2}),
    9: ("entropy", {}),
}
FIGURE_COMPANIONS = {5: ("ensemble", {}), 6: ("ensemble", {})}


class Checks:
    """Invariant checks collected during a run."""

    def __init__(self):
        self.items = []

    def add(self, name: str, value: float, limit: float, ok: bool | None = None):
        passed = bool(value <= limit) if ok is None else bool(ok)
        self.items.append({"name": name, "value": float(value), "limit": float(limit), "passed": passed})

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.items)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hamdaemon", description="Hamiltonian daemon simulations")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--out", type=Path, default=None, help="output directory (default: out)")
    common.add_argument("--threads", type=int, default=None, help="cap on worker threads")
    common.add_argument("--seed", type=int, default=None, help="random seed (overrides config)")
    common.add_argument("--tol", type=float, default=None, help="integration tolerance (overrides config)")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    fig = sub.add_parser("reproduce-figure", parents=[common])
    fig.add_argument("figure", type=int, choices=sorted(FIGURES))
    sub.add_parser("schema", help="print the configuration JSON schema")
    return p


def _limit_threads(n: int | None) -> None:
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    _limit_threads(getattr(args, "threads", None))
    from . import config as cfg  # heavy imports only after the thread cap is set

    if args.command == "schema":
        print(json.dumps(cfg.SCHEMA, indent=2))
        return 0
    raw = {}
    if args.config:
        raw = json.loads(Path(args.config).read_text())
    if args.command == "reproduce-figure":
        task, overrides = FIGURES[args.figure]
        raw = dict(raw)
        raw[task] = {**raw.get(task, {}), **overrides}
    else:
        task = SUBCOMMANDS[args.command]
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.tol is not None:
        raw["tol"] = args.tol
    out = args.out or Path(raw.get("output", {}).get("directory", "out"))
    try:
        config = cfg.validate(raw, task)
    except cfg.ConfigError as exc:
        print(str(exc), file=sys.stderr)
        _manifest(out, args, raw, task, {}, Checks(), 0.0, failure={"validation": exc.problems})
        return 2
    code = run(config, task, out, args)
    if args.command == "reproduce-figure" and args.figure in FIGURE_COMPANIONS and code == 0:
        task2, over2 = FIGURE_COMPANIONS[args.figure]
        raw2 = {k: v for k, v in raw.items() if k not in cfg.TASKS}
        raw2[task2] = over2 or {"n_traj": cfg.DEFAULTS[task2]["n_traj"]}
        code = run(cfg.validate(raw2, task2), task2, out / task2, args)
    return code


def run(config: dict, task: str, out: Path, args=None) -> int:
    from . import config as cfg
    from .model import DomainError, UnsupportedModeError

    out.mkdir(parents=True, exist_ok=True)
    checks = Checks()
    start = time.perf_counter()
    files: dict = {}
    failure = None
    try:
        d = cfg.model_from_config(config)
        files = TASK_RUNNERS[task](config, d, out, checks)
    except Exception as exc:  # record it, keep what was written
        failure = {"type": type(exc).__name__, "message": str(exc), "traceback": traceback.format_exc()}
        bad_input = isinstance(exc, (cfg.ConfigError, DomainError, UnsupportedModeError))
    wall = time.perf_counter() - start
    _manifest(out, args, config, task, files, checks, wall, failure)
    if failure:
        print(f"{task} failed: {failure['message']}", file=sys.stderr)
        return 2 if bad_input else 3
    for c in checks.items:
        flag = "ok  " if c["passed"] else "FAIL"
        print(f"[{flag}] {c['name']}: {c['value']:.3g} (limit {c['limit']:.3g})")
    return 0 if checks.passed else 1


def _manifest(out, args, config, task, files, checks, wall, failure=None):
    import numpy
    import scipy

    from .io import write_json

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "manifest.json", {
        "task": task,
        "command": getattr(args, "command", None),
        "config": config,
        "files": {k: str(v) for k, v in files.items()},
        "versions": {"python": platform.python_version(), "numpy": numpy.__version__,
                     "scipy": scipy.__version__, "hamdaemon": _version()},
        "wall_time_s": wall,
        "checks": checks.items,
        "checks_passed": checks.passed,
        "failure": failure,
    })


def _version() -> str:
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:
        return "unknown"


# ----------------------------------------------------------------------------
# task runners: each writes its data files and returns {label: path}


def _tol(config, block):
    return config.get("tol", block.get("tol"))


def _classical(config, d, out, checks):
    import numpy as np

    from .classical import FullClassicalState, classify_trajectory, integrate_full
    from .io import write_csv, write_json

    b = config["classical"]
    tol = _tol(config, b)
    t_eval = np.linspace(b["span"][0], b["span"][1], b["n_samples"])
    files, phases = {}, {}
    for j, phi in enumerate(b["phis"]):
        s0 = FullClassicalState(b["q"], b["p"], phi, b["lz"])
        traj = integrate_full(s0, tuple(b["span"]), d, tol=tol, t_eval=t_eval)
        rep = classify_trajectory(traj)
        e, jv = traj.diagnostics["energy"], traj.diagnostics["J"]
        checks.add(f"energy drift phi0={phi:.6g}", np.max(np.abs(e - e[0])) / max(abs(e[0]), 1.0), 1e-8)
        checks.add(f"J drift phi0={phi:.6g}", np.max(np.abs(jv - jv[0])) / max(abs(jv[0]), 1.0), 1e-8)
        rows = zip(traj.times, traj.q, traj.p, traj.phi, traj.lz, e, jv, rep.labels)
        files[f"trajectory_{j}"] = write_csv(out / f"trajectory_{j}.csv",
                                             ["tau", "q", "p", "phi", "lz", "energy", "J", "phase"], rows)
        phases[str(j)] = {"phi0": phi, "downconversion_intervals": rep.intervals,
                          "perturbations": rep.perturbations, "lz_drop": rep.lz_drop,
                          "conclusive": rep.conclusive}
    files["phases"] = write_json(out / "phases.json", phases)
    return files


def _reduced(config, d, out, checks):
    import numpy as np

    from .classical import (FullClassicalState, integrate_reduced, reduce_state, reduced_time_offset)
    from .io import write_csv

    b = config["reduced"]
    tol = _tol(config, b)
    files = {}
    for j, phi in enumerate(b["phis"]):
        s0 = FullClassicalState(b["q"], b["p"], phi, b["lz"])
        sig0 = reduced_time_offset(s0, b["span"][0], d)
        span = (sig0, sig0 + b["span"][1] - b["span"][0])
        traj = integrate_reduced(reduce_state(s0), span, d, tol=tol,
                                 t_eval=np.linspace(span[0], span[1], b["n_samples"]))
        xyz = traj.sphere_xyz()
        checks.add(f"|lz| <= 1 phi0={phi:.6g}", float(np.max(np.abs(traj.lz))), 1.0)
        rows = zip(traj.times - sig0 + b["span"][0], traj.times, traj.phi, traj.lz, xyz[:, 0], xyz[:, 1], xyz[:, 2])
        files[f"sphere_{j}"] = write_csv(out / f"sphere_{j}.csv",
                                         ["tau", "sigma", "phi", "lz", "x", "y", "z"], rows)
    return files


def _ensemble(config, d, out, checks):
    import numpy as np

    from .classical import FullClassicalState
    from .ensemble import EnsembleSpec, bin_density, run_ensemble
    from .io import write_json, write_matrix_csv

    b = config["ensemble"]
    spec = EnsembleSpec(b["n_traj"], FullClassicalState(b["q"], b["p"], 0.0, b["lz"]),
                        seed=config.get("seed", 0), phi_sampling=b["phi_sampling"])
    ens = run_ensemble(spec, tuple(b["span"]), d, tol=_tol(config, b), n_samples=b["n_samples"])
    files = {}
    for axis in ("Q", "P"):
        h = bin_density(ens, axis, n_bins=b["n_bins"], n_times=b["n_times"])
        checks.add(f"{axis} histogram totals", float(np.max(np.abs(h.totals() - len(ens)))), 0.0)
        files[f"density_{axis}"] = write_matrix_csv(out / f"ensemble_density_{axis}.csv", "tau",
                                                    h.time_samples, h.bin_centers, h.counts)
    frac = ens.downconversion_fraction()
    files["summary"] = write_json(out / "ensemble_summary.json", {
        "n_traj": len(ens), "failures": ens.failures, "downconversion_fraction": frac})
    checks.add("integration failures", float(len(ens.failures)), 0.0)
    return files


def _spectrum(config, d, out, checks):
    import numpy as np

    from . import spectrum as sp
    from .io import write_csv, write_matrix_csv

    b = config["spectrum"]
    l = b["l"]
    grid = np.linspace(b["sigma_min"], b["sigma_max"], b["n_sigma"])
    diagram = sp.instantaneous_spectrum(l, d, grid)
    crossings = sp.find_avoided_crossings(diagram)
    trace_err = np.max(np.abs(diagram.eigenvalues.sum(axis=1) - sp.diagonal(l, diagram.params, diagram.sigma).sum(axis=1)))
    checks.add("trace identity", trace_err / np.max(np.abs(diagram.eigenvalues)), 1e-12)
    checks.add("ambiguous tracking steps", float(len(diagram.flags)), 0.0)
    n = diagram.eigenvalues.shape[1]
    files = {
        "levels": write_matrix_csv(out / "levels.csv", "sigma", diagram.sigma,
                                   [f"eigenvalue_{i + 1}" for i in range(n)], diagram.eigenvalues),
        "crossings": write_csv(out / "crossings.csv", ["m_upper", "m_lower", "sigma_star", "min_gap", "order"],
                               ((c.m_upper, c.m_lower, c.sigma_star, c.min_gap, c.order) for c in crossings)),
    }
    return files


def _clock_offset(b, d):
    from .classical import FullClassicalState, reduced_time_offset

    if b.get("tau_offset") is not None:
        return b["tau_offset"]
    base = FullClassicalState(0.0, 0.6, 0.0, math.sqrt(5.0 / 6.0))
    return -reduced_time_offset(base, 0.0, d)


def _phase_space(config, d, out, checks):
    import numpy as np

    from . import phase_space as ps
    from .io import write_csv, write_json

    b = config["phase_space"]
    dq = d.with_spin(b["l"])
    off = _clock_offset(b, d)
    files, fixed = {}, {}
    for j, tau in enumerate(b["taus"]):
        sigma = tau - off
        pts = ps.instantaneous_fixed_points(dq, sigma)
        fixed[str(tau)] = [{"phi": p.phi, "lz": p.lz, "energy": p.energy, "stability": p.stability} for p in pts]
        levels = ps.bohr_sommerfeld_levels(dq, sigma)
        cs = ps.energy_contours(dq, sigma, [lv.energy for lv in levels], n_phi=b["n_phi"])
        rows = []
        for k, c in enumerate(cs.contours):
            rows.extend((k, c.region, c.energy, f, z) for f, z in zip(c.phi, c.lz))
        try:
            sep = ps.separatrix(dq, sigma)
            rows.extend(("sep_upper", "separatrix", sep.energy, f, z) for f, z in zip(sep.phi, sep.upper_branch))
            rows.extend(("sep_lower", "separatrix", sep.energy, f, z) for f, z in zip(sep.phi, sep.lower_branch))
        except ps.NoSeparatrixError:
            pass
        files[f"contours_{j}"] = write_csv(out / f"contours_{j}.csv", ["contour", "region", "energy", "phi", "lz"], rows)
    files["fixed_points"] = write_json(out / "fixed_points.json", fixed)
    return files


def _bohr_sommerfeld(config, d, out, checks):
    from . import phase_space as ps
    from .io import write_csv

    b = config["bohr_sommerfeld"]
    dq = d.with_spin(b["l"])
    off = _clock_offset(b, d)
    rows, files = [], {}
    expected = int(round(2 * b["l"])) + 1
    for tau in b["taus"]:
        levels = ps.bohr_sommerfeld_levels(dq, tau - off)
        checks.add(f"level count deviation tau={tau:.6g}", abs(len(levels) - expected), 1.0)
        rows.extend((tau, tau - off, lv.n, lv.region, lv.energy, lv.action) for lv in levels)
    files["levels"] = write_csv(out / "bohr_sommerfeld.csv", ["tau", "sigma", "n", "region", "energy", "action"], rows)
    return files


def _separatrix_scan(config, d, out, checks):
    import numpy as np

    from . import phase_space as ps
    from .io import write_csv, write_json

    b = config["separatrix_scan"]
    dq = d.with_spin(b["l"])
    sig = np.linspace(b["sigma_min"], b["sigma_max"], b["n_sigma"])
    areas = np.array([ps.separatrix_area(dq, s) for s in sig])
    scale = dq.L_over_hbar / math.pi
    best = ps.maximal_separatrix(dq)
    est = ps.separatrix_area_estimate_checked(dq)
    checks.add("estimate vs maximal area (relative)", abs(est - best.area) / best.area, 0.10)
    return {
        "scan": write_csv(out / "separatrix_scan.csv", ["sigma", "area_L", "area_pi_hbar"],
                          zip(sig, areas, areas * scale)),
        "maximum": write_json(out / "separatrix_max.json", {
            "sigma": best.sigma, "area_L": best.area, "area_pi_hbar": best.area_hbar,
            "estimate_L": est, "unstable_lz": best.unstable_point.lz}),
    }


def _quantum(config, d, out, checks):
    import warnings

    import numpy as np

    from . import quantum as qm
    from .io import write_csv, write_matrix_csv

    b = config["quantum"]
    l = b["l"]
    pk = qm.PacketSpec(b["p0"], b["width_d"], b["m0"])
    psi = qm.init_packet(pk, l, d, n_grid=b["n_grid"], n_shift=b["n_shift"])
    snaps = tuple(np.linspace(b["span"][0], b["span"][1], b["n_snapshots"]))
    res = qm.propagate(psi, tuple(b["span"]), qm.StepControl(b["substeps"], b["order"], snapshot_times=snaps))
    span_len = b["span"][1] - b["span"][0]
    checks.add("per-point norm drift", res.norm_drift, 1e-8 * max(span_len, 1.0))
    files = {"occupations": write_matrix_csv(out / "occupations.csv", "tau", res.step_times[::10],
                                             [f"p_{m:g}" for m in psi.m], res.occupations[::10])}
    # densities on fixed grids so that rows line up with the ensemble histograms
    mds = [qm.reconstruct_momentum_density(s) for s in res.snapshots]
    p_lo = min(m.p[0] for m in mds)
    p_hi = max(m.p[-1] for m in mds)
    p_edges = np.linspace(p_lo, p_hi, 1701)
    pr_p = np.array([np.histogram(m.p, p_edges, weights=m.density * (m.p[1] - m.p[0]))[0] for m in mds])
    rows_q = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pos = [qm.reconstruct_position_density(s) for s in res.snapshots]
    q_lo = min(p.q[0] for p in pos)
    q_hi = max(p.q[-1] for p in pos)
    q_edges = np.linspace(q_lo, q_hi, b["q_bins"] + 1)
    for p in pos:
        rows_q.append(np.histogram(p.q, q_edges, weights=p.density * (p.q[1] - p.q[0]))[0])
    times = [s.time for s in res.snapshots]
    centers = lambda e: 0.5 * (e[1:] + e[:-1])
    files["pr_p"] = write_matrix_csv(out / "pr_p.csv", "tau", times, centers(p_edges), pr_p)
    files["pr_q"] = write_matrix_csv(out / "pr_q.csv", "tau", times, centers(q_edges), np.array(rows_q))
    files["alias"] = write_csv(out / "position_alias.csv", ["tau", "aliased", "edge_mass"],
                               ((p_.time, a.aliased, a.edge_mass) for p_, a in zip(res.snapshots, pos)))
    worst = max(abs(r.sum() - 1.0) for r in pr_p)
    checks.add("momentum density normalization", worst, 1e-6)
    return files


def _lz(config, d, out, checks):
    from . import lz
    from .analysis import crossing_schedule
    from .io import write_csv, write_json
    from .quantum import PacketSpec

    b = config["lz"]
    l = b["l"]
    m0 = l if b["m0"] is None else b["m0"]
    tree = lz.cascade_tree(l, d, m0)
    total = sum(tree.leaves.values())
    checks.add("leaf probabilities sum to 1", abs(total - 1.0), 1e-12)
    times = crossing_schedule(PacketSpec(0.6, 20.0, m0), l, d)
    curve = lz.step_entropy(tree, times)
    probs = [(a, lz.lz_probability(l, d, a)) for a in tree.crossing_m]
    checks.add("entropy below ln(2l+1)", float(max(curve.values)), math.log(2 * l + 1))
    return {
        "tree": write_json(out / "branch_tree.json", tree.to_dict()),
        "probabilities": write_csv(out / "lz_probabilities.csv", ["m", "pr_diabatic"], probs),
        "step_entropy": write_csv(out / "step_entropy.csv", ["tau_from", "S"],
                                  zip([-math.inf] + list(times), curve.values)),
    }


def _entropy(config, d, out, checks):
    import numpy as np

    from . import analysis as an, entropy as en, quantum as qm
    from .io import write_csv, write_matrix_csv

    b = config["entropy"]
    l = b["l"]
    pk = qm.PacketSpec(b["p0"], b["width_d"])
    psi = qm.init_packet(pk, l, d, n_grid=b["n_grid"], n_shift=b["n_shift"])
    taus = np.linspace(b["span"][0], b["span"][1], b["n_times"])
    res = qm.propagate(psi, tuple(b["span"]), qm.StepControl(snapshot_times=tuple(taus)))
    rhos = [en.reduced_density_fast(s) for s in res.snapshots]
    s_exact = np.array([en.von_neumann_entropy(r) for r in rhos])
    off = max(float(np.max(np.abs(r.rho - np.diag(np.diag(r.rho))))) for r in rhos)
    step = an.step_entropy_curve(pk, l, d)
    t_snap = np.array([s.time for s in res.snapshots])
    s_step = step(t_snap)
    s0 = b["sigma_start"]
    if s0 is None and b["align_start"]:
        s0 = -an.center_clock_offset(pk, l, psi.params)
    rm = en.r_m_quadrature(l, d, pk, t_snap, sigma_start=s0, initial=b["initial"])
    checks.add("S_exact(0)", abs(s_exact[0]), 1e-6)
    checks.add("S_exact <= ln(2l+1)", float(s_exact.max()), math.log(2 * l + 1))
    checks.add("max off-diagonal |rho_mn|", off, 1e-10)
    checks.add("R_m sums to 1", float(np.max(np.abs(rm.R.sum(axis=1) - 1.0))), 1e-10)
    return {
        "entropy": write_csv(out / "entropy.csv", ["tau", "S_exact", "S_step"], zip(t_snap, s_exact, s_step)),
        "r_m": write_matrix_csv(out / "r_m.csv", "tau", t_snap, [f"R_{m:g}" for m in psi.m], rm.R),
    }


TASK_RUNNERS = {
    "classical": _classical, "reduced": _reduced, "ensemble": _ensemble, "spectrum": _spectrum,
    "phase_space": _phase_space, "bohr_sommerfeld": _bohr_sommerfeld,
    "separatrix_scan": _separatrix_scan, "quantum": _quantum, "lz": _lz, "entropy": _entropy,
}


if __name__ == "__main__":
    sys.exit(main())
