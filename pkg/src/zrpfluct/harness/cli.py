"""Command line entry point: ``zrpfluct <subcommand> [--config FILE] [--seed S] [--out DIR] ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .. import bg_principle as bg
from .. import fou_solver as fs
from .. import spectral_gap as sg
from ..equilibrium import sample_configuration, thermo, thermo_table_csv
from ..fields.estimators import FieldFrame, decomposition, moving_frame
from ..fields.testfunctions import battery, battery_pair_indices
from ..kmc import SnapshotWriter, run
from ..model_core import build_kernel
from . import acceptance
from . import experiments as ex
from .config import Experiment, load_config
from .stats import chi_square_gof

log = logging.getLogger("zrpfluct")


def _tag(p) -> str:
    return f"a{p.alpha:g}_b{p.beta:g}_g{p.gamma:.4g}_n{p.n}_L{p.L}_r{p.rho:g}_{p.rate_id}"


def _write_rows(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _summary(out: Path, name: str, payload: dict):
    (out / f"{name}.json").write_text(json.dumps(acceptance._jsonable(payload), indent=1))


# ---------------------------------------------------------------------------


def cmd_sample_invariant(exp: Experiment, out: Path) -> int:
    summary = {}
    for p in exp.points():
        tag = _tag(p)
        g = p.rate()
        th = thermo(p.rho, g)
        thermo_table_csv(out / f"thermo_{tag}.csv", [p.rho], g)
        build_kernel(p).to_csv(out / f"kernel_{tag}.csv")
        pmf = th.marginal().pmf
        counts = np.zeros(pmf.size)
        for rng in ex.spawn_rngs(exp.seed, exp.replicas):
            occ = sample_configuration(p.rho, p.L, g, rng).occ
            counts += np.bincount(np.minimum(occ, pmf.size - 1), minlength=pmf.size)[: pmf.size]
        stat, dof, pv = chi_square_gof(counts, pmf / pmf.sum())
        _write_rows(out / f"marginal_{tag}.csv", ["k", "empirical", "exact"],
                    [(k, counts[k] / counts.sum(), pmf[k]) for k in range(pmf.size)])
        summary[tag] = {"chi2": stat, "dof": dof, "p_value": pv}
    _summary(out, "sample_invariant", summary)
    return 0


def cmd_simulate(exp: Experiment, out: Path) -> int:
    summary = {}
    times = exp.snapshot_times()
    for p in exp.points():
        tag = _tag(p)
        kernel = build_kernel(p)
        events = []
        for r, rng in enumerate(ex.spawn_rngs(exp.seed, exp.replicas)):
            cfg = sample_configuration(p.rho, p.L, p.rate(), rng)
            header = {**{k: getattr(p, k) for k in ("alpha", "beta", "gamma", "n", "rho", "rate_id")}, "replica": r}
            with SnapshotWriter(out / f"snapshots_{tag}_r{r}.zrps", header, p.L) as wr:
                traj = run(cfg, kernel, exp.horizon, times, rng=rng, observers=(wr,), store_snapshots=False)
            events.append(traj.n_events)
        summary[tag] = {"events": events, "snapshots": len(times)}
    _summary(out, "simulate", summary)
    return 0


def cmd_decompose(exp: Experiment, out: Path) -> int:
    summary = {}
    dt = float(exp.extra.get("dt", exp.horizon / max(exp.snapshots - 1, 1)))
    tests = battery()
    for p in exp.points():
        tag = _tag(p)
        th = thermo(p.rho, p.rate())
        kernel = build_kernel(p)
        frame = moving_frame(p, th) if exp.extra.get("frame", "moving") == "moving" else FieldFrame.fixed()
        worst = 0.0
        for r, rng in enumerate(ex.spawn_rngs(exp.seed, exp.replicas)):
            cfg = sample_configuration(p.rho, p.L, p.rate(), rng)
            reps, _ = decomposition(cfg, kernel, p, th, tests, frame, exp.horizon, dt=dt, rng=rng)
            for i, rep in enumerate(reps):
                rep.to_csv(out / f"decomposition_{tag}_r{r}_H{i}.csv", p)
                worst = max(worst, rep.identity_residual)
        summary[tag] = {"identity_residual": worst, "velocity": frame.velocity}
    _summary(out, "decompose", summary)
    return 0


def cmd_bg_test(exp: Experiment, out: Path) -> int:
    ells = [int(x) for x in exp.extra.get("ell", [4, 8, 16, 32])]
    K = float(exp.extra.get("K", exp.horizon))
    width = float(exp.extra.get("width", 80.0))
    summary = {}
    for order in ("quadratic", "linear"):
        study = bg.BGStudy(order)
        shapes = {}
        for p in exp.points():
            th = thermo(p.rho, p.rate())
            kernel = build_kernel(p)
            x = np.arange(p.L)
            h = np.exp(-0.5 * ((np.mod(x + p.L / 2, p.L) - p.L / 2) / width) ** 2)
            f = bg.centered_square(th) if order == "quadratic" else bg.rate_fluctuation(th)
            rng = np.random.default_rng(exp.seed)
            samples = [bg.residual_samples([bg.simulate(p, kernel, th, K, rng)], f, h, ells, K, th, order)[0]
                       for _ in range(exp.replicas)]
            m = np.mean(samples, axis=0)
            se = np.std(samples, axis=0, ddof=1) / np.sqrt(len(samples)) if len(samples) > 1 else np.zeros_like(m)
            for j, ell in enumerate(ells):
                study.rows.append(bg.BGRow(ell, p.n, K, float(m[j]), float(se[j])))
                shapes[(ell, p.n)] = bg.bound_shape(p, h, ell, K, order)
        C = study.calibrate(shapes, (max(ells), min(r.n for r in study.rows)))
        study.to_csv(out / f"bg_{order}.csv")
        summary[order] = {"C": C, "within_bound": study.within_bound(),
                          "monotone": {n: study.monotone(n) for n in sorted({r.n for r in study.rows})}}
    _summary(out, "bg_test", summary)
    return 0


def cmd_gap(exp: Experiment, out: Path) -> int:
    ells = [int(x) for x in exp.extra.get("ell", [2, 4, 8])]
    ks = [int(x) for x in exp.extra.get("k", [1, 2, 3])]
    summary = {}
    for p in exp.points():
        g = p.rate()
        reports = []
        for ell in ells:
            for k in ks:
                if not g.is_linear and sg.state_count(ell, k) > sg.MAX_STATES:
                    log.warning("skipping l=%d k=%d: too many states", ell, k)
                    continue
                reports.append(sg.gap(ell, k, g, p.alpha))
        sg.reports_to_csv(out / f"gap_a{p.alpha:g}_{p.rate_id}.csv", reports)
        summary[f"{p.alpha:g}_{p.rate_id}"] = {"max_ratio": max((r.ratio for r in reports), default=0.0)}
    _summary(out, "gap", summary)
    return 0


def cmd_fou(exp: Experiment, out: Path) -> int:
    dt = float(exp.extra.get("dt", 0.01))
    summary = {}
    for p in exp.points():
        th = thermo(p.rho, p.rate())
        Lam = fs.macroscopic_length(p.L, p.n, p.alpha)
        J = int(exp.extra.get("K_max", 64))
        variant = exp.extra.get("variant", "linear")
        steps = max(1, int(round(exp.horizon / dt)))
        stats = []
        for rng in ex.spawn_rngs(exp.seed, exp.replicas):
            st = fs.initial_state(p.alpha, Lam, J, th, rng)
            noise = fs.NoiseSpec.for_state(st)
            _, modes, _ = fs.simulate(st, noise, dt, steps, rng, beta=p.beta, variant=variant)
            stats.append(np.mean(np.abs(modes) ** 2, axis=0))
        st0 = fs.initial_state(p.alpha, Lam, J, th, stationary=False)
        target = fs.NoiseSpec.for_state(st0).stationary_variance(st0)
        emp = np.mean(stats, axis=0)
        _write_rows(out / f"fou_{_tag(p)}.csv", ["j", "k", "variance", "target"],
                    [(j, st0.k[j], emp[j], target[j]) for j in range(J + 1)])
        summary[_tag(p)] = {"Lambda": Lam, "K_max": J, "dt": dt}
    _summary(out, "fou", summary)
    return 0


def cmd_scan(exp: Experiment, out: Path) -> int:
    rep = ex.transition_scan(list(exp.points()), exp.horizon, exp.replicas, exp.seed)
    _write_rows(out / "scan.csv", ["alpha", "gamma", "n", "EB2", "ci_lo", "ci_hi"], rep.to_rows())
    alphas = sorted({r.alpha for r in rep.rows})
    _summary(out, "scan", {a: {"decreasing": rep.decreasing(a), "stable": rep.stable(a)} for a in alphas})
    return 0


def cmd_covariance(exp: Experiment, out: Path) -> int:
    tests = battery()
    pairs = battery_pair_indices(10, len(tests))
    dt = float(exp.extra.get("dt", 0.05))
    lags = [float(x) for x in exp.extra.get("lags", acceptance.COV_LAGS)]
    shifts = int(exp.extra.get("shifts", 64))
    summary = {}
    for p in exp.points():
        _, P = ex.particle_field_series(p, tests, exp.horizon, dt, exp.replicas, exp.seed, shifts=shifts)
        _, S = ex.solver_field_series(p, tests, exp.horizon, dt, 4 * exp.replicas, exp.seed + 1, shifts=shifts)
        cells = ex.covariance_suite(P, S, dt, pairs, lags)
        _write_rows(out / f"covariance_{_tag(p)}.csv",
                    ["i", "j", "lag", "particle", "particle_se", "solver", "solver_se", "z"],
                    [(*c.pair, c.lag, c.particle, c.particle_se, c.solver, c.solver_se, c.z) for c in cells])
        summary[_tag(p)] = {"fraction_within_3": float(np.mean([abs(c.z) < 3 for c in cells]))}
    _summary(out, "covariance", summary)
    return 0


def cmd_acceptance(args, out: Path) -> int:
    numbers = [int(x) for x in args.criteria.split(",")] if args.criteria else None
    results = acceptance.run_all(numbers, seed=args.seed or 0, out=out)
    return 0 if all(r.passed for r in results) else 1


COMMANDS = {
    "sample-invariant": cmd_sample_invariant,
    "simulate": cmd_simulate,
    "decompose": cmd_decompose,
    "bg-test": cmd_bg_test,
    "gap": cmd_gap,
    "fou": cmd_fou,
    "scan": cmd_scan,
    "covariance": cmd_covariance,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="zrpfluct", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in [*COMMANDS, "acceptance"]:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="YAML or JSON experiment file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--replicas", type=int)
        sp.add_argument("--horizon", type=float)
        sp.add_argument("--snapshots", type=int)
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "acceptance":
            sp.add_argument("--criteria", help="comma separated criterion numbers (default: all)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    exp = load_config(args.config) if args.config else Experiment()
    exp = exp.with_overrides(seed=args.seed, out=args.out, replicas=args.replicas, horizon=args.horizon,
                             snapshots=args.snapshots)
    out = Path(exp.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.command == "acceptance":
        return cmd_acceptance(args, out)
    (out / "config.json").write_text(json.dumps(exp.to_dict(), indent=1))
    return COMMANDS[args.command](exp, out)


if __name__ == "__main__":
    sys.exit(main())
