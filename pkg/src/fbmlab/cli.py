"""Command-line front end.

Subcommands: ``fbm`` (noise generation and self-test), ``simulate``
(forward or bounded solutions), ``verify`` (Monte-Carlo bound checks),
``recurrence`` (almost-period detection), ``example`` (the heat-equation
pipeline).  Every flag has a config-file equivalent; precedence is
flags > config file > defaults.  All outputs are deterministic given the
seed, so reruns are byte-identical.

Exit codes: 0 success, 1 self-test failure or certified bound violation,
2 validation/config error, 3 fixed-point iteration failed without a
contraction certificate.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import bounds as bnd
from .errors import DomainError, FbmlabError, GridMismatch, NoContraction
from .fbm import (
    CovarianceOperatorSpec,
    TimeGrid,
    fgn_autocovariance,
    fgn_ensemble_circulant,
    field_ensemble,
    generate_fbm_cholesky,
    generate_fgn_circulant,
    write_fgn_csv,
)
from .galerkin import (
    EvolutionProblem,
    ModalForcing,
    bounded_solution_picard_ensemble,
    burn_in_grid,
    dirichlet_eigenvalues,
    linear_bounded_solution_ensemble,
    solve_forward_ensemble,
    write_ensemble_summary_csv,
    write_trajectory_csv,
)
from .heat import (
    ExampleConfig,
    build_example_problem,
    example_constants,
    hurst_sweep,
    run_example,
    write_hurst_sweep_csv,
)
from .recurrence import SampledPath, epsilon_almost_periods
from .seeding import derive_seed


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise DomainError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise DomainError(
            f"malformed config {path}: line {exc.lineno}, column {exc.colno}: {exc.msg}"
        )


def _merge(defaults: dict, config: dict, args: argparse.Namespace) -> dict:
    """Precedence: explicit flags > config file > defaults."""
    merged = dict(defaults)
    for key, val in config.items():
        if key not in defaults:
            raise DomainError(f"unknown config key {key!r}")
        merged[key] = val
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    return merged


def _out_path(args, name: str) -> str:
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, name)


FBM_DEFAULTS = {
    "hurst": 0.75,
    "steps": 1024,
    "dt": 1e-3,
    "t0": 0.0,
    "method": "circulant",
    "output": "fgn.csv",
    "replicas": 10000,
    "seed": 20240801,
}


def cmd_fbm(args) -> int:
    cfg = _merge(FBM_DEFAULTS, _load_config(args.config) if args.config else {}, args)
    grid = TimeGrid(cfg["t0"], cfg["dt"], cfg["steps"])
    if cfg["method"] == "circulant":
        path = generate_fgn_circulant(cfg["hurst"], grid, cfg["seed"])
    elif cfg["method"] == "cholesky":
        path = generate_fbm_cholesky(cfg["hurst"], grid, cfg["seed"])
    else:
        raise DomainError(f"unknown method {cfg['method']!r}")
    out = _out_path(args, cfg["output"])
    with open(out, "w") as fh:
        write_fgn_csv(path, fh)
    print(f"wrote {out} ({cfg['steps']} rows)")
    if args.selftest:
        return _fbm_selftest(cfg)
    return 0


def _fbm_selftest(cfg) -> int:
    """Monte-Carlo check of lag autocovariances against the closed form."""
    n = min(int(cfg["steps"]), 256)
    grid = TimeGrid(0.0, 1.0, n)
    rows = fgn_ensemble_circulant(
        cfg["hurst"], grid, derive_seed(cfg["seed"], "selftest"), cfg["replicas"]
    )
    ok = True
    for lag in range(11):
        prods = rows[:, : n - lag] * rows[:, lag:]
        per_replica = prods.mean(axis=1)
        est = per_replica.mean()
        se = per_replica.std(ddof=1) / math.sqrt(per_replica.size)
        target = fgn_autocovariance(cfg["hurst"], lag, 1.0)
        passed = abs(est - target) <= 4.0 * se
        ok = ok and passed
        print(
            f"lag {lag:2d}: estimate {est:+.6f}  target {target:+.6f}  "
            f"4se {4 * se:.6f}  {'pass' if passed else 'FAIL'}"
        )
    print("selftest:", "pass" if ok else "FAIL")
    return 0 if ok else 1


SIMULATE_DEFAULTS = {
    "kind": "linear",
    "hurst": 0.75,
    "n_modes": 8,
    "grid_points": 32,
    "dt": 1e-3,
    "t0": 0.0,
    "t_end": 2.0,
    "replicas": 50,
    "seed": 20240801,
    "store_every": 10,
    "bounded": False,
    "initial_mode1": 0.5,
    "noise_scale": 1.0,
    "drift_gain": 1.0,
    "drift_amplitude": 1.0,
    "drift_frequency": 1.0,
    "diffusion_constant": 1.0,
    "tol": 1e-6,
    "max_iter": 50,
}


def _linear_problem(cfg) -> EvolutionProblem:
    k = int(cfg["n_modes"])
    sigmas = (cfg["noise_scale"],) + (0.0,) * (k - 1)
    amp, freq = cfg["drift_amplitude"], cfg["drift_frequency"]
    drift = ModalForcing.single_mode(k, 0, lambda t: amp * np.sin(freq * t))
    diffusion = ModalForcing.single_mode(k, 0, lambda t: cfg["diffusion_constant"] * np.ones_like(t))
    return EvolutionProblem(
        dirichlet_eigenvalues(k),
        drift,
        diffusion,
        CovarianceOperatorSpec(sigmas),
        cfg["hurst"],
        int(cfg["grid_points"]),
    )


def _build_problem(cfg) -> EvolutionProblem:
    if cfg["kind"] == "heat":
        return build_example_problem(_example_cfg(cfg))
    if cfg["kind"] == "linear":
        return _linear_problem(cfg)
    raise DomainError(f"unknown problem kind {cfg['kind']!r}")


def _example_cfg(cfg) -> ExampleConfig:
    return ExampleConfig(
        hurst=cfg["hurst"],
        n_modes=int(cfg["n_modes"]),
        physical_grid_points=int(cfg["grid_points"]),
        dt=cfg["dt"],
        t_end=cfg["t_end"],
        replicas=int(cfg["replicas"]),
        seed=int(cfg["seed"]),
        initial_mode1=cfg["initial_mode1"],
        noise_scale=cfg["noise_scale"],
        drift_gain=cfg.get("drift_gain", 1.0),
    )


def _run_grid(cfg) -> TimeGrid:
    n = int(round((cfg["t_end"] - cfg["t0"]) / cfg["dt"]))
    store = int(cfg["store_every"])
    n -= n % store
    if n < store:
        raise DomainError("time window too short for the requested store_every")
    return TimeGrid(cfg["t0"], cfg["dt"], n)


def cmd_simulate(args) -> int:
    cfg = _merge(SIMULATE_DEFAULTS, _load_config(args.config) if args.config else {}, args)
    problem = _build_problem(cfg)
    grid = _run_grid(cfg)
    store = int(cfg["store_every"])
    x0 = np.zeros(problem.n_modes)
    x0[0] = cfg["initial_mode1"]
    if cfg["bounded"]:
        ext = burn_in_grid(problem, grid)
        fields = field_ensemble(
            problem.qspec, problem.h, ext, derive_seed(cfg["seed"], "fbm"), int(cfg["replicas"])
        )
        drift_si = problem.drift.state_independent
        diff_si = problem.diffusion.state_independent
        if drift_si and diff_si:
            ens = linear_bounded_solution_ensemble(problem, grid, fields, store_every=store)
        else:
            consts = example_constants(_example_cfg(cfg))
            theta1 = bnd.contraction_factor(consts)
            try:
                result = bounded_solution_picard_ensemble(
                    problem,
                    grid,
                    fields,
                    tol=cfg["tol"],
                    max_iter=int(cfg["max_iter"]),
                    theta1=theta1,
                    store_every=store,
                )
            except NoContraction as exc:
                print(f"no contraction (theta1={theta1:.4f}): {exc}", file=sys.stderr)
                return 3
            for i, d in enumerate(result.deltas, 1):
                print(f"iteration {i}: delta {d:.6e}")
            ens = result.ensemble
    else:
        fields = field_ensemble(
            problem.qspec, problem.h, grid, derive_seed(cfg["seed"], "fbm"), int(cfg["replicas"])
        )
        ens = solve_forward_ensemble(problem, x0, cfg["t0"], grid, fields, store)
    traj_path = _out_path(args, "trajectory.csv")
    with open(traj_path, "w") as fh:
        write_trajectory_csv(ens.replicas[0], fh)
    summary_path = _out_path(args, "ensemble_summary.csv")
    with open(summary_path, "w") as fh:
        write_ensemble_summary_csv(ens, fh)
    print(f"wrote {traj_path} and {summary_path}")
    return 0


VERIFY_DEFAULTS = dict(SIMULATE_DEFAULTS)


def cmd_verify(args) -> int:
    cfg = _merge(VERIFY_DEFAULTS, _load_config(args.config) if args.config else {}, args)
    bound = args.bound
    grid = _run_grid(cfg)
    store = int(cfg["store_every"])
    seed = int(cfg["seed"])
    if bound == "linear":
        cfg["kind"] = "linear"
        problem = _linear_problem(cfg)
        ext = burn_in_grid(problem, grid)
        fields = field_ensemble(
            problem.qspec, problem.h, ext, derive_seed(seed, "fbm"), int(cfg["replicas"])
        )
        ens = linear_bounded_solution_ensemble(problem, grid, fields, store_every=store)
        consts = bnd.ProblemConstants(
            n_stab=1.0, alpha=problem.alpha, h=problem.h, sigmas=(cfg["noise_scale"],)
        )
        value = bnd.first_moment_bound(
            consts,
            sup_f_sq=cfg["drift_amplitude"] ** 2,
            sup_g_sq=cfg["diffusion_constant"] ** 2,
        )
        norms = np.sqrt(ens.sq_norms())
        curve = np.full(ens.grid.n_steps + 1, value)
        report = bnd.verify_bound(
            ens.grid.times(), norms, curve, statistic="mean-norm",
            seed=derive_seed(seed, "boot"),
        )
    elif bound in ("dissipativity", "convergence"):
        cfg["kind"] = "heat"
        problem = _build_problem(cfg)
        consts = example_constants(_example_cfg(cfg))
        x0 = np.zeros(problem.n_modes)
        x0[0] = cfg["initial_mode1"]
        fields = field_ensemble(
            problem.qspec, problem.h, grid, derive_seed(seed, "fbm"), int(cfg["replicas"])
        )
        ens = solve_forward_ensemble(problem, x0, cfg["t0"], grid, fields, store)
        if bound == "dissipativity":
            curve, certified = bnd.dissipativity_curve(
                consts, float(x0 @ x0), cfg["t0"], ens.grid.times()
            )
            report = bnd.verify_bound(
                ens.grid.times(), ens.sq_norms(), curve,
                statistic="mean-square-norm", certified=certified,
                seed=derive_seed(seed, "boot"),
            )
        else:
            ens2 = solve_forward_ensemble(problem, -x0, cfg["t0"], grid, fields, store)
            diff = ens.states - ens2.states
            sq_diff = np.einsum("rtk,rtk->rt", diff, diff)
            curve, certified = bnd.convergence_curve(
                consts, float(4.0 * (x0 @ x0)), cfg["t0"], ens.grid.times()
            )
            report = bnd.verify_bound(
                ens.grid.times(), sq_diff, curve,
                statistic="mean-square-difference", certified=certified,
                seed=derive_seed(seed, "boot"),
            )
            rate, ci = bnd.fit_decay_rate(
                ens.grid.times(), sq_diff, seed=derive_seed(seed, "boot:rate")
            )
            report.extra["fitted_rate"] = rate
            report.extra["fitted_rate_ci_half_width"] = ci
            report.extra["theoretical_rate"] = bnd.convergence_rate(consts)
    else:
        raise DomainError(f"unknown bound {bound!r}")
    out = _out_path(args, f"verify_{bound}.json")
    with open(out, "w") as fh:
        fh.write(report.to_json())
    print(f"wrote {out}: violations={report.violations} margin={report.margin:.6g}")
    return 1 if (report.certified and report.violations > 0) else 0


RECURRENCE_DEFAULTS = {
    "epsilon": 0.1,
    "tau_max": 100.0,
    "tau_step": 0.05,
    "dt": 0.01,
    "t_end": 200.0,
    "signal": "sine",
    "input": None,
    "output": "recurrence.json",
}


def _load_sampled_csv(path: str) -> SampledPath:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    t, v = data[:, 0], data[:, 1]
    dts = np.diff(t)
    if dts.size < 1 or np.any(np.abs(dts - dts[0]) > 1e-9 * max(1.0, abs(dts[0]))):
        raise DomainError("input CSV must be uniformly sampled")
    return SampledPath(TimeGrid(float(t[0]), float(dts[0]), t.size - 1), v)


def cmd_recurrence(args) -> int:
    cfg = _merge(
        RECURRENCE_DEFAULTS, _load_config(args.config) if args.config else {}, args
    )
    if cfg["input"]:
        path = _load_sampled_csv(cfg["input"])
    else:
        n = int(round(cfg["t_end"] / cfg["dt"]))
        grid = TimeGrid(0.0, cfg["dt"], n)
        t = grid.times()
        if cfg["signal"] == "sine":
            vals = np.sin(t)
        elif cfg["signal"] == "two-tone":
            vals = np.sin(t) + np.sin(math.sqrt(2.0) * t)
        else:
            raise DomainError(f"unknown signal {cfg['signal']!r}")
        path = SampledPath(grid, vals)
    dt = path.grid.dt
    step = max(1, int(round(cfg["tau_step"] / dt)))
    taus = dt * np.arange(0, int(cfg["tau_max"] / dt) + 1, step)
    result = epsilon_almost_periods(path, cfg["epsilon"], taus)
    out = _out_path(args, cfg["output"])
    with open(out, "w") as fh:
        fh.write(result.to_json())
    gap = result.max_gap
    print(
        f"wrote {out}: {result.taus.size} accepted shifts, "
        f"max_gap={'inf' if math.isinf(gap) else f'{gap:.4g}'}"
    )
    return 0


EXAMPLE_DEFAULTS = {
    "hurst": 0.75,
    "n_modes": 32,
    "grid_points": 128,
    "dt": 1e-3,
    "t_end": 20.0 * math.pi,
    "replicas": 200,
    "seed": 86028157,
    "initial_mode1": 0.5,
    "noise_scale": 1.0,
}


def cmd_example(args) -> int:
    cfg = _merge(EXAMPLE_DEFAULTS, _load_config(args.config) if args.config else {}, args)
    out_dir = args.out or "example_out"
    if args.sweep or args.sweep_only:
        rows = hurst_sweep()
        os.makedirs(out_dir, exist_ok=True)
        sweep_path = os.path.join(out_dir, "hurst_sweep.csv")
        with open(sweep_path, "w") as fh:
            write_hurst_sweep_csv(rows, fh)
        print(f"wrote {sweep_path}")
        if args.sweep_only:
            return 0
    ecfg = ExampleConfig(
        hurst=cfg["hurst"],
        n_modes=int(cfg["n_modes"]),
        physical_grid_points=int(cfg["grid_points"]),
        dt=cfg["dt"],
        t_end=cfg["t_end"],
        replicas=int(cfg["replicas"]),
        seed=int(cfg["seed"]),
        initial_mode1=cfg["initial_mode1"],
        noise_scale=cfg["noise_scale"],
    )
    result = run_example(ecfg, out_dir)
    for name, path in result.files.items():
        print(f"wrote {path}")
    print(
        f"conditions all_passed={result.conditions.all_passed} "
        f"violations={result.violations} "
        f"fitted_rate={result.fitted_rate:.4g} "
        f"theoretical_rate={result.theoretical_rate:.4g}"
    )
    return 1 if result.violations > 0 else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fbmlab",
        description="Fractional-noise SPDE simulation and verification laboratory",
    )
    parser.add_argument("--seed", type=int, default=None, help="master seed")
    parser.add_argument("--out", type=str, default=None, help="output directory")
    parser.add_argument("--config", type=str, default=None, help="JSON config file")
    parser.add_argument("--threads", type=int, default=1, help="worker thread cap")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fbm", help="generate fractional Gaussian noise")
    p.add_argument("--hurst", type=float, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--t0", type=float, default=None)
    p.add_argument("--method", choices=["circulant", "cholesky"], default=None)
    p.add_argument("--output", type=str, default=None)
    p.add_argument("--selftest", action="store_true")
    p.add_argument("--replicas", type=int, default=None)
    p.set_defaults(func=cmd_fbm)

    p = sub.add_parser("simulate", help="forward or bounded solutions")
    for key, val in SIMULATE_DEFAULTS.items():
        if key == "bounded":
            p.add_argument("--bounded", action="store_const", const=True, default=None)
        elif key == "kind":
            p.add_argument("--kind", choices=["heat", "linear"], default=None)
        else:
            p.add_argument(
                f"--{key.replace('_', '-')}",
                dest=key,
                type=type(val),
                default=None,
            )
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="Monte-Carlo verification of a bound")
    p.add_argument(
        "--bound",
        choices=["linear", "dissipativity", "convergence"],
        required=True,
    )
    for key, val in VERIFY_DEFAULTS.items():
        if key in ("bounded", "kind"):
            continue
        p.add_argument(
            f"--{key.replace('_', '-')}", dest=key, type=type(val), default=None
        )
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("recurrence", help="epsilon-almost-period detection")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--tau-max", dest="tau_max", type=float, default=None)
    p.add_argument("--tau-step", dest="tau_step", type=float, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--t-end", dest="t_end", type=float, default=None)
    p.add_argument("--signal", choices=["sine", "two-tone"], default=None)
    p.add_argument("--input", type=str, default=None)
    p.add_argument("--output", type=str, default=None)
    p.set_defaults(func=cmd_recurrence)

    p = sub.add_parser("example", help="run the heat-equation pipeline")
    p.add_argument("--hurst", type=float, default=None)
    p.add_argument("--n-modes", dest="n_modes", type=int, default=None)
    p.add_argument("--grid-points", dest="grid_points", type=int, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--t-end", dest="t_end", type=float, default=None)
    p.add_argument("--replicas", type=int, default=None)
    p.add_argument("--initial", dest="initial_mode1", type=float, default=None)
    p.add_argument("--noise-scale", dest="noise_scale", type=float, default=None)
    p.add_argument("--defaults", action="store_true", help="run with the defaults")
    p.add_argument("--sweep", action="store_true", help="also tabulate the Hurst sweep")
    p.add_argument("--sweep-only", action="store_true", help="only the sweep table")
    p.set_defaults(func=cmd_example)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DomainError, GridMismatch, FbmlabError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
