"""Recurrence diagnostics: path metrics, almost periods, and law distances.

The compact-open path metric and the epsilon-almost-period detector work
on sampled scalar paths; the bounded-Lipschitz distance compares empirical
laws of one-dimensional trajectory summaries (a lower bound for the same
distance on the full state space, used as a diagnostic).  The shift
-compatibility check simulates the bounded solution under a forcing and
under its time shift and compares the summary laws time point by time
point against a calibrated sampling noise floor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.stats import wasserstein_distance

from .errors import DomainError, GridMismatch
from .fbm import TimeGrid, field_ensemble
from .galerkin import (
    EvolutionProblem,
    TrajectoryEnsemble,
    bounded_solution_picard_ensemble,
    burn_in_grid,
    linear_bounded_solution_ensemble,
    shift_spec,
)
from .seeding import derive_seed

#: pooled-support size beyond which the exact LP is replaced by the
#: transport-cost upper bound (flagged in results).
BL_EXACT_CUTOFF = 400


@dataclass(frozen=True)
class SampledPath:
    """Scalar path summary sampled on a uniform grid (one value per node)."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.n_steps + 1,):
            raise GridMismatch("need one value per grid node")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Uniformly weighted samples of a scalar statistic."""

    samples: np.ndarray

    def __post_init__(self) -> None:
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 1 or s.size < 1:
            raise DomainError("need a nonempty 1-d sample vector")
        object.__setattr__(self, "samples", s)


@dataclass
class AlmostPeriodSet:
    """Shifts accepted by the windowed epsilon-almost-period criterion."""

    epsilon: float
    taus: np.ndarray
    search_range: tuple
    max_gap: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "epsilon": float(self.epsilon),
                "taus": [float(t) for t in self.taus],
                "max_gap": float(self.max_gap),
                "search_range": [float(self.search_range[0]), float(self.search_range[1])],
            },
            sort_keys=True,
            indent=2,
        )


def bebutov_distance(p1: SampledPath, p2: SampledPath) -> float:
    """Compact-open path distance sup_T min(max_{|t|<=T} |p1-p2|, 1/T).

    The supremum is taken over the discrete set of positive grid
    half-widths (exact for sampled data: the windowed max is a step
    function of T whose minimum against 1/T is attained at the left edge
    of each step).  Grids must match and contain t = 0 as an interior node.
    """
    if not p1.grid.compatible(p2.grid):
        raise GridMismatch("paths must share one grid")
    times = p1.grid.times()
    if times[0] >= 0 or times[-1] <= 0:
        raise DomainError("grid must contain t = 0 as an interior point")
    rho = np.abs(p1.values - p2.values)
    radii = np.abs(times)
    order = np.argsort(radii, kind="stable")
    sorted_radii = radii[order]
    running_max = np.maximum.accumulate(rho[order])
    positive = sorted_radii > 0
    r_pos = sorted_radii[positive]
    m_pos = running_max[positive]
    t_vals = np.unique(r_pos)
    # last running-max entry at each distinct radius = windowed max for that T
    boundaries = np.searchsorted(r_pos, t_vals, side="right") - 1
    window_max = m_pos[boundaries]
    return float(np.max(np.minimum(window_max, 1.0 / t_vals)))


def epsilon_almost_periods(
    p: SampledPath, epsilon: float, tau_grid: np.ndarray, min_overlap: int = 2
) -> AlmostPeriodSet:
    """Shifts tau with sup over the overlap window of |p(t+tau) - p(t)| < eps.

    ``tau_grid`` entries must be multiples of the sampling step.  The gap
    statistic is the largest difference between consecutive accepted
    shifts over the searched range: a finite-window proxy for relative
    density (the range itself is recorded alongside).
    """
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    taus = np.asarray(tau_grid, dtype=float)
    if taus.size == 0:
        raise DomainError("empty tau grid")
    dt = p.grid.dt
    values = p.values
    n = values.size
    accepted = []
    for tau in taus:
        k = round(tau / dt)
        if abs(tau - k * dt) > 1e-9 * max(1.0, abs(tau)):
            raise DomainError(f"tau={tau} is not a multiple of dt={dt}")
        if k < 0 or n - k < min_overlap:
            continue
        if k == 0:
            accepted.append(0.0)
            continue
        if np.max(np.abs(values[k:] - values[: n - k])) < epsilon:
            accepted.append(k * dt)
    accepted_arr = np.asarray(accepted)
    if accepted_arr.size >= 2:
        max_gap = float(np.max(np.diff(accepted_arr)))
    else:
        max_gap = float("inf")
    return AlmostPeriodSet(
        epsilon, accepted_arr, (float(taus.min()), float(taus.max())), max_gap
    )


def _bl_lp(support: np.ndarray, weights: np.ndarray) -> float:
    """Exact bounded-Lipschitz distance by linear programming.

    Variables are the test-function values at the pooled support plus the
    sup-norm budget s; constraints |f_i| <= s and |f_{i+1} - f_i| <=
    (1-s) dx_i encode the unit ball Lip(f) + sup|f| <= 1 (adjacent pairs
    suffice on a line).
    """
    m = support.size
    if m == 1:
        return 0.0
    dx = np.diff(support)
    n_pairs = m - 1
    n_con = 2 * n_pairs + 2 * m
    a_ub = np.zeros((n_con, m + 1))
    b_ub = np.zeros(n_con)
    rows = np.arange(n_pairs)
    # f_{i+1} - f_i + s dx_i <= dx_i   and   f_i - f_{i+1} + s dx_i <= dx_i
    a_ub[rows, rows + 1] = 1.0
    a_ub[rows, rows] = -1.0
    a_ub[rows, m] = dx
    b_ub[rows] = dx
    a_ub[n_pairs + rows, rows + 1] = -1.0
    a_ub[n_pairs + rows, rows] = 1.0
    a_ub[n_pairs + rows, m] = dx
    b_ub[n_pairs + rows] = dx
    # |f_i| <= s
    base = 2 * n_pairs
    cols = np.arange(m)
    a_ub[base + cols, cols] = 1.0
    a_ub[base + cols, m] = -1.0
    a_ub[base + m + cols, cols] = -1.0
    a_ub[base + m + cols, m] = -1.0
    c = np.concatenate([-weights, [0.0]])
    res = linprog(
        c,
        A_ub=a_ub,
        b_ub=b_ub,
        bounds=[(None, None)] * m + [(0.0, 1.0)],
        method="highs",
    )
    if not res.success:
        raise RuntimeError(f"bounded-Lipschitz LP failed: {res.message}")
    return float(np.clip(-res.fun, 0.0, 2.0))


def bl_distance_detailed(
    mu: EmpiricalMeasure, nu: EmpiricalMeasure, exact_cutoff: int = BL_EXACT_CUTOFF
):
    """Bounded-Lipschitz distance and an exactness flag.

    Exact LP when the pooled support has at most ``exact_cutoff`` points;
    beyond that, the value min(W1, 2) is returned as an upper bound with
    ``exact=False``.
    """
    x, y = mu.samples, nu.samples
    support, inverse = np.unique(np.concatenate([x, y]), return_inverse=True)
    if support.size > exact_cutoff:
        w1 = wasserstein_distance(x, y)
        return min(float(w1), 2.0), False
    weights = np.zeros(support.size)
    np.add.at(weights, inverse[: x.size], 1.0 / x.size)
    np.add.at(weights, inverse[x.size :], -1.0 / y.size)
    return _bl_lp(support, weights), True


def bl_distance(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """Bounded-Lipschitz (Dudley) distance between two empirical laws."""
    return bl_distance_detailed(mu, nu)[0]


def distribution_profile(
    ensemble: TrajectoryEnsemble, summary: str = "norm"
) -> list[EmpiricalMeasure]:
    """Per-time empirical law of a scalar trajectory summary.

    ``summary`` is "norm" (state norm) or "mode1" (leading coefficient,
    sign-sensitive).
    """
    if summary == "norm":
        stats = np.sqrt(ensemble.sq_norms())
    elif summary == "mode1":
        stats = ensemble.states[:, :, 0]
    else:
        raise DomainError(f"unknown summary {summary!r}")
    return [EmpiricalMeasure(stats[:, j]) for j in range(stats.shape[1])]


def _bounded_ensemble(
    problem: EvolutionProblem,
    grid: TimeGrid,
    seed: int,
    replicas: int,
    store_every: int,
    tail_eps: float,
    picard_tol: float,
) -> TrajectoryEnsemble:
    ext = burn_in_grid(problem, grid, tail_eps)
    fields = field_ensemble(problem.qspec, problem.h, ext, seed, replicas)
    drift_si = problem.drift is None or problem.drift.state_independent
    diff_si = problem.diffusion is None or problem.diffusion.state_independent
    if drift_si and diff_si:
        return linear_bounded_solution_ensemble(
            problem, grid, fields, tail_eps, store_every
        )
    result = bounded_solution_picard_ensemble(
        problem, grid, fields, tol=picard_tol, store_every=store_every, tail_eps=tail_eps
    )
    return result.ensemble


@dataclass
class CompatibilityReport:
    """Shift-compatibility diagnostic for one shift tau.

    ``distances`` holds the per-time bounded-Lipschitz distances between
    the unshifted and shifted solution-law profiles; the noise floor is
    calibrated from pairs of independent unshifted ensembles.
    """

    tau: float
    times: np.ndarray
    distances: np.ndarray
    max_distance: float
    noise_floor: float
    noise_floor_sd: float
    verdict: str
    summary: str
    exact: bool
    floor_samples: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "tau": float(self.tau),
                "times": [float(t) for t in self.times],
                "distances": [float(d) for d in self.distances],
                "max_distance": float(self.max_distance),
                "noise_floor": float(self.noise_floor),
                "noise_floor_sd": float(self.noise_floor_sd),
                "verdict": self.verdict,
                "summary": self.summary,
                "exact": bool(self.exact),
                "floor_samples": [float(v) for v in self.floor_samples],
            },
            sort_keys=True,
            indent=2,
        )


def _profile_distance(ens_a, ens_b, summary):
    pa = distribution_profile(ens_a, summary)
    pb = distribution_profile(ens_b, summary)
    dists = np.empty(len(pa))
    exact_all = True
    for j, (a, b) in enumerate(zip(pa, pb)):
        dists[j], exact = bl_distance_detailed(a, b)
        exact_all = exact_all and exact
    return dists, exact_all


def compatibility_check(
    problem: EvolutionProblem,
    tau: float,
    replicas: int,
    grid: TimeGrid,
    seed: int,
    summary: str = "norm",
    floor_pairs: int = 4,
    store_every: int = 1,
    tail_eps: float = 1e-8,
    picard_tol: float = 1e-6,
) -> CompatibilityReport:
    """Compare solution laws under a forcing and under its tau-shift.

    Simulates the bounded solution for the given problem and for the
    time-shifted forcing with independent noise, then takes the max over
    the grid of the bounded-Lipschitz distance between the per-time
    summary laws.  The sampling noise floor (mean and sd over
    ``floor_pairs`` pairs of independent unshifted ensembles) calibrates
    the verdict: "at_noise_floor" when the max distance stays within
    three floor standard deviations.
    """
    k = round(tau / grid.dt)
    if abs(tau - k * grid.dt) > 1e-9 * max(1.0, abs(tau)):
        raise DomainError(f"tau={tau} is not a multiple of dt={grid.dt}")
    shifted = EvolutionProblem(
        problem.eigenvalues,
        shift_spec(problem.drift, tau),
        shift_spec(problem.diffusion, tau),
        problem.qspec,
        problem.h,
        problem.physical_grid_points,
    )

    def run(label: str, prob: EvolutionProblem) -> TrajectoryEnsemble:
        return _bounded_ensemble(
            prob,
            grid,
            derive_seed(seed, label),
            replicas,
            store_every,
            tail_eps,
            picard_tol,
        )

    base = run("base", problem)
    shifted_ens = run("shifted", shifted)
    distances, exact = _profile_distance(base, shifted_ens, summary)
    floor_samples = []
    for i in range(floor_pairs):
        ens_a = run(f"floor:{i}:a", problem)
        ens_b = run(f"floor:{i}:b", problem)
        d, _ = _profile_distance(ens_a, ens_b, summary)
        floor_samples.append(float(d.max()))
    floor_mean = float(np.mean(floor_samples))
    floor_sd = float(np.std(floor_samples, ddof=1)) if floor_pairs > 1 else 0.0
    max_distance = float(distances.max())
    verdict = (
        "at_noise_floor"
        if max_distance <= floor_mean + 3.0 * floor_sd
        else "above_noise_floor"
    )
    return CompatibilityReport(
        tau,
        base.grid.times(),
        distances,
        max_distance,
        floor_mean,
        floor_sd,
        verdict,
        summary,
        exact,
        floor_samples,
    )
