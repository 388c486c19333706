"""Singular Volterra kernel machinery behind Wiener integrals of fGn.

Provides the square-root kernel K(t, s), its closed-form time derivative,
the adjoint transform mapping step functions into L^2, exact second
moments of Wiener integrals of step functions, and the L^{1/H} moment
inequality checker.

The kernel's endpoint singularity (u - s)^{H - 3/2} is removed exactly by
the substitution u = s + xi^{2/(2H-1)}, after which the integrand is
smooth and adaptive quadrature converges fast.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import gammaln

from .errors import DomainError, GridMismatch
from .fbm import FgnPath, TimeGrid, check_hurst


def kernel_constant(h: float) -> float:
    """Normalizing constant sqrt(H(2H-1) / B(2-2H, H-1/2)) of the kernel."""
    h = check_hurst(h)
    log_beta = gammaln(2.0 - 2.0 * h) + gammaln(h - 0.5) - gammaln(1.5 - h)
    return math.sqrt(h * (2.0 * h - 1.0) / math.exp(log_beta))


def weighted_kernel_constant(h: float) -> float:
    """kernel_constant(h) * (2H-1)^(2H-1), the decay-weighted variant."""
    h = check_hurst(h)
    return kernel_constant(h) * (2.0 * h - 1.0) ** (2.0 * h - 1.0)


def moment_inequality_constant(h: float) -> float:
    """Sharp constant b(H) with E(int phi dB)^2 <= b(H) ||phi||^2_{L^{1/H}}.

    b(H) = H(2H-1) pi^{(3-4H)/2} Gamma(H-1/2) / Gamma(H), the sharp
    constant of the convolution inequality for the |r-u|^{2H-2} kernel at
    exponent 1/H.  It tends to 1 at both endpoints of (1/2, 1) and equals
    the best possible bound over the whole line, hence is valid on any
    interval.
    """
    h = check_hurst(h)
    log_val = (
        math.log(h * (2.0 * h - 1.0))
        + 0.5 * (3.0 - 4.0 * h) * math.log(math.pi)
        + gammaln(h - 0.5)
        - gammaln(h)
    )
    return math.exp(log_val)


@dataclass(frozen=True)
class KernelConstants:
    """Bundle of the two kernel constants for one Hurst index."""

    kernel: float
    weighted: float
    h: float


def kernel_constants(h: float) -> KernelConstants:
    return KernelConstants(kernel_constant(h), weighted_kernel_constant(h), h)


@dataclass(frozen=True)
class StepFunction:
    """Piecewise-constant function on [t_1, t_n): value x_i on [t_i, t_{i+1})."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        bp = np.asarray(self.breakpoints, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if bp.ndim != 1 or bp.size < 2:
            raise DomainError("need at least two breakpoints")
        if np.any(np.diff(bp) <= 0):
            raise DomainError("breakpoints must be strictly increasing")
        if vals.shape != (bp.size - 1,):
            raise DomainError("values must have one entry per piece")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    @property
    def support_end(self) -> float:
        return float(self.breakpoints[-1])

    def lp_norm(self, p: float) -> float:
        """Exact L^p norm: (sum |x_i|^p * piece_length)^{1/p}."""
        widths = np.diff(self.breakpoints)
        return float(np.sum(np.abs(self.values) ** p * widths) ** (1.0 / p))


def indicator(t_end: float, t_start: float = 0.0) -> StepFunction:
    """Indicator of [t_start, t_end) as a step function."""
    return StepFunction(np.array([t_start, t_end]), np.array([1.0]))


def _smooth_piece_integral(h: float, s: float, lo: float, hi: float) -> float:
    """integral of u^{H-1/2} (u-s)^{H-3/2} du over [lo, hi], lo >= s.

    Substituting u = s + xi^p with p = 2/(2H-1) makes the integrand
    p * (s + xi^p)^{H-1/2}, smooth up to the endpoint.
    """
    if hi <= lo:
        return 0.0
    p = 2.0 / (2.0 * h - 1.0)
    xi_lo = (lo - s) ** (1.0 / p) if lo > s else 0.0
    xi_hi = (hi - s) ** (1.0 / p)
    val, _ = quad(
        lambda xi: p * (s + xi**p) ** (h - 0.5),
        xi_lo,
        xi_hi,
        epsabs=0.0,
        epsrel=1e-11,
        limit=200,
    )
    return val


def volterra_kernel(h: float, t: float, s: float) -> float:
    """K(t, s) = c(H) s^{1/2-H} int_s^t (u-s)^{H-3/2} u^{H-1/2} du, t >= s > 0."""
    h = check_hurst(h)
    if s <= 0 or s > t:
        raise DomainError(f"require 0 < s <= t, got s={s}, t={t}")
    if s == t:
        return 0.0
    c = kernel_constant(h)
    return c * s ** (0.5 - h) * _smooth_piece_integral(h, s, s, t)


def volterra_kernel_dt(h: float, t: float, s: float) -> float:
    """Closed-form time derivative c(H) (t/s)^{H-1/2} (t-s)^{H-3/2}, s < t."""
    h = check_hurst(h)
    if s <= 0 or s >= t:
        raise DomainError(f"require 0 < s < t, got s={s}, t={t}")
    c = kernel_constant(h)
    return c * (t / s) ** (h - 0.5) * (t - s) ** (h - 1.5)


def apply_kernel_adjoint(
    phi: StepFunction, h: float, horizon: float, out_grid
) -> np.ndarray:
    """Adjoint transform (int_s^T phi(t) dK/dt(t, s) dt) sampled at out_grid.

    ``out_grid`` may be a TimeGrid (its nodes are used) or an array of
    evaluation points; all points must lie in (0, horizon).  Each constant
    piece is integrated exactly by smooth quadrature after the singularity
    -removing substitution.
    """
    h = check_hurst(h)
    if phi.support_end > horizon + 1e-12:
        raise DomainError("step function support exceeds the horizon")
    pts = out_grid.times() if isinstance(out_grid, TimeGrid) else np.asarray(out_grid, float)
    if np.any(pts <= 0) or np.any(pts >= horizon):
        raise DomainError("evaluation points must lie strictly inside (0, horizon)")
    c = kernel_constant(h)
    out = np.zeros(pts.size)
    bp = phi.breakpoints
    for j, s in enumerate(pts):
        acc = 0.0
        for i, x in enumerate(phi.values):
            if x == 0.0:
                continue
            lo = max(s, bp[i])
            hi = bp[i + 1]
            if hi <= lo:
                continue
            acc += x * _smooth_piece_integral(h, s, lo, hi)
        out[j] = c * s ** (0.5 - h) * acc
    return out


def wiener_integral(phi: StepFunction, path: FgnPath) -> float:
    """Wiener integral sum x_i (B(t_{i+1}) - B(t_i)) along a sampled path.

    Breakpoints must land on grid nodes (snapped within dt/2, otherwise
    GridMismatch); degenerate pieces after snapping contribute zero.
    """
    grid = path.grid
    positions = path.positions()
    idx = np.empty(phi.breakpoints.size, dtype=int)
    for j, bp in enumerate(phi.breakpoints):
        k = round((bp - grid.t0) / grid.dt)
        if k < 0 or k > grid.n_steps:
            raise GridMismatch(f"breakpoint {bp} outside the path grid")
        if abs(bp - (grid.t0 + k * grid.dt)) > grid.dt / 2:
            raise GridMismatch(f"breakpoint {bp} farther than dt/2 from any node")
        idx[j] = k
    return float(np.sum(phi.values * (positions[idx[1:]] - positions[idx[:-1]])))


def _pairwise_moment_matrix(h: float, breakpoints: np.ndarray) -> np.ndarray:
    """Matrix D with D_ij = H(2H-1) int_{I_i} int_{I_j} |r-u|^{2H-2} dr du.

    Closed form per pair of intervals [a,b] x [c,d]:
    (|b-c|^2H + |a-d|^2H - |b-d|^2H - |a-c|^2H) / 2.
    """
    hh = 2.0 * h
    a = breakpoints[:-1]
    b = breakpoints[1:]
    bc = np.abs(b[:, None] - a[None, :]) ** hh
    ad = np.abs(a[:, None] - b[None, :]) ** hh
    bd = np.abs(b[:, None] - b[None, :]) ** hh
    ac = np.abs(a[:, None] - a[None, :]) ** hh
    return 0.5 * (bc + ad - bd - ac)


def isometry_second_moment(phi: StepFunction, h: float) -> float:
    """Exact E(int phi dB)^2 = H(2H-1) sum_ij x_i x_j int int |r-u|^{2H-2}.

    The double integral over constant pieces has a closed form, so the
    value carries no quadrature error.
    """
    h = check_hurst(h)
    d = _pairwise_moment_matrix(h, phi.breakpoints)
    return float(phi.values @ d @ phi.values)


def moment_inequality_check(phi: StepFunction, h: float):
    """Check the L^{1/H} second-moment inequality on a step function.

    Returns ``(lhs, rhs, ratio, holds)`` where lhs uses |phi| in the double
    integral, rhs = moment_inequality_constant(h) * ||phi||^2_{L^{1/H}},
    and holds tolerates 1e-9 relative slack.  The ratio lhs/rhs is exposed
    so any constant discrepancy is visible rather than hidden.
    """
    h = check_hurst(h)
    d = _pairwise_moment_matrix(h, phi.breakpoints)
    av = np.abs(phi.values)
    lhs = float(av @ d @ av)
    rhs = moment_inequality_constant(h) * phi.lp_norm(1.0 / h) ** 2
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else np.inf)
    holds = lhs <= rhs * (1.0 + 1e-9)
    return lhs, rhs, ratio, holds
