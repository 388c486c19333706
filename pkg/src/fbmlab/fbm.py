"""Exact samplers for fractional Gaussian noise and cylindrical fBm fields.

Two exact generators are provided: circulant embedding (O(n log n),
default) and a dense Cholesky factorization of the path covariance
(O(n^3), reference).  Both draw from substreams derived from a single
seed, so outputs are reproducible and modes/replicas are independent.

The Hurst index is restricted to (1/2, 1): increments are then positively
correlated and every covariance integral used downstream converges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CovarianceNotPD, DomainError, EmbeddingNotNonnegative
from .seeding import derive_seed, substream_seed

#: eigenvalues of the circulant embedding in [-EIG_CLIP_TOL, 0) are clipped
#: to zero; anything more negative raises EmbeddingNotNonnegative.
EIG_CLIP_TOL = 1e-10

#: default cap on the Cholesky reference sampler (cost grows cubically).
CHOLESKY_CAP = 2048


def check_hurst(h: float) -> float:
    """Validate a Hurst index, returning it as a float."""
    h = float(h)
    if not 0.5 < h < 1.0:
        raise DomainError(
            f"Hurst index must lie in the open interval (0.5, 1); got {h}"
        )
    return h


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid: node k sits at ``t0 + k*dt`` for k = 0..n_steps.

    ``n_steps`` counts increments, so there are ``n_steps + 1`` nodes.
    """

    t0: float
    dt: float
    n_steps: int

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise DomainError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise DomainError(f"n_steps must be >= 1, got {self.n_steps}")

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * self.n_steps

    def times(self) -> np.ndarray:
        """All n_steps + 1 node times."""
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    def step_times(self) -> np.ndarray:
        """Left endpoints of the n_steps increments."""
        return self.t0 + self.dt * np.arange(self.n_steps)

    def compatible(self, other: "TimeGrid", rtol: float = 1e-9) -> bool:
        return (
            abs(self.t0 - other.t0) <= rtol * max(1.0, abs(self.t0))
            and abs(self.dt - other.dt) <= rtol * self.dt
            and self.n_steps == other.n_steps
        )


@dataclass(frozen=True)
class CovarianceOperatorSpec:
    """Diagonal covariance operator given by its eigenvalue sequence.

    Eigenvalues must be nonincreasing and nonnegative; the operator is
    trace class by construction since the sequence is finite.
    """

    eigenvalues: tuple

    def __post_init__(self) -> None:
        sig = np.asarray(self.eigenvalues, dtype=float)
        if sig.ndim != 1 or sig.size < 1:
            raise DomainError("eigenvalues must be a nonempty 1-d sequence")
        if np.any(sig < 0):
            raise DomainError("covariance eigenvalues must be nonnegative")
        if np.any(np.diff(sig) > 1e-12):
            raise DomainError("covariance eigenvalues must be nonincreasing")
        object.__setattr__(self, "eigenvalues", tuple(float(s) for s in sig))

    @property
    def n_modes(self) -> int:
        return len(self.eigenvalues)

    @property
    def trace(self) -> float:
        return float(sum(self.eigenvalues))


def default_covariance(n_modes: int = 16) -> CovarianceOperatorSpec:
    """Inverse-square eigenvalue decay truncated to ``n_modes`` modes.

    The truncated tail mass is sum_{n > M} n^-2 = pi^2/6 - sum_{n <= M} n^-2.
    """
    sig = [1.0 / (n * n) for n in range(1, n_modes + 1)]
    return CovarianceOperatorSpec(tuple(sig))


def covariance_tail_mass(spec: CovarianceOperatorSpec) -> float:
    """Tail mass pi^2/6 - trace for the inverse-square family diagnostic."""
    return float(np.pi**2 / 6.0 - spec.trace)


@dataclass(frozen=True)
class FgnPath:
    """Fractional Gaussian noise increments on a uniform grid.

    ``increments[k]`` is the path increment over ``[t_k, t_{k+1})``; the
    cumulative sum defines a path started at zero on ``grid.t0``.
    """

    increments: np.ndarray
    grid: TimeGrid
    h: float
    seed: int

    def positions(self) -> np.ndarray:
        """Path values at all grid nodes, starting from zero."""
        out = np.empty(self.grid.n_steps + 1)
        out[0] = 0.0
        np.cumsum(self.increments, out=out[1:])
        return out


@dataclass(frozen=True)
class CylindricalFbmField:
    """Matrix of independent scaled fGn rows, one per covariance mode.

    Row n carries sqrt(sigma_n) times a unit fGn path; rows come from
    statistically independent substreams of ``seed``.
    """

    mode_increments: np.ndarray
    qspec: CovarianceOperatorSpec
    h: float
    grid: TimeGrid
    seed: int

    @property
    def n_modes(self) -> int:
        return self.mode_increments.shape[0]


def fbm_covariance(h: float, t: float, s: float) -> float:
    """Covariance (|t|^2H + |s|^2H - |t-s|^2H) / 2 of fBm at times t, s."""
    h = check_hurst(h)
    hh = 2.0 * h
    return 0.5 * (abs(t) ** hh + abs(s) ** hh - abs(t - s) ** hh)


def fgn_autocovariance(h: float, lag, dt: float = 1.0):
    """Autocovariance of unit-step fGn at integer ``lag``, scaled by dt^2H.

    Vectorized over ``lag``; lag 0 gives the increment variance dt^2H.
    """
    h = check_hurst(h)
    if dt <= 0:
        raise DomainError(f"dt must be positive, got {dt}")
    k = np.abs(np.asarray(lag, dtype=float))
    hh = 2.0 * h
    val = 0.5 * ((k + 1.0) ** hh - 2.0 * k**hh + np.abs(k - 1.0) ** hh)
    out = dt**hh * val
    return float(out) if np.isscalar(lag) else out


def fgn_covariance_matrix(h: float, n: int, dt: float = 1.0) -> np.ndarray:
    """Exact (Toeplitz) covariance matrix of n consecutive fGn increments."""
    gamma = fgn_autocovariance(h, np.arange(n), dt)
    idx = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    return gamma[idx]


def _row_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(substream_seed(seed, index))


def circulant_eigenvalues(gamma: np.ndarray) -> np.ndarray:
    """Eigenvalues of the circulant embedding of autocovariances 0..n.

    ``gamma`` holds lags 0..n (n+1 entries); the embedding has length 2n.
    Raises EmbeddingNotNonnegative if any eigenvalue is below -EIG_CLIP_TOL;
    eigenvalues in [-EIG_CLIP_TOL, 0) are clipped to zero.
    """
    gamma = np.asarray(gamma, dtype=float)
    n = gamma.size - 1
    if n < 1:
        raise DomainError("need autocovariances at lags 0..n with n >= 1")
    first_row = np.concatenate([gamma[:n], gamma[n:], gamma[n - 1 : 0 : -1]])
    eig = np.fft.fft(first_row).real
    worst = eig.min()
    if worst < -EIG_CLIP_TOL:
        raise EmbeddingNotNonnegative(
            f"circulant embedding eigenvalue {worst:.3e} below -{EIG_CLIP_TOL:.0e}"
        )
    return np.clip(eig, 0.0, None)


def _sample_circulant_rows(
    eig: np.ndarray, n: int, seed: int, indices: range
) -> np.ndarray:
    """Draw one unit-dt fGn row per substream index via the embedding."""
    m = eig.size  # 2n
    out = np.empty((len(indices), n))
    half = np.sqrt(eig / (2.0 * m))
    full = np.sqrt(eig / m)
    k = np.arange(1, n)
    w = np.empty(m, dtype=complex)
    for row, idx in enumerate(indices):
        rng = _row_rng(seed, idx)
        xi = rng.standard_normal(m)
        eta = rng.standard_normal(m)
        w[0] = full[0] * xi[0]
        w[n] = full[n] * xi[n]
        w[k] = half[k] * (xi[k] + 1j * eta[k])
        w[m - k] = half[k] * (xi[k] - 1j * eta[k])
        out[row] = np.fft.fft(w).real[:n]
    return out


def generate_fgn_circulant(h: float, grid: TimeGrid, seed: int) -> FgnPath:
    """Exact fGn via circulant embedding of the Toeplitz autocovariance.

    The unit-spacing path is generated first and scaled by dt^H, which is
    exact in law by self-similarity.  Deterministic for a fixed seed.
    """
    h = check_hurst(h)
    n = grid.n_steps
    eig = circulant_eigenvalues(fgn_autocovariance(h, np.arange(n + 1)))
    row = _sample_circulant_rows(eig, n, seed, range(1))[0]
    return FgnPath(row * grid.dt**h, grid, h, seed)


def fgn_ensemble_circulant(
    h: float, grid: TimeGrid, seed: int, n_paths: int
) -> np.ndarray:
    """(n_paths, n_steps) array of independent fGn rows.

    Row i uses the substream ``derive_seed(seed, "replica:i")``, so adding
    paths never changes existing ones.
    """
    h = check_hurst(h)
    n = grid.n_steps
    eig = circulant_eigenvalues(fgn_autocovariance(h, np.arange(n + 1)))
    out = np.empty((n_paths, n))
    scale = grid.dt**h
    for i in range(n_paths):
        sub = derive_seed(seed, f"replica:{i}")
        out[i] = _sample_circulant_rows(eig, n, sub, range(1))[0] * scale
    return out


def generate_fbm_cholesky(
    h: float, grid: TimeGrid, seed: int, cap: int = CHOLESKY_CAP
) -> FgnPath:
    """Reference sampler: dense Cholesky of the exact path covariance.

    Positions are sampled jointly with covariance R(t_i, t_j) relative to
    the grid origin (the path starts at zero), then differenced.
    """
    h = check_hurst(h)
    n = grid.n_steps
    if n > cap:
        raise DomainError(f"n_steps={n} exceeds the Cholesky cap {cap}")
    t = grid.dt * np.arange(1, n + 1)
    hh = 2.0 * h
    cov = 0.5 * (
        t[:, None] ** hh + t[None, :] ** hh - np.abs(t[:, None] - t[None, :]) ** hh
    )
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise CovarianceNotPD(
            f"covariance Cholesky failed for n={n}, h={h}: {exc}"
        ) from exc
    z = _row_rng(seed, 0).standard_normal(n)
    positions = chol @ z
    return FgnPath(np.diff(positions, prepend=0.0), grid, h, seed)


def fbm_cholesky_ensemble(
    h: float, grid: TimeGrid, seed: int, n_paths: int, cap: int = CHOLESKY_CAP
) -> np.ndarray:
    """(n_paths, n_steps) independent increment rows via the Cholesky factor."""
    h = check_hurst(h)
    n = grid.n_steps
    if n > cap:
        raise DomainError(f"n_steps={n} exceeds the Cholesky cap {cap}")
    t = grid.dt * np.arange(1, n + 1)
    hh = 2.0 * h
    cov = 0.5 * (
        t[:, None] ** hh + t[None, :] ** hh - np.abs(t[:, None] - t[None, :]) ** hh
    )
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise CovarianceNotPD(str(exc)) from exc
    out = np.empty((n_paths, n))
    for i in range(n_paths):
        sub = derive_seed(seed, f"replica:{i}")
        z = _row_rng(sub, 0).standard_normal(n)
        out[i] = np.diff(chol @ z, prepend=0.0)
    return out


def generate_cylindrical_fbm(
    qspec: CovarianceOperatorSpec,
    h: float,
    grid: TimeGrid,
    seed: int,
    method: str = "circulant",
) -> CylindricalFbmField:
    """Field of independent fGn rows, row n scaled by sqrt(sigma_n).

    Mode n draws from substream ``substream_seed(seed, n)``; zero-variance
    modes yield all-zero rows without consuming randomness from others.
    """
    h = check_hurst(h)
    n = grid.n_steps
    rows = np.zeros((qspec.n_modes, n))
    eig = None
    if method == "circulant":
        eig = circulant_eigenvalues(fgn_autocovariance(h, np.arange(n + 1)))
    elif method != "cholesky":
        raise DomainError(f"unknown method {method!r}")
    scale = grid.dt**h
    for mode, sigma in enumerate(qspec.eigenvalues):
        if sigma == 0.0:
            continue
        if method == "circulant":
            row = _sample_circulant_rows(eig, n, seed, range(mode, mode + 1))[0]
            rows[mode] = np.sqrt(sigma) * scale * row
        else:
            sub = substream_seed(seed, mode)
            rows[mode] = np.sqrt(sigma) * generate_fbm_cholesky(h, grid, sub).increments
    return CylindricalFbmField(rows, qspec, h, grid, seed)


def field_ensemble(
    qspec: CovarianceOperatorSpec,
    h: float,
    grid: TimeGrid,
    seed: int,
    replicas: int,
) -> np.ndarray:
    """(replicas, n_modes, n_steps) stack of independent noise fields.

    Replica i uses the labelled seed ``derive_seed(seed, "replica:i")``.
    """
    h = check_hurst(h)
    n = grid.n_steps
    out = np.zeros((replicas, qspec.n_modes, n))
    eig = circulant_eigenvalues(fgn_autocovariance(h, np.arange(n + 1)))
    scale = grid.dt**h
    for i in range(replicas):
        sub = derive_seed(seed, f"replica:{i}")
        for mode, sigma in enumerate(qspec.eigenvalues):
            if sigma == 0.0:
                continue
            row = _sample_circulant_rows(eig, n, sub, range(mode, mode + 1))[0]
            out[i, mode] = np.sqrt(sigma) * scale * row
    return out


def write_fgn_csv(path: FgnPath, file) -> None:
    """CSV export ``t,increment`` with one row per step, 17 sig. digits.

    The reported time is the right endpoint of each increment interval.
    """
    file.write("t,increment\n")
    times = path.grid.times()[1:]
    for t, v in zip(times, path.increments):
        file.write(f"{t:.17g},{v:.17g}\n")
