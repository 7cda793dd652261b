"""Brownian path simulation, regression conditioning and empirical norms.

Simulation is reproducible by construction: a counter-based generator keyed
by the master seed fills the increment array in one deterministic pass, so
path i always owns the counter block [i*N*d, (i+1)*N*d) and results cannot
depend on evaluation order.  Normal variates come from the inverse CDF of
bin-centred uniforms, which is stable across platforms to about one ulp.

Conditional expectations are least-squares projections onto polynomial basis
functions of the current Brownian state, optionally augmented with extra
adapted regressors supplied by the caller.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import ndtri

DEFAULT_MEMORY_CAP = 2 << 30  # bytes of path storage a single ensemble may use


class CapacityError(RuntimeError):
    """Raised when a requested ensemble would exceed the memory cap."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, T] with N steps of size dt = T/N."""

    T: float
    N: int

    def __post_init__(self) -> None:
        if self.T <= 0.0:
            raise ValueError("horizon must be positive")
        if self.N < 1:
            raise ValueError("need at least one step")

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.N + 1)

    def index_of(self, t: float) -> int:
        """Grid index of time t; raises if t is off-grid or outside [0, T]."""
        from .delay import GridAlignmentError, lag_steps

        idx = lag_steps(t, self.dt)  # same alignment tolerance as lags
        if not 0 <= idx <= self.N:
            raise GridAlignmentError(f"time {t} outside [0, {self.T}]")
        return idx


@dataclass(frozen=True)
class PathEnsemble:
    """M discretized Brownian paths plus their generating key.

    ``increments`` has shape (M, N, d); ``paths`` is the cumulative sum with
    a leading zero, shape (M, N+1, d).  Path i is reproducible on its own
    from (seed, i): it consumes exactly the i-th block of N*d draws of the
    keyed counter-based stream.
    """

    grid: TimeGrid
    seed: int
    increments: np.ndarray
    paths: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.increments.shape[0]

    @property
    def d(self) -> int:
        return self.increments.shape[2]


def _uniforms(seed: int, shape: tuple[int, ...]) -> np.ndarray:
    """Bin-centred uniforms in (0, 1) from a Philox stream keyed by seed."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    raw = rng.integers(0, 2**53, size=shape, dtype=np.uint64)
    return (raw.astype(np.float64) + 0.5) / 2**53


def simulate(grid: TimeGrid, n_paths: int, d: int, seed: int,
             memory_cap: int = DEFAULT_MEMORY_CAP) -> PathEnsemble:
    """Draw a reproducible ensemble of n_paths Brownian paths on ``grid``."""
    if n_paths < 1 or d < 1:
        raise ValueError("need n_paths >= 1 and d >= 1")
    needed = n_paths * d * (2 * grid.N + 1) * 8
    if needed > memory_cap:
        raise CapacityError(
            f"ensemble needs {needed} bytes of path storage, cap is {memory_cap}"
        )
    u = _uniforms(seed, (n_paths, grid.N, d))
    increments = ndtri(u) * np.sqrt(grid.dt)
    paths = np.zeros((n_paths, grid.N + 1, d))
    np.cumsum(increments, axis=1, out=paths[:, 1:, :])
    return PathEnsemble(grid=grid, seed=seed, increments=increments, paths=paths)


# -- regression conditioning -------------------------------------------------

@dataclass(frozen=True)
class BasisSpec:
    """Regression basis: monomials of the Brownian state plus extra columns.

    ``degree`` monomial powers are built per Brownian coordinate (no cross
    terms).  The two flags control whether the backward solver feeds lagged
    previous-iterate states as extra regressors; lagged Z columns default to
    off because nothing controls their statistical error.
    """

    degree: int = 3
    include_delayed_y: bool = True
    include_delayed_z: bool = False

    def __post_init__(self) -> None:
        if self.degree < 1:
            raise ValueError("basis degree must be >= 1")

    def design_matrix(self, state: np.ndarray,
                      extra: Sequence[np.ndarray] = ()) -> np.ndarray:
        """Columns [1, state^1..state^degree per coordinate, extra...]."""
        state = np.atleast_2d(np.asarray(state, dtype=float))
        m, d = state.shape
        cols = [np.ones(m)]
        for coord in range(d):
            x = state[:, coord]
            power = x.copy()
            for _ in range(self.degree):
                cols.append(power.copy())
                power = power * x
        for col in extra:
            block = np.asarray(col, dtype=float).reshape(m, -1)
            cols.extend(block[:, i] for i in range(block.shape[1]))
        return np.column_stack(cols)


def least_squares_projection(design: np.ndarray,
                             targets: np.ndarray) -> tuple[np.ndarray, bool]:
    """Fitted values of the least-squares regression of targets on design.

    Uses the rank-revealing (truncated SVD) solver, so a rank-deficient
    design degrades gracefully; the second return value flags that case.
    Targets may have multiple columns.
    """
    t = np.asarray(targets, dtype=float)
    flat = t.reshape(t.shape[0], -1)
    coef, _, rank, _ = np.linalg.lstsq(design, flat, rcond=None)
    fitted = design @ coef
    return fitted.reshape(t.shape), rank < design.shape[1]


def conditional_expectation(ensemble: PathEnsemble, targets: np.ndarray,
                            step: int, basis: BasisSpec,
                            extra: Sequence[np.ndarray] = ()) -> np.ndarray:
    """Projection of per-path targets onto basis functions of the state at ``step``.

    Exact (up to solve tolerance) whenever the targets lie in the span of the
    basis; otherwise the usual Monte Carlo regression estimate of the
    conditional expectation given the time-``step`` information.
    """
    if not 0 <= step <= ensemble.grid.N:
        raise ValueError(f"step {step} outside grid")
    if len(targets) != ensemble.n_paths:
        raise ValueError("targets must have one row per path")
    design = basis.design_matrix(ensemble.paths[:, step, :], extra)
    fitted, _ = least_squares_projection(design, targets)
    return fitted


# -- empirical norms ----------------------------------------------------------

def _component_norm(a: np.ndarray, state_axes: int) -> np.ndarray:
    """Euclidean norm over the trailing ``state_axes`` axes (0 = take abs)."""
    if state_axes == 0:
        return np.abs(a)
    sq = a * a
    for _ in range(state_axes):
        sq = sq.sum(axis=-1)
    return np.sqrt(sq)


def empirical_sp_norm(Y: np.ndarray, p: float) -> float:
    """Estimate of E[sup over the grid of |Y|^p]^(1/p).

    ``Y`` is (M, N+1) scalar values or (M, N+1, k) vectors.
    """
    if p <= 1.0:
        raise ValueError("need p > 1")
    Y = np.asarray(Y, dtype=float)
    mags = _component_norm(Y, Y.ndim - 2)
    sup = mags.max(axis=1)
    return float(np.mean(sup**p) ** (1.0 / p))


def empirical_hp_norm(Z: np.ndarray, p: float, grid: TimeGrid) -> float:
    """Estimate of E[(integral of |Z|^2 over [0, T])^(p/2)]^(1/p).

    ``Z`` is (M, N) scalar values or (M, N, k, d) matrices; the integral is
    the per-path Riemann sum, exact for constants.
    """
    if p <= 1.0:
        raise ValueError("need p > 1")
    Z = np.asarray(Z, dtype=float)
    if Z.shape[1] != grid.N:
        raise ValueError(f"expected {grid.N} time slots, got {Z.shape[1]}")
    sq = Z * Z
    while sq.ndim > 2:
        sq = sq.sum(axis=-1)
    integral = sq.sum(axis=1) * grid.dt
    return float(np.mean(integral ** (p / 2.0)) ** (1.0 / p))


# -- flat binary interchange --------------------------------------------------

_HEADER = struct.Struct("<QQQQ")  # M, N, d, seed as little-endian 64-bit


def write_ensemble(ensemble: PathEnsemble, path: str | Path) -> None:
    """Write header (M, N, d, seed as little-endian uint64) then increments.

    Increments follow row-major (path, step, coordinate) as little-endian
    float64, the layout used for cross-implementation comparison.
    """
    inc = np.ascontiguousarray(ensemble.increments, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(ensemble.n_paths, ensemble.grid.N,
                              ensemble.d, ensemble.seed))
        fh.write(inc.tobytes())


def read_ensemble(path: str | Path, horizon: float) -> PathEnsemble:
    """Read an ensemble written by :func:`write_ensemble`.

    The file stores no horizon, so the caller supplies it.
    """
    with open(path, "rb") as fh:
        m, n, d, seed = _HEADER.unpack(fh.read(_HEADER.size))
        inc = np.frombuffer(fh.read(m * n * d * 8), dtype="<f8").reshape(m, n, d)
    grid = TimeGrid(horizon, int(n))
    paths = np.zeros((int(m), int(n) + 1, int(d)))
    np.cumsum(inc, axis=1, out=paths[:, 1:, :])
    return PathEnsemble(grid=grid, seed=int(seed),
                        increments=inc.astype(np.float64), paths=paths)
