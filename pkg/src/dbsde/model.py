"""Problem data for delayed BSDEs: drivers, terminal conditions, truncation.

A problem bundles a terminal functional of the Brownian path, a delayed
driver with its declared Lipschitz constant and delay measure, the horizon,
the integrability exponent and the state dimensions.  Drivers are plain
callables evaluated on :class:`~dbsde.delay.Segment` views of the previous
iterate, so everything here is pure and safe to evaluate concurrently.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.special import gamma as _gamma

from .delay import DelayMeasure, Segment, delay_average
from .paths import TimeGrid

BUILTIN_PROBLEMS = ("martingale_wt", "martingale_wt2", "linear_delayed", "single_lag_ode")


@dataclass(frozen=True)
class Generator:
    """Delayed driver f(s, Y-history, Z-history) -> (M, k) values.

    ``lipschitz_K`` is the declared constant of the squared Lipschitz bound
    against the delay average of squared state distances.  ``driver0`` gives
    the deterministic value of f(s, 0, 0) as a length-k vector; ``None``
    means the driver vanishes on zero states.  Calling the generator at a
    negative time returns zero regardless of the states.
    """

    evaluate: Callable[[float, Segment, Segment], np.ndarray]
    lipschitz_K: float
    alpha: DelayMeasure
    driver0: Callable[[float], np.ndarray] | None = None
    has_y_memory: bool = True
    has_z_memory: bool = False

    def __call__(self, s: float, y_seg: Segment, z_seg: Segment) -> np.ndarray:
        if s < 0.0:
            return np.zeros_like(np.asarray(y_seg.at_lag(0.0), dtype=float))
        return np.asarray(self.evaluate(s, y_seg, z_seg), dtype=float)

    def driver0_value(self, s: float, k: int) -> np.ndarray:
        """f(s, 0, 0) as a length-k vector (zero below time zero)."""
        if self.driver0 is None or s < 0.0:
            return np.zeros(k)
        return np.asarray(self.driver0(s), dtype=float).reshape(k)

    def zero_driver(self, s: float, k: int = 1) -> float:
        """Magnitude |f(s, 0, 0)|, the quantity entering the data terms."""
        return float(np.linalg.norm(self.driver0_value(s, k)))


@dataclass(frozen=True)
class TerminalCondition:
    """Terminal value as a functional of the whole discretized path.

    ``evaluate`` maps Brownian paths (M, N+1, d) to values (M, k).
    ``p_norm_hint`` optionally returns the analytic E|value|^p for a given p.
    """

    evaluate: Callable[[np.ndarray], np.ndarray]
    p_norm_hint: Callable[[float], float] | None = None


@dataclass(frozen=True)
class BsdeProblem:
    """Terminal condition, driver, horizon, exponent and dimensions."""

    T: float
    k: int
    d: int
    p: float
    generator: Generator
    terminal: TerminalCondition

    def __post_init__(self) -> None:
        if self.T <= 0.0:
            raise ValueError("horizon must be positive")
        if self.p <= 1.0:
            raise ValueError("exponent p must be > 1")
        if self.k < 1 or self.d < 1:
            raise ValueError("dimensions must be >= 1")

    def terminal_values(self, paths: np.ndarray) -> np.ndarray:
        vals = np.asarray(self.terminal.evaluate(paths), dtype=float)
        return vals.reshape(len(paths), self.k)


# -- driver factories ----------------------------------------------------------

def zero_generator() -> Generator:
    """Driver identically zero (the martingale case)."""

    def evaluate(s: float, y_seg: Segment, z_seg: Segment) -> np.ndarray:
        return np.zeros_like(np.asarray(y_seg.at_lag(0.0), dtype=float))

    return Generator(evaluate, lipschitz_K=0.0, alpha=DelayMeasure.dirac(0.0),
                     has_y_memory=False, has_z_memory=False)


def _coefficient_lookup(values: np.ndarray | float, grid: TimeGrid) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        return np.full(grid.N + 1, float(arr))
    if arr.shape != (grid.N + 1,):
        raise ValueError(f"coefficient array must have length {grid.N + 1}")
    return arr


def linear_delayed_generator(r: np.ndarray | float, theta: np.ndarray | float,
                             alpha: DelayMeasure, grid: TimeGrid) -> Generator:
    """Driver averaging r*Y + theta*Z over the past against ``alpha``.

    ``r`` and ``theta`` are step functions on the grid (scalars broadcast),
    extended by zero below time zero, which keeps the driver zero at negative
    times.  The declared Lipschitz constant is the coarse bound
    sup(r^2 + theta^2); callers may override it via dataclasses.replace.
    The theta term contracts Z over its single Brownian column, so this
    factory requires d = 1.
    """
    r_vals = _coefficient_lookup(r, grid)
    th_vals = _coefficient_lookup(theta, grid)
    dt = grid.dt

    def coeff_at(vals: np.ndarray, t: float) -> float:
        idx = int(round(t / dt))
        if idx < 0:
            return 0.0
        if abs(t / dt - idx) > 1e-9 * max(1.0, abs(t / dt)):
            raise ValueError(f"coefficient lookup at off-grid time {t}")
        return float(vals[min(idx, grid.N)])

    def evaluate(s: float, y_seg: Segment, z_seg: Segment) -> np.ndarray:
        acc: np.ndarray | None = None
        for lag, weight in alpha.atoms:
            rv = coeff_at(r_vals, s + lag)
            tv = coeff_at(th_vals, s + lag)
            if rv == 0.0 and tv == 0.0:
                continue
            term = np.zeros_like(np.asarray(y_seg.at_lag(0.0), dtype=float))
            if rv != 0.0:
                term = term + rv * np.asarray(y_seg.at_lag(lag), dtype=float)
            if tv != 0.0:
                z_val = np.asarray(z_seg.at_lag(lag), dtype=float)
                if z_val.shape[-1] != 1:
                    raise ValueError("linear delayed driver requires d = 1")
                term = term + tv * z_val[..., 0]
            acc = weight * term if acc is None else acc + weight * term
        if acc is None:
            return np.zeros_like(np.asarray(y_seg.at_lag(0.0), dtype=float))
        return acc

    K = float(np.max(r_vals**2 + th_vals**2))
    return Generator(evaluate, lipschitz_K=K, alpha=alpha,
                     has_y_memory=bool(np.any(r_vals != 0.0)),
                     has_z_memory=bool(np.any(th_vals != 0.0)))


def single_lag_generator(c: float, delta: float) -> Generator:
    """Driver c * Y(s - delta), the canonical single-memory test instance.

    The delayed value freezes at the time-zero state for s < delta.  The
    delay measure is a point mass at -delta and the declared Lipschitz
    constant is c^2.
    """
    if delta <= 0.0:
        raise ValueError("delta must be positive")

    def evaluate(s: float, y_seg: Segment, z_seg: Segment) -> np.ndarray:
        return c * np.asarray(y_seg.at_lag(-delta), dtype=float)

    return Generator(evaluate, lipschitz_K=c * c, alpha=DelayMeasure.dirac(-delta),
                     has_y_memory=c != 0.0, has_z_memory=False)


def with_driver(gen: Generator, source: Callable[[float], np.ndarray]) -> Generator:
    """Add a deterministic time-dependent source to a driver.

    The shift cancels in differences, so the Lipschitz constant is unchanged;
    only the zero-state value moves.
    """

    def evaluate(s: float, y_seg: Segment, z_seg: Segment) -> np.ndarray:
        base = gen(s, y_seg, z_seg)
        if s < 0.0:
            return base
        return base + np.asarray(source(s), dtype=float)

    def driver0(s: float) -> np.ndarray:
        extra = np.asarray(source(s), dtype=float)
        if gen.driver0 is None:
            return extra
        return np.asarray(gen.driver0(s), dtype=float) + extra

    return Generator(evaluate, lipschitz_K=gen.lipschitz_K, alpha=gen.alpha,
                     driver0=driver0, has_y_memory=gen.has_y_memory,
                     has_z_memory=gen.has_z_memory)


# -- truncation ----------------------------------------------------------------

def radial_clip(x: np.ndarray | float, bound: float) -> np.ndarray | float:
    """Clip to the closed ball of radius ``bound``, preserving direction.

    Returns x * bound / max(|x|, bound).  Scalars use the absolute value;
    arrays treat the last axis as the vector components, so an (M, k) batch
    is clipped row by row.  Identity wherever |x| <= bound.
    """
    if bound < 1.0:
        raise ValueError("truncation level must be >= 1")
    if np.isscalar(x) or np.ndim(x) == 0:
        mag = abs(float(x))
        return float(x) * bound / max(mag, bound)
    arr = np.asarray(x, dtype=float)
    mags = np.sqrt((arr * arr).sum(axis=-1, keepdims=True))
    return arr * (bound / np.maximum(mags, bound))


def truncate_problem(prob: BsdeProblem, level: int) -> BsdeProblem:
    """Problem with terminal value and zero-state driver clipped at ``level``.

    The driver is shifted, not rescaled: the state-dependent part is kept and
    only f(s, 0, 0) is replaced by its clipped value, which preserves the
    Lipschitz constant while bounding the data.  A problem whose data is
    already within the level comes back functionally identical.
    """
    if level < 1:
        raise ValueError("truncation level must be >= 1")
    base_terminal = prob.terminal

    def clipped_terminal(paths: np.ndarray) -> np.ndarray:
        return radial_clip(np.asarray(base_terminal.evaluate(paths), dtype=float), level)

    terminal = TerminalCondition(clipped_terminal)
    gen = prob.generator
    if gen.driver0 is None:
        return replace(prob, terminal=terminal)

    base_eval = gen.evaluate
    base_driver0 = gen.driver0

    def evaluate(s: float, y_seg: Segment, z_seg: Segment) -> np.ndarray:
        raw = np.asarray(base_eval(s, y_seg, z_seg), dtype=float)
        d0 = np.asarray(base_driver0(s), dtype=float)
        return raw - d0 + radial_clip(d0, level)

    def driver0(s: float) -> np.ndarray:
        return radial_clip(np.asarray(base_driver0(s), dtype=float), level)

    truncated = Generator(evaluate, lipschitz_K=gen.lipschitz_K, alpha=gen.alpha,
                          driver0=driver0, has_y_memory=gen.has_y_memory,
                          has_z_memory=gen.has_z_memory)
    return replace(prob, terminal=terminal, generator=truncated)


# -- built-in problems ----------------------------------------------------------

def _abs_normal_moment(order: float) -> float:
    """E|N(0,1)|^order."""
    return 2.0 ** (order / 2.0) * _gamma((order + 1.0) / 2.0) / np.sqrt(np.pi)


def builtin_problem(name: str, *, T: float = 1.0, p: float = 2.0,
                    grid: TimeGrid | None = None,
                    alpha: DelayMeasure | None = None,
                    **params) -> BsdeProblem:
    """Construct one of the named scalar test problems.

    martingale_wt     zero driver, terminal value W_T
    martingale_wt2    zero driver, terminal value W_T^2
    linear_delayed    driver averaging r*Y + theta*Z against ``alpha``
                      (params: r, theta; needs grid and alpha)
    single_lag_ode    driver c * Y(s - delta), deterministic terminal value
                      (params: c, delta, xi0)

    Unknown parameter keys are rejected.
    """
    def take(allowed: dict) -> dict:
        unknown = set(params) - set(allowed)
        if unknown:
            raise ValueError(
                f"unknown parameter(s) {sorted(unknown)} for problem {name!r}"
            )
        merged = dict(allowed)
        merged.update(params)
        return merged

    if name == "martingale_wt":
        take({})
        terminal = TerminalCondition(
            lambda paths: paths[:, -1, :1],
            p_norm_hint=lambda q: T ** (q / 2.0) * _abs_normal_moment(q),
        )
        return BsdeProblem(T=T, k=1, d=1, p=p, generator=zero_generator(),
                           terminal=terminal)

    if name == "martingale_wt2":
        take({})
        terminal = TerminalCondition(
            lambda paths: paths[:, -1, :1] ** 2,
            p_norm_hint=lambda q: T**q * _abs_normal_moment(2.0 * q),
        )
        return BsdeProblem(T=T, k=1, d=1, p=p, generator=zero_generator(),
                           terminal=terminal)

    if name == "linear_delayed":
        opts = take({"r": 0.0, "theta": 0.0})
        if grid is None:
            raise ValueError("linear_delayed needs a grid for its coefficients")
        measure = alpha if alpha is not None else DelayMeasure.dirac(0.0)
        gen = linear_delayed_generator(opts["r"], opts["theta"], measure, grid)
        terminal = TerminalCondition(
            lambda paths: paths[:, -1, :1],
            p_norm_hint=lambda q: T ** (q / 2.0) * _abs_normal_moment(q),
        )
        return BsdeProblem(T=T, k=1, d=1, p=p, generator=gen, terminal=terminal)

    if name == "single_lag_ode":
        opts = take({"c": 0.1, "delta": 0.5, "xi0": 1.0})
        gen = single_lag_generator(float(opts["c"]), float(opts["delta"]))
        xi0 = float(opts["xi0"])
        terminal = TerminalCondition(
            lambda paths: np.full((len(paths), 1), xi0),
            p_norm_hint=lambda q: abs(xi0) ** q,
        )
        return BsdeProblem(T=T, k=1, d=1, p=p, generator=gen, terminal=terminal)

    raise ValueError(f"unknown problem {name!r}, expected one of {BUILTIN_PROBLEMS}")
