"""Delay measures and grid-aligned path segments.

A delayed driver averages past states of the solution against a probability
measure supported on [-T, 0].  This module represents such measures as finite
atom lists, snaps their lags onto a uniform time grid, and evaluates the
weighted average on segments of discretized paths.  Times below zero follow
the extension rules used everywhere in this package: the Y component is
frozen at its time-zero value, the Z component is extended by zero.

All types are immutable and all operations are pure.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

WEIGHT_TOL = 1e-12   # allowed defect of the total mass
ALIGN_TOL = 1e-9     # relative slack when matching a lag to a grid multiple


class InvalidMeasureError(ValueError):
    """Raised when an atom list does not describe a probability measure."""


class GridAlignmentError(ValueError):
    """Raised when a lag is not an integer multiple of the grid step."""


def lag_steps(lag: float, dt: float) -> int:
    """Convert a nonpositive lag into a (nonpositive) whole number of grid steps.

    Raises GridAlignmentError if ``lag`` is not a multiple of ``dt`` within
    ALIGN_TOL relative slack.
    """
    if dt <= 0.0:
        raise ValueError("grid step must be positive")
    ratio = lag / dt
    steps = int(round(ratio))
    if abs(ratio - steps) > ALIGN_TOL * max(1.0, abs(ratio)):
        raise GridAlignmentError(
            f"lag {lag} is not aligned with grid step {dt} "
            f"(off by {abs(ratio - steps) * dt:.3e})"
        )
    return steps


@dataclass(frozen=True)
class DelayMeasure:
    """Finitely atomic probability measure on [-T, 0].

    ``atoms`` is a sorted tuple of (lag, weight) pairs with pairwise distinct
    nonpositive lags and nonnegative weights summing to one.  Continuous
    measures (e.g. uniform) are represented by quadrature atoms, see
    :meth:`uniform`.

    An atom may sit exactly at the left endpoint -T.  Under the extension
    rules a Y value read there resolves to the time-zero value whenever the
    evaluation time is below T, and a Z value resolves to zero; callers get
    the documented extension behaviour rather than an error.
    """

    atoms: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if not self.atoms:
            raise InvalidMeasureError("delay measure needs at least one atom")
        lags = [a[0] for a in self.atoms]
        weights = [a[1] for a in self.atoms]
        if any(u > 0.0 for u in lags):
            raise InvalidMeasureError(f"lags must be <= 0, got {max(lags)}")
        if any(w < 0.0 for w in weights):
            raise InvalidMeasureError("weights must be nonnegative")
        if abs(sum(weights) - 1.0) > WEIGHT_TOL:
            raise InvalidMeasureError(
                f"weights must sum to 1 within {WEIGHT_TOL}, got {sum(weights)!r}"
            )
        if any(lags[i] >= lags[i + 1] for i in range(len(lags) - 1)):
            raise InvalidMeasureError("lags must be strictly increasing")

    @classmethod
    def from_atoms(cls, pairs: Iterable[tuple[float, float]]) -> "DelayMeasure":
        """Build a measure from unsorted (lag, weight) pairs, merging duplicates."""
        merged: dict[float, float] = {}
        for lag, weight in pairs:
            merged[lag] = merged.get(lag, 0.0) + weight
        return cls(tuple(sorted(merged.items())))

    @classmethod
    def dirac(cls, lag: float = 0.0) -> "DelayMeasure":
        """Point mass at ``lag`` (default: no delay)."""
        return cls(((lag, 1.0),))

    @classmethod
    def uniform(cls, horizon: float, n_atoms: int) -> "DelayMeasure":
        """Trapezoidal quadrature of the uniform measure on [-horizon, 0].

        ``n_atoms`` equally spaced atoms carry weight 1/(n-1), halved at the
        two endpoints.  Lags generally still need :func:`align_measure` before
        use on a grid whose step does not divide ``horizon``.
        """
        if horizon <= 0.0:
            raise InvalidMeasureError("horizon must be positive")
        if n_atoms < 2:
            raise InvalidMeasureError("uniform measure needs at least 2 atoms")
        lags = np.linspace(-horizon, 0.0, n_atoms)
        weights = np.full(n_atoms, 1.0 / (n_atoms - 1))
        weights[0] *= 0.5
        weights[-1] *= 0.5
        return cls(tuple(zip(lags.tolist(), weights.tolist())))

    @property
    def lags(self) -> np.ndarray:
        return np.array([a[0] for a in self.atoms])

    @property
    def weights(self) -> np.ndarray:
        return np.array([a[1] for a in self.atoms])

    @property
    def max_delay(self) -> float:
        """Magnitude of the most negative lag."""
        return -self.atoms[0][0]

    def is_dirac_at_zero(self) -> bool:
        return len(self.atoms) == 1 and self.atoms[0][0] == 0.0


def align_measure(alpha: DelayMeasure, grid_step: float) -> DelayMeasure:
    """Snap every lag of ``alpha`` to the nearest multiple of ``grid_step``.

    Weights are preserved; atoms whose snapped lags collide are merged by
    weight addition.  A lag exactly halfway between two multiples rounds
    toward zero lag, so the no-delay limit stays exact.
    """
    if grid_step <= 0.0:
        raise ValueError("grid step must be positive")
    snapped: dict[int, float] = {}
    for lag, weight in alpha.atoms:
        ratio = lag / grid_step
        lo = np.floor(ratio)
        frac = ratio - lo
        # ratio <= 0, so ceil(ratio) is the candidate closer to zero; ties go there
        steps = int(lo) if frac < 0.5 else int(lo) + 1
        snapped[steps] = snapped.get(steps, 0.0) + weight
    return DelayMeasure(
        tuple((steps * grid_step, weight) for steps, weight in sorted(snapped.items()))
    )


@dataclass(frozen=True)
class Segment:
    """History of one process component seen from an anchor grid time.

    ``values`` holds grid values with time along the first axis, so
    ``values[i]`` is the state at grid time ``i * dt`` (for path ensembles
    that is an (M, ...) array).  Looking up a nonpositive lag ``u`` resolves
    to index ``anchor + u/dt``; indices below zero fall back to ``values[0]``
    when ``zero_fill`` is false (the Y rule) and to the zero element when it
    is true (the Z rule).
    """

    values: np.ndarray
    dt: float
    anchor: int
    zero_fill: bool = False

    def __post_init__(self) -> None:
        if self.dt <= 0.0:
            raise ValueError("grid step must be positive")
        if not 0 <= self.anchor < len(self.values):
            raise ValueError(
                f"anchor {self.anchor} outside stored history of length {len(self.values)}"
            )

    @property
    def anchor_time(self) -> float:
        return self.anchor * self.dt

    def at_lag(self, lag: float) -> np.ndarray:
        """Value at time ``anchor_time + lag`` with the extension rule applied."""
        if lag > ALIGN_TOL * self.dt:
            raise ValueError(f"lag must be <= 0, got {lag}")
        idx = self.anchor + lag_steps(lag, self.dt)
        if idx >= 0:
            return np.asarray(self.values[idx])
        if self.zero_fill:
            return np.zeros_like(np.asarray(self.values[0]))
        return np.asarray(self.values[0])


def delay_average(segment: Segment, alpha: DelayMeasure) -> np.ndarray:
    """Weighted average of past segment values, sum of w_i * segment(t + u_i).

    Linear in the segment and convex in the sampled values.  With a point
    mass at lag zero this is the identity, which is what reduces the delayed
    problem to a standard one.
    """
    acc: np.ndarray | None = None
    for lag, weight in alpha.atoms:
        term = weight * segment.at_lag(lag)
        acc = term if acc is None else acc + term
    assert acc is not None  # measures are never empty
    return acc


def constant_segment(value: np.ndarray | float, dt: float, anchor: int,
                     zero_fill: bool = False) -> Segment:
    """Segment holding the same value at every grid time up to ``anchor``."""
    arr = np.asarray(value, dtype=float)
    values = np.broadcast_to(arr, (anchor + 1,) + arr.shape).copy()
    return Segment(values, dt, anchor, zero_fill)
