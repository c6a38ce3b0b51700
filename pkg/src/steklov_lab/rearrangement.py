"""Distribution function, decreasing rearrangement and maximal function.

Boundary data are piecewise constant per edge, so ``f*`` is an exact step
function obtained by sorting; no level-set sampling is involved.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import BoundaryFunction


@dataclass(frozen=True, eq=False)
class StepProfile:
    """Nonincreasing step function on ``(0, T]``.

    ``levels[i]`` is the value on ``(breakpoints[i], breakpoints[i + 1]]``.
    """

    breakpoints: np.ndarray
    levels: np.ndarray

    def __post_init__(self):
        b = np.array(self.breakpoints, dtype=float)
        v = np.array(self.levels, dtype=float)
        if b.ndim != 1 or v.ndim != 1 or len(b) != len(v) + 1 or len(v) == 0:
            raise ValueError("need len(breakpoints) == len(levels) + 1 >= 2")
        if b[0] != 0.0 or np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must start at 0 and increase strictly")
        if np.any(v < 0) or np.any(np.diff(v) > 0):
            raise ValueError("levels must be nonnegative and nonincreasing")
        b.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "levels", v)

    @property
    def T(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    @property
    def sup(self) -> float:
        return float(self.levels[0])

    @property
    def smallest_breakpoint(self) -> float:
        return float(self.breakpoints[1])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        # value on (b_{i}, b_{i+1}]; t <= 0 maps to the first level
        i = np.searchsorted(self.breakpoints, t, side="left") - 1
        i = np.clip(i, 0, len(self.levels) - 1)
        out = self.levels[i]
        return np.where(t > self.T, 0.0, out)

    def distribution(self, s: float) -> float:
        """Measure of ``{t : profile(t) > s}``."""
        return float(np.sum(self.widths[self.levels > s]))

    def integral(self) -> float:
        return float(np.dot(self.levels, self.widths))

    def cumulative(self) -> np.ndarray:
        """Integral of the profile over ``(0, breakpoints[i]]`` for every breakpoint."""
        return np.concatenate([[0.0], np.cumsum(self.levels * self.widths)])

    def scaled(self, c: float) -> "StepProfile":
        return StepProfile(self.breakpoints, abs(c) * self.levels)

    def power(self, r: float) -> "StepProfile":
        """Profile of ``|f|**r``; rearrangement commutes with increasing maps."""
        return StepProfile(self.breakpoints, self.levels ** r)

    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.breakpoints[:-1] + self.breakpoints[1:])

    def to_csv_rows(self):
        """Breakpoints with both one-sided values ``(t, left, right)``."""
        rows = []
        lv = self.levels
        for i, t in enumerate(self.breakpoints):
            left = lv[i - 1] if i > 0 else lv[0]
            right = lv[i] if i < len(lv) else 0.0
            rows.append((float(t), float(left), float(right)))
        return rows


def distribution(f: BoundaryFunction, s: float) -> float:
    """Boundary measure of ``{|f| > s}``."""
    if not s > 0:
        raise ValueError("s must be positive")
    return float(np.sum(f.measures[np.abs(f.values) > s]))


def rearrange_values(values, measures) -> StepProfile:
    """Exact decreasing rearrangement of ``|values|`` with the given measures.

    Equal values are merged into one step; a zero level is kept as the last
    step so that the profile always ends at the total measure.
    """
    a = np.abs(np.asarray(values, dtype=float))
    w = np.asarray(measures, dtype=float)
    if a.shape != w.shape or a.size == 0:
        raise ValueError("values and measures must be nonempty and of equal length")
    if np.any(w <= 0):
        raise ValueError("measures must be positive")
    order = np.argsort(-a, kind="stable")
    a, w = a[order], w[order]
    start = np.concatenate([[True], a[1:] != a[:-1]])
    groups = np.cumsum(start) - 1
    levels = a[start]
    widths = np.bincount(groups, weights=w)
    return StepProfile(np.concatenate([[0.0], np.cumsum(widths)]), levels)


def decreasing_rearrangement(f: BoundaryFunction) -> StepProfile:
    return rearrange_values(f.values, f.measures)


@dataclass(frozen=True, eq=False)
class MaximalProfile:
    """``f**(t) = (1/t) int_0^t f*``, exact for a step ``f*``.

    On ``(t_{i-1}, t_i]`` it equals ``(A_{i-1} + v_i (t - t_{i-1})) / t`` with
    ``A`` the cumulative integral of ``f*``.
    """

    profile: StepProfile

    @property
    def T(self) -> float:
        return self.profile.T

    @property
    def breakpoints(self) -> np.ndarray:
        return self.profile.breakpoints

    @property
    def levels(self) -> np.ndarray:
        return self.profile.levels

    @property
    def cumulative(self) -> np.ndarray:
        return self.profile.cumulative()

    def piece(self, i: int) -> tuple[float, float]:
        """Coefficients ``(c, v)`` with ``f**(t) = c / t + v`` on step ``i``."""
        b, v, A = self.breakpoints, self.levels, self.cumulative
        return float(A[i] - v[i] * b[i]), float(v[i])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        p = self.profile
        b, v, A = p.breakpoints, p.levels, self.cumulative
        i = np.clip(np.searchsorted(b, t, side="left") - 1, 0, len(v) - 1)
        tt = np.minimum(t, p.T)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = (A[i] + v[i] * (tt - b[i])) / t
        return np.where(t <= 0, v[0], val)


def maximal_function(p: StepProfile) -> MaximalProfile:
    return MaximalProfile(p)


def hardy_littlewood_pair(f: BoundaryFunction, g: BoundaryFunction) -> tuple[float, float]:
    """``(int f g dsigma, int_0^T f* g* dt)`` for nonnegative ``f``, ``g`` on one mesh.

    The right side is evaluated exactly by merging the breakpoints of both
    step profiles.
    """
    if f.mesh is not g.mesh and not (
        f.mesh.n_edges == g.mesh.n_edges and np.array_equal(f.measures, g.measures)
    ):
        raise ValueError("f and g live on different meshes")
    if np.any(f.values < 0) or np.any(g.values < 0):
        raise ValueError("Hardy-Littlewood pairing needs nonnegative functions")
    lhs = float(np.dot(f.values * g.values, f.measures))
    return lhs, step_product_integral(decreasing_rearrangement(f), decreasing_rearrangement(g))


def step_product_integral(a: StepProfile, b: StepProfile) -> float:
    """Exact ``int_0^T a(t) b(t) dt`` for two step profiles on a common ``T``."""
    T = min(a.T, b.T)
    bp = np.union1d(a.breakpoints, b.breakpoints)
    bp = bp[bp <= T]
    mids = 0.5 * (bp[:-1] + bp[1:])
    return float(np.sum(a(mids) * b(mids) * np.diff(bp)))
