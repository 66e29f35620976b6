"""Intensity estimators: count-based, jittered median and median-of-medians.

Also houses the kernel-type estimator of the asymptotic variance of the
standard estimator and a conservative confidence interval for the median
estimator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .sampler import PointPattern, Window

__all__ = [
    "CellGrid",
    "JitteredCounts",
    "IntensityEstimate",
    "DEFAULT_LADDER",
    "make_grid",
    "cell_counts",
    "jitter_counts",
    "sample_quantile",
    "lambda_std",
    "lambda_med",
    "lambda_med_dd",
    "triangular_taper",
    "default_bandwidth",
    "sigma2_hat",
    "conservative_sd",
    "conservative_ci",
]

DEFAULT_LADDER = (9, 16, 25, 36, 49)


@dataclass(frozen=True)
class CellGrid:
    """Partition of a box window into ``prod(shape)`` congruent cells."""

    window: Window
    shape: tuple[int, ...]

    def __post_init__(self):
        if len(self.shape) != self.window.d or any(int(s) < 1 for s in self.shape):
            raise ValueError(f"bad grid shape {self.shape} for a {self.window.d}-d window")
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))

    @property
    def k_n(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_sides(self) -> np.ndarray:
        return self.window.sides / np.asarray(self.shape)

    @property
    def c_n(self) -> float:
        return self.window.volume / self.k_n

    def cell_bounds(self, index) -> tuple[np.ndarray, np.ndarray]:
        """Lower and upper corners of the cell with multi-index ``index``."""
        idx = np.asarray(index)
        lo = np.asarray(self.window.lower) + idx * self.cell_sides
        return lo, lo + self.cell_sides


def make_grid(window: Window, k_n: int) -> CellGrid:
    """Split ``window`` into ``k_n`` cells, the same number along each axis."""
    d = window.d
    per_axis = int(round(k_n ** (1.0 / d)))
    if k_n < 1 or per_axis**d != k_n:
        raise ValueError(f"k_n={k_n} is not a perfect {d}-th power")
    return CellGrid(window, (per_axis,) * d)


def cell_counts(pattern: PointPattern, grid: CellGrid) -> np.ndarray:
    """Point counts per cell, flattened in C order.

    Cells are half-open ``[a, b)`` along each axis except the last one,
    which is closed so that the counts add up to the pattern size.
    """
    if grid.window != pattern.window:
        raise ValueError("grid does not tile the pattern's window")
    shape = np.asarray(grid.shape)
    if len(pattern) == 0:
        return np.zeros(grid.k_n, dtype=np.int64)
    rel = (pattern.points - np.asarray(grid.window.lower)) / grid.cell_sides
    idx = np.clip(np.floor(rel).astype(np.int64), 0, shape - 1)
    flat = np.ravel_multi_index(tuple(idx.T), grid.shape)
    return np.bincount(flat, minlength=grid.k_n)


@dataclass(frozen=True, eq=False)
class JitteredCounts:
    """Cell counts plus independent ``U(0, 1)`` jitter."""

    counts: np.ndarray
    uniforms: np.ndarray
    grid: CellGrid
    seed: int | None = None

    @property
    def values(self) -> np.ndarray:
        return self.counts + self.uniforms


def jitter_counts(pattern: PointPattern, grid: CellGrid, rng: np.random.Generator,
                  seed: int | None = None) -> JitteredCounts:
    counts = cell_counts(pattern, grid)
    return JitteredCounts(counts, rng.random(counts.size), grid, seed)


@dataclass(frozen=True)
class IntensityEstimate:
    value: float
    estimator: str
    k_n: int | None = None
    seed: int | None = None
    components: tuple[float, ...] = field(default=(), compare=False)

    def to_record(self, volume: float | None = None, level: float = 0.95) -> dict:
        rec = {"estimator": self.estimator, "value": self.value, "k_n": self.k_n, "seed": self.seed}
        if volume is not None:
            rec["ci_low"], rec["ci_high"] = conservative_ci(self, volume, level)
        return rec


def sample_quantile(values, p: float) -> float:
    """Left-continuous inverse of the empirical cdf.

    The smallest order statistic ``Y_(i)`` with ``i / n >= p``.
    """
    y = np.sort(np.asarray(values, dtype=float).ravel())
    n = y.size
    if n == 0:
        raise ValueError("sample_quantile of an empty sample")
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    i = max(1, math.ceil(n * p))
    # guard against n * p rounding up past an exact ratio
    while i > 1 and (i - 1) / n >= p:
        i -= 1
    while i / n < p:
        i += 1
    return float(y[i - 1])


def lambda_std(pattern: PointPattern) -> IntensityEstimate:
    """Number of points per unit volume."""
    vol = pattern.window.volume
    if not vol > 0:
        raise ValueError("window has zero volume")
    return IntensityEstimate(len(pattern) / vol, "std")


def lambda_med(pattern: PointPattern, grid: CellGrid, rng: np.random.Generator,
               seed: int | None = None) -> IntensityEstimate:
    """Sample median of jittered cell counts divided by the cell volume."""
    z = jitter_counts(pattern, grid, rng, seed)
    return IntensityEstimate(
        sample_quantile(z.values, 0.5) / grid.c_n, f"med{grid.k_n}", grid.k_n, seed
    )


def lambda_med_dd(pattern: PointPattern, ladder: Sequence[int] = DEFAULT_LADDER,
                  rng: np.random.Generator | None = None, seed: int | None = None,
                  ) -> IntensityEstimate:
    """Median of the jittered-median estimates over the grid sizes in ``ladder``.

    Jitter for each grid is drawn from ``rng`` in ladder order.
    """
    if rng is None:
        rng = np.random.default_rng(seed)
    parts = [lambda_med(pattern, make_grid(pattern.window, k), rng).value for k in ladder]
    return IntensityEstimate(sample_quantile(parts, 0.5), "med_dd", None, seed, tuple(parts))


def triangular_taper(x) -> np.ndarray:
    """Product kernel ``prod_i max(0, 1 - |x_i|)``; ``k(0) = 1``."""
    x = np.asarray(x, dtype=float)
    return np.prod(np.clip(1.0 - np.abs(x), 0.0, None), axis=-1)


def _triangular_integral(lower, upper) -> float:
    """Integral of :func:`triangular_taper` over a box."""

    def prim(t):
        t = np.clip(t, -1.0, 1.0)
        return np.where(t < 0, t + 0.5 * t * t + 0.5, t - 0.5 * t * t + 0.5)

    return float(np.prod(prim(np.asarray(upper)) - prim(np.asarray(lower))))


BANDWIDTH_CONST = 0.5
BANDWIDTH_EXPONENT = 0.75


def default_bandwidth(window: Window, c_b: float = BANDWIDTH_CONST) -> float:
    """``c_b |W|**(-3 / (4 d))``.

    Satisfies ``b_n -> 0`` and ``b_n**2 |W|**(1/d) -> 0`` for growing cubes.
    The taper then spans ``c_b |W|**(1 / (4 d))`` in absolute units, about
    0.7 on ``[-2, 2]^2``.
    """
    return c_b * window.volume ** (-BANDWIDTH_EXPONENT / window.d)


def sigma2_hat(pattern: PointPattern, taper: Callable | None = None, b_n: float | None = None,
               taper_integral: float | None = None) -> float:
    """Kernel estimator of ``lim |W| Var(lambda_std)``.

    ``taper`` acts on vectors (trailing axis ``d``).  The correction term
    integrates the taper over the window recentred at the origin, which
    keeps the estimator translation invariant; for the default triangular
    taper the integral is exact, otherwise pass ``taper_integral``.
    """
    window = pattern.window
    d = window.d
    vol = window.volume
    if b_n is None:
        b_n = default_bandwidth(window)
    if not b_n > 0:
        raise ValueError("bandwidth must be positive")
    lam = len(pattern) / vol
    if taper is None:
        taper = triangular_taper
        half = 0.5 * window.sides
        taper_integral = _triangular_integral(-half, half)
    elif taper_integral is None:
        raise ValueError("taper_integral is required with a custom taper")
    scale = vol ** (1.0 / d) * b_n
    pts = pattern.points
    pair_sum = 0.0
    m = len(pts)
    sides = window.sides
    for start in range(0, m, 512):
        diff = pts[None, :, :] - pts[start : start + 512, None, :]
        overlap = np.prod(sides - np.abs(diff), axis=-1)
        w = taper(diff / scale)
        rows = np.arange(start, min(start + 512, m))
        w[np.arange(rows.size), rows] = 0.0
        mask = w != 0
        if np.any(overlap[mask] <= 0):
            raise ValueError("pair with empty translated-window overlap")
        pair_sum += float(np.sum(w[mask] / overlap[mask]))
    correction = vol * b_n**d * lam * (lam - 1.0 / vol) * taper_integral
    return lam + pair_sum - correction


def conservative_sd(value: float, volume: float) -> float:
    """Poisson-case standard deviation ``sqrt(pi value / 2) / sqrt(|W|)``."""
    return math.sqrt(math.pi * max(value, 0.0) / 2.0) / math.sqrt(volume)


def conservative_ci(estimate: IntensityEstimate | float, volume: float,
                    level: float = 0.95) -> tuple[float, float]:
    """Normal interval using the Poisson-case variance of the median estimator."""
    value = estimate.value if isinstance(estimate, IntensityEstimate) else float(estimate)
    if value < 0:
        raise ValueError("estimate must be non-negative")
    z = stats.norm.ppf(0.5 + level / 2.0)
    half = z * conservative_sd(value, volume)
    return max(value - half, 0.0), value + half
