"""Outlier injection: points added to or removed from random sub-squares.

Sub-squares are axis-aligned cubes placed uniformly among the positions
that keep them inside the window.  Several sub-squares are placed jointly
and the whole placement is redrawn until they are pairwise disjoint.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sampler import PointPattern, Window

__all__ = [
    "KINDS",
    "MAX_PLACEMENTS",
    "ContaminationSpec",
    "PlacementError",
    "n_changed",
    "place_squares",
    "contaminate_add",
    "contaminate_delete",
    "contaminate_uniform",
    "contaminate",
]

KINDS = ("none", "add-subsquare", "delete-subsquare", "add-uniform", "delete-uniform")
MAX_PLACEMENTS = 10_000


class PlacementError(RuntimeError):
    pass


@dataclass(frozen=True)
class ContaminationSpec:
    """Outlier setting.

    ``side_fraction`` is the side of each added-to sub-square relative to
    the window side (0.1 gives side ``n / 5`` on ``[-n, n]^2``).  Deletion
    squares ignore it: their total volume is ``rho |W|``, split equally.
    """

    kind: str = "none"
    rho: float = 0.0
    squares: int = 1
    side_fraction: float = 0.1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown contamination kind {self.kind!r}")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")
        if int(self.squares) != self.squares or self.squares < 1:
            raise ValueError("squares must be a positive integer")
        if not 0.0 < self.side_fraction <= 1.0:
            raise ValueError("side_fraction must lie in (0, 1]")

    @property
    def label(self) -> str:
        if self.kind == "none":
            return "none"
        tag = f"{self.kind}:rho={self.rho:g}"
        if self.kind == "add-subsquare":
            tag += f":side={self.side_fraction:g}"
        if self.kind.endswith("subsquare") and self.squares > 1:
            tag += f":squares={self.squares}"
        return tag

    def to_dict(self) -> dict:
        return {"kind": self.kind, "rho": self.rho, "squares": self.squares,
                "side_fraction": self.side_fraction}

    @classmethod
    def from_dict(cls, data) -> "ContaminationSpec":
        return cls(kind=str(data.get("kind", "none")), rho=float(data.get("rho", 0.0)),
                   squares=int(data.get("squares", 1)),
                   side_fraction=float(data.get("side_fraction", 0.1)))


def n_changed(rho: float, m: int) -> int:
    """``round(rho m)`` with ties to even."""
    return int(np.round(rho * m))


def place_squares(window: Window, side: float, count: int, rng: np.random.Generator,
                  max_tries: int = MAX_PLACEMENTS) -> np.ndarray:
    """Lower corners, shape ``(count, d)``, of disjoint cubes of side ``side``."""
    sides = window.sides
    if side > sides.min():
        raise ValueError(f"sub-square side {side} exceeds the window")
    lower = np.asarray(window.lower)
    span = sides - side
    for _ in range(max_tries):
        corners = lower + rng.random((count, window.d)) * span
        if count == 1:
            return corners
        gap = np.abs(corners[:, None, :] - corners[None, :, :])
        overlap = np.all(gap < side, axis=-1)
        np.fill_diagonal(overlap, False)
        if not overlap.any():
            return corners
    raise PlacementError(f"no disjoint placement of {count} squares after {max_tries} tries")


def _split(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (j < extra) for j in range(parts)]


def contaminate_add(pattern: PointPattern, spec: ContaminationSpec, rng: np.random.Generator,
                    return_squares: bool = False):
    """Add ``round(rho m)`` uniform points to random sub-squares.

    The points are split as evenly as possible across the squares, the
    first squares taking the remainder.
    """
    window = pattern.window
    side = spec.side_fraction * float(window.sides.min())
    corners = place_squares(window, side, spec.squares, rng)
    n_add = n_changed(spec.rho, len(pattern))
    new = [pattern.points]
    for corner, k in zip(corners, _split(n_add, spec.squares)):
        new.append(corner + side * rng.random((k, window.d)))
    # keep points inside the closed window despite rounding at the far edge
    pts = np.clip(np.concatenate(new), window.lower, window.upper)
    out = PointPattern(pts, window)
    return (out, corners, side) if return_squares else out


def contaminate_delete(pattern: PointPattern, spec: ContaminationSpec, rng: np.random.Generator,
                       return_squares: bool = False):
    """Remove every point lying in random sub-squares of total volume ``rho |W|``."""
    window = pattern.window
    if spec.rho == 0.0:
        out = PointPattern(pattern.points, window)
        return (out, np.empty((0, window.d)), 0.0) if return_squares else out
    side = (spec.rho * window.volume / spec.squares) ** (1.0 / window.d)
    corners = place_squares(window, side, spec.squares, rng)
    pts = pattern.points
    hit = np.zeros(len(pts), dtype=bool)
    for corner in corners:
        hit |= np.all((pts >= corner) & (pts <= corner + side), axis=1)
    out = PointPattern(pts[~hit], window)
    return (out, corners, side) if return_squares else out


def contaminate_uniform(pattern: PointPattern, kind: str, rho: float,
                        rng: np.random.Generator) -> PointPattern:
    """Add ``round(rho m)`` points uniformly on the window, or delete a
    uniformly chosen subset of that size."""
    if not 0.0 <= rho < 1.0:
        raise ValueError("rho must lie in [0, 1)")
    k = n_changed(rho, len(pattern))
    window = pattern.window
    if kind in ("add", "add-uniform"):
        return PointPattern(np.concatenate([pattern.points, window.uniform(k, rng)]), window)
    if kind in ("delete", "delete-uniform"):
        drop = rng.choice(len(pattern), size=k, replace=False)
        return PointPattern(np.delete(pattern.points, drop, axis=0), window)
    raise ValueError(f"unknown uniform contamination {kind!r}")


def contaminate(pattern: PointPattern, spec: ContaminationSpec,
                rng: np.random.Generator) -> PointPattern:
    """Apply ``spec`` to ``pattern``."""
    if spec.kind == "none":
        return pattern
    if spec.kind == "add-subsquare":
        return contaminate_add(pattern, spec, rng)
    if spec.kind == "delete-subsquare":
        return contaminate_delete(pattern, spec, rng)
    return contaminate_uniform(pattern, spec.kind, spec.rho, rng)
