"""Simulation of stationary DPPs on rectangular windows.

The DPP restricted to a box is approximated by its periodisation on the
torus built from the box.  On the torus the kernel diagonalises in the
Fourier basis ``exp(2 i pi k.x / L) / sqrt(|W|)`` with eigenvalues
``F(C)(k / L)``.  A realisation is drawn in two steps: independent
Bernoulli selection of frequencies, then sequential sampling of the
projection DPP spanned by the selected frequencies, each point by
rejection from the uniform density on the window.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import blas

from .kernel import KernelSpec, fourier_radial

__all__ = [
    "Window",
    "PointPattern",
    "SpectralModel",
    "SamplerError",
    "build_spectral_model",
    "default_truncation",
    "sample_dpp",
    "sample_poisson",
]

EPS_CLIP = 1e-9
MAX_PROPOSALS = 1_000_000
# frequencies kept per unit length along each axis by default
FREQ_PER_UNIT = 32
# share of points drawn with the growing basis before switching to the complement
SWITCH_FRACTION = 0.5


class SamplerError(RuntimeError):
    """The rejection step exceeded its proposal cap."""

    def __init__(self, message: str, **diagnostics):
        super().__init__(f"{message} {diagnostics}")
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class Window:
    """Axis-aligned box ``prod_i [lower_i, upper_i]``."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi) or not lo:
            raise ValueError("lower and upper must have the same positive length")
        if any(b <= a for a, b in zip(lo, hi)):
            raise ValueError(f"degenerate window {lo} x {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def square(cls, n: float, d: int = 2) -> "Window":
        """The window ``[-n, n]^d``."""
        return cls((-n,) * d, (n,) * d)

    @property
    def d(self) -> int:
        return len(self.lower)

    @property
    def sides(self) -> np.ndarray:
        return np.subtract(self.upper, self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.lower) + np.asarray(self.upper))

    def contains(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float).reshape(-1, self.d)
        return np.all((p >= self.lower) & (p <= self.upper), axis=1)

    def shifted(self, v) -> "Window":
        v = np.asarray(v, dtype=float)
        return Window(tuple(np.add(self.lower, v)), tuple(np.add(self.upper, v)))

    def uniform(self, size: int, rng: np.random.Generator) -> np.ndarray:
        return np.asarray(self.lower) + rng.random((size, self.d)) * self.sides

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper)}

    @classmethod
    def from_dict(cls, data) -> "Window":
        return cls(tuple(data["lower"]), tuple(data["upper"]))


def _axis_names(d: int) -> list[str]:
    return ["x", "y", "z"][:d] if d <= 3 else [f"x{i + 1}" for i in range(d)]


@dataclass(frozen=True, eq=False)
class PointPattern:
    """Finite point configuration observed in ``window``."""

    points: np.ndarray
    window: Window

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, self.window.d)
        if not np.all(self.window.contains(pts)):
            raise ValueError("pattern has points outside its window")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def count(self) -> int:
        return len(self)

    def is_simple(self) -> bool:
        return np.unique(self.points, axis=0).shape[0] == len(self)

    def shifted(self, v) -> "PointPattern":
        return PointPattern(self.points + np.asarray(v, dtype=float), self.window.shifted(v))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(_axis_names(self.window.d))
            for row in self.points:
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path, window: Window) -> "PointPattern":
        """Read a CSV written by :meth:`to_csv`.

        Raises ``ValueError`` naming the first malformed row.
        """
        rows = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                return cls(np.empty((0, window.d)), window)
            if len(header) != window.d:
                raise ValueError(f"row 1: expected {window.d} columns in header, got {len(header)}")
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != window.d:
                    raise ValueError(f"row {lineno}: expected {window.d} values, got {len(row)}")
                try:
                    rows.append([float(v) for v in row])
                except ValueError:
                    raise ValueError(f"row {lineno}: non-numeric value in {row}") from None
                if not window.contains(rows[-1])[0]:
                    raise ValueError(f"row {lineno}: point {row} outside window")
        return cls(np.array(rows, dtype=float).reshape(-1, window.d), window)

    def to_record(self, seed=None, model_digest=None) -> dict:
        return {
            "window": self.window.to_dict(),
            "points": self.points.tolist(),
            "seed": seed,
            "model_digest": model_digest,
        }

    @classmethod
    def from_record(cls, record) -> "PointPattern":
        window = Window.from_dict(record["window"])
        return cls(np.array(record["points"], dtype=float).reshape(-1, window.d), window)


@dataclass(frozen=True, eq=False)
class SpectralModel:
    """Bernoulli probabilities of the Fourier modes of a window.

    ``frequencies`` holds integer lattice indices (one row per mode) and may
    be ``None`` for models built directly from eigenvalues, which support
    count analytics but not sampling.
    """

    window: Window
    eigenvalues: np.ndarray
    frequencies: np.ndarray | None = None
    truncation: tuple[int, ...] | None = None
    total: float = field(init=False)

    def __post_init__(self):
        eig = np.asarray(self.eigenvalues, dtype=float).ravel()
        if np.any(eig < 0) or np.any(eig >= 1):
            raise ValueError("eigenvalues must lie in [0, 1)")
        eig.setflags(write=False)
        object.__setattr__(self, "eigenvalues", eig)
        if self.frequencies is not None:
            freq = np.asarray(self.frequencies, dtype=np.int64).reshape(eig.size, self.window.d)
            freq.setflags(write=False)
            object.__setattr__(self, "frequencies", freq)
        object.__setattr__(self, "total", float(eig.sum()))

    @classmethod
    def from_eigenvalues(cls, eigenvalues, window: Window) -> "SpectralModel":
        return cls(window=window, eigenvalues=eigenvalues)

    @property
    def variance(self) -> float:
        """Variance of the point count, ``sum beta (1 - beta)``."""
        e = self.eigenvalues
        return float(np.sum(e * (1.0 - e)))

    @property
    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(self.window.to_dict()).encode())
        h.update(self.eigenvalues.tobytes())
        if self.frequencies is not None:
            h.update(self.frequencies.tobytes())
        return h.hexdigest()[:16]


def default_truncation(window: Window) -> tuple[int, ...]:
    """64 modes per axis on ``[-1, 1]``, scaled with the side length."""
    return tuple(int(math.ceil(FREQ_PER_UNIT * L - 1e-9)) for L in window.sides)


def build_spectral_model(spec: KernelSpec, window: Window, truncation=None) -> SpectralModel:
    """Fourier-basis approximation of ``DPP(C)`` restricted to ``window``.

    ``truncation`` is an integer ``T`` (same on every axis) or a per-axis
    sequence; modes ``k`` with ``|k_i| <= T_i`` are kept.
    """
    if window.d != spec.d:
        raise ValueError("window and kernel dimensions differ")
    sides = window.sides
    if spec.R >= sides.min():
        raise ValueError(
            f"kernel range {spec.R:.4g} must be below the smallest window side "
            f"{sides.min():.4g} (periodisation would alias the support)"
        )
    if truncation is None:
        truncation = default_truncation(window)
    T = np.broadcast_to(np.asarray(truncation, dtype=np.int64), (window.d,))
    if np.any(T < 1):
        raise ValueError("truncation must be >= 1")
    axes = [np.arange(-t, t + 1) for t in T]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, window.d)
    rho2 = np.sum((grid / sides) ** 2, axis=1)
    uniq, inverse = np.unique(rho2, return_inverse=True)
    eig = np.asarray(fourier_radial(spec, np.sqrt(uniq)))[inverse]
    eig = np.clip(eig, 0.0, 1.0 - EPS_CLIP)
    return SpectralModel(
        window=window,
        eigenvalues=eig,
        frequencies=grid,
        truncation=tuple(int(t) for t in T),
    )


def sample_poisson(lam: float, window: Window, rng: np.random.Generator) -> PointPattern:
    """Homogeneous Poisson process with intensity ``lam`` on ``window``."""
    if lam < 0:
        raise ValueError("intensity must be non-negative")
    m = rng.poisson(lam * window.volume)
    return PointPattern(window.uniform(m, rng), window)


class _ProjectionSampler:
    """Sequential sampler for the projection DPP of a set of Fourier modes.

    Basis functions are handled through their unnormalised values
    ``v(x) = exp(i omega.(x - lower))`` with ``|v(x)|**2 = n``.  The first
    half of the points uses a growing orthonormal basis of the directions
    already used; the second half switches to an explicit orthonormal basis
    of the remaining subspace, which is shrunk by one Householder step per
    point.
    """

    def __init__(self, freqs: np.ndarray, window: Window, rng, max_proposals: int):
        self.n = freqs.shape[0]
        self.kmin = freqs.min(axis=0)
        self.span = freqs.max(axis=0) - self.kmin + 1
        self.index = freqs - self.kmin
        self.step = 2.0 * np.pi / window.sides
        self.window = window
        self.lower = np.asarray(window.lower)
        self.rng = rng
        self.max_proposals = max_proposals

    def features(self, x: np.ndarray) -> np.ndarray:
        # exp(i omega.x) as a product of per-axis factors over the used range
        y = (x - self.lower) * self.step
        out = None
        for ax in range(y.shape[1]):
            ks = np.arange(self.span[ax]) + self.kmin[ax]
            table = np.exp(1j * y[:, ax, None] * ks[None, :])
            col = table[:, self.index[:, ax]]
            out = col if out is None else out * col
        return out

    def _propose(self, i: int, r: int, density):
        """Draw proposals until one is accepted; ``density`` maps a batch of
        feature rows to acceptance probabilities."""
        tried = 0
        while tried < self.max_proposals:
            batch = min(4096, max(2, int(math.ceil(1.2 * self.n / r))))
            x = self.window.uniform(batch, self.rng)
            u = self.rng.random(batch)
            v = self.features(x)
            prob, extra = density(v)
            hit = np.flatnonzero(u < prob)
            if hit.size:
                j = hit[0]
                return x[j], v[j], extra[j]
            tried += batch
        raise SamplerError(
            "rejection sampling exceeded its proposal cap",
            point_index=i, remaining_rank=r, proposals=tried, n=self.n,
        )

    def run(self) -> np.ndarray:
        n = self.n
        out = np.empty((n, self.window.d))
        out[0] = self.window.uniform(1, self.rng)[0]
        if n == 1:
            return out
        switch = int(SWITCH_FRACTION * n) if n >= 16 else n
        # growing orthonormal basis of used directions
        E = np.empty((n, max(switch, 1)), dtype=complex, order="F")
        E[:, 0] = self.features(out[:1])[0] / math.sqrt(n)
        for i in range(1, switch):
            Ei = E[:, :i]

            def density(v):
                c = (v.conj() @ Ei).conj()
                res = n - np.einsum("ij,ij->i", c.real, c.real) - np.einsum("ij,ij->i", c.imag, c.imag)
                return np.maximum(res, 0.0) / n, c

            x, v, c = self._propose(i, n - i, density)
            out[i] = x
            e = v - Ei @ c
            norm = np.linalg.norm(e)
            if norm < 0.7 * math.sqrt(n):
                e -= Ei @ (Ei.conj().T @ e)
                norm = np.linalg.norm(e)
            if norm < 1e-8:
                raise SamplerError("degenerate projection direction", point_index=i, n=n)
            E[:, i] = e / norm
        if switch == n:
            return out
        # orthonormal basis of the remaining subspace
        q_full, _ = np.linalg.qr(E[:, :switch], mode="complete")
        Q = np.asfortranarray(q_full[:, switch:])
        for i in range(switch, n):
            r = n - i

            def density(v):
                w = (v.conj() @ Q).conj()
                mass = np.einsum("ij,ij->i", w.real, w.real) + np.einsum("ij,ij->i", w.imag, w.imag)
                return mass / n, w

            x, v, w = self._propose(i, r, density)
            out[i] = x
            if r == 1:
                break
            wn = np.linalg.norm(w)
            if wn < 1e-8:
                raise SamplerError("degenerate projection direction", point_index=i, n=n)
            a = w / wn
            # Householder vector mapping a onto a multiple of e_1
            phase = a[0] / abs(a[0]) if abs(a[0]) > 0 else 1.0
            h = a.copy()
            h[0] += phase
            qh = Q @ h
            # Q <- Q (I - 2 h h^H / h^H h), first column dropped
            Q = blas.zgeru(-2.0 / np.vdot(h, h).real, qh, h.conj(), a=Q, overwrite_a=1)
            Q = Q[:, 1:]
        return out


def sample_dpp(model: SpectralModel, rng: np.random.Generator,
               max_proposals: int = MAX_PROPOSALS) -> PointPattern:
    """Draw one realisation of the (truncated, periodised) DPP of ``model``."""
    if model.frequencies is None:
        raise ValueError("model has no frequencies attached; cannot sample")
    keep = rng.random(model.eigenvalues.size) < model.eigenvalues
    freqs = model.frequencies[keep]
    if freqs.shape[0] == 0:
        return PointPattern(np.empty((0, model.window.d)), model.window)
    pts = _ProjectionSampler(freqs, model.window, rng, max_proposals).run()
    return PointPattern(pts, model.window)
