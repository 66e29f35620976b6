"""Monte Carlo experiments: replicate, contaminate, estimate, aggregate.

Replication ``i`` draws everything from streams derived from
``SeedSequence(seed, spawn_key=(i, j))``:

* ``j = 0`` samples the point pattern;
* ``j = 1 + c`` serves contamination setting ``c``, first for the
  contamination itself and then for the jitter of each grid in ladder
  order.

All contamination settings therefore share the same underlying pattern,
and results do not depend on how replications are scheduled.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .contamination import ContaminationSpec, contaminate
from .estimators import DEFAULT_LADDER, lambda_med, make_grid, sample_quantile, sigma2_hat
from .kernel import KernelSpec
from .sampler import PointPattern, Window, build_spectral_model, sample_dpp, sample_poisson

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "EstimatorSummary",
    "ReplicationError",
    "replication_rng",
    "simulate_pattern",
    "run_replication",
    "run_experiment",
    "summarize",
    "gain",
    "model_spec",
]

MODELS = {"dpp1": 0.25, "dpp2": 0.75}


class ReplicationError(RuntimeError):
    def __init__(self, index: int, seed: int, cause: BaseException):
        super().__init__(f"replication {index} (seed {seed}) failed: {cause!r}")
        self.index = index
        self.seed = seed


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce an experiment.

    ``kernel=None`` simulates a homogeneous Poisson process with intensity
    ``lam`` instead of a DPP.
    """

    kernel: KernelSpec | None
    n: float = 1.0
    reps: int = 500
    ladder: tuple[int, ...] = DEFAULT_LADDER
    contaminations: tuple[ContaminationSpec, ...] = (ContaminationSpec(),)
    seed: int = 0
    sigma2: bool = False
    model: str = "custom"
    lam: float | None = None

    def __post_init__(self):
        if int(self.reps) != self.reps or self.reps < 1:
            raise ValueError("reps must be a positive integer")
        if not self.n > 0:
            raise ValueError("window scale n must be positive")
        if not self.contaminations:
            raise ValueError("at least one contamination setting is required")
        object.__setattr__(self, "ladder", tuple(int(k) for k in self.ladder))
        object.__setattr__(self, "contaminations", tuple(self.contaminations))
        if self.kernel is None and self.lam is None:
            raise ValueError("a Poisson experiment needs lam")
        for k in self.ladder:
            make_grid(self.window, k)

    @property
    def intensity(self) -> float:
        return self.kernel.lam if self.kernel is not None else float(self.lam)

    @property
    def window(self) -> Window:
        d = self.kernel.d if self.kernel is not None else 2
        return Window.square(self.n, d)

    @property
    def estimators(self) -> list[str]:
        return ["std"] + [f"med{k}" for k in self.ladder] + ["med_dd"]

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "kernel": None if self.kernel is None else self.kernel.to_config(),
            "lambda": self.intensity,
            "n": self.n,
            "reps": self.reps,
            "ladder": list(self.ladder),
            "contaminations": [c.to_dict() for c in self.contaminations],
            "seed": self.seed,
            "sigma2": self.sigma2,
        }

    @property
    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def replication_rng(seed: int, index: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index, stream)))


_MODEL_CACHE: dict = {}


def _model_for(config: ExperimentConfig):
    key = (config.kernel, config.window)
    if key not in _MODEL_CACHE:
        _MODEL_CACHE.clear()
        _MODEL_CACHE[key] = build_spectral_model(config.kernel, config.window)
    return _MODEL_CACHE[key]


def simulate_pattern(config: ExperimentConfig, index: int) -> PointPattern:
    """The uncontaminated pattern of replication ``index``."""
    rng = replication_rng(config.seed, index, 0)
    if config.kernel is None:
        return sample_poisson(config.intensity, config.window, rng)
    return sample_dpp(_model_for(config), rng)


def run_replication(config: ExperimentConfig, index: int,
                    pattern: PointPattern | None = None) -> list[dict]:
    """One record per contamination setting for replication ``index``.

    ``pattern`` may be passed to reuse a draw; it must equal
    ``simulate_pattern(config, index)`` for the records to be reproducible.
    """
    try:
        if pattern is None:
            pattern = simulate_pattern(config, index)
        vol = pattern.window.volume
        out = []
        for c, spec in enumerate(config.contaminations):
            rng = replication_rng(config.seed, index, 1 + c)
            x = contaminate(pattern, spec, rng)
            rec = {"rep": index, "contamination": spec.label, "m": len(pattern),
                   "n_points": len(x), "std": len(x) / vol}
            meds = []
            for k in config.ladder:
                v = lambda_med(x, make_grid(x.window, k), rng).value
                rec[f"med{k}"] = v
                meds.append(v)
            rec["med_dd"] = sample_quantile(meds, 0.5)
            if config.sigma2:
                rec["sigma2"] = sigma2_hat(x)
            out.append(rec)
        return out
    except Exception as exc:  # noqa: BLE001 - re-raised with context
        raise ReplicationError(index, config.seed, exc) from exc


def _run_chunk(config: ExperimentConfig, indices) -> list[list[dict]]:
    return [run_replication(config, i) for i in indices]


def gain(mse_std: float, mse_est: float) -> float:
    """Percentage MSE improvement of an estimator over the standard one."""
    if not mse_std > 0:
        raise ValueError("mse_std must be positive")
    return (mse_std - mse_est) / mse_std * 100.0


@dataclass(frozen=True)
class EstimatorSummary:
    mean: float
    sd: float
    bias: float
    mse: float
    gain: float

    def to_dict(self) -> dict:
        return {"mean": self.mean, "sd": self.sd, "bias": self.bias, "mse": self.mse,
                "gain": self.gain}


def summarize(values, truth: float, mse_std: float | None = None) -> EstimatorSummary:
    """Mean, SD (``r - 1`` denominator, 0 for one value), bias and MSE."""
    v = np.asarray(values, dtype=float)
    mean = float(v.mean())
    sd = float(v.std(ddof=1)) if v.size > 1 else 0.0
    mse = float(np.mean((v - truth) ** 2))
    g = float("nan") if mse_std is None or mse_std == 0 else gain(mse_std, mse)
    return EstimatorSummary(mean, sd, mean - truth, mse, g)


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    records: list[dict]
    summary: dict = field(default_factory=dict)

    @classmethod
    def from_records(cls, config: ExperimentConfig, records: list[dict]) -> "ExperimentReport":
        truth = config.intensity
        summary = {}
        for spec in config.contaminations:
            rows = [r for r in records if r["contamination"] == spec.label]
            std = summarize([r["std"] for r in rows], truth)
            block = {}
            for name in config.estimators:
                s = summarize([r[name] for r in rows], truth, std.mse)
                if name == "std" and std.mse > 0:
                    s = EstimatorSummary(s.mean, s.sd, s.bias, s.mse, 0.0)
                block[name] = s
            if config.sigma2:
                block["sigma2"] = summarize([r["sigma2"] for r in rows], truth)
            summary[spec.label] = block
        return cls(config, records, summary)

    def get(self, estimator: str, contamination: str = "none") -> EstimatorSummary:
        return self.summary[contamination][estimator]

    def table_csv(self) -> str:
        """Rows model x n x contamination x statistic; one column per estimator."""
        cfg = self.config
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "n", "contamination", "statistic"] + cfg.estimators)
        for label, block in self.summary.items():
            for stat in ("mean", "sd", "bias", "mse", "gain"):
                w.writerow([cfg.model, f"{cfg.n:g}", label, stat]
                           + [repr(getattr(block[e], stat)) for e in cfg.estimators])
        return buf.getvalue()

    def sidecar(self, manifest: dict | None = None) -> dict:
        return {
            "version": __version__,
            "config": self.config.to_dict(),
            "config_digest": self.config.digest,
            "replication_seeds": {"master": self.config.seed,
                                  "spawn_key": "(replication, stream)"},
            "summary": {lab: {e: s.to_dict() for e, s in blk.items()}
                        for lab, blk in self.summary.items()},
            "manifest": manifest or {},
        }

    def records_csv(self) -> str:
        keys = list(self.records[0].keys())
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(keys)
        for r in self.records:
            w.writerow([r[k] if isinstance(r[k], str) else repr(r[k]) for k in keys])
        return buf.getvalue()


def default_workers() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:  # pragma: no cover - non-Linux
        return os.cpu_count() or 1


def run_experiment(config: ExperimentConfig, workers: int | None = None,
                   patterns: list[PointPattern] | None = None) -> ExperimentReport:
    """Run all replications and aggregate.

    ``patterns`` (one per replication, from :func:`simulate_pattern`) skips
    the sampling step.  Records are merged by replication index, so the
    report is identical for any ``workers``.
    """
    if workers is None:
        workers = default_workers()
    idx = list(range(config.reps))
    if patterns is not None:
        if len(patterns) != config.reps:
            raise ValueError("need one pattern per replication")
        per_rep = [run_replication(config, i, patterns[i]) for i in idx]
    elif workers <= 1 or config.reps == 1:
        per_rep = _run_chunk(config, idx)
    else:
        n_chunks = min(config.reps, 4 * workers)
        chunks = [idx[j::n_chunks] for j in range(n_chunks)]
        per_rep = [None] * config.reps
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for chunk, res in zip(chunks, pool.map(_run_chunk, [config] * n_chunks, chunks)):
                for i, r in zip(chunk, res):
                    per_rep[i] = r
    records = [rec for rep in per_rep for rec in rep]
    return ExperimentReport.from_records(config, records)


def model_spec(model: str, lam: float = 50.0, R_fraction: float | None = None,
               d: int = 2) -> KernelSpec:
    """``dpp1`` and ``dpp2`` are ``R = M / 4`` and ``R = 3 M / 4``."""
    if R_fraction is None:
        if model not in MODELS:
            raise ValueError(f"model {model!r} needs an explicit R fraction")
        R_fraction = MODELS[model]
    return KernelSpec.from_fraction(lam, R_fraction, d=d)
