"""Command-line front end.

Subcommands ``simulate``, ``estimate``, ``check``, ``experiment`` and
``plotdata``.  Every output file gets a JSON sidecar holding the run
manifest; outputs contain no timestamps, so re-running a manifest
reproduces them byte for byte.

Exit codes: 0 success, 1 usage error, 2 invalid numeric input or config.
"""
from __future__ import annotations

import argparse
import configparser
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .contamination import KINDS, ContaminationSpec
from .countdist import approx_constants, check_condition_amed
from .estimators import (DEFAULT_LADDER, IntensityEstimate, conservative_ci, lambda_med,
                         lambda_std, make_grid, sample_quantile, sigma2_hat)
from .harness import MODELS, ExperimentConfig, default_workers, run_experiment
from .kernel import KernelSpec, check_existence, pair_correlation
from .sampler import PointPattern, SamplerError, Window, build_spectral_model, sample_dpp

EXIT_OK, EXIT_USAGE, EXIT_INVALID = 0, 1, 2


class UsageError(Exception):
    pass


class InvalidInput(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _ladder(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.replace(" ", "").split(",") if v)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad ladder {text!r}") from None


def _add_kernel_flags(p):
    p.add_argument("--model", choices=["dpp1", "dpp2", "custom"], default="dpp1")
    p.add_argument("--lambda", dest="lam", type=float, default=50.0)
    p.add_argument("--R-fraction", dest="R_fraction", type=float, default=None,
                   help="range as a fraction of the largest admissible range M")
    p.add_argument("--d", type=int, default=2)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dppintensity", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", help="sample a DPP on [-n, n]^d")
    _add_kernel_flags(p)
    p.add_argument("--config")
    p.add_argument("--n", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("estimate", help="estimate the intensity of a pattern file")
    p.add_argument("pattern")
    p.add_argument("--n", type=float, default=None,
                   help="window [-n, n]^d; defaults to the window in the pattern sidecar")
    p.add_argument("--kn-ladder", dest="ladder", type=_ladder, default=DEFAULT_LADDER)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma2", action="store_true")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--out")

    p = sub.add_parser("check", help="kernel constants and existence report")
    _add_kernel_flags(p)
    p.add_argument("--out")

    p = sub.add_parser("experiment", help="Monte Carlo experiment")
    _add_kernel_flags(p)
    p.add_argument("--config")
    p.add_argument("--n", type=float, default=1.0)
    p.add_argument("--kn-ladder", dest="ladder", type=_ladder, default=DEFAULT_LADDER)
    p.add_argument("--contamination", choices=KINDS, default="none")
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--squares", type=int, default=1)
    p.add_argument("--side-fraction", dest="side_fraction", type=float, default=0.1)
    p.add_argument("--reps", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma2", action="store_true")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--records", action="store_true", help="also write per-replication records")
    p.add_argument("--out", required=True, help="output prefix for .csv and .json")

    p = sub.add_parser("plotdata", help="pair correlation curves or pattern coordinates")
    _add_kernel_flags(p)
    p.add_argument("--pattern")
    p.add_argument("--r-max", dest="r_max", type=float, default=0.3)
    p.add_argument("--points", type=int, default=301)
    p.add_argument("--out")
    return parser


def _kernel_from_flags(args) -> KernelSpec:
    frac = args.R_fraction
    if frac is None:
        if args.model == "custom":
            raise UsageError("--model custom needs --R-fraction")
        frac = MODELS[args.model]
    if not (args.lam > 0 and frac > 0):
        raise InvalidInput("lambda and R fraction must be positive")
    return KernelSpec.from_fraction(args.lam, frac, d=args.d)


def _validated(spec: KernelSpec):
    rep = check_existence(spec)
    if not rep.valid or spec.C0 >= spec.lam:
        raise InvalidInput(f"kernel does not define a DPP: sup F(C) = {rep.sup:.6g}, "
                           f"C0 = {spec.C0:.6g}, lambda = {spec.lam:g}")
    return rep


def _manifest(args, argv, outputs) -> dict:
    return {"subcommand": args.command, "argv": list(argv),
            "config": getattr(args, "config", None), "seed": getattr(args, "seed", None),
            "outputs": [str(o) for o in outputs], "version": __version__}


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _emit(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _read_config(path: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise InvalidInput(f"cannot read config {path}: {exc}") from None
    return cp


def config_from_ini(cp: configparser.ConfigParser) -> tuple[ExperimentConfig, int | None]:
    """Experiment config and worker count from an INI file.

    Sections: ``kernel`` (model, family, d, lambda, R_fraction), ``window``
    (n), ``estimators`` (ladder, sigma2), one or more sections whose names
    start with ``contamination`` (kind, rho, squares, side_fraction) and
    ``harness`` (reps, seed, workers).
    """
    try:
        k = cp["kernel"] if cp.has_section("kernel") else {}
        model = k.get("model", "custom")
        kcfg = dict(k)
        if "R_fraction" not in kcfg and "r_fraction" in kcfg:
            kcfg["R_fraction"] = kcfg["r_fraction"]
        if "R_fraction" not in kcfg:
            if model not in MODELS:
                raise InvalidInput("[kernel] needs R_fraction or model = dpp1 | dpp2")
            kcfg["R_fraction"] = MODELS[model]
        kernel = KernelSpec.from_config(kcfg)
        n = cp.getfloat("window", "n", fallback=1.0)
        ladder = _ladder(cp.get("estimators", "ladder", fallback="9,16,25,36,49"))
        sigma2 = cp.getboolean("estimators", "sigma2", fallback=False)
        conts = tuple(
            ContaminationSpec.from_dict(dict(cp[s]))
            for s in cp.sections() if s.startswith("contamination")
        ) or (ContaminationSpec(),)
        reps = cp.getint("harness", "reps", fallback=500)
        seed = cp.getint("harness", "seed", fallback=0)
        workers = cp.getint("harness", "workers", fallback=None)
        cfg = ExperimentConfig(kernel, n=n, reps=reps, ladder=ladder, contaminations=conts,
                               seed=seed, sigma2=sigma2, model=model)
    except InvalidInput:
        raise
    except (ValueError, KeyError, TypeError, argparse.ArgumentTypeError) as exc:
        raise InvalidInput(f"invalid config: {exc}") from None
    return cfg, workers


def cmd_simulate(args, argv) -> int:
    if args.config:
        cfg, _ = config_from_ini(_read_config(args.config))
        spec, n = cfg.kernel, cfg.n
    else:
        spec, n = _kernel_from_flags(args), args.n
    _validated(spec)
    window = Window.square(n, spec.d)
    try:
        model = build_spectral_model(spec, window)
        pattern = sample_dpp(model, np.random.default_rng(args.seed))
    except (ValueError, SamplerError) as exc:
        raise InvalidInput(str(exc)) from None
    out = Path(args.out)
    pattern.to_csv(out)
    side = out.with_name(out.name + ".json")
    meta = {"manifest": _manifest(args, argv, [out, side]), "kernel": spec.to_config(),
            "window": window.to_dict(), "seed": args.seed, "model_digest": model.digest,
            "count": len(pattern)}
    side.write_text(_dump(meta))
    return EXIT_OK


def _pattern_window(args, d: int = 2) -> Window:
    if args.n is not None:
        return Window.square(args.n, d)
    side = Path(args.pattern + ".json")
    if side.exists():
        return Window.from_dict(json.loads(side.read_text())["window"])
    raise UsageError("window unknown: pass --n or keep the pattern's .json sidecar")


def cmd_estimate(args, argv) -> int:
    window = _pattern_window(args)
    try:
        pattern = PointPattern.from_csv(args.pattern, window)
    except OSError as exc:
        raise InvalidInput(f"cannot read {args.pattern}: {exc}") from None
    except ValueError as exc:
        raise InvalidInput(f"{args.pattern}: {exc}") from None
    vol = window.volume
    rng = np.random.default_rng(args.seed)
    try:
        grids = [make_grid(window, k) for k in args.ladder]
    except ValueError as exc:
        raise InvalidInput(str(exc)) from None
    estimates = [lambda_std(pattern)]
    for g in grids:
        estimates.append(lambda_med(pattern, g, rng, seed=args.seed))
    # the data-driven estimate reuses the per-grid values above
    meds = [e.value for e in estimates[1:]]
    estimates.append(IntensityEstimate(sample_quantile(meds, 0.5), "med_dd", None, args.seed,
                                       tuple(meds)))
    records = []
    for e in estimates:
        rec = e.to_record()
        rec["seed"] = args.seed
        rec["ci_low"], rec["ci_high"] = (
            conservative_ci(e, vol, args.level) if e.estimator != "std" else (None, None))
        records.append(rec)
    result = {"estimates": records, "manifest": _manifest(args, argv, [args.out or "-"])}
    if args.sigma2:
        result["sigma2"] = sigma2_hat(pattern) if len(pattern) else None
    _emit(_dump(result), args.out)
    return EXIT_OK


def check_report(spec: KernelSpec) -> dict:
    rep = check_existence(spec)
    out = {"lambda": spec.lam, "d": spec.d, "M": spec.M, "R": spec.R,
           "R_fraction": spec.R / spec.M, "C0": spec.C0, "existence": rep.to_dict(),
           "fourier_bound": (spec.R / spec.M) ** spec.d}
    if spec.C0 < spec.lam:
        k = approx_constants(spec.lam, spec.C0)
        value, ok = check_condition_amed(spec.lam, spec.C0)
        out.update(kappa0=k.kappa0, kappa1=k.kappa1, condition_value=value, condition_holds=ok)
    out["valid"] = bool(rep.valid and spec.C0 < spec.lam)
    return out


def cmd_check(args, argv) -> int:
    spec = _kernel_from_flags(args)
    rep = check_report(spec)
    rep["manifest"] = _manifest(args, argv, [args.out or "-"])
    _emit(_dump(rep), args.out)
    return EXIT_OK if rep["valid"] else EXIT_INVALID


def cmd_experiment(args, argv) -> int:
    if args.config:
        cfg, workers = config_from_ini(_read_config(args.config))
        if args.workers is not None:
            workers = args.workers
    else:
        spec = _kernel_from_flags(args)
        try:
            cont = ContaminationSpec(args.contamination, args.rho, args.squares,
                                     args.side_fraction)
            cfg = ExperimentConfig(spec, n=args.n, reps=args.reps, ladder=args.ladder,
                                   contaminations=(cont,), seed=args.seed, sigma2=args.sigma2,
                                   model=args.model)
        except ValueError as exc:
            raise InvalidInput(str(exc)) from None
        workers = args.workers
    _validated(cfg.kernel)
    report = run_experiment(cfg, workers=workers if workers is not None else default_workers())
    prefix = Path(args.out)
    csv_path = prefix.with_name(prefix.name + ".csv")
    json_path = prefix.with_name(prefix.name + ".json")
    outputs = [csv_path, json_path]
    if args.records:
        outputs.append(prefix.with_name(prefix.name + ".records.csv"))
        outputs[-1].write_text(report.records_csv())
    csv_path.write_text(report.table_csv())
    json_path.write_text(_dump(report.sidecar(_manifest(args, argv, outputs))))
    return EXIT_OK


def cmd_plotdata(args, argv) -> int:
    if args.pattern:
        side = Path(args.pattern + ".json")
        if not side.exists():
            raise UsageError("pattern plot data needs the pattern's .json sidecar")
        window = Window.from_dict(json.loads(side.read_text())["window"])
        try:
            pattern = PointPattern.from_csv(args.pattern, window)
        except ValueError as exc:
            raise InvalidInput(f"{args.pattern}: {exc}") from None
        lines = [",".join(["x", "y", "z"][: window.d] if window.d <= 3 else
                          [f"x{i + 1}" for i in range(window.d)])]
        lines += [",".join(repr(float(v)) for v in p) for p in pattern.points]
        _emit("\n".join(lines) + "\n", args.out)
        return EXIT_OK
    if args.points < 2 or not args.r_max > 0:
        raise InvalidInput("need --points >= 2 and --r-max > 0")
    r = np.linspace(0.0, args.r_max, args.points)
    if args.R_fraction is None and args.model in MODELS:
        specs = {m: KernelSpec.from_fraction(args.lam, f, args.d) for m, f in MODELS.items()}
    else:
        specs = {args.model: _kernel_from_flags(args)}
    cols = {m: pair_correlation(s, r) for m, s in specs.items()}
    lines = ["r," + ",".join(f"g_{m}" for m in cols)]
    for i, ri in enumerate(r):
        lines.append(",".join([repr(float(ri))] + [repr(float(c[i])) for c in cols.values()]))
    _emit("\n".join(lines) + "\n", args.out)
    if args.out:
        Path(args.out + ".json").write_text(
            _dump({"manifest": _manifest(args, argv, [args.out]),
                   "kernels": {m: s.to_config() for m, s in specs.items()}}))
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "check": cmd_check,
            "experiment": cmd_experiment, "plotdata": cmd_plotdata}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args, argv)
    except UsageError as exc:
        print(f"dppintensity {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidInput as exc:
        print(f"dppintensity {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
