"""Command-line interface: ``fepca {fit,infer,plot,simulate}``.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import itertools
import sys
import time
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .analysis import analyze
from .core import RankError, curvature_index, estimate_noise_variance, fit_pca, preprocess
from .dataio import DataError, read_csv, read_results, write_coverage, write_results
from .inference import DEFAULT_B, METHODS, normalize_method
from .parallel import default_workers
from .plot import render_svg
from .simulation import SimulationConfig, dataset_signal, run_coverage_grid

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _dims(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.replace(" ", "").split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"dims must look like '1,2', got {text!r}") from None


def _method(text: str) -> str:
    try:
        return normalize_method(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fepca", description="Confidence areas for fixed-effects PCA.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def data_args(p):
        p.add_argument("input", help="CSV with a header row and a row-label column")
        p.add_argument("--rank", "-S", type=int, required=True)
        p.add_argument("--scale", action="store_true", help="standardise columns to unit variance")
        p.add_argument("--delimiter", default=None, help="comma, semicolon, tab (default: detect)")
        p.add_argument("--decimal", default=".")

    p_fit = sub.add_parser("fit", help="fit PCA and print eigenvalues, noise variance, K_int")
    data_args(p_fit)

    p_inf = sub.add_parser("infer", help="compute confidence ellipsoids")
    data_args(p_inf)
    p_inf.add_argument("--method", type=_method, required=True,
                       help="asymptotic, bootstrap, jackknife or approx-jackknife")
    p_inf.add_argument("--B", type=int, default=DEFAULT_B, help="bootstrap replicates / asymptotic draws")
    p_inf.add_argument("--seed", type=int, default=0)
    p_inf.add_argument("--level", type=float, default=0.95)
    p_inf.add_argument("--dims", type=_dims, action="append", default=None,
                       help="dimension pair to tabulate, e.g. 1,2 (repeatable)")
    p_inf.add_argument("--columns", action="store_true", help="also compute column-point ellipses")
    p_inf.add_argument("--asymptotic-mode", choices=("full", "diagonal"), default="full")
    p_inf.add_argument("--out", "-o", default="fepca-out")
    p_inf.add_argument("--threads", type=int, default=None)

    p_plot = sub.add_parser("plot", help="render an SVG factor map from results.json")
    p_plot.add_argument("results", help="results.json or the directory holding it")
    p_plot.add_argument("--dims", type=_dims, default=(1, 2))
    p_plot.add_argument("--size", type=int, default=600)
    p_plot.add_argument("--no-labels", action="store_true")
    p_plot.add_argument("--side", choices=("row", "column"), default="row")
    p_plot.add_argument("--out", "-o", default=None, help="SVG path (default: stdout)")

    p_sim = sub.add_parser("simulate", help="run a coverage study from a TOML config")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--replicates", type=int, default=None)
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--methods", type=_method, nargs="+", default=None)
    p_sim.add_argument("--B", type=int, default=None)
    p_sim.add_argument("--out", "-o", default="fepca-sim")
    p_sim.add_argument("--threads", type=int, default=None)
    return parser


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def load_simulation_configs(path, overrides: dict | None = None) -> list[SimulationConfig]:
    """Expand a TOML config into one :class:`SimulationConfig` per condition.

    ``sigma``, ``snr``, ``n``, ``p`` and ``ratio`` may be lists; conditions are
    their cartesian product. ``signal`` names a CSV (relative to the config
    file) whose rank-``rank`` fit is used as the true matrix.
    """
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"{path}: {exc}") from exc
    cfg = dict(raw.get("simulation", raw))
    for k, v in (overrides or {}).items():
        if v is not None:
            cfg[k] = v
    known = {"signal", "scale", "rank", "n", "p", "ratio", "sigma", "snr", "replicates", "methods",
             "level", "seed", "B", "em_tol", "em_max_iter", "delimiter", "decimal"}
    unknown = set(cfg) - known
    if unknown:
        raise UsageError(f"{path}: unknown config keys {sorted(unknown)}")
    if ("sigma" in cfg) == ("snr" in cfg):
        raise UsageError(f"{path}: give exactly one of 'sigma' and 'snr'")

    rank = int(cfg.get("rank", 2))
    signal = None
    if "signal" in cfg:
        src = Path(cfg["signal"])
        if not src.is_absolute():
            src = path.parent / src
        data = read_csv(src, cfg.get("delimiter"), cfg.get("decimal", "."))
        signal = dataset_signal(data, rank, bool(cfg.get("scale", False)))

    common = dict(
        rank=rank,
        replicates=int(cfg.get("replicates", 50 if signal is None else 200)),
        methods=tuple(cfg.get("methods", METHODS)),
        level=float(cfg.get("level", 0.95)),
        seed=int(cfg.get("seed", 0)),
        B=int(cfg.get("B", DEFAULT_B)),
        em_tol=float(cfg.get("em_tol", 1e-8)),
        em_max_iter=int(cfg.get("em_max_iter", 1000)),
    )
    noise_key = "sigma" if "sigma" in cfg else "snr"
    out = []
    if signal is not None:
        for level in _as_list(cfg[noise_key]):
            label = f"{noise_key}={float(level):g}"
            out.append(SimulationConfig(signal=signal, label=label, **{noise_key: float(level)}, **common))
    else:
        grid = itertools.product(_as_list(cfg.get("n", 20)), _as_list(cfg.get("p", 10)),
                                 _as_list(cfg.get("ratio", 1.0)), _as_list(cfg[noise_key]))
        for n, p, ratio, level in grid:
            out.append(SimulationConfig(n=int(n), p=int(p), ratio=float(ratio),
                                        **{noise_key: float(level)}, **common))
    return out


def _cmd_fit(args) -> int:
    data = read_csv(args.input, args.delimiter, args.decimal)
    working, _ = preprocess(data, args.scale)
    fit = fit_pca(working, args.rank)  # working units throughout
    noise = estimate_noise_variance(working, fit)
    print(f"{'dim':>4} {'eigenvalue':>14} {'percent':>9}")
    for s, (lam, r) in enumerate(zip(fit.eigenvalues, fit.explained_ratio()), start=1):
        print(f"{s:>4} {lam:>14.6g} {100 * r:>8.2f}%")
    print(f"sigma2 = {noise.sigma2:.6g} (df = {noise.df})")
    try:
        k = curvature_index(fit)
        print(f"K_int = {k:.6g}  sigma*K_int = {noise.sigma * k:.6g}")
    except RankError as exc:
        print(f"K_int undefined: {exc}")
    for w in fit.warnings:
        print(f"warning: {w}")
    return EXIT_OK


def _cmd_infer(args) -> int:
    data = read_csv(args.input, args.delimiter, args.decimal)
    workers = args.threads if args.threads is not None else default_workers()
    pairs = args.dims
    if pairs is not None:
        for d in pairs:
            if len(d) != 2 or any(x < 1 or x > args.rank for x in d):
                raise UsageError(f"--dims {d} invalid for rank {args.rank}")
    t0 = time.perf_counter()
    bundle = analyze(data, args.rank, args.method, scale=args.scale, B=args.B, seed=args.seed,
                     level=args.level, dim_pairs=pairs, columns=args.columns, workers=workers,
                     asymptotic_mode=args.asymptotic_mode)
    files = write_results(bundle, args.out)
    print(f"{bundle.method}: {bundle.n_replicates} pseudo-realizations in "
          f"{time.perf_counter() - t0:.2f}s", file=sys.stderr)
    for f in files:
        print(f)
    return EXIT_OK


def _cmd_plot(args) -> int:
    bundle = read_results(args.results)
    if len(args.dims) != 2:
        raise UsageError("--dims needs exactly two components")
    try:
        svg = render_svg(bundle, args.dims, size=args.size, labels=not args.no_labels, side=args.side)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.out:
        Path(args.out).write_text(svg)
        print(args.out)
    else:
        sys.stdout.write(svg)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    overrides = {"replicates": args.replicates, "seed": args.seed, "B": args.B,
                 "methods": list(args.methods) if args.methods else None}
    cfgs = load_simulation_configs(args.config, overrides)
    workers = args.threads if args.threads is not None else default_workers()
    table = run_coverage_grid(cfgs, workers)
    files = write_coverage(table, args.out)
    print(table.format())
    for f in files:
        print(f)
    return EXIT_OK


COMMANDS = {"fit": _cmd_fit, "infer": _cmd_infer, "plot": _cmd_plot, "simulate": _cmd_simulate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (DataError, RankError) as exc:
        print(f"fepca: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"fepca: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"fepca: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
