"""Command-line entry point.

Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from tcurband import __version__
from tcurband.admm import PRESETS, run_admm, select_bands
from tcurband.evaluation import LabeledDataset, SynthSpec, add_noise, oa_repeats, synth
from tcurband.factorizations import NumericalError, tcur
from tcurband.io import (
    ConfigError,
    FormatError,
    RunConfig,
    build_config,
    file_sha256,
    parse_config_text,
    read_bands,
    read_labels,
    read_tensor,
    write_bands,
    write_csv,
    write_labels,
    write_manifest,
    write_tensor,
)
from tcurband.tensor import ShapeError, fro_norm

log = logging.getLogger("tcurband")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for data errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key = value run configuration file")
    p.add_argument("--tensor", help="input T3DF tensor")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--p", type=int)
    p.add_argument("--sr", type=int, help="number of sampled rows")
    p.add_argument("--sc", type=int, help="number of sampled columns")
    p.add_argument("--rank", help="tubal rank cap for U^+ ('none' for no cap)")
    p.add_argument("--k", type=int, help="number of bands to select")
    p.add_argument("--eps", type=float, help="stopping tolerance on ||dB||_inf")
    p.add_argument("--max-iter", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--noise-sigma", type=float, help="add Gaussian noise to the input first")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tcurband", description="Hyperspectral band selection with tensor CUR + G3DTV.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("bandselect", help="run the solver and write bands.csv, trace.csv, manifest.json")
    _add_run_flags(p)

    p = sub.add_parser("evaluate", help="score band subsets with KNN and write oa.csv")
    _add_run_flags(p)
    p.add_argument("--labels", help="L2DF label map")
    p.add_argument("--bands", help="bands.csv to score instead of running the solver")
    p.add_argument("--sweep", help="comma-separated band counts (default 3,6,...,30)")
    p.add_argument("--repeats", type=int)
    p.add_argument("--train-frac", type=float)
    p.add_argument("--n-neighbors", type=int)

    p = sub.add_parser("synth", help="write a planted synthetic cube and label map")
    p.add_argument("--dims", type=int, nargs=3, default=SynthSpec.dims, metavar=("N1", "N2", "N3"))
    p.add_argument("--clusters", type=int, default=SynthSpec.n_clusters)
    p.add_argument("--tubal-rank", type=int, default=SynthSpec.tubal_rank)
    p.add_argument("--sparse-frac", type=float, default=SynthSpec.sparse_frac)
    p.add_argument("--sparse-mag", type=float, default=SynthSpec.sparse_mag)
    p.add_argument("--amplitude", type=float, default=SynthSpec.amplitude)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", help="output directory")

    p = sub.add_parser("noise", help="add seeded Gaussian noise to a T3DF tensor")
    p.add_argument("input")
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output T3DF path")

    p = sub.add_parser("decompose", help="standalone t-CUR; prints the relative reconstruction error")
    p.add_argument("input")
    p.add_argument("--sr", type=int, required=True)
    p.add_argument("--sc", type=int, required=True)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", help="optional T3DF path for the reconstruction")
    return parser


def _run_config(args: argparse.Namespace) -> RunConfig:
    layers = []
    if args.config is not None:
        try:
            text = args.config.read_text()
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        layers.append(parse_config_text(text, str(args.config)))
    flags = {
        "tensor": args.tensor,
        "preset": args.preset,
        "lambda1": args.lambda1,
        "lambda2": args.lambda2,
        "beta": args.beta,
        "tau": args.tau,
        "p": args.p,
        "sr": args.sr,
        "sc": args.sc,
        "rank": args.rank,
        "k": args.k,
        "eps": args.eps,
        "max_iter": args.max_iter,
        "seed": args.seed,
        "noise_sigma": args.noise_sigma,
        "out": args.out,
    }
    for name in ("labels", "bands", "sweep", "repeats", "train_frac", "n_neighbors"):
        if hasattr(args, name):
            flags[name] = getattr(args, name)
    layers.append(flags)
    cfg = build_config(*layers)
    if cfg.tensor is None:
        raise UsageError("no input tensor (use --tensor or 'tensor =' in the config)")
    return cfg


def _load_input(cfg: RunConfig) -> np.ndarray:
    try:
        y = read_tensor(cfg.tensor)
    except OSError as exc:
        raise DataError(f"cannot read tensor: {exc}") from exc
    if not np.all(np.isfinite(y)):
        raise DataError(f"{cfg.tensor}: tensor contains non-finite values")
    try:
        cfg.params.check_shape(y.shape)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if cfg.noise_sigma > 0:
        y = add_noise(y, cfg.noise_sigma, cfg.params.seed)
    return y


def _manifest(cfg: RunConfig, command: str, **extra) -> dict:
    return {
        "command": command,
        "version": __version__,
        "config": cfg.to_dict(),
        "tensor_sha256": file_sha256(cfg.tensor),
        **extra,
    }


def cmd_bandselect(cfg: RunConfig) -> int:
    y = _load_input(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    result = run_admm(y, cfg.params)
    bands = select_bands(result.b_smooth, cfg.params.k, cfg.params.seed)
    write_bands(out / "bands.csv", bands)
    write_csv(out / "trace.csv", ("iter", "residual", "objective"), result.trace)
    rows, cols = result.state.b_factors.row_idx, result.state.b_factors.col_idx
    write_manifest(
        out / "manifest.json",
        _manifest(
            cfg,
            "bandselect",
            dims=list(y.shape),
            iterations=len(result.trace),
            converged=result.converged,
            sampled_rows=(rows + 1).tolist(),
            sampled_cols=(cols + 1).tolist(),
            bands=(bands + 1).tolist(),
        ),
    )
    if not result.converged:
        log.warning("no convergence within %d iterations", cfg.params.max_iter)
    print(f"selected bands: {' '.join(str(b + 1) for b in bands)}")
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig) -> int:
    if cfg.labels is None:
        raise UsageError("evaluate needs a label map (use --labels or 'labels =' in the config)")
    y = _load_input(cfg)
    try:
        labels = read_labels(cfg.labels, y.shape[:2])
    except OSError as exc:
        raise DataError(f"cannot read labels: {exc}") from exc
    ds = LabeledDataset(y, labels)
    n3 = y.shape[2]
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)

    def score(q):
        oa = oa_repeats(ds, q, cfg.repeats, cfg.train_frac, cfg.params.seed, cfg.n_neighbors)
        return float(np.mean(oa)), float(np.std(oa))

    rows = []
    extra: dict = {}
    if cfg.bands is not None:
        try:
            q = read_bands(cfg.bands)
        except OSError as exc:
            raise DataError(f"cannot read bands: {exc}") from exc
        if q.max() >= n3:
            raise DataError(f"{cfg.bands}: band index {q.max() + 1} exceeds n3={n3}")
        mean, std = score(q)
        rows.append((q.size, mean, std, 0.0))
    else:
        bad = [k for k in cfg.sweep if k > n3]
        if bad:
            raise UsageError(f"sweep entries {bad} exceed n3={n3}")
        t0 = time.perf_counter()
        result = run_admm(y, cfg.params)
        solve_time = time.perf_counter() - t0
        extra.update(iterations=len(result.trace), converged=result.converged, solve_seconds=solve_time)
        for k in cfg.sweep:
            t0 = time.perf_counter()
            q = select_bands(result.b_smooth, k, cfg.params.seed)
            elapsed = solve_time + time.perf_counter() - t0
            mean, std = score(q)
            rows.append((k, mean, std, elapsed))
            log.info("k=%d mean OA %.4f", k, mean)
    write_csv(out / "oa.csv", ("n_bands", "mean_oa", "std_oa", "runtime_seconds"), rows)
    write_manifest(out / "manifest.json", _manifest(cfg, "evaluate", labels_sha256=file_sha256(cfg.labels), **extra))
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    try:
        spec = SynthSpec(
            dims=tuple(args.dims),
            n_clusters=args.clusters,
            tubal_rank=args.tubal_rank,
            sparse_frac=args.sparse_frac,
            sparse_mag=args.sparse_mag,
            noise_sigma=args.sigma,
            seed=args.seed,
            amplitude=args.amplitude,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    ds, planted = synth(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_tensor(out / "tensor.t3df", ds.tensor)
    write_labels(out / "labels.l2df", ds.labels)
    write_csv(out / "band_clusters.csv", ("band", "cluster"),
              ((i + 1, c + 1) for i, c in enumerate(planted.band_cluster)))
    return EXIT_OK


def cmd_noise(args: argparse.Namespace) -> int:
    if args.sigma < 0:
        raise UsageError(f"sigma must be nonnegative, got {args.sigma}")
    try:
        y = read_tensor(args.input)
    except OSError as exc:
        raise DataError(f"cannot read tensor: {exc}") from exc
    write_tensor(args.out, add_noise(y, args.sigma, args.seed))
    return EXIT_OK


def cmd_decompose(args: argparse.Namespace) -> int:
    try:
        y = read_tensor(args.input)
    except OSError as exc:
        raise DataError(f"cannot read tensor: {exc}") from exc
    n1, n2, _ = y.shape
    if not (1 <= args.sr <= n1 and 1 <= args.sc <= n2):
        raise UsageError(f"need 1 <= sr <= {n1} and 1 <= sc <= {n2}")
    _, y_hat = tcur(y, args.sr, args.sc, args.seed)
    denom = fro_norm(y)
    err = fro_norm(y - y_hat) / denom if denom > 0 else fro_norm(y_hat)
    if not np.isfinite(err):
        raise NumericalError("reconstruction is not finite")
    if args.out:
        write_tensor(args.out, y_hat)
    print(f"relative_error {err:.17g}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        if args.command == "bandselect":
            return cmd_bandselect(_run_config(args))
        if args.command == "evaluate":
            return cmd_evaluate(_run_config(args))
        if args.command == "synth":
            return cmd_synth(args)
        if args.command == "noise":
            return cmd_noise(args)
        return cmd_decompose(args)
    except (UsageError, ConfigError) as exc:
        print(f"tcurband: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FormatError, ShapeError, OSError) as exc:
        print(f"tcurband: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"tcurband: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
