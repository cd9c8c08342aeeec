"""Non-interactive command line: train, eval, sample, inpaint, stats, enumcheck.

Every run takes a single --seed and derives all randomness from named
sub-streams, writes its artifacts to files, and reports through stdout
lines that are stable enough to parse.  Exit codes: 0 success, 1 runtime
or data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .checkpoint import (
    CheckpointError,
    decode_mean,
    encode_mean,
    load_checkpoint,
    save_checkpoint,
)
from .data import DataError, Dataset, load_text_matrix, save_text_matrix
from .evaluation import (
    EnsembleSpec,
    Ordering,
    draw_orderings,
    enumerate_distribution,
    identity_ordering,
    log_prob_ordering,
    render_report,
    stats_from_matrix,
)
from .model import ModelParams, StructureConfig, forward
from .numerics import ContractError, Rng
from .sampling import ancestral_sample, inpaint
from .training import TrainConfig, train

__all__ = ["main"]


class UsageError(Exception):
    """Flag combination that argparse alone cannot reject."""


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(path: str, command: str, flags: dict, inputs: list[str]) -> None:
    """Record everything needed to reproduce the run bit-exactly."""
    manifest = {
        "command": command,
        "flags": flags,
        "inputs": {p: _sha256(p) for p in inputs},
        "version": __version__,
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _load_binary_dataset(path: str) -> Dataset:
    ds = load_text_matrix(path)
    if not ds.is_binary:
        raise DataError(f"{path}: values must be binary 0/1 for this command")
    return ds


def _load_model(path: str) -> tuple[ModelParams, StructureConfig, dict, np.ndarray]:
    params, config, metadata = load_checkpoint(path)
    if "mean" not in metadata:
        raise CheckpointError(f"{path}: checkpoint metadata lacks the training mean")
    mean = decode_mean(metadata["mean"])
    if mean.shape != (config.D,):
        raise CheckpointError(f"{path}: stored mean length does not match D")
    return params, config, metadata, mean


def _check_dims(config: StructureConfig, ds: Dataset, path: str) -> None:
    if ds.D != config.D:
        raise DataError(
            f"{path}: dataset width {ds.D} does not match model dimension {config.D}"
        )


def write_pgm(path: str, pixels: np.ndarray) -> None:
    """Binary (P5) grayscale image, 8 bits per pixel."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 2:
        raise ContractError("PGM pixels must be a 2-D array")
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.astype(np.uint8).tobytes())


def _pgm_grid(
    vectors: np.ndarray, rows: int, cols: int, img_w: int, img_h: int
) -> np.ndarray:
    grid = np.zeros((rows * img_h, cols * img_w), dtype=np.uint8)
    for i, vec in enumerate(vectors):
        r, c = divmod(i, cols)
        tile = np.round(255.0 * vec.reshape(img_h, img_w)).astype(np.uint8)
        grid[r * img_h : (r + 1) * img_h, c * img_w : (c + 1) * img_w] = tile
    return grid


def _log_prob_matrix(
    params: ModelParams,
    config: StructureConfig,
    samples: np.ndarray,
    spec: EnsembleSpec,
    mean: np.ndarray,
    threads: int,
) -> np.ndarray:
    """Rows assembled in sample order regardless of worker scheduling."""

    def row(si: int) -> list[float]:
        x = samples[si]
        return [log_prob_ordering(params, config, x, o, mean) for o in spec.orderings]

    indices = range(samples.shape[0])
    if threads <= 1:
        rows = [row(si) for si in indices]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(row, indices))
    return np.array(rows)


def _structure_from_flags(args, D: int) -> StructureConfig:
    n = 3 if args.hidden2 is not None else 2
    return StructureConfig(
        D=D,
        hidden1=args.hidden1,
        k=args.k,
        n=n,
        hidden2=args.hidden2,
        activation=args.activation,
    )


def cmd_train(args) -> int:
    if args.mode == "finetune-only" and args.pretrain_epochs > 0:
        raise UsageError("--mode finetune-only conflicts with --pretrain-epochs > 0")
    train_ds = _load_binary_dataset(args.data)
    valid_ds = _load_binary_dataset(args.valid)
    if valid_ds.D != train_ds.D:
        raise DataError(
            f"{args.valid}: width {valid_ds.D} does not match training width {train_ds.D}"
        )
    structure = _structure_from_flags(args, train_ds.D)
    config = TrainConfig(
        minibatch_size=args.batch,
        pretrain_epochs=args.pretrain_epochs,
        finetune_epochs=args.epochs,
        weight_decay=args.weight_decay,
        patience=args.patience,
        seed=args.seed,
        rho=args.rho,
        epsilon=args.epsilon,
    )
    if args.mode is not None:
        mode = args.mode.replace("-", "_")
    else:
        mode = "pretrain_then_finetune" if args.pretrain_epochs > 0 else "finetune_only"
    result = train(structure, train_ds.samples, valid_ds.samples, config, mode)
    for line in result.history:
        print(line)
    metadata = {
        "epochs": str(result.epochs_run),
        "best_valid": "none" if result.best_valid is None else repr(result.best_valid),
        "seed": str(args.seed),
        "mean": encode_mean(result.mean),
    }
    save_checkpoint(args.out, result.params, structure, metadata)
    with open(args.out + ".history.log", "w") as fh:
        for line in result.history:
            fh.write(line + "\n")
    flags = {
        k: v for k, v in vars(args).items() if k != "func" and not callable(v)
    }
    write_manifest(
        args.out + ".manifest.json", "train", flags, [args.data, args.valid]
    )
    print(f"checkpoint {args.out}")
    return 0


def cmd_eval(args) -> int:
    params, config, _, mean = _load_model(args.model)
    ds = _load_binary_dataset(args.data)
    _check_dims(config, ds, args.data)
    if args.k_override is not None:
        config = dataclasses.replace(config, k=args.k_override)
    spec = draw_orderings(config.D, args.orderings, args.seed)
    matrix = _log_prob_matrix(params, config, ds.samples, spec, mean, args.threads)
    report = stats_from_matrix(matrix)
    with open(args.report, "w") as fh:
        fh.write(render_report(report))
    print(f"per_ordering_mean_log_prob {report.per_ordering_mean():.6f}")
    if args.ensemble:
        print(f"ensemble_mean_log_prob {report.ensemble_mean():.6f}")
    return 0


def cmd_sample(args) -> int:
    params, config, _, mean = _load_model(args.model)
    if args.count < 0:
        raise UsageError("--count must be >= 0")
    if args.pgm is not None:
        if args.grid is None or args.img_w is None or args.img_h is None:
            raise UsageError("--pgm needs --grid, --img-w and --img-h")
        if args.img_w * args.img_h != config.D:
            raise UsageError(
                f"--img-w * --img-h must equal D={config.D}, got {args.img_w * args.img_h}"
            )
        rows, cols = args.grid
        if rows * cols < args.count:
            raise UsageError(f"grid {rows}x{cols} too small for {args.count} samples")
    if args.count == 0:
        save_text_matrix(args.out, np.empty((0, config.D)))
        return 0
    rng = Rng(args.seed)

    def one(i: int) -> np.ndarray:
        sub = rng.stream("sample", i)
        o = Ordering(perm=tuple(sub.permutation(config.D)))
        return ancestral_sample(params, config, o, mean, sub)

    if args.threads <= 1:
        vectors = np.array([one(i) for i in range(args.count)])
    else:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            vectors = np.array(list(pool.map(one, range(args.count))))
    save_text_matrix(args.out, vectors)
    if args.pgm is not None:
        rows, cols = args.grid
        write_pgm(args.pgm, _pgm_grid(vectors, rows, cols, args.img_w, args.img_h))
    print(f"samples {args.out}")
    return 0


def _read_obs_indices(path: str, D: int) -> list[int]:
    with open(path) as fh:
        fields = fh.read().split()
    try:
        indices = [int(f) for f in fields]
    except ValueError as exc:
        raise DataError(f"{path}: observed indices must be integers") from exc
    if len(set(indices)) != len(indices):
        raise DataError(f"{path}: observed indices must be distinct")
    for i in indices:
        if i < 0 or i >= D:
            raise DataError(f"{path}: index {i} outside 0..{D - 1}")
    return indices


def cmd_inpaint(args) -> int:
    params, config, _, mean = _load_model(args.model)
    ds = _load_binary_dataset(args.data)
    _check_dims(config, ds, args.data)
    obs = _read_obs_indices(args.obs_file, config.D)
    out_rows = np.empty_like(ds.samples)
    for i in range(len(ds)):
        rng = Rng(args.seed).stream("inpaint", i)
        out_rows[i] = inpaint(params, config, ds.samples[i], obs, mean, rng)
    save_text_matrix(args.out, out_rows)
    if args.trace:
        _write_trace(args.out + ".trace", params, config, ds.samples, obs, mean)
    print(f"inpainted {args.out}")
    return 0


def _write_trace(
    path: str,
    params: ModelParams,
    config: StructureConfig,
    samples: np.ndarray,
    obs: list[int],
    mean: np.ndarray,
) -> None:
    """All intermediate reconstructions v_0 .. v_k, one block per sample."""
    mask = np.ones(config.D)
    for i in obs:
        mask[i] = 0.0
    with open(path, "w") as fh:
        for si in range(samples.shape[0]):
            x = samples[si].copy()
            x[mask == 1.0] = 0.0
            traj = forward(params, config, x, mask, mean)
            fh.write(f"# sample {si}\n")
            for v in traj.v_states:
                fh.write(" ".join(f"{val:.6f}" for val in v) + "\n")


def cmd_stats(args) -> int:
    params, config, _, mean = _load_model(args.model)
    ds = _load_binary_dataset(args.data)
    _check_dims(config, ds, args.data)
    spec = draw_orderings(config.D, args.orderings, args.seed)
    matrix = _log_prob_matrix(params, config, ds.samples, spec, mean, args.threads)
    report = stats_from_matrix(matrix)
    with open(args.out, "w") as fh:
        fh.write(render_report(report))
    print(f"mean {report.mean:.6f}")
    sd_o = report.sd_over_orderings
    sd_x = report.sd_over_samples
    print(f"sd_over_orderings {'absent' if sd_o is None else f'{sd_o:.6f}'}")
    print(f"sd_over_samples {'absent' if sd_x is None else f'{sd_x:.6f}'}")
    return 0


def cmd_enumcheck(args) -> int:
    params, config, _, mean = _load_model(args.model)
    table = enumerate_distribution(params, config, identity_ordering(config.D), mean)
    residual = abs(float(table.sum()) - 1.0)
    print(f"normalization_residual {residual:.3e}")
    return 0 if residual < 1e-8 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nadek",
        description="Iterative-inference autoregressive density model over binary vectors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def grid(text: str) -> tuple[int, int]:
        try:
            r, c = text.lower().split("x")
            return int(r), int(c)
        except ValueError as exc:
            raise argparse.ArgumentTypeError("grid must look like 4x8") from exc

    p = sub.add_parser("train", help="fit a model and write a checkpoint")
    p.add_argument("--data", required=True, help="training matrix (.amat or .amat.gz)")
    p.add_argument("--valid", required=True, help="validation matrix")
    p.add_argument("--out", required=True, help="checkpoint path to write")
    p.add_argument("--hidden1", required=True, type=int)
    p.add_argument("--hidden2", type=int, help="adds a second layer per step")
    p.add_argument("--k", type=int, default=1, help="inference steps per conditional")
    p.add_argument("--activation", choices=["tanh", "sigmoid"], default="tanh")
    p.add_argument("--epochs", type=int, default=0, help="fine-tuning epochs")
    p.add_argument("--pretrain-epochs", type=int, default=0)
    p.add_argument("--mode", choices=["pretrain-then-finetune", "finetune-only"])
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--batch", type=int, default=100)
    p.add_argument("--patience", type=int, default=0, help="0 disables early stopping")
    p.add_argument("--rho", type=float, default=0.95)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="exact log-likelihood under sampled orderings")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--orderings", type=int, default=8)
    p.add_argument("--ensemble", action="store_true", help="also print the mixture value")
    p.add_argument("--k-override", type=int, help="inference steps at evaluation time")
    p.add_argument("--report", default="eval_report.txt")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sample", help="draw vectors from the model")
    p.add_argument("--model", required=True)
    p.add_argument("--count", required=True, type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--pgm", help="also write a PGM image grid to this path")
    p.add_argument("--grid", type=grid, help="tile layout RxC for --pgm")
    p.add_argument("--img-w", type=int, help="tile width for --pgm")
    p.add_argument("--img-h", type=int, help="tile height for --pgm")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("inpaint", help="fill missing components of each data row")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--obs-file", required=True, help="whitespace-separated observed indices")
    p.add_argument("--out", required=True)
    p.add_argument("--trace", action="store_true", help="write per-step reconstructions")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_inpaint)

    p = sub.add_parser("stats", help="log-prob spread over orderings and samples")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--orderings", type=int, default=8)
    p.add_argument("--out", default="stats_report.txt")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("enumcheck", help="exhaustive normalization residual (small D)")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_enumcheck)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (DataError, CheckpointError, ContractError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
