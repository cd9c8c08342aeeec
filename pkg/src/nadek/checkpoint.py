"""Bit-exact model persistence.

Layout: one ASCII header line `NADEK1 n=<n> k=<k> D=<D> h1=<..> [h2=<..>]
act=<tanh|sigmoid>`, one ASCII metadata line of key=value pairs, then the
parameter tensors as raw row-major little-endian 64-bit floats in fixed
order (W, c, [W2, c2,] V, b).  Loading a checkpoint and saving it again
reproduces the file byte for byte.
"""

from __future__ import annotations

import numpy as np

from .model import ModelParams, StructureConfig, expected_shapes

__all__ = [
    "CheckpointError",
    "CheckpointMagicError",
    "CheckpointShapeError",
    "CheckpointTruncatedError",
    "decode_mean",
    "encode_mean",
    "load_checkpoint",
    "save_checkpoint",
]

MAGIC = "NADEK1"


class CheckpointError(ValueError):
    """Base for unreadable checkpoint files."""


class CheckpointMagicError(CheckpointError):
    """The file does not start with the format's magic token."""


class CheckpointShapeError(CheckpointError):
    """Header fields are malformed or disagree with the payload size."""


class CheckpointTruncatedError(CheckpointError):
    """The payload ends before all declared tensors."""


def _header_line(config: StructureConfig) -> str:
    parts = [MAGIC, f"n={config.n}", f"k={config.k}", f"D={config.D}", f"h1={config.hidden1}"]
    if config.n == 3:
        parts.append(f"h2={config.hidden2}")
    parts.append(f"act={config.activation}")
    return " ".join(parts)


def encode_mean(mean: np.ndarray) -> str:
    """Comma-joined repr floats; repr round-trips real64 exactly."""
    return ",".join(repr(float(v)) for v in np.asarray(mean))


def decode_mean(text: str) -> np.ndarray:
    return np.array([float(f) for f in text.split(",")])


def save_checkpoint(
    path: str,
    params: ModelParams,
    config: StructureConfig,
    metadata: dict[str, str] | None = None,
) -> None:
    """Write header, metadata and tensors; identical inputs give identical bytes.

    Metadata values must be free of whitespace and newlines; keys keep
    their given order.
    """
    params.check_shapes(config)
    metadata = metadata or {}
    for key, value in metadata.items():
        if any(ch.isspace() for ch in key + value) or "=" in key:
            raise CheckpointShapeError(f"metadata pair {key!r}={value!r} not encodable")
    meta_line = " ".join(f"{k}={v}" for k, v in metadata.items())
    with open(path, "wb") as fh:
        fh.write((_header_line(config) + "\n").encode("ascii"))
        fh.write((meta_line + "\n").encode("ascii"))
        for tensor in params.tensors().values():
            fh.write(np.ascontiguousarray(tensor, dtype="<f8").tobytes())


def _parse_header(line: bytes, path: str) -> StructureConfig:
    try:
        text = line.decode("ascii")
    except UnicodeDecodeError as exc:
        raise CheckpointMagicError(f"{path}: header is not ASCII") from exc
    tokens = text.split()
    if not tokens or tokens[0] != MAGIC:
        raise CheckpointMagicError(f"{path}: missing {MAGIC} magic token")
    fields: dict[str, str] = {}
    for token in tokens[1:]:
        if "=" not in token:
            raise CheckpointShapeError(f"{path}: malformed header field {token!r}")
        key, _, value = token.partition("=")
        fields[key] = value
    try:
        n = int(fields.pop("n"))
        k = int(fields.pop("k"))
        D = int(fields.pop("D"))
        h1 = int(fields.pop("h1"))
        h2 = int(fields.pop("h2")) if "h2" in fields else None
        act = fields.pop("act")
    except (KeyError, ValueError) as exc:
        raise CheckpointShapeError(f"{path}: incomplete or non-numeric header") from exc
    if fields:
        raise CheckpointShapeError(f"{path}: unknown header fields {sorted(fields)}")
    try:
        return StructureConfig(D=D, hidden1=h1, k=k, n=n, hidden2=h2, activation=act)
    except ValueError as exc:
        raise CheckpointShapeError(f"{path}: inconsistent header ({exc})") from exc


def load_checkpoint(path: str) -> tuple[ModelParams, StructureConfig, dict[str, str]]:
    """Inverse of save_checkpoint, with distinct errors per failure kind."""
    with open(path, "rb") as fh:
        blob = fh.read()
    header, sep, rest = blob.partition(b"\n")
    if not sep:
        raise CheckpointTruncatedError(f"{path}: no header line")
    config = _parse_header(header, path)
    meta_line, sep, payload = rest.partition(b"\n")
    if not sep:
        raise CheckpointTruncatedError(f"{path}: no metadata line")
    try:
        meta_text = meta_line.decode("ascii")
    except UnicodeDecodeError as exc:
        raise CheckpointShapeError(f"{path}: metadata is not ASCII") from exc
    metadata: dict[str, str] = {}
    for token in meta_text.split():
        key, eq, value = token.partition("=")
        if not eq:
            raise CheckpointShapeError(f"{path}: malformed metadata field {token!r}")
        metadata[key] = value

    shapes = expected_shapes(config)
    expected_bytes = sum(int(np.prod(s)) for s in shapes.values()) * 8
    if len(payload) < expected_bytes:
        raise CheckpointTruncatedError(
            f"{path}: payload holds {len(payload)} bytes, tensors need {expected_bytes}"
        )
    if len(payload) > expected_bytes:
        raise CheckpointShapeError(
            f"{path}: {len(payload) - expected_bytes} trailing bytes after tensors"
        )
    tensors: dict[str, np.ndarray] = {}
    offset = 0
    for name, shape in shapes.items():
        size = int(np.prod(shape))
        flat = np.frombuffer(payload, dtype="<f8", count=size, offset=offset)
        tensor = flat.astype(np.float64).reshape(shape)
        if not np.all(np.isfinite(tensor)):
            raise CheckpointShapeError(f"{path}: tensor {name} has non-finite entries")
        tensors[name] = tensor
        offset += size * 8
    return ModelParams(**tensors), config, metadata
