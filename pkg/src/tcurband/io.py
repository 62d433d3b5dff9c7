"""Binary tensor/label containers, run configuration and CSV output.

On-disk layout (all little-endian)::

    T3DF  magic b"T3DF" | uint16 version=1 | uint32 n1, n2, n3 | float64[n1*n2*n3]
    L2DF  magic b"L2DF" | uint16 version=1 | uint32 n1, n2     | uint16[n1*n2]

Payloads are stored with mode 1 varying fastest (Fortran order), so a
MATLAB ``fwrite(fid, Y, 'double')`` after the header produces a valid file.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from tcurband.admm import PRESETS, AdmmParams

TENSOR_MAGIC = b"T3DF"
LABEL_MAGIC = b"L2DF"
FORMAT_VERSION = 1
_TENSOR_HEADER = struct.Struct("<4sH3I")
_LABEL_HEADER = struct.Struct("<4sH2I")
# refuse payloads we could never hold in memory
MAX_PAYLOAD_BYTES = 2**40


class FormatError(ValueError):
    """Base class for container decoding failures."""


class BadMagicError(FormatError):
    pass


class UnsupportedVersionError(FormatError):
    pass


class TruncatedPayloadError(FormatError):
    pass


class DimOverflowError(FormatError):
    pass


class TrailingDataError(FormatError):
    pass


class ConfigError(ValueError):
    """Malformed or invalid run configuration."""


def _read_container(path, header: struct.Struct, magic: bytes, dtype: str) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(header.size)
        if len(head) < 4 or head[:4] != magic:
            raise BadMagicError(f"{path}: expected magic {magic!r}, got {head[:4]!r}")
        if len(head) < header.size:
            raise TruncatedPayloadError(f"{path}: header is {len(head)} bytes, need {header.size}")
        _, version, *dims = header.unpack(head)
        if version != FORMAT_VERSION:
            raise UnsupportedVersionError(f"{path}: version {version}, expected {FORMAT_VERSION}")
        itemsize = np.dtype(dtype).itemsize
        count = math.prod(dims)
        if count * itemsize > MAX_PAYLOAD_BYTES:
            raise DimOverflowError(f"{path}: dims {tuple(dims)} give {count * itemsize} payload bytes")
        available = os.fstat(fh.fileno()).st_size - header.size
        if available < count * itemsize:
            raise TruncatedPayloadError(
                f"{path}: payload has {available // itemsize} values, dims {tuple(dims)} need {count}"
            )
        if available > count * itemsize:
            raise TrailingDataError(f"{path}: {available - count * itemsize} bytes after the payload")
        payload = fh.read(count * itemsize)
    return np.frombuffer(payload, dtype=dtype).reshape(dims, order="F")


def _write_container(path, header: struct.Struct, magic: bytes, arr: np.ndarray, dtype: str) -> None:
    for n in arr.shape:
        if n >= 2**32:
            raise DimOverflowError(f"dimension {n} does not fit in uint32")
    head = header.pack(magic, FORMAT_VERSION, *arr.shape)
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(np.asarray(arr, dtype=dtype).tobytes(order="F"))


def read_tensor(path) -> np.ndarray:
    """Load a T3DF file as a float64 ``(n1, n2, n3)`` array."""
    return _read_container(path, _TENSOR_HEADER, TENSOR_MAGIC, "<f8").astype(np.float64)


def write_tensor(path, t: np.ndarray) -> None:
    t = np.asarray(t)
    if t.ndim != 3:
        raise ValueError(f"expected a 3-way tensor, got shape {t.shape}")
    _write_container(path, _TENSOR_HEADER, TENSOR_MAGIC, t, "<f8")


def read_labels(path, spatial_dims: tuple[int, int] | None = None) -> np.ndarray:
    """Load an L2DF label map; optionally check it against ``(n1, n2)``."""
    labels = _read_container(path, _LABEL_HEADER, LABEL_MAGIC, "<u2").astype(np.int64)
    if spatial_dims is not None and labels.shape != tuple(spatial_dims):
        raise FormatError(f"{path}: label dims {labels.shape} do not match tensor dims {tuple(spatial_dims)}")
    return labels


def write_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError(f"expected a 2-D label map, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() > 0xFFFF):
        raise ValueError("class ids must fit in uint16")
    _write_container(path, _LABEL_HEADER, LABEL_MAGIC, labels, "<u2")


# ---------------------------------------------------------------------------
# run configuration

DEFAULT_SWEEP = tuple(range(3, 31, 3))

# config key -> AdmmParams field
_PARAM_KEYS = {
    "lambda1": "lambda1",
    "lambda2": "lambda2",
    "beta": "beta",
    "tau": "tau",
    "p": "p",
    "sr": "s_r",
    "sc": "s_c",
    "k": "k",
    "eps": "epsilon",
    "max_iter": "max_iter",
    "seed": "seed",
    "rank": "rank",
    # field-name spellings
    "s_r": "s_r",
    "s_c": "s_c",
    "epsilon": "epsilon",
}
_INT_FIELDS = {"p", "s_r", "s_c", "k", "max_iter", "seed", "rank"}
_OTHER_KEYS = {"preset", "tensor", "labels", "bands", "noise_sigma", "sweep", "repeats",
               "train_frac", "n_neighbors", "out"}


@dataclass
class RunConfig:
    params: AdmmParams = field(default_factory=AdmmParams)
    preset: str | None = None
    tensor: Path | None = None
    labels: Path | None = None
    bands: Path | None = None
    noise_sigma: float = 0.0
    sweep: tuple[int, ...] = DEFAULT_SWEEP
    repeats: int = 50
    train_frac: float = 0.9
    n_neighbors: int = 3
    out: Path = Path(".")

    def to_dict(self) -> dict:
        d = {k: v for k, v in dataclasses.asdict(self).items() if k != "params"}
        d = {k: (str(v) if isinstance(v, Path) else v) for k, v in d.items()}
        d["sweep"] = list(self.sweep)
        d["params"] = dataclasses.asdict(self.params)
        return d


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Split ``key = value`` lines into a dict. ``#`` starts a comment."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _PARAM_KEYS and key not in _OTHER_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def _convert(key: str, value):
    if not isinstance(value, str):
        return value
    try:
        if key in _PARAM_KEYS:
            name = _PARAM_KEYS[key]
            if name == "rank" and value.lower() in ("none", "full"):
                return None
            return int(value) if name in _INT_FIELDS else float(value)
        if key in ("repeats", "n_neighbors"):
            return int(value)
        if key in ("noise_sigma", "train_frac"):
            return float(value)
        if key == "sweep":
            return tuple(int(v) for v in value.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {value!r}") from exc
    if key in ("tensor", "labels", "bands", "out"):
        return Path(value)
    return value


def build_config(*layers: dict) -> RunConfig:
    """Merge raw key/value layers (later wins) into a validated config.

    A ``preset`` in any layer is applied before every explicit parameter,
    so ``preset = salinas-a`` plus ``tau = 0.05`` keeps the explicit tau.
    """
    merged: dict = {}
    for layer in layers:
        merged.update({k: v for k, v in layer.items() if v is not None})
    for key in merged:
        if key not in _PARAM_KEYS and key not in _OTHER_KEYS:
            raise ConfigError(f"unknown key {key!r}")
    values = {k: _convert(k, v) for k, v in merged.items()}

    param_values: dict = {}
    preset = values.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        param_values.update(PRESETS[preset])
    for key, name in _PARAM_KEYS.items():
        if key in values:
            param_values[name] = values[key]
    try:
        params = AdmmParams(**param_values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    cfg = RunConfig(params=params, **{k: v for k, v in values.items() if k in _OTHER_KEYS})
    if cfg.noise_sigma < 0:
        raise ConfigError(f"noise_sigma must be nonnegative, got {cfg.noise_sigma}")
    if not cfg.sweep or min(cfg.sweep) < 1:
        raise ConfigError(f"sweep entries must be positive, got {cfg.sweep}")
    if cfg.repeats < 1:
        raise ConfigError(f"repeats must be positive, got {cfg.repeats}")
    if not 0 < cfg.train_frac < 1:
        raise ConfigError(f"train_frac must be in (0, 1), got {cfg.train_frac}")
    if cfg.n_neighbors < 1:
        raise ConfigError(f"n_neighbors must be positive, got {cfg.n_neighbors}")
    return cfg


def load_config(path, overrides: dict | None = None) -> RunConfig:
    text = Path(path).read_text()
    return build_config(parse_config_text(text, str(path)), overrides or {})


# ---------------------------------------------------------------------------
# CSV and manifest

def fmt_float(x: float) -> str:
    """17 significant digits, enough to round-trip any float64."""
    return format(float(x), ".17g")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    return str(v)


def write_csv(path, header: Sequence[str] | None, rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path, header: bool = True) -> tuple[list[str] | None, list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if header:
        return (rows[0] if rows else []), rows[1:]
    return None, rows


def write_bands(path, band_idx: np.ndarray) -> None:
    """Zero-based indices in, one 1-based index per line out."""
    write_csv(path, None, ([int(b) + 1] for b in np.sort(band_idx)))


def read_bands(path) -> np.ndarray:
    """Inverse of :func:`write_bands`; returns zero-based indices."""
    _, rows = read_csv(path, header=False)
    try:
        idx = np.array([int(r[0]) for r in rows if r], dtype=np.intp)
    except ValueError as exc:
        raise FormatError(f"{path}: band indices must be integers") from exc
    if idx.size == 0 or idx.min() < 1:
        raise FormatError(f"{path}: expected 1-based band indices")
    return idx - 1


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, payload: dict) -> None:
    def default(o):
        if isinstance(o, Path):
            return str(o)
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(f"not serializable: {type(o)}")

    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=default) + "\n")
