"""Point-set data model: float64 matrices with provenance tags.

A PointSet is an immutable n x d matrix where every row carries a source
tag saying which stage of a self-consuming loop produced it (real data,
or synthetic data from iteration k >= 1). Distances are always taken in a
feature space; the identity map makes that the raw coordinate space.

Two file formats round-trip point sets: a human-readable CSV and a small
binary container ("rawbin") that preserves floats bit-exactly.
"""

from __future__ import annotations

import math
import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError, EmptyDatasetError, FormatError

RAWBIN_MAGIC = b"CLPS"
RAWBIN_VERSION = 1

_TAG_RE = re.compile(r"^(real|syn[1-9][0-9]*)$")


@dataclass(frozen=True, order=True)
class SourceTag:
    """Provenance of a single point: iteration 0 is real data by convention."""

    iteration: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.iteration, int) or self.iteration < 0:
            raise FormatError(f"source iteration must be a non-negative integer, got {self.iteration!r}")

    @property
    def is_real(self) -> bool:
        return self.iteration == 0

    def label(self) -> str:
        return "real" if self.iteration == 0 else f"syn{self.iteration}"

    @classmethod
    def parse(cls, text: str) -> "SourceTag":
        token = text.strip().lower()
        if not _TAG_RE.match(token):
            raise FormatError(f"unrecognized source tag {text!r} (expected 'real' or 'synN')")
        return cls(0) if token == "real" else cls(int(token[3:]))


def source_label(code: int) -> str:
    return "real" if code == 0 else f"syn{int(code)}"


def source_proportions(codes: np.ndarray) -> dict[str, float]:
    """Fraction of points per origin class, keyed 'real', 'syn1', ... ascending."""
    codes = np.asarray(codes)
    if codes.size == 0:
        return {}
    values, counts = np.unique(codes, return_counts=True)
    total = codes.size
    return {source_label(int(v)): int(c) / total for v, c in zip(values, counts)}


class PointSet:
    """Immutable n x d float64 matrix plus per-row provenance codes.

    Codes are stored as integers: 0 = real, k >= 1 = synthetic from loop
    iteration k. Arrays handed in are copied and frozen.
    """

    __slots__ = ("_data", "_sources")

    def __init__(self, data, sources=None):
        arr = np.array(data, dtype=np.float64, order="C", copy=True)
        if arr.ndim != 2:
            raise DimensionError(f"point data must be 2-dimensional, got shape {arr.shape}")
        if arr.shape[1] < 1:
            raise DimensionError("point data must have at least one column")
        if not np.all(np.isfinite(arr)):
            raise ValueError("point data contains non-finite values")
        n = arr.shape[0]
        if sources is None:
            src = np.zeros(n, dtype=np.int64)
        else:
            src = np.array(sources, dtype=np.int64, copy=True)
            if src.shape != (n,):
                raise DimensionError(f"sources must have shape ({n},), got {src.shape}")
            if n and src.min() < 0:
                raise FormatError("source codes must be non-negative")
        arr.setflags(write=False)
        src.setflags(write=False)
        self._data = arr
        self._sources = src

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def sources(self) -> np.ndarray:
        return self._sources

    @property
    def size(self) -> int:
        return self._data.shape[0]

    @property
    def dim(self) -> int:
        return self._data.shape[1]

    def __len__(self) -> int:
        return self.size

    def __repr__(self) -> str:
        return f"PointSet(n={self.size}, d={self.dim})"

    def tags(self) -> list[SourceTag]:
        return [SourceTag(int(c)) for c in self._sources]

    def proportions(self) -> dict[str, float]:
        return source_proportions(self._sources)

    def with_sources(self, sources) -> "PointSet":
        """New PointSet with the same matrix and replaced tags.

        An integer tags every row with that iteration code.
        """
        if isinstance(sources, int):
            sources = np.full(self.size, sources, dtype=np.int64)
        return PointSet(self._data, sources)

    def rows(self, indices) -> "PointSet":
        idx = np.asarray(indices, dtype=np.int64)
        return PointSet(self._data[idx], self._sources[idx])

    @staticmethod
    def concat(sets: list["PointSet"]) -> "PointSet":
        if not sets:
            raise EmptyDatasetError("cannot concatenate zero point sets")
        dims = {ps.dim for ps in sets}
        if len(dims) != 1:
            raise DimensionError(f"cannot concatenate point sets of mixed dimension {sorted(dims)}")
        data = np.concatenate([ps.data for ps in sets], axis=0)
        src = np.concatenate([ps.sources for ps in sets], axis=0)
        return PointSet(data, src)


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Row-wise embedding applied before any distance is measured.

    Kinds:
      identity  -- raw coordinates.
      randproj  -- seeded Gaussian random projection to target_dim, scaled
                   by 1/sqrt(target_dim); the matrix is regenerated
                   deterministically from (seed, input dim).
      whiten    -- affine map (x - mean) @ transform.
    """

    kind: str = "identity"
    target_dim: int | None = None
    seed: int | None = None
    mean: np.ndarray | None = None
    transform: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("identity", "randproj", "whiten"):
            raise ConfigError(f"unknown feature map kind {self.kind!r}")
        if self.kind == "randproj":
            if self.target_dim is None or self.seed is None:
                raise ConfigError("randproj feature map requires target_dim and seed")
            if self.target_dim < 1:
                raise ConfigError("randproj target_dim must be >= 1")
        if self.kind == "whiten":
            if self.mean is None or self.transform is None:
                raise ConfigError("whiten feature map requires mean and transform")
            mean = np.array(self.mean, dtype=np.float64, copy=True).ravel()
            transform = np.array(self.transform, dtype=np.float64, copy=True)
            if transform.ndim != 2:
                raise DimensionError("whiten transform must be a matrix")
            if transform.shape[0] != mean.shape[0]:
                raise DimensionError(
                    f"whiten mean has length {mean.shape[0]} but transform has {transform.shape[0]} rows"
                )
            mean.setflags(write=False)
            transform.setflags(write=False)
            object.__setattr__(self, "mean", mean)
            object.__setattr__(self, "transform", transform)

    @classmethod
    def identity(cls) -> "FeatureMap":
        return cls()

    @classmethod
    def random_projection(cls, target_dim: int, seed: int) -> "FeatureMap":
        return cls(kind="randproj", target_dim=int(target_dim), seed=int(seed))

    @classmethod
    def affine_whitening(cls, mean, transform) -> "FeatureMap":
        return cls(kind="whiten", mean=mean, transform=transform)

    def output_dim(self, input_dim: int) -> int:
        if self.kind == "identity":
            return input_dim
        if self.kind == "randproj":
            return int(self.target_dim)
        return self.transform.shape[1]

    def apply(self, data: np.ndarray) -> np.ndarray:
        data = np.asarray(data, dtype=np.float64)
        if self.kind == "identity":
            return data
        if self.kind == "randproj":
            d = data.shape[1]
            rng = np.random.default_rng(self.seed)
            matrix = rng.standard_normal((d, self.target_dim)) / math.sqrt(self.target_dim)
            return data @ matrix
        if data.shape[1] != self.mean.shape[0]:
            raise DimensionError(
                f"whiten feature map expects dimension {self.mean.shape[0]}, got {data.shape[1]}"
            )
        return (data - self.mean) @ self.transform


@dataclass(frozen=True, eq=False)
class DistanceMetric:
    """Distance declaration: euclidean or squared euclidean, in feature space."""

    kind: str = "euclidean"
    feature_map: FeatureMap = FeatureMap()

    def __post_init__(self) -> None:
        if self.kind not in ("euclidean", "sqeuclidean"):
            raise ConfigError(f"unknown metric kind {self.kind!r}")

    def from_squared(self, sq: np.ndarray) -> np.ndarray:
        """Convert exact squared euclidean values into this metric's units."""
        return np.sqrt(sq) if self.kind == "euclidean" else sq

    def distance(self, x, y) -> float:
        a = self.feature_map.apply(np.atleast_2d(np.asarray(x, dtype=np.float64)))
        b = self.feature_map.apply(np.atleast_2d(np.asarray(y, dtype=np.float64)))
        if a.shape != b.shape:
            raise DimensionError(f"points of dimension {a.shape[1]} vs {b.shape[1]}")
        diff = a - b
        sq = float(np.einsum("ij,ij->", diff, diff))
        return math.sqrt(sq) if self.kind == "euclidean" else sq


EUCLIDEAN = DistanceMetric()
SQEUCLIDEAN = DistanceMetric(kind="sqeuclidean")


def apply_feature_map(ps: PointSet, fmap: FeatureMap) -> PointSet:
    """Map a whole point set into feature space, preserving count and tags."""
    return PointSet(fmap.apply(ps.data), ps.sources)


def _parse_float(token: str) -> float | None:
    try:
        return float(token)
    except ValueError:
        return None


def _load_csv(path: Path) -> PointSet:
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise EmptyDatasetError(f"{path}: empty file")
    first = [f.strip() for f in lines[0].split(",")]
    # A source column without a header still leaves the first field numeric,
    # so a non-numeric first field can only be a header.
    has_header = _parse_float(first[0]) is None
    if has_header:
        expected = len(first)
        has_source = first[-1].strip().lower() == "source"
        data_lines = lines[1:]
        if not data_lines:
            raise EmptyDatasetError(f"{path}: header but no data rows")
    else:
        expected = len(first)
        has_source = _parse_float(first[-1]) is None
        data_lines = lines

    n_cols = expected - (1 if has_source else 0)
    if n_cols < 1:
        raise FormatError(f"{path}: no numeric columns")

    values = np.empty((len(data_lines), n_cols), dtype=np.float64)
    codes = np.zeros(len(data_lines), dtype=np.int64)
    for i, ln in enumerate(data_lines):
        fields = [f.strip() for f in ln.split(",")]
        if len(fields) != expected:
            raise FormatError(f"{path}: row {i + 1} has {len(fields)} fields, expected {expected}")
        if has_source:
            codes[i] = SourceTag.parse(fields[-1]).iteration
            fields = fields[:-1]
        for j, tok in enumerate(fields):
            v = _parse_float(tok)
            if v is None:
                raise FormatError(f"{path}: row {i + 1} field {j + 1}: {tok!r} is not a number")
            values[i, j] = v
    return PointSet(values, codes)


def _save_csv(ps: PointSet, path: Path) -> None:
    cols = [f"x{j}" for j in range(ps.dim)] + ["source"]
    out = [",".join(cols)]
    for row, code in zip(ps.data, ps.sources):
        out.append(",".join([repr(float(v)) for v in row] + [source_label(int(code))]))
    path.write_text("\n".join(out) + "\n")


def _load_rawbin(path: Path) -> PointSet:
    raw = path.read_bytes()
    if len(raw) == 0:
        raise EmptyDatasetError(f"{path}: empty file")
    if len(raw) < 24 or raw[:4] != RAWBIN_MAGIC:
        raise FormatError(f"{path}: not a rawbin file (bad magic)")
    version, n, d = struct.unpack_from("<IQQ", raw, 4)
    if version != RAWBIN_VERSION:
        raise FormatError(f"{path}: unsupported rawbin version {version}")
    if n == 0:
        raise EmptyDatasetError(f"{path}: zero points")
    if d == 0:
        raise FormatError(f"{path}: zero dimension")
    need = 24 + n * d * 8 + n
    if len(raw) != need:
        raise FormatError(f"{path}: expected {need} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f8", count=n * d, offset=24).reshape(n, d)
    codes = np.frombuffer(raw, dtype=np.uint8, count=n, offset=24 + n * d * 8).astype(np.int64)
    return PointSet(data, codes)


def _save_rawbin(ps: PointSet, path: Path) -> None:
    head = RAWBIN_MAGIC + struct.pack("<IQQ", RAWBIN_VERSION, ps.size, ps.dim)
    body = np.ascontiguousarray(ps.data, dtype="<f8").tobytes()
    # Iteration codes above 255 saturate in this container.
    tail = np.minimum(ps.sources, 255).astype(np.uint8).tobytes()
    path.write_bytes(head + body + tail)


def load_pointset(path, fmt: str = "csv") -> PointSet:
    path = Path(path)
    if fmt == "csv":
        return _load_csv(path)
    if fmt == "rawbin":
        return _load_rawbin(path)
    raise ConfigError(f"unknown dataset format {fmt!r} (expected 'csv' or 'rawbin')")


def save_pointset(ps: PointSet, path, fmt: str = "csv") -> None:
    path = Path(path)
    if fmt == "csv":
        _save_csv(ps, path)
    elif fmt == "rawbin":
        _save_rawbin(ps, path)
    else:
        raise ConfigError(f"unknown dataset format {fmt!r} (expected 'csv' or 'rawbin')")
