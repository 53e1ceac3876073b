"""Long-tailed partial-label datasets: synthesis, corruption, and file I/O.

File layout (``.gbpll``)::

    GBPLL1
    n=<N>
    l=<L>
    d=<d>
    seed=<int or none>
    gamma=<float or none>
    psi=<float or none>
    <blank line>
    N*d little-endian float64 features (row major)
    N*ceil(L/8) bytes of candidate bits (little-endian bit order per row)
    N little-endian uint32 true labels
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"GBPLL1\n"
_HEADER_KEYS = ("n", "l", "d", "seed", "gamma", "psi")


@dataclass(frozen=True)
class LongTailSpec:
    class_count: int
    max_count: int
    imbalance_ratio: float
    flip_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.class_count < 2:
            raise ValueError(f"class_count must be >= 2, got {self.class_count}")
        if self.imbalance_ratio < 1:
            raise ValueError(f"imbalance ratio must be >= 1, got {self.imbalance_ratio}")
        if self.max_count < self.class_count:
            raise ValueError("max_count must be >= class_count")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError(f"flip_prob must lie in [0, 1], got {self.flip_prob}")


@dataclass(frozen=True)
class TrainView:
    """What training code is allowed to see: features and candidate sets."""

    features: np.ndarray
    candidates: np.ndarray

    @property
    def sample_count(self) -> int:
        return self.features.shape[0]

    @property
    def class_count(self) -> int:
        return self.candidates.shape[1]


@dataclass(frozen=True, eq=False)
class PllDataset:
    """Features, candidate masks and the held-out true labels.

    ``true_labels`` is evaluation-only; hand training code ``train_view()``.
    """

    features: np.ndarray
    candidates: np.ndarray
    true_labels: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "meta", {k: self.meta.get(k) for k in ("seed", "gamma", "psi")})
        n = self.features.shape[0]
        if self.features.ndim != 2:
            raise DataError("features must be a 2-D array")
        if self.candidates.shape[0] != n or self.true_labels.shape[0] != n:
            raise DataError(
                f"dimension mismatch: {n} feature rows, {self.candidates.shape[0]} "
                f"candidate rows, {self.true_labels.shape[0]} labels"
            )
        empty = np.flatnonzero(~self.candidates.any(axis=1))
        if empty.size:
            raise DataError(f"empty candidate set at row {int(empty[0])}")
        L = self.candidates.shape[1]
        if n and (self.true_labels.min() < 0 or self.true_labels.max() >= L):
            raise DataError("true label out of range")
        missing = np.flatnonzero(~self.candidates[np.arange(n), self.true_labels])
        if missing.size:
            raise DataError(f"true label not in candidate set at row {int(missing[0])}")

    @property
    def sample_count(self) -> int:
        return self.features.shape[0]

    @property
    def class_count(self) -> int:
        return self.candidates.shape[1]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def train_view(self) -> TrainView:
        return TrainView(self.features, self.candidates)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.true_labels, minlength=self.class_count)

    def __eq__(self, other):
        if not isinstance(other, PllDataset):
            return NotImplemented
        return (
            np.array_equal(self.features, other.features)
            and np.array_equal(self.candidates, other.candidates)
            and np.array_equal(self.true_labels, other.true_labels)
            and self.meta == other.meta
        )


def longtail_counts(spec: LongTailSpec) -> np.ndarray:
    """Geometric class sizes n_j = round(n_1 * gamma^(-(j-1)/(L-1))), floored at 1."""
    L = spec.class_count
    j = np.arange(L)
    counts = np.rint(spec.max_count * spec.imbalance_ratio ** (-j / (L - 1)))
    return np.maximum(counts, 1).astype(np.int64)


def corrupt_labels(true_labels, class_count, flip_prob, seed) -> np.ndarray:
    """Add each negative label to the candidate set independently with prob psi."""
    if not 0.0 <= flip_prob <= 1.0:
        raise ValueError(f"flip_prob must lie in [0, 1], got {flip_prob}")
    y = np.asarray(true_labels, dtype=np.int64)
    rng = np.random.default_rng(seed)
    mask = rng.random((y.shape[0], class_count)) < flip_prob
    mask[np.arange(y.shape[0]), y] = True
    return mask


def blob_centers(class_count, dim, separation, seed) -> np.ndarray:
    """Class centers with every pair at least ``separation`` apart."""
    if dim < 2:
        raise ValueError("dim must be >= 2")
    if separation <= 0:
        raise ValueError("separation must be positive")
    rng = np.random.default_rng([seed, 0xB10B])
    radius = separation * max(1.0, math.sqrt(class_count) / 2)
    centers = []
    tries = 0
    while len(centers) < class_count:
        c = rng.normal(size=dim)
        c *= radius / np.linalg.norm(c)
        if all(np.linalg.norm(c - o) >= separation for o in centers):
            centers.append(c)
            tries = 0
        else:
            tries += 1
            if tries > 200:
                radius *= 1.25
                tries = 0
    return np.array(centers)


def synth_blobs(class_counts, class_count, dim, separation, noise_scale, seed, center_seed=None):
    """Isotropic Gaussian blobs, one per class, sized exactly by ``class_counts``.

    ``center_seed`` (default ``seed``) fixes the centers so that a train and
    a test split can share them while drawing different samples.
    """
    counts = np.asarray(class_counts, dtype=np.int64)
    if counts.shape[0] != class_count:
        raise ValueError("need one count per class")
    if np.any(counts <= 0):
        raise ValueError("class counts must be positive")
    centers = blob_centers(class_count, dim, separation, seed if center_seed is None else center_seed)
    rng = np.random.default_rng([seed, 0x5A3])
    labels = np.repeat(np.arange(class_count), counts)
    features = centers[labels] + noise_scale * rng.normal(size=(labels.shape[0], dim))
    return features, labels


def make_longtail_pll(spec: LongTailSpec, dim=2, separation=4.0, noise_scale=1.0, center_seed=None):
    counts = longtail_counts(spec)
    x, y = synth_blobs(counts, spec.class_count, dim, separation, noise_scale, spec.seed, center_seed)
    s = corrupt_labels(y, spec.class_count, spec.flip_prob, [spec.seed, 0xF11B])
    meta = {"seed": spec.seed, "gamma": float(spec.imbalance_ratio), "psi": float(spec.flip_prob)}
    return PllDataset(x, s, y, meta)


def from_arrays(features, true_labels, class_count=None, flip_prob=0.0, seed=0):
    """Wrap an externally supplied feature table, corrupting labels with ``flip_prob``."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(true_labels, dtype=np.int64)
    L = int(class_count if class_count is not None else y.max() + 1)
    s = corrupt_labels(y, L, flip_prob, [seed, 0xF11B])
    return PllDataset(x, s, y, {"seed": seed, "gamma": None, "psi": float(flip_prob)})


def load_feature_table(path, label_column=-1, delimiter=","):
    """Read a numeric CSV (or ``.npy`` with labels in ``label_column``)."""
    path = Path(path)
    try:
        if path.suffix == ".npy":
            table = np.load(path)
        else:
            table = np.loadtxt(path, delimiter=delimiter, ndmin=2)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read feature table {path}: {exc}") from exc
    labels = table[:, label_column]
    if not np.all(labels == np.rint(labels)) or labels.min() < 0:
        raise DataError(f"{path}: label column must hold non-negative integers")
    features = np.delete(table, label_column % table.shape[1], axis=1)
    return features, labels.astype(np.int64)


def _fmt(v):
    return "none" if v is None else repr(v)


def save_dataset(ds: PllDataset, path) -> None:
    n, L, d = ds.sample_count, ds.class_count, ds.dim
    header = {"n": n, "l": L, "d": d}
    for key in ("seed", "gamma", "psi"):
        header[key] = ds.meta.get(key)
    text = "".join(f"{k}={_fmt(header[k])}\n" for k in _HEADER_KEYS)
    bits = np.packbits(ds.candidates.astype(np.uint8), axis=1, bitorder="little")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(text.encode("utf-8"))
        fh.write(b"\n")
        fh.write(np.ascontiguousarray(ds.features, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(bits).tobytes())
        fh.write(np.ascontiguousarray(ds.true_labels, dtype="<u4").tobytes())


def _parse_value(key, raw, path):
    if raw == "none":
        return None
    try:
        if key in ("n", "l", "d", "seed"):
            return int(raw)
        return float(raw)
    except ValueError:
        raise DataError(f"{path}: bad header value {key}={raw!r}") from None


def load_dataset(path) -> PllDataset:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc.strerror}") from exc
    if not blob.startswith(MAGIC):
        raise DataError(f"{path}: not a GBPLL1 dataset file")
    pos = len(MAGIC)
    header = {}
    while True:
        end = blob.find(b"\n", pos)
        if end < 0:
            raise DataError(f"{path}: truncated header")
        line = blob[pos:end].decode("utf-8", errors="replace")
        pos = end + 1
        if not line:
            break
        key, sep, raw = line.partition("=")
        if not sep:
            raise DataError(f"{path}: malformed header line {line!r}")
        header[key.strip()] = _parse_value(key.strip(), raw.strip(), path)
    for key in ("n", "l", "d"):
        if header.get(key) is None:
            raise DataError(f"{path}: header is missing {key}")
    n, L, d = header["n"], header["l"], header["d"]
    row_bytes = (L + 7) // 8
    need = n * d * 8 + n * row_bytes + n * 4
    body = blob[pos:]
    if len(body) != need:
        n_rows = len(body) // max(d * 8 + row_bytes + 4, 1)
        raise DataError(
            f"{path}: dimension mismatch, header says n={n} but body holds "
            f"{len(body)} bytes (~{n_rows} rows, expected {need} bytes)"
        )
    feats = np.frombuffer(body, dtype="<f8", count=n * d).reshape(n, d).astype(np.float64)
    off = n * d * 8
    bits = np.frombuffer(body, dtype=np.uint8, count=n * row_bytes, offset=off).reshape(n, row_bytes)
    cand = np.unpackbits(bits, axis=1, count=L, bitorder="little").astype(bool)
    off += n * row_bytes
    labels = np.frombuffer(body, dtype="<u4", count=n, offset=off).astype(np.int64)
    meta = {k: header.get(k) for k in ("seed", "gamma", "psi")}
    return PllDataset(feats, cand, labels, meta)
