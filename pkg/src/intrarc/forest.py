"""Random-forest regression from complexity features + QP to frame bits.

The forest is grown from scratch so that training is bit-reproducible:
every tree gets its own PRNG derived from (seed, tree_index), bootstrap
resamples have |samples| draws with replacement, and CART splits
maximize variance reduction with thresholds at midpoints between
consecutive distinct sorted values. Split-score ties break toward the
lowest feature index, then the lowest threshold. Leaves store the mean
target of their samples.

Models serialize to a compact little-endian binary: magic "IRCF", a
format version, the hyperparameters, flattened per-tree node arrays,
and a trailing CRC-32.
"""

from __future__ import annotations

import csv
import struct
import zlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from intrarc.features import FrameFeatures

FEATURE_NAMES = ("e_y", "l_y", "e_u", "l_u", "e_v", "l_v", "q")
N_FEATURES = len(FEATURE_NAMES)
QP_MAX = 63

TRAINING_CSV_HEADER = ["frame_index", "e_y", "l_y", "e_u", "l_u", "e_v", "l_v", "q", "bits"]

_MAGIC = b"IRCF"
_VERSION = 1


class ModelFormatError(Exception):
    """Unreadable or corrupt serialized model."""


@dataclass(frozen=True)
class ForestHyperparams:
    n_estimators: int = 100
    max_depth: int = 12
    min_samples_leaf: int = 1
    min_samples_split: int = 2
    seed: int = 0
    max_features: int = N_FEATURES

    def __post_init__(self):
        if self.n_estimators < 1 or self.max_depth < 1:
            raise ValueError("n_estimators and max_depth must be >= 1")
        if self.min_samples_split < 2 or self.min_samples_leaf < 1:
            raise ValueError("min_samples_split >= 2 and min_samples_leaf >= 1 required")
        if not 1 <= self.max_features <= N_FEATURES:
            raise ValueError(f"max_features must be in [1, {N_FEATURES}]")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True)
class TrainingSample:
    features: FrameFeatures
    q: int
    bits: float

    def __post_init__(self):
        if not 0 <= self.q <= QP_MAX:
            raise ValueError(f"q={self.q} outside [0, {QP_MAX}]")
        if not np.isfinite(self.bits) or self.bits <= 0:
            raise ValueError(f"bits={self.bits} must be finite and positive")


@dataclass
class Tree:
    """Flattened binary tree; feature < 0 marks a leaf."""

    feature: np.ndarray    # int32, split feature index or -1
    threshold: np.ndarray  # float64, go left iff x[feature] <= threshold
    left: np.ndarray       # int32 child slots
    right: np.ndarray
    value: np.ndarray      # float64 node mean (the prediction at leaves)
    gain: np.ndarray       # float64 SSE reduction of the split, 0 at leaves

    @property
    def n_nodes(self) -> int:
        return self.feature.size


@dataclass
class ForestModel:
    trees: list[Tree]
    hyperparams: ForestHyperparams
    n_samples: int
    feature_min: np.ndarray
    feature_max: np.ndarray
    feature_names: tuple[str, ...] = FEATURE_NAMES


class _TreeBuilder:
    """Accumulates nodes of one tree during growth."""

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []
        self.gain: list[float] = []

    def new_node(self, value: float) -> int:
        slot = len(self.feature)
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        self.gain.append(0.0)
        return slot

    def finish(self) -> Tree:
        return Tree(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            value=np.asarray(self.value, dtype=np.float64),
            gain=np.asarray(self.gain, dtype=np.float64),
        )


def _best_split(Xn: np.ndarray, yn: np.ndarray, min_leaf: int):
    """Best (feature column, threshold, gain, sorted order, position) or None.

    Gain is the SSE reduction of the node's samples; candidate cut
    points sit between consecutive distinct sorted values. First-match
    argmax realizes the lowest-threshold / lowest-column tie-break.
    """
    n = yn.size
    order = np.argsort(Xn, axis=0, kind="stable")
    xs = np.take_along_axis(Xn, order, axis=0)
    ys = (yn - yn.mean())[order]
    left_sum = np.cumsum(ys, axis=0)[:-1]
    k = np.arange(1, n, dtype=np.float64)
    gains = left_sum**2 * (n / (k * (n - k)))[:, None]
    valid = xs[1:] != xs[:-1]
    if min_leaf > 1:
        valid[: min_leaf - 1] = False
        valid[n - min_leaf:] = False
    gains[~valid] = -np.inf
    pos = np.argmax(gains, axis=0)
    col_gain = gains[pos, np.arange(gains.shape[1])]
    col = int(np.argmax(col_gain))
    if not np.isfinite(col_gain[col]):
        return None
    p = int(pos[col])
    threshold = (xs[p, col] + xs[p + 1, col]) / 2.0
    return col, threshold, float(col_gain[col]), order[:, col], p


def _grow_tree(X: np.ndarray, y: np.ndarray, hp: ForestHyperparams,
               rng: np.random.Generator) -> Tree:
    nodes = _TreeBuilder()
    root = nodes.new_node(float(y.mean()))
    stack = [(np.arange(y.size), 0, root)]
    subset = hp.max_features < N_FEATURES
    while stack:
        idx, depth, slot = stack.pop()
        yn = y[idx]
        nodes.value[slot] = float(yn.mean())
        if depth >= hp.max_depth or idx.size < hp.min_samples_split:
            continue
        if yn.max() == yn.min():
            continue
        if subset:
            cand = np.sort(rng.choice(N_FEATURES, size=hp.max_features, replace=False))
        else:
            cand = np.arange(N_FEATURES)
        found = _best_split(X[np.ix_(idx, cand)], yn, hp.min_samples_leaf)
        if found is None:
            continue
        col, threshold, gain, order, p = found
        nodes.feature[slot] = int(cand[col])
        nodes.threshold[slot] = threshold
        nodes.gain[slot] = gain
        left_slot = nodes.new_node(0.0)
        right_slot = nodes.new_node(0.0)
        nodes.left[slot] = left_slot
        nodes.right[slot] = right_slot
        # LIFO: push right first so the left subtree is grown first.
        stack.append((idx[order[p + 1:]], depth + 1, right_slot))
        stack.append((idx[order[: p + 1]], depth + 1, left_slot))
    return nodes.finish()


def _tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(tree_index,)))


def samples_to_arrays(samples: Sequence[TrainingSample]) -> tuple[np.ndarray, np.ndarray]:
    X = np.empty((len(samples), N_FEATURES))
    y = np.empty(len(samples))
    for i, s in enumerate(samples):
        X[i, :6] = s.features.as_array()
        X[i, 6] = float(s.q)
        y[i] = float(s.bits)
    return X, y


def train_arrays(X: np.ndarray, y: np.ndarray,
                 hp: ForestHyperparams = ForestHyperparams(),
                 threads: int = 1) -> ForestModel:
    """Train on a (n, 7) feature matrix and a positive bits vector."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != N_FEATURES or y.shape != (X.shape[0],):
        raise ValueError(f"expected X of shape (n, {N_FEATURES}) and matching y")
    if X.shape[0] < hp.min_samples_split:
        raise ValueError(
            f"need at least min_samples_split={hp.min_samples_split} samples, got {X.shape[0]}"
        )
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("training data contains non-finite values")
    if (y <= 0).any():
        raise ValueError("bits targets must be positive")

    n = X.shape[0]

    def build(t: int) -> Tree:
        rng = _tree_rng(hp.seed, t)
        boot = rng.integers(0, n, size=n)
        return _grow_tree(X[boot], y[boot], hp, rng)

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            trees = list(pool.map(build, range(hp.n_estimators)))
    else:
        trees = [build(t) for t in range(hp.n_estimators)]
    return ForestModel(
        trees=trees,
        hyperparams=hp,
        n_samples=n,
        feature_min=X.min(axis=0),
        feature_max=X.max(axis=0),
    )


def train(samples: Sequence[TrainingSample],
          hp: ForestHyperparams = ForestHyperparams(),
          threads: int = 1) -> ForestModel:
    X, y = samples_to_arrays(samples)
    return train_arrays(X, y, hp, threads=threads)


def predict_batch(model: ForestModel, X: np.ndarray) -> np.ndarray:
    """Mean over trees of the leaf values reached by each row of X."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    rows = np.arange(X.shape[0])
    total = np.zeros(X.shape[0])
    for tree in model.trees:
        idx = np.zeros(X.shape[0], dtype=np.int32)
        for _ in range(model.hyperparams.max_depth):
            feat = tree.feature[idx]
            active = feat >= 0
            if not active.any():
                break
            go_left = X[rows, np.where(active, feat, 0)] <= tree.threshold[idx]
            nxt = np.where(go_left, tree.left[idx], tree.right[idx])
            idx = np.where(active, nxt, idx)
        total += tree.value[idx]
    return total / len(model.trees)


def predict(model: ForestModel, features: FrameFeatures, q: int) -> float:
    """Predicted frame bits for one feature vector at QP q."""
    if not 0 <= q <= QP_MAX:
        raise ValueError(f"q={q} outside [0, {QP_MAX}]")
    x = np.empty(N_FEATURES)
    x[:6] = features.as_array()
    x[6] = float(q)
    return float(predict_batch(model, x[None, :])[0])


@dataclass(frozen=True)
class ImportanceResult:
    weights: np.ndarray
    has_splits: bool


def importance(model: ForestModel) -> ImportanceResult:
    """Per-feature variance-reduction share, averaged over trees.

    Weights sum to 1 when any split exists; a forest of bare leaves
    returns all zeros with has_splits=False.
    """
    totals = np.zeros(N_FEATURES)
    for tree in model.trees:
        split = tree.feature >= 0
        if split.any():
            totals += np.bincount(tree.feature[split], weights=tree.gain[split],
                                  minlength=N_FEATURES)
    totals /= len(model.trees)
    s = totals.sum()
    if s <= 0.0:
        return ImportanceResult(weights=np.zeros(N_FEATURES), has_splits=False)
    return ImportanceResult(weights=totals / s, has_splits=True)


def _pack_header(model: ForestModel) -> bytes:
    hp = model.hyperparams
    return struct.pack(
        "<4sIIIIIqIQ",
        _MAGIC, _VERSION,
        hp.n_estimators, hp.max_depth, hp.min_samples_leaf, hp.min_samples_split,
        hp.seed, hp.max_features, model.n_samples,
    )


def save(model: ForestModel, path: str) -> int:
    """Serialize a model; returns the file size in bytes."""
    chunks = [_pack_header(model)]
    chunks.append(model.feature_min.astype("<f8").tobytes())
    chunks.append(model.feature_max.astype("<f8").tobytes())
    for tree in model.trees:
        chunks.append(struct.pack("<I", tree.n_nodes))
        chunks.append(tree.feature.astype("<i4").tobytes())
        chunks.append(tree.threshold.astype("<f8").tobytes())
        chunks.append(tree.left.astype("<i4").tobytes())
        chunks.append(tree.right.astype("<i4").tobytes())
        chunks.append(tree.value.astype("<f8").tobytes())
        chunks.append(tree.gain.astype("<f8").tobytes())
    body = b"".join(chunks)
    blob = body + struct.pack("<I", zlib.crc32(body))
    with open(path, "wb") as fh:
        fh.write(blob)
    return len(blob)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, size: int) -> bytes:
        if self.pos + size > len(self.blob):
            raise ModelFormatError("truncated model file")
        out = self.blob[self.pos:self.pos + size]
        self.pos += size
        return out

    def array(self, dtype: str, count: int) -> np.ndarray:
        dt = np.dtype(dtype)
        return np.frombuffer(self.take(dt.itemsize * count), dtype=dt).copy()


def load(path: str) -> ForestModel:
    """Read a model back; verifies magic, version and checksum."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8 or blob[:4] != _MAGIC:
        raise ModelFormatError(f"{path}: not a model file (bad magic)")
    if len(blob) < struct.calcsize("<4sIIIIIqIQ") + 4:
        raise ModelFormatError(f"{path}: truncated model file")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise ModelFormatError(f"{path}: checksum mismatch, file is corrupt")
    rd = _Reader(body)
    magic, version, n_est, max_depth, msl, mss, seed, max_feat, n_samples = struct.unpack(
        "<4sIIIIIqIQ", rd.take(struct.calcsize("<4sIIIIIqIQ"))
    )
    if version != _VERSION:
        raise ModelFormatError(f"{path}: format version {version}, expected {_VERSION}")
    hp = ForestHyperparams(
        n_estimators=n_est, max_depth=max_depth, min_samples_leaf=msl,
        min_samples_split=mss, seed=seed, max_features=max_feat,
    )
    fmin = rd.array("<f8", N_FEATURES)
    fmax = rd.array("<f8", N_FEATURES)
    trees = []
    for _ in range(n_est):
        (n_nodes,) = struct.unpack("<I", rd.take(4))
        trees.append(Tree(
            feature=rd.array("<i4", n_nodes),
            threshold=rd.array("<f8", n_nodes),
            left=rd.array("<i4", n_nodes),
            right=rd.array("<i4", n_nodes),
            value=rd.array("<f8", n_nodes),
            gain=rd.array("<f8", n_nodes),
        ))
    return ForestModel(trees=trees, hyperparams=hp, n_samples=n_samples,
                       feature_min=fmin, feature_max=fmax)


def write_training_csv(path: str, samples: Iterable[TrainingSample]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAINING_CSV_HEADER)
        for s in samples:
            f = s.features
            writer.writerow(
                [f.frame_index] + [f"{v:.9g}" for v in f.as_array()]
                + [s.q, f"{s.bits:.9g}"]
            )


def read_training_csv(path: str) -> tuple[np.ndarray, np.ndarray]:
    """Load a training table into (X, y); header columns are mandatory."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty training file")
        missing = [c for c in TRAINING_CSV_HEADER if c not in header]
        if missing:
            raise ValueError(f"{path}: missing column {missing[0]!r}")
        cols = [header.index(c) for c in TRAINING_CSV_HEADER[1:]]
        rows = [[float(rec[c]) for c in cols] for rec in reader]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    data = np.asarray(rows)
    return data[:, :7], data[:, 7]
