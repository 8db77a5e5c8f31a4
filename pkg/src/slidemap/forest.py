"""From-scratch random forest: bagging over full-depth CART trees with
Gini splits, out-of-bag accuracy, vote probabilities and impurity-based
feature importance.

Determinism contract: every tree consumes a private RNG stream derived
only from (seed, tree index), so training with any worker count produces
bit-identical forests; prediction is a pure function of the model.

Trees are stored as flat arrays (feature, threshold, left, right, votes);
node 0 is the root, feature -1 marks a leaf and the left branch takes
values <= threshold.
"""

from __future__ import annotations

import json
import math
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .errors import CorruptFileError, FormatError, InputError, SchemaError, TrainingError
from .features import FeatureStack
from .raster import Raster
from .sampling import TrainingMatrix

_MAGIC = b"SLFORST1"


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 500
    mtry: int | None = None  # defaults to floor(sqrt(p)), at least 1
    min_node_size: int = 1
    max_depth: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise InputError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.mtry is not None and self.mtry < 1:
            raise InputError(f"mtry must be >= 1, got {self.mtry}")

    def resolve_mtry(self, p: int) -> int:
        m = self.mtry if self.mtry is not None else max(1, int(math.floor(math.sqrt(p))))
        if m > p:
            raise InputError(f"mtry {m} exceeds feature count {p}")
        return m


@dataclass
class Tree:
    feature: np.ndarray     # int32, -1 at leaves
    threshold: np.ndarray   # float64
    left: np.ndarray        # int32
    right: np.ndarray       # int32
    votes: np.ndarray       # (n_nodes, n_classes) int64, filled at leaves
    leaf_label: np.ndarray = field(init=False)  # int32 argmax of votes, ties to smaller

    def __post_init__(self):
        self.leaf_label = self.votes.argmax(axis=1).astype(np.int32)

    @property
    def n_nodes(self) -> int:
        return self.feature.size


@dataclass
class RandomForestModel:
    trees: list
    feature_names: tuple
    classes: np.ndarray          # original label values, ascending
    oob_accuracy: float
    importance: np.ndarray       # per-feature mean decrease in Gini impurity
    params: ForestParams
    _packed: tuple = field(default=None, repr=False, compare=False)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def packed(self) -> tuple:
        if self._packed is None:
            self._packed = _pack_trees(self.trees)
        return self._packed


@njit(cache=True)
def _grow_tree(X, y, n_classes, rows, rand, mtry, min_node_size, max_depth,
               feature, threshold, left, right, votes, importance):
    """Grow one tree in place over the bootstrap rows; returns node count.

    `rows` is the bootstrap index array and is partitioned in place;
    `rand` supplies the per-node feature-subsampling randomness.
    """
    n_total = rows.size
    p = X.shape[1]
    max_nodes = feature.size
    # DFS stack of (segment start, segment end, node id, depth).
    st_start = np.empty(max_nodes, np.int64)
    st_end = np.empty(max_nodes, np.int64)
    st_node = np.empty(max_nodes, np.int64)
    st_depth = np.empty(max_nodes, np.int64)
    sp = 0
    st_start[0] = 0
    st_end[0] = n_total
    st_node[0] = 0
    st_depth[0] = 0
    sp = 1
    node_count = 1
    rand_pos = 0
    pool = np.empty(p, np.int64)
    vals = np.empty(n_total, np.float64)
    tmp = np.empty(n_total, np.int64)
    counts = np.empty(n_classes, np.int64)
    left_counts = np.empty(n_classes, np.int64)

    while sp > 0:
        sp -= 1
        start = st_start[sp]
        end = st_end[sp]
        node = st_node[sp]
        depth = st_depth[sp]
        n_node = end - start

        for k in range(n_classes):
            counts[k] = 0
        for i in range(start, end):
            counts[y[rows[i]]] += 1
        top = 0
        for k in range(n_classes):
            if counts[k] > top:
                top = counts[k]

        is_leaf = (
            top == n_node
            or n_node <= min_node_size
            or (max_depth >= 0 and depth >= max_depth)
        )
        best_f = -1
        best_gini = np.inf
        best_thr = 0.0
        if not is_leaf:
            # Sample mtry distinct features (partial Fisher-Yates), then
            # visit them in ascending index order so impurity ties resolve
            # toward the lowest feature index.
            for k in range(p):
                pool[k] = k
            for k in range(mtry):
                j = k + int(rand[rand_pos] * (p - k))
                rand_pos += 1
                t = pool[k]
                pool[k] = pool[j]
                pool[j] = t
            for a in range(1, mtry):
                key = pool[a]
                b = a - 1
                while b >= 0 and pool[b] > key:
                    pool[b + 1] = pool[b]
                    b -= 1
                pool[b + 1] = key

            for ci in range(mtry):
                f = pool[ci]
                for i in range(n_node):
                    vals[i] = X[rows[start + i], f]
                order = np.argsort(vals[:n_node])
                for k in range(n_classes):
                    left_counts[k] = 0
                for i in range(n_node - 1):
                    c = y[rows[start + order[i]]]
                    left_counts[c] += 1
                    lo = vals[order[i]]
                    hi = vals[order[i + 1]]
                    if lo < hi:
                        nl = i + 1
                        nr = n_node - nl
                        gl = 1.0
                        gr = 1.0
                        for k in range(n_classes):
                            fl = left_counts[k] / nl
                            fr = (counts[k] - left_counts[k]) / nr
                            gl -= fl * fl
                            gr -= fr * fr
                        weighted = (nl * gl + nr * gr) / n_node
                        if weighted < best_gini:
                            best_gini = weighted
                            best_f = f
                            best_thr = 0.5 * (lo + hi)
            if best_f < 0:
                is_leaf = True

        if is_leaf:
            feature[node] = -1
            threshold[node] = 0.0
            left[node] = -1
            right[node] = -1
            for k in range(n_classes):
                votes[node, k] = counts[k]
            continue

        parent_gini = 1.0
        for k in range(n_classes):
            fk = counts[k] / n_node
            parent_gini -= fk * fk
        gain = parent_gini - best_gini
        if gain > 0:
            importance[best_f] += (n_node / n_total) * gain

        # Stable partition of the segment around the threshold.
        n_left = 0
        for i in range(start, end):
            if X[rows[i], best_f] <= best_thr:
                tmp[n_left] = rows[i]
                n_left += 1
        n_right = 0
        for i in range(start, end):
            if X[rows[i], best_f] > best_thr:
                tmp[n_left + n_right] = rows[i]
                n_right += 1
        for i in range(n_node):
            rows[start + i] = tmp[i]

        left_id = node_count
        right_id = node_count + 1
        node_count += 2
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = left_id
        right[node] = right_id
        mid = start + n_left
        st_start[sp] = mid
        st_end[sp] = end
        st_node[sp] = right_id
        st_depth[sp] = depth + 1
        sp += 1
        st_start[sp] = start
        st_end[sp] = mid
        st_node[sp] = left_id
        st_depth[sp] = depth + 1
        sp += 1

    return node_count


@njit(cache=True)
def _walk_trees(feat, thr, left, right, leaf, offsets, X, votes):
    """Accumulate one vote per tree per row into `votes` (rows x classes)."""
    n = X.shape[0]
    n_trees = offsets.size - 1
    for i in range(n):
        for t in range(n_trees):
            base = offsets[t]
            node = 0
            while feat[base + node] >= 0:
                if X[i, feat[base + node]] <= thr[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            votes[i, leaf[base + node]] += 1


def _pack_trees(trees):
    offsets = np.zeros(len(trees) + 1, np.int64)
    for i, t in enumerate(trees):
        offsets[i + 1] = offsets[i] + t.n_nodes
    feat = np.concatenate([t.feature for t in trees])
    thr = np.concatenate([t.threshold for t in trees])
    left = np.concatenate([t.left for t in trees])
    right = np.concatenate([t.right for t in trees])
    leaf = np.concatenate([t.leaf_label for t in trees])
    return feat, thr, left, right, leaf, offsets


def _vote_matrix(trees, X: np.ndarray, n_classes: int) -> np.ndarray:
    votes = np.zeros((X.shape[0], n_classes), np.int64)
    if X.shape[0]:
        _walk_trees(*_pack_trees(trees), X, votes)
    return votes


def _tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    # Counter-based stream keyed only by (seed, tree index).
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(tree_index,)))
    )


def _grow_from(X, y_codes, n_classes, bootstrap, rand, mtry, min_node_size, max_depth):
    """Grow one tree from explicit bootstrap indices and randomness."""
    max_nodes = 2 * bootstrap.size + 1
    feature = np.empty(max_nodes, np.int32)
    threshold = np.empty(max_nodes, np.float64)
    left = np.empty(max_nodes, np.int32)
    right = np.empty(max_nodes, np.int32)
    votes = np.zeros((max_nodes, n_classes), np.int64)
    importance = np.zeros(X.shape[1], np.float64)
    depth_cap = -1 if max_depth is None else max_depth
    count = _grow_tree(
        X, y_codes, n_classes, bootstrap.copy(), rand, mtry, min_node_size,
        depth_cap, feature, threshold, left, right, votes, importance,
    )
    tree = Tree(
        feature=feature[:count].copy(),
        threshold=threshold[:count].copy(),
        left=left[:count].copy(),
        right=right[:count].copy(),
        votes=votes[:count].copy(),
    )
    return tree, importance


def _build_tree(X, y_codes, n_classes, mtry, min_node_size, max_depth, seed, tree_index):
    n = X.shape[0]
    rng = _tree_rng(seed, tree_index)
    bootstrap = rng.integers(0, n, size=n, dtype=np.int64)
    rand = rng.random((2 * n + 1) * mtry)
    tree, importance = _grow_from(
        X, y_codes, n_classes, bootstrap, rand, mtry, min_node_size, max_depth
    )
    inbag = np.zeros(n, dtype=bool)
    inbag[np.unique(bootstrap)] = True
    return tree, importance, inbag


def _train_chunk(args):
    X, y_codes, n_classes, mtry, min_node_size, max_depth, seed, indices = args
    out = []
    for t in indices:
        out.append((t, _build_tree(X, y_codes, n_classes, mtry, min_node_size,
                                   max_depth, seed, t)))
    return out


def train_forest(data: TrainingMatrix, params: ForestParams = ForestParams(),
                 workers: int = 1) -> RandomForestModel:
    """Train a bagged forest; the result is independent of `workers`."""
    X = np.ascontiguousarray(data.features, dtype=np.float64)
    y = np.asarray(data.labels)
    n, p = X.shape
    if n < 2:
        raise TrainingError(f"need at least 2 rows, got {n}")
    classes = np.unique(y)
    if classes.size < 2:
        raise TrainingError("training data contains a single class")
    y_codes = np.searchsorted(classes, y).astype(np.int8)
    n_classes = int(classes.size)
    mtry = params.resolve_mtry(p)

    jobs = list(range(params.n_trees))
    results = {}
    if workers <= 1 or params.n_trees == 1:
        for t in jobs:
            results[t] = _build_tree(X, y_codes, n_classes, mtry, params.min_node_size,
                                     params.max_depth, params.seed, t)
    else:
        # Warm the JIT cache in the parent so forked workers inherit it.
        _build_tree(X[:2], y_codes[:2], n_classes, 1, params.min_node_size,
                    params.max_depth, params.seed, 0)
        chunks = [jobs[i::workers] for i in range(workers)]
        args = [
            (X, y_codes, n_classes, mtry, params.min_node_size, params.max_depth,
             params.seed, chunk)
            for chunk in chunks
            if chunk
        ]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_train_chunk, args):
                for t, payload in part:
                    results[t] = payload

    trees = []
    importance = np.zeros(p, np.float64)
    oob_votes = np.zeros((n, n_classes), np.int64)
    for t in jobs:  # fixed reduction order regardless of scheduling
        tree, imp, inbag = results[t]
        trees.append(tree)
        importance += imp
        oob = ~inbag
        if oob.any():
            votes = _vote_matrix([tree], X[oob], n_classes)
            oob_votes[oob] += votes
    importance = np.maximum(importance / params.n_trees, 0.0)

    voted = oob_votes.sum(axis=1) > 0
    if voted.any():
        pred = oob_votes[voted].argmax(axis=1)
        oob_accuracy = float((pred == y_codes[voted]).mean())
    else:
        oob_accuracy = float("nan")

    return RandomForestModel(
        trees=trees,
        feature_names=tuple(data.feature_names),
        classes=classes,
        oob_accuracy=oob_accuracy,
        importance=importance,
        params=params,
    )


def predict_matrix(model: RandomForestModel, X: np.ndarray, workers: int = 1) -> tuple:
    """Vote share per class for each row; returns (labels, vote_fractions)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise InputError(
            f"expected rows of length {model.n_features}, got shape {X.shape}"
        )
    if np.isnan(X).any():
        raise InputError("prediction rows must not contain missing values")
    n = X.shape[0]
    if workers <= 1 or n < 2 * workers:
        votes = np.zeros((n, model.classes.size), np.int64)
        if n:
            _walk_trees(*model.packed(), X, votes)
    else:
        votes = np.zeros((n, model.classes.size), np.int64)
        blocks = np.array_split(np.arange(n), workers)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_predict_block, [(model.trees, X[b], model.classes.size)
                                              for b in blocks])
            for b, part in zip(blocks, parts):
                votes[b] = part
    codes = votes.argmax(axis=1)
    labels = model.classes[codes]
    fractions = votes[np.arange(n), codes] / len(model.trees)
    return labels, fractions


def _predict_block(args):
    trees, X, n_classes = args
    return _vote_matrix(trees, X, n_classes)


def predict(model: RandomForestModel, row) -> tuple:
    """Majority-vote label and its vote fraction for a single feature row.

    Ensemble ties resolve toward the smaller class value, i.e. toward
    non-landslide for 0/1 labels.
    """
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1 or row.size != model.n_features:
        raise InputError(f"expected a row of length {model.n_features}, got {row.shape}")
    labels, fractions = predict_matrix(model, row[None, :])
    return labels[0], float(fractions[0])


def classify_stack(model: RandomForestModel, stack: FeatureStack,
                   workers: int = 1) -> Raster:
    """Per-pixel label raster (1 landslide, 0 non-landslide, NaN nodata)."""
    if tuple(stack.layer_names) != tuple(model.feature_names):
        raise SchemaError(
            f"stack layers {stack.layer_names} do not match model features "
            f"{model.feature_names}"
        )
    matrix = stack.matrix()
    complete = ~np.isnan(matrix).any(axis=1)
    out = np.full(matrix.shape[0], np.nan, dtype=np.float32)
    if complete.any():
        labels, _ = predict_matrix(model, matrix[complete], workers=workers)
        out[complete] = labels.astype(np.float32)
    return Raster(stack.header, out.reshape(stack.header.shape))


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def save_model(model: RandomForestModel, path) -> None:
    """Self-describing binary: JSON header plus per-tree node arrays."""
    header = {
        "n_trees": len(model.trees),
        "n_features": model.n_features,
        "n_classes": int(model.classes.size),
        "feature_names": list(model.feature_names),
        "classes": [int(c) for c in model.classes],
        "oob_accuracy": model.oob_accuracy,
        "importance": [float(v) for v in model.importance],
        "params": {
            "n_trees": model.params.n_trees,
            "mtry": model.params.mtry,
            "min_node_size": model.params.min_node_size,
            "max_depth": model.params.max_depth,
            "seed": model.params.seed,
        },
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with Path(path).open("wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for tree in model.trees:
            fh.write(struct.pack("<I", tree.n_nodes))
            fh.write(tree.feature.astype("<i4").tobytes())
            fh.write(tree.threshold.astype("<f8").tobytes())
            fh.write(tree.left.astype("<i4").tobytes())
            fh.write(tree.right.astype("<i4").tobytes())
            fh.write(tree.votes.astype("<i8").tobytes())


def _validate_tree(tree: Tree, p: int) -> None:
    n = tree.n_nodes
    split = tree.feature >= 0
    if (tree.feature[split] >= p).any():
        raise CorruptFileError("split feature index out of range")
    if not np.isfinite(tree.threshold[split]).all():
        raise CorruptFileError("non-finite split threshold")
    kids = np.concatenate([tree.left[split], tree.right[split]])
    if kids.size and ((kids < 1) | (kids >= n)).any():
        raise CorruptFileError("child offset out of range")
    if kids.size != np.unique(kids).size:
        raise CorruptFileError("node referenced by two parents")
    # Every node except the root must be someone's child.
    if kids.size != n - 1:
        raise CorruptFileError("unreachable nodes in tree")
    if (tree.votes[~split].sum(axis=1) <= 0).any():
        raise CorruptFileError("leaf without votes")


def load_model(path) -> RandomForestModel:
    raw = Path(path).read_bytes()
    if raw[: len(_MAGIC)] != _MAGIC:
        raise FormatError(f"{path} is not a forest model file")
    pos = len(_MAGIC)
    (hlen,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    try:
        header = json.loads(raw[pos : pos + hlen].decode())
        pos += hlen
        n_trees = header["n_trees"]
        p = header["n_features"]
        k = header["n_classes"]
        params = ForestParams(**header["params"])
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"bad model header: {exc}") from exc
    trees = []
    for _ in range(n_trees):
        if pos + 4 > len(raw):
            raise CorruptFileError("model file truncated")
        (n_nodes,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        need = n_nodes * (4 + 8 + 4 + 4 + 8 * k)
        if pos + need > len(raw):
            raise CorruptFileError("model file truncated")

        def take(dtype, count):
            nonlocal pos
            arr = np.frombuffer(raw, dtype=dtype, count=count, offset=pos)
            pos += arr.nbytes
            return arr

        tree = Tree(
            feature=take("<i4", n_nodes).astype(np.int32),
            threshold=take("<f8", n_nodes).astype(np.float64),
            left=take("<i4", n_nodes).astype(np.int32),
            right=take("<i4", n_nodes).astype(np.int32),
            votes=take("<i8", n_nodes * k).reshape(n_nodes, k).astype(np.int64),
        )
        _validate_tree(tree, p)
        trees.append(tree)
    if pos != len(raw):
        raise CorruptFileError("trailing bytes after last tree")
    return RandomForestModel(
        trees=trees,
        feature_names=tuple(header["feature_names"]),
        classes=np.asarray(header["classes"], dtype=np.int64),
        oob_accuracy=header["oob_accuracy"],
        importance=np.asarray(header["importance"], dtype=np.float64),
        params=params,
    )
