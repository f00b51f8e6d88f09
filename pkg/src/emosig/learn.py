"""From-scratch classifiers over feature vectors, plus metrics.

Three model kinds: KNN with k fixed at 3, a CART-style decision tree, and a
random forest of such trees. All of them standardize features with training
statistics first. Training is deterministic given (kind, instances, seed);
every random draw flows from the seed through documented generators (PCG64
for bootstrap resamples, splitmix64 inside the tree kernel for per-split
feature subsets).

Tie rules, fixed here and relied on by tests:
  KNN vote tie (three distinct labels): the nearest neighbour's label wins;
  equal distances resolve to the lowest training-instance index.
  Tree split ties: lowest feature index, then lowest threshold.
  Leaf and forest vote ties: label order NEUTRAL, HPHA, HNHA.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from . import _trees
from ._rng import derive_seed
from .datamodel import ActivityLabel, EMOTION_ORDER, EmotionLabel

_KNN_K = 3
_KNN_EXACT_LIMIT = 256
_KNN_CANDIDATES = 32


class ModelKind(Enum):
    KNN3 = "knn3"
    DT = "dt"
    RF = "rf"


@dataclass(frozen=True)
class Instance:
    features: np.ndarray
    label: EmotionLabel
    meta: tuple = ()


@dataclass(frozen=True, eq=False)
class Standardizer:
    """Per-feature location and scale learned from a training set."""

    mean: np.ndarray
    std: np.ndarray

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        safe = np.where(self.std > 0, self.std, 1.0)
        out = (x - self.mean) / safe
        if np.any(self.std == 0):
            out[:, self.std == 0] = 0.0
        return out


def fit_standardizer(x: np.ndarray) -> Standardizer:
    """Population mean and standard deviation per feature column."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("standardizer needs a non-empty 2-D feature matrix")
    return Standardizer(mean=x.mean(axis=0), std=x.std(axis=0))


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    bootstrap: bool = True
    max_features: str = "sqrt"  # "sqrt" or "all"
    min_samples_split: int = 2


@dataclass(frozen=True, eq=False)
class Tree:
    """Flat arrays of one grown tree; feature == -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])


@dataclass(eq=False)
class TrainedModel:
    kind: ModelKind
    standardizer: Standardizer
    n_features: int
    seed: int
    forest: ForestParams | None = None
    trees: list[Tree] = field(default_factory=list)
    knn_x: np.ndarray | None = None  # standardized training features
    knn_y: np.ndarray | None = None  # int8 label codes


def _mtry(params: ForestParams, d: int) -> int:
    if params.max_features == "all":
        return d
    if params.max_features == "sqrt":
        return max(1, math.ceil(math.sqrt(d)))
    raise ValueError(f"unknown max_features {params.max_features!r}")


def _build_one_tree(
    x: np.ndarray, y: np.ndarray, params: ForestParams, tree_seed: int, mtry: int
) -> Tree:
    n = x.shape[0]
    if params.bootstrap:
        rng = np.random.Generator(np.random.PCG64(tree_seed))
        sample_idx = rng.integers(0, n, size=n, dtype=np.int64)
    else:
        sample_idx = np.arange(n, dtype=np.int64)
    feature, threshold, left, right, counts, _ = _trees.build_tree(
        x,
        y,
        sample_idx,
        np.uint64(tree_seed & 0xFFFFFFFFFFFFFFFF),
        mtry,
        params.min_samples_split,
        len(EMOTION_ORDER),
    )
    return Tree(feature, threshold, left, right, counts)


def train_arrays(
    kind: ModelKind,
    x: np.ndarray,
    y: np.ndarray,
    seed: int,
    forest: ForestParams | None = None,
) -> TrainedModel:
    """Train on a feature matrix and int8 label codes (EMOTION_ORDER indices)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int8)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("training set is empty")
    if x.shape[0] != y.shape[0]:
        raise ValueError("feature matrix and labels disagree on instance count")
    if len(np.unique(y)) < 2:
        raise ValueError("single-class training set")

    std = fit_standardizer(x)
    xs = np.ascontiguousarray(std.transform(x))
    model = TrainedModel(
        kind=kind, standardizer=std, n_features=x.shape[1], seed=int(seed)
    )
    if kind is ModelKind.KNN3:
        model.knn_x = xs
        model.knn_y = y.copy()
        return model

    params = forest or ForestParams()
    if kind is ModelKind.DT:
        params = ForestParams(
            n_trees=1,
            bootstrap=False,
            max_features="all",
            min_samples_split=params.min_samples_split,
        )
    model.forest = params
    d = x.shape[1]
    mtry = _mtry(params, d)
    model.trees = [
        _build_one_tree(xs, y, params, derive_seed(seed, "tree", t), mtry)
        for t in range(params.n_trees)
    ]
    return model


def train(
    kind: ModelKind,
    instances: list[Instance],
    seed: int,
    forest: ForestParams | None = None,
) -> TrainedModel:
    """Train from Instance records; see train_arrays for the matrix path."""
    if not instances:
        raise ValueError("training set is empty")
    x = np.stack([np.asarray(inst.features, dtype=np.float64) for inst in instances])
    code = {label: i for i, label in enumerate(EMOTION_ORDER)}
    y = np.asarray([code[inst.label] for inst in instances], dtype=np.int8)
    return train_arrays(kind, x, y, seed, forest)


def _knn_top3(train_x: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Indices of the 3 nearest training rows per query row.

    Distances compare exactly: squared Euclidean computed as an explicit
    difference reduction, ties resolved to the lowest training index. For
    large training sets a fast approximate distance preselects candidates
    and the exact computation runs on those only.
    """
    n = train_x.shape[0]
    n_q = q.shape[0]
    if n <= _KNN_EXACT_LIMIT:
        cand = np.broadcast_to(np.arange(n), (n_q, n))
    else:
        t2 = np.einsum("ij,ij->i", train_x, train_x)
        q2 = np.einsum("ij,ij->i", q, q)
        approx = t2[None, :] - 2.0 * (q @ train_x.T) + q2[:, None]
        k = min(_KNN_CANDIDATES, n)
        cand = np.argpartition(approx, k - 1, axis=1)[:, :k]

    top = np.empty((n_q, _KNN_K), dtype=np.int64)
    for i in range(n_q):
        rows = cand[i]
        diff = train_x[rows] - q[i]
        d2 = np.einsum("ij,ij->i", diff, diff)
        order = np.lexsort((rows, d2))
        top[i] = rows[order[:_KNN_K]]
    return top


def predict_batch(model: TrainedModel, x: np.ndarray) -> np.ndarray:
    """Predicted label codes for a raw (unstandardized) feature matrix."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != model.n_features:
        raise ValueError(
            f"feature dimension {x.shape[1]} does not match training "
            f"dimension {model.n_features}"
        )
    xs = np.ascontiguousarray(model.standardizer.transform(x))

    if model.kind is ModelKind.KNN3:
        assert model.knn_x is not None and model.knn_y is not None
        if model.knn_x.shape[0] < _KNN_K:
            raise ValueError("KNN needs at least 3 training instances")
        top = _knn_top3(model.knn_x, xs)
        labels = model.knn_y[top]  # (n_q, 3)
        n_classes = len(EMOTION_ORDER)
        tally = np.zeros((x.shape[0], n_classes), dtype=np.int64)
        for c in range(n_classes):
            tally[:, c] = np.sum(labels == c, axis=1)
        best = tally.max(axis=1)
        pred = np.argmax(tally, axis=1).astype(np.int8)
        three_way = best == 1  # all neighbours distinct: nearest wins
        pred[three_way] = labels[three_way, 0]
        return pred

    feats = np.concatenate([t.feature for t in model.trees])
    thrs = np.concatenate([t.threshold for t in model.trees])
    lefts = np.concatenate([t.left for t in model.trees])
    rights = np.concatenate([t.right for t in model.trees])
    counts = np.concatenate([t.counts for t in model.trees])
    offsets = np.zeros(len(model.trees) + 1, dtype=np.int64)
    np.cumsum([t.n_nodes for t in model.trees], out=offsets[1:])
    votes = _trees.forest_votes(
        xs, feats, thrs, lefts, rights, counts, offsets, len(EMOTION_ORDER)
    )
    return np.argmax(votes, axis=1).astype(np.int8)


def predict(model: TrainedModel, instance: Instance) -> EmotionLabel:
    code = predict_batch(model, np.asarray(instance.features)[None, :])[0]
    return EMOTION_ORDER[int(code)]


# ---------------------------------------------------------------------------
# Metrics


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f_measure: float


@dataclass(frozen=True, eq=False)
class EvaluationMetrics:
    confusion: np.ndarray  # rows true, cols predicted, EMOTION_ORDER
    accuracy: float
    per_class: dict[EmotionLabel, ClassMetrics]
    macro_f: float

    @property
    def n(self) -> int:
        return int(self.confusion.sum())


def evaluate_codes(true_codes: np.ndarray, pred_codes: np.ndarray) -> EvaluationMetrics:
    true_codes = np.asarray(true_codes, dtype=np.int64)
    pred_codes = np.asarray(pred_codes, dtype=np.int64)
    if true_codes.size == 0:
        raise ValueError("no predictions to evaluate")
    k = len(EMOTION_ORDER)
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (true_codes, pred_codes), 1)
    accuracy = float(np.trace(confusion) / confusion.sum())
    per_class: dict[EmotionLabel, ClassMetrics] = {}
    f_values: list[float] = []
    for c, label in enumerate(EMOTION_ORDER):
        tp = float(confusion[c, c])
        col = float(confusion[:, c].sum())
        row = float(confusion[c, :].sum())
        precision = tp / col if col > 0 else 0.0
        recall = tp / row if row > 0 else 0.0
        f = (
            2.0 * precision * recall / (precision + recall)
            if precision + recall > 0
            else 0.0
        )
        per_class[label] = ClassMetrics(precision, recall, f)
        if row > 0 or col > 0:
            f_values.append(f)
    macro_f = float(np.mean(f_values)) if f_values else 0.0
    return EvaluationMetrics(
        confusion=confusion, accuracy=accuracy, per_class=per_class, macro_f=macro_f
    )


def evaluate(pairs: list[tuple[EmotionLabel, EmotionLabel]]) -> EvaluationMetrics:
    """Metrics from (true, predicted) label pairs."""
    if not pairs:
        raise ValueError("no predictions to evaluate")
    code = {label: i for i, label in enumerate(EMOTION_ORDER)}
    true_codes = np.asarray([code[t] for t, _ in pairs])
    pred_codes = np.asarray([code[p] for _, p in pairs])
    return evaluate_codes(true_codes, pred_codes)


# ---------------------------------------------------------------------------
# Serialization: versioned flat text, floats as exact shortest repr


_FORMAT_HEADER = "emosig-model 1"


def model_to_text(model: TrainedModel) -> str:
    lines = [_FORMAT_HEADER]
    lines.append(f"kind {model.kind.value}")
    lines.append(f"n_features {model.n_features}")
    lines.append(f"seed {model.seed}")
    lines.append("classes " + " ".join(label.name for label in EMOTION_ORDER))
    lines.append(
        "standardizer_mean " + " ".join(repr(float(v)) for v in model.standardizer.mean)
    )
    lines.append(
        "standardizer_std " + " ".join(repr(float(v)) for v in model.standardizer.std)
    )
    if model.kind is ModelKind.KNN3:
        assert model.knn_x is not None and model.knn_y is not None
        lines.append(f"knn {model.knn_x.shape[0]}")
        for code, row in zip(model.knn_y, model.knn_x):
            lines.append(str(int(code)) + " " + " ".join(repr(float(v)) for v in row))
    else:
        p = model.forest or ForestParams()
        lines.append(
            f"params n_trees={p.n_trees} bootstrap={int(p.bootstrap)} "
            f"max_features={p.max_features} min_samples_split={p.min_samples_split}"
        )
        lines.append(f"trees {len(model.trees)}")
        for t_idx, tree in enumerate(model.trees):
            lines.append(f"tree {t_idx} nodes {tree.n_nodes}")
            for i in range(tree.n_nodes):
                lines.append(
                    f"{int(tree.feature[i])} {repr(float(tree.threshold[i]))} "
                    f"{int(tree.left[i])} {int(tree.right[i])} "
                    + " ".join(str(int(c)) for c in tree.counts[i])
                )
    return "\n".join(lines) + "\n"


def save_model(model: TrainedModel, path: str | Path) -> None:
    Path(path).write_text(model_to_text(model), encoding="utf-8")


def _parse_floats(tokens: list[str]) -> np.ndarray:
    return np.asarray([float(t) for t in tokens], dtype=np.float64)


def load_model(path: str | Path) -> TrainedModel:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != _FORMAT_HEADER:
        raise ValueError(f"{path}: not a recognized model file")
    pos = 1

    def take(prefix: str) -> str:
        nonlocal pos
        if pos >= len(lines) or not lines[pos].startswith(prefix + " "):
            raise ValueError(f"{path}: expected {prefix!r} at line {pos + 1}")
        value = lines[pos][len(prefix) + 1 :]
        pos += 1
        return value

    kind = ModelKind(take("kind"))
    n_features = int(take("n_features"))
    seed = int(take("seed"))
    class_names = take("classes").split()
    if class_names != [label.name for label in EMOTION_ORDER]:
        raise ValueError(f"{path}: unexpected class order {class_names}")
    mean = _parse_floats(take("standardizer_mean").split())
    std_vals = _parse_floats(take("standardizer_std").split())
    model = TrainedModel(
        kind=kind,
        standardizer=Standardizer(mean=mean, std=std_vals),
        n_features=n_features,
        seed=seed,
    )
    if kind is ModelKind.KNN3:
        n = int(take("knn"))
        codes = np.empty(n, dtype=np.int8)
        x = np.empty((n, n_features), dtype=np.float64)
        for i in range(n):
            tokens = lines[pos].split()
            pos += 1
            codes[i] = int(tokens[0])
            x[i] = _parse_floats(tokens[1:])
        model.knn_x = x
        model.knn_y = codes
        return model

    params_tokens = dict(tok.split("=") for tok in take("params").split())
    model.forest = ForestParams(
        n_trees=int(params_tokens["n_trees"]),
        bootstrap=bool(int(params_tokens["bootstrap"])),
        max_features=params_tokens["max_features"],
        min_samples_split=int(params_tokens["min_samples_split"]),
    )
    n_trees = int(take("trees"))
    trees: list[Tree] = []
    for t_idx in range(n_trees):
        header = take("tree").split()
        if int(header[0]) != t_idx or header[1] != "nodes":
            raise ValueError(f"{path}: malformed tree header at line {pos}")
        n_nodes = int(header[2])
        feature = np.empty(n_nodes, dtype=np.int64)
        threshold = np.empty(n_nodes, dtype=np.float64)
        left = np.empty(n_nodes, dtype=np.int64)
        right = np.empty(n_nodes, dtype=np.int64)
        counts = np.empty((n_nodes, len(EMOTION_ORDER)), dtype=np.int64)
        for i in range(n_nodes):
            tokens = lines[pos].split()
            pos += 1
            feature[i] = int(tokens[0])
            threshold[i] = float(tokens[1])
            left[i] = int(tokens[2])
            right[i] = int(tokens[3])
            counts[i] = [int(t) for t in tokens[4:]]
        trees.append(Tree(feature, threshold, left, right, counts))
    model.trees = trees
    return model
