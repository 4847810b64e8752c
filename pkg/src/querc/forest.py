"""Query labeling over embeddings with extremely randomized trees.

Each tree trains on the full sample (no bootstrap); at every node a handful
of random coordinates and random thresholds are scored by Gini impurity
decrease and the best kept. Randomness comes entirely from per-tree seeded
generators, so a fixed seed reproduces the forest bit for bit.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .container import ModelArtifact, load_model, save_model
from .errors import ConfigError, QuercError
from .workload import WorkloadLog

KIND = "forest_classifier"


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 16
    min_leaf: int = 2
    features_per_split: int | None = None  # default: round(sqrt(d))
    thresholds_per_feature: int = 4
    seed: int = 0

    def __post_init__(self):
        if min(self.n_trees, self.max_depth, self.min_leaf, self.thresholds_per_feature) < 1:
            raise ConfigError("forest hyperparameters must be positive")
        if self.features_per_split is not None and self.features_per_split < 1:
            raise ConfigError("features_per_split must be positive")

    def to_json_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "min_leaf": self.min_leaf,
            "features_per_split": self.features_per_split,
            "thresholds_per_feature": self.thresholds_per_feature,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, doc) -> "ForestConfig":
        return cls(**doc)


@dataclass
class Tree:
    """Array-encoded tree: feature < 0 marks a leaf; counts[n] holds the
    class counts of the node's training samples."""

    feature: np.ndarray  # (n_nodes,) int64
    threshold: np.ndarray  # (n_nodes,) f64
    left: np.ndarray  # (n_nodes,) int64
    right: np.ndarray  # (n_nodes,) int64
    counts: np.ndarray  # (n_nodes, n_classes) f64


def _gini_gain(parent_counts, left_counts, right_counts):
    """Impurity decrease for a batch of candidate splits.

    left_counts/right_counts: (n_cand, C). Invalid candidates must be masked
    by the caller; empty children produce a gain of -inf here.
    """
    n = parent_counts.sum()
    nl = left_counts.sum(axis=1)
    nr = right_counts.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        gini_parent = 1.0 - ((parent_counts / n) ** 2).sum()
        gl = 1.0 - (left_counts**2).sum(axis=1) / np.where(nl == 0, 1.0, nl) ** 2
        gr = 1.0 - (right_counts**2).sum(axis=1) / np.where(nr == 0, 1.0, nr) ** 2
    gain = gini_parent - (nl / n) * gl - (nr / n) * gr
    gain[(nl == 0) | (nr == 0)] = -np.inf
    return gain, nl, nr


def _build_tree(x, y_idx, onehot, n_classes, config: ForestConfig, rng) -> Tree:
    n, d = x.shape
    n_feats = config.features_per_split or max(1, int(round(np.sqrt(d))))
    n_feats = min(n_feats, d)
    n_thr = config.thresholds_per_feature

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    counts: list[np.ndarray] = []

    def new_node(idx) -> int:
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(onehot[idx].sum(axis=0))
        return node

    root_idx = np.arange(n)
    stack = [(new_node(root_idx), root_idx, 0)]
    while stack:
        node, idx, depth = stack.pop()
        node_counts = counts[node]
        pure = (node_counts > 0).sum() <= 1
        if pure or depth >= config.max_depth or idx.size < 2 * config.min_leaf:
            continue
        feats = rng.permutation(d)[:n_feats]
        cols = x[np.ix_(idx, feats)]
        lo = cols.min(axis=0)
        hi = cols.max(axis=0)
        # thresholds are drawn for every candidate feature (constant ones
        # produce no valid split and fall out below), keeping the random
        # stream independent of the data
        u = rng.random((n_feats, n_thr))
        thrs = lo[:, None] + u * (hi - lo)[:, None]
        is_left = cols[:, :, None] <= thrs[None, :, :]  # (n, F, T)
        flat = is_left.reshape(idx.size, n_feats * n_thr)
        left_counts = flat.T.astype(np.float64) @ onehot[idx]
        right_counts = node_counts[None, :] - left_counts
        gain, nl, nr = _gini_gain(node_counts, left_counts, right_counts)
        gain[(nl < config.min_leaf) | (nr < config.min_leaf)] = -np.inf
        best = int(np.argmax(gain))  # ties: first candidate in draw order
        if not np.isfinite(gain[best]):
            continue
        f_local, t_local = divmod(best, n_thr)
        feature[node] = int(feats[f_local])
        threshold[node] = float(thrs[f_local, t_local])
        mask = flat[:, best]
        left_idx = idx[mask]
        right_idx = idx[~mask]
        left[node] = new_node(left_idx)
        right[node] = new_node(right_idx)
        stack.append((right[node], right_idx, depth + 1))
        stack.append((left[node], left_idx, depth + 1))

    return Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        counts=np.vstack(counts),
    )


class ForestModel:
    kind = KIND

    def __init__(self, trees: list[Tree], classes: tuple[str, ...], config: ForestConfig, dim: int,
                 metadata: dict | None = None):
        self.trees = trees
        self.classes = tuple(classes)
        self.config = config
        self.dim = int(dim)
        self.metadata = metadata or {}

    def _check_dim(self, x):
        if x.shape[-1] != self.dim:
            raise ConfigError(f"expected {self.dim}-dimensional vectors, got {x.shape[-1]}")

    def predict_proba(self, vectors) -> np.ndarray:
        """Mean of per-tree leaf class distributions; rows sum to 1."""
        x = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
        self._check_dim(x)
        n = x.shape[0]
        acc = np.zeros((n, len(self.classes)))
        for tree in self.trees:
            node = np.zeros(n, dtype=np.int64)
            active = tree.feature[node] >= 0
            while active.any():
                rows = np.nonzero(active)[0]
                cur = node[rows]
                go_left = x[rows, tree.feature[cur]] <= tree.threshold[cur]
                node[rows] = np.where(go_left, tree.left[cur], tree.right[cur])
                active = tree.feature[node] >= 0
            leaf_counts = tree.counts[node]
            acc += leaf_counts / leaf_counts.sum(axis=1, keepdims=True)
        return acc / len(self.trees)

    def predict(self, vector) -> tuple[str, float]:
        """(label, confidence); argmax ties resolve to the earliest class."""
        proba = self.predict_proba(vector)[0]
        best = int(np.argmax(proba))
        return self.classes[best], float(proba[best])

    def predict_batch(self, vectors) -> tuple[list[str], np.ndarray]:
        proba = self.predict_proba(vectors)
        best = np.argmax(proba, axis=1)
        return [self.classes[b] for b in best], proba[np.arange(len(best)), best]

    def to_artifact(self) -> ModelArtifact:
        art = ModelArtifact(kind=KIND)
        art.put_json("classes", list(self.classes))
        offsets = np.cumsum([0] + [t.feature.shape[0] for t in self.trees])
        art.put_matrix("tree_offsets", offsets.astype(np.float64))
        art.put_matrix("node_feature", np.concatenate([t.feature for t in self.trees]).astype(np.float64))
        art.put_matrix("node_threshold", np.concatenate([t.threshold for t in self.trees]))
        art.put_matrix("node_left", np.concatenate([t.left for t in self.trees]).astype(np.float64))
        art.put_matrix("node_right", np.concatenate([t.right for t in self.trees]).astype(np.float64))
        art.put_matrix("node_counts", np.vstack([t.counts for t in self.trees]))
        art.put_json(
            "metadata",
            {"config": self.config.to_json_dict(), "dim": self.dim, **self.metadata},
        )
        return art

    @classmethod
    def from_artifact(cls, art: ModelArtifact) -> "ForestModel":
        meta = art.json("metadata")
        offsets = art.matrix("tree_offsets").astype(np.int64)
        feature = art.matrix("node_feature").astype(np.int64)
        threshold = art.matrix("node_threshold")
        left = art.matrix("node_left").astype(np.int64)
        right = art.matrix("node_right").astype(np.int64)
        node_counts = art.matrix("node_counts")
        trees = []
        for a, b in zip(offsets[:-1], offsets[1:]):
            trees.append(
                Tree(
                    feature=feature[a:b],
                    threshold=threshold[a:b],
                    left=left[a:b],
                    right=right[a:b],
                    counts=node_counts[a:b],
                )
            )
        extra = {k: v for k, v in meta.items() if k not in ("config", "dim")}
        return cls(
            trees=trees,
            classes=tuple(art.json("classes")),
            config=ForestConfig.from_json_dict(meta["config"]),
            dim=meta["dim"],
            metadata=extra,
        )

    def save(self, path) -> None:
        save_model(self.to_artifact(), path)

    @classmethod
    def load(cls, path) -> "ForestModel":
        return cls.from_artifact(load_model(path, expect_kind=KIND))


def train_forest(vectors, labels, config: ForestConfig = ForestConfig()) -> ForestModel:
    """A single distinct label yields a valid constant model."""
    x = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    labels = [str(v) for v in labels]
    if x.shape[0] != len(labels):
        raise ConfigError("vectors and labels must align")
    if x.shape[0] < 2:
        raise ConfigError("need at least 2 training examples")
    if not np.isfinite(x).all():
        raise ConfigError("training vectors contain non-finite values")
    classes = tuple(sorted(set(labels)))
    class_index = {c: i for i, c in enumerate(classes)}
    y_idx = np.asarray([class_index[v] for v in labels], dtype=np.int64)
    onehot = np.zeros((x.shape[0], len(classes)))
    onehot[np.arange(x.shape[0]), y_idx] = 1.0

    trees = []
    for child in np.random.SeedSequence(config.seed).spawn(config.n_trees):
        rng = np.random.default_rng(child)
        trees.append(_build_tree(x, y_idx, onehot, len(classes), config, rng))
    return ForestModel(trees=trees, classes=classes, config=config, dim=x.shape[1])


@dataclass(frozen=True)
class AuditResult:
    match: bool
    predicted: str
    confidence: float


def audit_flag(model: ForestModel, vector, claimed: str) -> AuditResult:
    """Mismatch iff the model's prediction differs from the claimed label.

    A claimed label the model has never seen always mismatches. Pure
    function of (model, vector, claimed); confidence lets callers threshold.
    """
    predicted, confidence = model.predict(vector)
    return AuditResult(match=predicted == claimed, predicted=predicted, confidence=confidence)


@dataclass(frozen=True)
class CrossValidation:
    accuracy: float
    fold_accuracies: tuple[float, ...]
    predictions: tuple[str, ...]  # aligned with the input order
    fold_of: tuple[int, ...]

    def per_label_accuracy(self, labels) -> dict[str, tuple[int, float]]:
        """label -> (count, accuracy over examples whose true label it is)."""
        out: dict[str, tuple[int, float]] = {}
        labels = [str(v) for v in labels]
        for lab in sorted(set(labels)):
            idx = [i for i, v in enumerate(labels) if v == lab]
            hits = sum(1 for i in idx if self.predictions[i] == lab)
            out[lab] = (len(idx), hits / len(idx))
        return out

    def subset_accuracy(self, indices, labels) -> float:
        """Accuracy restricted to the given example indices; ``labels`` is
        the full label list aligned with predictions."""
        indices = list(indices)
        labels = [str(v) for v in labels]
        hits = sum(1 for i in indices if self.predictions[i] == labels[i])
        return hits / len(indices)


def cross_validate(
    vectors,
    labels,
    folds: int,
    config: ForestConfig = ForestConfig(),
) -> CrossValidation:
    """Stratified k-fold accuracy; deterministic per seed and independent of
    input order (fold assignment keys on content, not position)."""
    x = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    labels = [str(v) for v in labels]
    n = x.shape[0]
    if folds < 2:
        raise ConfigError("folds must be >= 2")
    if n < folds:
        raise ConfigError(f"need at least {folds} examples for {folds} folds")

    seed_bytes = str(config.seed).encode("utf-8")
    keys = [
        hashlib.sha256(seed_bytes + b"|" + labels[i].encode("utf-8") + b"|" + x[i].tobytes()).hexdigest()
        for i in range(n)
    ]
    order = sorted(range(n), key=lambda i: (labels[i], keys[i]))
    fold_of = np.empty(n, dtype=np.int64)
    for counter, i in enumerate(order):
        fold_of[i] = counter % folds

    predictions: list[str | None] = [None] * n
    fold_accuracies = []
    for f in range(folds):
        test = np.nonzero(fold_of == f)[0]
        train = np.nonzero(fold_of != f)[0]
        model = train_forest(x[train], [labels[i] for i in train], config)
        preds, _ = model.predict_batch(x[test])
        hits = 0
        for i, pred in zip(test, preds):
            predictions[i] = pred
            hits += pred == labels[i]
        fold_accuracies.append(hits / test.size)
    accuracy = float(np.mean(fold_accuracies))
    return CrossValidation(
        accuracy=accuracy,
        fold_accuracies=tuple(fold_accuracies),
        predictions=tuple(predictions),  # type: ignore[arg-type]
        fold_of=tuple(int(v) for v in fold_of),
    )


def grouped_breakdown(cv: CrossValidation, labels, groups) -> list[dict]:
    """Per-group rows (count, #classes, accuracy), largest groups first.

    `groups` is a parallel channel (e.g. account) over which the task's
    labels (e.g. user) are broken down.
    """
    labels = [str(v) for v in labels]
    groups = [str(v) for v in groups]
    rows = []
    for grp in sorted(set(groups)):
        idx = [i for i, g in enumerate(groups) if g == grp]
        hits = sum(1 for i in idx if cv.predictions[i] == labels[i])
        rows.append(
            {
                "group": grp,
                "count": len(idx),
                "n_classes": len({labels[i] for i in idx}),
                "accuracy": hits / len(idx),
            }
        )
    rows.sort(key=lambda r: (-r["count"], r["group"]))
    return rows
