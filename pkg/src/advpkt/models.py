"""From-scratch packet classifiers: LR, DT, RF, MLP, DNN.

All five train on the 1525-value byte features and emit a benign(0) /
malicious(1) label with a probability; label is 1 whenever the
probability reaches 0.5. Training is deterministic given (seed, data,
hyperparameters). The surrogate ensemble used during agent training is
one model each of LR, DT, and MLP, picked by held-out accuracy.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, InputDimensionError, TrainingError
from .features import N_FEATURES, FeatureVector, dataset_matrix
from .nets import Adam, FeedForward, bce_with_logits

KINDS = ("LR", "DT", "RF", "MLP", "DNN")

SURROGATE_KINDS = ("LR", "DT", "MLP")
ENSEMBLE_SIZE = len(SURROGATE_KINDS)

# min_samples_split=1 in the source table cannot split; treated as 2.
# Cost-complexity pruning is replaced by max_depth/min_samples pre-pruning.
DEFAULT_HYPERPARAMS: dict[str, dict] = {
    "LR": {"learning_rate": 0.05, "epochs": 300},
    "DT": {"criterion": "gini", "max_depth": 1500, "min_samples_split": 2,
           "max_features": 39},
    "RF": {"n_estimators": 200, "max_features": "sqrt", "criterion": "gini",
           "max_depth": 100, "min_samples_split": 2},
    "MLP": {"hidden_layer_sizes": (100,), "activation": "relu",
            "solver": "adam", "batch_size": 200, "learning_rate": 0.001,
            "epochs": 30},
    "DNN": {"hidden_layer_sizes": (256, 128, 32), "activation": "relu",
            "solver": "adam", "batch_size": 200, "learning_rate": 0.001,
            "epochs": 30},
}

MODEL_FORMAT_VERSION = 1


def data_hash(X: np.ndarray, y: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(X).tobytes())
    h.update(np.ascontiguousarray(y).tobytes())
    return h.hexdigest()[:16]


def _as_matrix(dataset) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(dataset, tuple):
        X, y = dataset
        return np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.int64)
    return dataset_matrix(list(dataset))


def _check_input(x: np.ndarray, expected: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != expected:
        raise InputDimensionError(
            f"expected {expected} features, got {x.shape[1]}")
    return x


class ClassifierModel:
    """Common surface: deterministic predict / predict_proba over features."""

    kind: str

    def __init__(self, kind: str, hyperparams: dict, seed: int):
        self.kind = kind
        self.hyperparams = dict(hyperparams)
        self.seed = seed
        self.data_hash = ""
        self.eval_accuracy: float | None = None
        self.n_features_in = N_FEATURES

    def predict_proba(self, x) -> np.ndarray:
        raise NotImplementedError

    def predict(self, x) -> np.ndarray:
        """Labels; 1 iff probability >= 0.5 (ties go to malicious)."""
        return (self.predict_proba(x) >= 0.5).astype(np.int64)

    def predict_one(self, x) -> tuple[int, float]:
        proba = float(self.predict_proba(x)[0])
        return (1 if proba >= 0.5 else 0), proba

    def accuracy(self, X, y) -> float:
        return float(np.mean(self.predict(X) == np.asarray(y)))

    def meta(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "kind": self.kind,
            "hyperparams": _jsonable(self.hyperparams),
            "seed": self.seed,
            "data_hash": self.data_hash,
            "eval_accuracy": self.eval_accuracy,
            "n_features_in": self.n_features_in,
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


# -- logistic regression -------------------------------------------------

class LogisticRegressionModel(ClassifierModel):
    def __init__(self, hyperparams: dict, seed: int):
        super().__init__("LR", hyperparams, seed)
        self.w = np.zeros(0)
        self.b = 0.0

    def fit(self, X: np.ndarray, y: np.ndarray) -> None:
        self.n_features_in = X.shape[1]
        w = np.zeros(X.shape[1])
        b = np.zeros(1)
        opt = Adam([w, b], lr=self.hyperparams["learning_rate"])
        for _ in range(self.hyperparams["epochs"]):
            z = X @ w + b[0]
            loss, grad_z = bce_with_logits(z, y)
            if not np.isfinite(loss):
                raise TrainingError(f"LR loss non-finite ({loss})")
            opt.step([X.T @ grad_z, np.array([grad_z.sum()])])
        self.w, self.b = w, float(b[0])

    def predict_proba(self, x) -> np.ndarray:
        x = _check_input(x, self.n_features_in)
        return 1.0 / (1.0 + np.exp(-(x @ self.w + self.b)))


# -- decision tree (CART, gini) ------------------------------------------

@dataclass
class _Tree:
    """Array-backed binary tree; children of -1 mark leaves."""

    feature: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    threshold: np.ndarray = field(default_factory=lambda: np.empty(0))
    left: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    right: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    value: np.ndarray = field(default_factory=lambda: np.empty(0))  # P(malicious)
    n_samples: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    impurity: np.ndarray = field(default_factory=lambda: np.empty(0))

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        while True:
            at_leaf = self.left[node] < 0
            if at_leaf.all():
                break
            go = ~at_leaf
            feat = self.feature[node[go]]
            below = X[go, feat] <= self.threshold[node[go]]
            node[go] = np.where(below, self.left[node[go]],
                                self.right[node[go]])
        return self.value[node]


def _gini(pos: float, n: float) -> float:
    if n == 0:
        return 0.0
    p = pos / n
    return 1.0 - p * p - (1.0 - p) * (1.0 - p)


def _best_split(X, y, feature_ids):
    """(feature, threshold, weighted_gini) of the best split, or None.

    Features are scanned in ascending index and candidates accepted only
    on strict improvement, so ties resolve to the lowest feature index
    and lowest threshold.
    """
    n = len(y)
    total_pos = int(y.sum())
    best = None
    for f in np.sort(feature_ids):
        xs = X[:, f]
        order = np.argsort(xs, kind="stable")
        xs_sorted = xs[order]
        ys_sorted = y[order]
        distinct = np.nonzero(np.diff(xs_sorted))[0]
        if distinct.size == 0:
            continue
        pos_left = np.cumsum(ys_sorted)[distinct]
        n_left = distinct + 1
        n_right = n - n_left
        pos_right = total_pos - pos_left
        p_l = pos_left / n_left
        p_r = pos_right / n_right
        gini = (n_left * (1 - p_l ** 2 - (1 - p_l) ** 2)
                + n_right * (1 - p_r ** 2 - (1 - p_r) ** 2)) / n
        k = int(np.argmin(gini))
        score = float(gini[k])
        if best is None or score < best[2]:
            cut = distinct[k]
            threshold = (xs_sorted[cut] + xs_sorted[cut + 1]) / 2.0
            best = (int(f), float(threshold), score)
    return best


class DecisionTreeModel(ClassifierModel):
    def __init__(self, hyperparams: dict, seed: int):
        super().__init__("DT", hyperparams, seed)
        if hyperparams.get("criterion", "gini") != "gini":
            raise ConfigError("only the gini criterion is implemented")
        self.tree = _Tree()

    def _resolve_max_features(self, n_features: int):
        mf = self.hyperparams.get("max_features")
        if mf is None:
            return n_features
        if mf == "sqrt":
            return max(1, int(np.sqrt(n_features)))
        return min(int(mf), n_features)

    def fit(self, X: np.ndarray, y: np.ndarray,
            rng: np.random.Generator | None = None) -> None:
        self.n_features_in = X.shape[1]
        rng = rng or np.random.default_rng(self.seed)
        max_depth = self.hyperparams.get("max_depth")
        if max_depth is None:
            max_depth = np.inf
        min_split = max(2, int(self.hyperparams.get("min_samples_split", 2)))
        mf = self._resolve_max_features(X.shape[1])
        nodes: list[list] = []  # [feature, threshold, left, right, value, n, gini]

        def new_node(idx: np.ndarray) -> int:
            pos = int(y[idx].sum())
            n = len(idx)
            nodes.append([-1, 0.0, -1, -1, pos / n, n, _gini(pos, n)])
            return len(nodes) - 1

        def grow(node_id: int, idx: np.ndarray, depth: int) -> None:
            pos = int(y[idx].sum())
            n = len(idx)
            if pos in (0, n) or n < min_split or depth >= max_depth:
                return
            if mf < X.shape[1]:
                feats = rng.choice(X.shape[1], size=mf, replace=False)
            else:
                feats = np.arange(X.shape[1])
            split = _best_split(X[idx], y[idx], feats)
            if split is None:
                return
            f, threshold, _ = split
            below = X[idx, f] <= threshold
            left_idx, right_idx = idx[below], idx[~below]
            if len(left_idx) == 0 or len(right_idx) == 0:
                return
            lid = new_node(left_idx)
            rid = new_node(right_idx)
            nodes[node_id][:4] = [f, threshold, lid, rid]
            grow(lid, left_idx, depth + 1)
            grow(rid, right_idx, depth + 1)

        root_idx = np.arange(len(y))
        grow(new_node(root_idx), root_idx, 0)
        cols = list(zip(*nodes))
        self.tree = _Tree(
            feature=np.array(cols[0], dtype=np.int64),
            threshold=np.array(cols[1], dtype=np.float64),
            left=np.array(cols[2], dtype=np.int64),
            right=np.array(cols[3], dtype=np.int64),
            value=np.array(cols[4], dtype=np.float64),
            n_samples=np.array(cols[5], dtype=np.int64),
            impurity=np.array(cols[6], dtype=np.float64),
        )

    def predict_proba(self, x) -> np.ndarray:
        return self.tree.predict_proba(_check_input(x, self.n_features_in))


class RandomForestModel(ClassifierModel):
    def __init__(self, hyperparams: dict, seed: int):
        super().__init__("RF", hyperparams, seed)
        self.trees: list[DecisionTreeModel] = []

    def fit(self, X: np.ndarray, y: np.ndarray) -> None:
        self.n_features_in = X.shape[1]
        n_estimators = int(self.hyperparams["n_estimators"])
        tree_params = {
            "criterion": self.hyperparams.get("criterion", "gini"),
            "max_depth": self.hyperparams.get("max_depth"),
            "min_samples_split": self.hyperparams.get("min_samples_split", 2),
            "max_features": self.hyperparams.get("max_features", "sqrt"),
        }
        seeds = np.random.SeedSequence(self.seed).spawn(n_estimators)
        self.trees = []
        for i in range(n_estimators):
            rng = np.random.default_rng(seeds[i])
            boot = rng.integers(0, len(y), size=len(y))
            tree = DecisionTreeModel(tree_params, seed=self.seed)
            tree.fit(X[boot], y[boot], rng=rng)
            self.trees.append(tree)

    def tree_votes(self, x) -> np.ndarray:
        """(n_samples, n_trees) per-tree labels; prediction is their majority."""
        x = _check_input(x, self.n_features_in)
        return np.stack([t.predict(x) for t in self.trees], axis=1)

    def predict_proba(self, x) -> np.ndarray:
        return self.tree_votes(x).mean(axis=1)


# -- neural classifiers ---------------------------------------------------

class NeuralClassifierModel(ClassifierModel):
    """MLP / DNN: ReLU hidden layers, single-logit sigmoid output."""

    def __init__(self, kind: str, hyperparams: dict, seed: int):
        super().__init__(kind, hyperparams, seed)
        self.net: FeedForward | None = None
        self.batch_losses: list[float] = []

    def _build_net(self, n_features: int) -> None:
        hidden = list(self.hyperparams["hidden_layer_sizes"])
        self.net = FeedForward([n_features, *hidden, 1],
                               np.random.default_rng(self.seed),
                               dtype=np.float64)

    def fit(self, X: np.ndarray, y: np.ndarray) -> None:
        self.n_features_in = X.shape[1]
        self._build_net(X.shape[1])
        rng = np.random.default_rng(self.seed + 1)
        opt = Adam(self.net.parameters(),
                   lr=float(self.hyperparams["learning_rate"]))
        batch = int(self.hyperparams["batch_size"])
        self.batch_losses = []
        for _ in range(int(self.hyperparams["epochs"])):
            order = rng.permutation(len(y))
            for start in range(0, len(y), batch):
                take = order[start:start + batch]
                logits = self.net.forward(X[take], cache=True)
                loss, grad = bce_with_logits(logits, y[take])
                if not np.isfinite(loss):
                    raise TrainingError(
                        f"{self.kind} loss non-finite at step "
                        f"{len(self.batch_losses)}")
                opt.step(self.net.backward(grad))
                self.batch_losses.append(loss)

    def predict_proba(self, x) -> np.ndarray:
        logits = self.net.forward(_check_input(x, self.n_features_in)).ravel()
        return 1.0 / (1.0 + np.exp(-logits))


# -- training entry point --------------------------------------------------

_MODEL_CLASSES = {
    "LR": LogisticRegressionModel,
    "DT": DecisionTreeModel,
    "RF": RandomForestModel,
    "MLP": lambda hp, seed: NeuralClassifierModel("MLP", hp, seed),
    "DNN": lambda hp, seed: NeuralClassifierModel("DNN", hp, seed),
}


def train(kind: str, dataset, hyperparams: dict | None = None, seed: int = 0,
          eval_split=None) -> ClassifierModel:
    """Fit one classifier; records held-out accuracy when a split is given."""
    if kind not in KINDS:
        raise ConfigError(f"unknown classifier kind {kind!r}")
    X, y = _as_matrix(dataset)
    if len(np.unique(y)) < 2:
        raise TrainingError(f"{kind}: training data has a single class")
    hp = dict(DEFAULT_HYPERPARAMS[kind])
    hp.update(hyperparams or {})
    model = _MODEL_CLASSES[kind](hp, seed)
    model.data_hash = data_hash(X, y)
    model.n_features_in = X.shape[1]
    model.fit(X, y)
    if eval_split is not None:
        Xe, ye = _as_matrix(eval_split)
        model.eval_accuracy = model.accuracy(Xe, ye)
    return model


# -- surrogate ensemble -----------------------------------------------------

@dataclass(frozen=True)
class Ensemble:
    """Fixed, ordered set of members standing in for the defender's model."""

    members: tuple

    def __post_init__(self):
        if len(self.members) != ENSEMBLE_SIZE:
            raise ConfigError(
                f"ensemble needs exactly {ENSEMBLE_SIZE} members")

    @property
    def kinds(self) -> tuple:
        return tuple(m.kind for m in self.members)

    def classify_all(self, x) -> list[int]:
        """One label per member, order-stable."""
        return [int(m.predict(x)[0]) for m in self.members]

    def benign_count(self, x) -> int:
        """How many members a sample evades (classify as benign)."""
        return sum(1 for label in self.classify_all(x) if label == 0)


def select_ensemble(candidates: list[tuple[ClassifierModel, float]],
                    kinds: tuple = SURROGATE_KINDS) -> Ensemble:
    """Best candidate of each designated kind by held-out accuracy.

    Ties break to the earlier candidate index, deterministically.
    """
    chosen = []
    for kind in kinds:
        best = None
        for idx, (model, acc) in enumerate(candidates):
            if model.kind != kind:
                continue
            if best is None or acc > best[1]:
                best = (idx, acc, model)
        if best is None:
            raise ConfigError(f"no candidate of kind {kind!r} supplied")
        chosen.append(best[2])
    return Ensemble(tuple(chosen))


# -- persistence -------------------------------------------------------------

def save_model(path: str | Path, model: ClassifierModel) -> None:
    """Versioned self-describing .npz: metadata JSON + parameter arrays."""
    arrays: dict[str, np.ndarray] = {}
    if model.kind == "LR":
        arrays["w"] = model.w
        arrays["b"] = np.array([model.b])
    elif model.kind == "DT":
        arrays.update(_tree_arrays("t", model.tree))
    elif model.kind == "RF":
        arrays["n_trees"] = np.array([len(model.trees)])
        for i, tree in enumerate(model.trees):
            arrays.update(_tree_arrays(f"t{i}", tree.tree))
    else:
        for i, p in enumerate(model.net.parameters()):
            arrays[f"p{i}"] = p
    meta = json.dumps(model.meta(), sort_keys=True)
    np.savez(path, meta=np.frombuffer(meta.encode(), dtype=np.uint8), **arrays)


def _tree_arrays(prefix: str, tree: _Tree) -> dict[str, np.ndarray]:
    return {f"{prefix}_{name}": getattr(tree, name)
            for name in ("feature", "threshold", "left", "right", "value",
                         "n_samples", "impurity")}


def _tree_from_arrays(prefix: str, data) -> _Tree:
    return _Tree(**{name: data[f"{prefix}_{name}"]
                    for name in ("feature", "threshold", "left", "right",
                                 "value", "n_samples", "impurity")})


def load_model(path: str | Path) -> ClassifierModel:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta["format_version"] != MODEL_FORMAT_VERSION:
            raise ConfigError(
                f"unsupported model format {meta['format_version']}")
        kind = meta["kind"]
        hp = meta["hyperparams"]
        if "hidden_layer_sizes" in hp:
            hp["hidden_layer_sizes"] = tuple(hp["hidden_layer_sizes"])
        model = _MODEL_CLASSES[kind](hp, meta["seed"])
        model.data_hash = meta["data_hash"]
        model.eval_accuracy = meta["eval_accuracy"]
        model.n_features_in = int(meta["n_features_in"])
        if kind == "LR":
            model.w = data["w"]
            model.b = float(data["b"][0])
        elif kind == "DT":
            model.tree = _tree_from_arrays("t", data)
        elif kind == "RF":
            model.trees = []
            for i in range(int(data["n_trees"][0])):
                tree = DecisionTreeModel(hp, seed=meta["seed"])
                tree.tree = _tree_from_arrays(f"t{i}", data)
                tree.n_features_in = model.n_features_in
                model.trees.append(tree)
        else:
            model._build_net(model.n_features_in)
            model.net.set_parameters(
                [data[f"p{i}"] for i in range(2 * model.net.n_layers)])
    return model
