"""Classifier training, prediction contracts, selection, persistence."""

import numpy as np
import pytest

from advpkt.errors import (ConfigError, InputDimensionError, TrainingError)
from advpkt.models import (DEFAULT_HYPERPARAMS, Ensemble, select_ensemble,
                           load_model, save_model, train)


def embed(values, dim=12):
    """Scalar toy points as feature rows (value at feature 0)."""
    X = np.zeros((len(values), dim))
    X[:, 0] = values
    return X


def two_blob_data(n=60, dim=12, seed=0, margin=0.3):
    """Linearly separable blobs on a handful of features."""
    rng = np.random.default_rng(seed)
    X = rng.random((n, dim))
    y = (np.arange(n) % 2).astype(np.int64)
    X[y == 0, :3] *= 0.5 - margin / 2
    X[y == 1, :3] = X[y == 1, :3] * (0.5 - margin / 2) + 0.5 + margin / 2
    return X, y


class TestLogisticRegression:
    def test_two_point_separable_reaches_full_accuracy(self):
        X = embed([0.1, 0.9])
        y = np.array([0, 1])
        model = train("LR", (X, y))
        assert model.accuracy(X, y) == 1.0

    def test_predict_returns_training_label(self):
        X = embed([0.1, 0.9])
        model = train("LR", (X, np.array([0, 1])))
        label, proba = model.predict_one(X[1])
        assert label == 1 and proba > 0.5


class TestDecisionTree:
    def test_single_split_pure_leaves(self):
        X = embed([0.0, 1.0])
        model = train("DT", (X, np.array([0, 1])),
                      hyperparams={"max_features": None})
        tree = model.tree
        assert len(tree.feature) == 3  # root plus two leaves
        leaves = tree.left < 0
        assert (tree.impurity[leaves] == 0).all()
        root = int(np.nonzero(~leaves)[0][0])
        assert tree.feature[root] == 0
        assert 0.0 < tree.threshold[root] < 1.0

    def test_blob_accuracy(self):
        X, y = two_blob_data()
        model = train("DT", (X, y), hyperparams={"max_features": None})
        assert model.accuracy(X, y) == 1.0

    def test_max_depth_limits_growth(self):
        X, y = two_blob_data(n=40)
        model = train("DT", (X, y), hyperparams={"max_depth": 0,
                                                 "max_features": None})
        assert len(model.tree.feature) == 1  # a lone leaf

    def test_non_gini_criterion_rejected(self):
        with pytest.raises(ConfigError):
            train("DT", two_blob_data(), hyperparams={"criterion": "entropy"})


class TestRandomForest:
    def test_prediction_is_majority_vote(self):
        X, y = two_blob_data(n=50)
        model = train("RF", (X, y), hyperparams={"n_estimators": 9})
        votes = model.tree_votes(X)
        majority = (votes.mean(axis=1) >= 0.5).astype(np.int64)
        assert (model.predict(X) == majority).all()

    def test_identical_votes_carry_the_majority(self):
        X, y = two_blob_data(n=40, margin=0.5)
        model = train("RF", (X, y), hyperparams={"n_estimators": 7})
        votes = model.tree_votes(X)
        unanimous = (votes == votes[:, :1]).all(axis=1)
        preds = model.predict(X)
        assert (preds[unanimous] == votes[unanimous, 0]).all()
        assert unanimous.any()


class TestNeuralClassifiers:
    def test_mlp_learns_blobs(self):
        X, y = two_blob_data(n=80)
        model = train("MLP", (X, y),
                      hyperparams={"hidden_layer_sizes": (16,), "epochs": 60,
                                   "batch_size": 20})
        assert model.accuracy(X, y) >= 0.95

    def test_early_loss_decreases_monotonically(self):
        # full-batch steps so successive losses are comparable; sanity
        # check that the default learning rate does not oscillate early
        X, y = two_blob_data(n=64, margin=0.5, seed=3)
        for kind, hidden in (("MLP", (16,)), ("DNN", (16, 8, 4))):
            model = train(kind, (X, y),
                          hyperparams={"hidden_layer_sizes": hidden,
                                       "epochs": 8, "batch_size": 64,
                                       "learning_rate": 0.001})
            losses = model.batch_losses
            assert len(losses) == 8
            assert all(b <= a + 1e-9 for a, b in zip(losses, losses[1:]))

    def test_dnn_trains(self):
        X, y = two_blob_data(n=60)
        model = train("DNN", (X, y),
                      hyperparams={"hidden_layer_sizes": (32, 16, 8),
                                   "epochs": 40, "batch_size": 20})
        assert model.accuracy(X, y) >= 0.95


class TestContracts:
    def test_single_class_data_raises(self):
        X = embed([0.1, 0.2, 0.3])
        with pytest.raises(TrainingError, match="single class"):
            train("LR", (X, np.zeros(3, dtype=np.int64)))

    def test_dimension_mismatch_raises(self):
        X, y = two_blob_data()
        model = train("LR", (X, y))
        with pytest.raises(InputDimensionError):
            model.predict(np.zeros(5))

    def test_unknown_kind_raises(self):
        with pytest.raises(ConfigError):
            train("SVM", two_blob_data())

    def test_tie_probability_goes_malicious(self):
        X, y = two_blob_data()
        model = train("LR", (X, y))
        model.w[:] = 0.0
        model.b = 0.0  # every probability is exactly 0.5
        assert (model.predict(X) == 1).all()

    def test_determinism_same_seed(self):
        X, y = two_blob_data(n=50)
        for kind in ("LR", "DT", "RF", "MLP"):
            hp = {"n_estimators": 5} if kind == "RF" else \
                {"epochs": 5} if kind == "MLP" else None
            a = train(kind, (X, y), hyperparams=hp, seed=42)
            b = train(kind, (X, y), hyperparams=hp, seed=42)
            probe = np.random.default_rng(1).random((20, X.shape[1]))
            assert (a.predict_proba(probe) == b.predict_proba(probe)).all()

    def test_eval_accuracy_recorded(self):
        X, y = two_blob_data(n=60)
        model = train("DT", (X, y), eval_split=(X, y),
                      hyperparams={"max_features": None})
        assert model.eval_accuracy == 1.0


class TestEnsembleSelection:
    def _model(self, kind, acc, tag):
        X, y = two_blob_data(n=30, seed=hash(tag) % 1000)
        hp = {"epochs": 2} if kind in ("MLP", "DNN") else None
        m = train(kind, (X, y), hyperparams=hp)
        m.eval_accuracy = acc
        return (m, acc)

    def test_one_candidate_per_kind(self):
        cands = [self._model("LR", 0.9, "a"), self._model("DT", 0.91, "b"),
                 self._model("MLP", 0.92, "c")]
        ens = select_ensemble(cands)
        assert ens.kinds == ("LR", "DT", "MLP")

    def test_best_of_duplicated_kind(self):
        cands = [self._model("LR", 0.9, "a"),
                 self._model("DT", 0.99, "best"),
                 self._model("DT", 0.98, "worse"),
                 self._model("MLP", 0.9, "d")]
        ens = select_ensemble(cands)
        assert ens.members[1] is cands[1][0]

    def test_tie_breaks_to_lower_index(self):
        cands = [self._model("LR", 0.9, "a"),
                 self._model("DT", 0.99, "first"),
                 self._model("DT", 0.99, "second"),
                 self._model("MLP", 0.9, "d")]
        assert select_ensemble(cands).members[1] is cands[1][0]

    def test_missing_kind_raises(self):
        cands = [self._model("LR", 0.9, "a"), self._model("DT", 0.9, "b")]
        with pytest.raises(ConfigError, match="MLP"):
            select_ensemble(cands)

    def test_classify_all_shape_and_order(self):
        cands = [self._model("LR", 0.9, "a"), self._model("DT", 0.9, "b"),
                 self._model("MLP", 0.9, "c")]
        ens = select_ensemble(cands)
        labels = ens.classify_all(np.zeros(12))
        assert len(labels) == 3
        assert all(l in (0, 1) for l in labels)

    def test_wrong_member_count_rejected(self):
        with pytest.raises(ConfigError):
            Ensemble((None, None))


class TestPersistence:
    @pytest.mark.parametrize("kind,hp", [
        ("LR", None),
        ("DT", {"max_features": None}),
        ("RF", {"n_estimators": 5}),
        ("MLP", {"hidden_layer_sizes": (8,), "epochs": 3}),
        ("DNN", {"hidden_layer_sizes": (8, 4, 2), "epochs": 2}),
    ])
    def test_round_trip_identical_predictions(self, tmp_path, kind, hp):
        X, y = two_blob_data(n=40)
        model = train(kind, (X, y), hyperparams=hp, seed=7,
                      eval_split=(X, y))
        path = tmp_path / f"{kind}.npz"
        save_model(path, model)
        back = load_model(path)
        probe = np.random.default_rng(9).random((1000, X.shape[1]))
        assert (model.predict(probe) == back.predict(probe)).all()
        assert (model.predict_proba(probe) == back.predict_proba(probe)).all()
        assert back.kind == kind
        assert back.seed == 7
        assert back.data_hash == model.data_hash
        assert back.eval_accuracy == model.eval_accuracy


def test_table_defaults_present():
    assert DEFAULT_HYPERPARAMS["DT"]["criterion"] == "gini"
    assert DEFAULT_HYPERPARAMS["DT"]["max_depth"] == 1500
    assert DEFAULT_HYPERPARAMS["DT"]["min_samples_split"] == 2  # 1 can't split
    assert DEFAULT_HYPERPARAMS["DT"]["max_features"] == 39
    assert DEFAULT_HYPERPARAMS["RF"]["n_estimators"] == 200
    assert DEFAULT_HYPERPARAMS["RF"]["max_features"] == "sqrt"
    assert DEFAULT_HYPERPARAMS["MLP"]["hidden_layer_sizes"] == (100,)
    assert DEFAULT_HYPERPARAMS["MLP"]["batch_size"] == 200
    assert DEFAULT_HYPERPARAMS["DNN"]["hidden_layer_sizes"] == (256, 128, 32)
