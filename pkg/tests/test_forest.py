import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from sklearn.base import clone

from ecoserv import _tree_kernels as kernels
from ecoserv._validation import ValidationError
from ecoserv.forest import (
    DecisionTree, ForestModel, ForestParams, ModelFormatError, SoftRandomForestClassifier,
    fit_forest, load_model, model_to_dict, predict_hard, predict_proba, save_model)

from oracles import exhaustive_tree, tree_structure


def _leaf(counts):
    return DecisionTree(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]),
                        np.array([counts]))


def _stump(threshold, left_counts, right_counts):
    return DecisionTree(np.array([0, -1, -1]), np.array([threshold, 0.0, 0.0]),
                        np.array([1, -1, -1]), np.array([2, -1, -1]),
                        np.array([np.add(left_counts, right_counts), left_counts, right_counts]))


def _toy(seed=0, n=400, f=6):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, f))
    y = (X[:, 0] > 0).astype(int) + 2 * (X[:, 1] > 0.8)
    return X, y


def test_single_class_gives_one_hot():
    X, _ = _toy()
    model = fit_forest(X, np.full(len(X), 2), 4, ForestParams(n_trees=10))
    assert all(t.n_nodes == 1 for t in model.trees)
    assert np.array_equal(model.predict_proba(X[:5]), np.tile([0, 0, 1.0, 0], (5, 1)))


def test_separable_classes_split_between_supports():
    x = np.array([0.1, 0.4, 0.3, 2.0, 2.5, 1.9])
    y = np.array([0, 0, 0, 1, 1, 1])
    model = fit_forest(x[:, None], y, 2, ForestParams(n_trees=1, mtry=1, seed=4))
    tree = model.trees[0]
    assert 0.4 <= tree.threshold[0] < 1.9
    assert np.array_equal(model.predict_hard(x[:, None]), y)
    # same bootstrap weights fed to the exhaustive oracle
    state = np.array([kernels.tree_seed(4, 0)], dtype=np.uint64)
    weights = kernels.bootstrap_counts(state, len(x))
    assert tree_structure(tree) == exhaustive_tree(x, y, weights, 2)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 8).flatmap(lambda n: st.tuples(
    st.lists(st.sampled_from([0.0, 0.25, 1.0, 1.5, 4.0]), min_size=n, max_size=n),
    st.lists(st.integers(0, 2), min_size=n, max_size=n),
    st.lists(st.integers(1, 3), min_size=n, max_size=n))))
def test_small_instance_oracle(case):
    values, y, weights = (np.array(v) for v in case)
    state = np.array([kernels.tree_seed(1, 0)], dtype=np.uint64)
    tree = DecisionTree(*kernels.grow_tree(
        values.astype(float)[:, None], y.astype(np.int64), weights.astype(np.int64),
        3, 1, -1, 1, state))
    assert tree_structure(tree) == exhaustive_tree(values, y, weights, 3)


def test_hand_averaged_probabilities():
    model = ForestModel((_leaf([3, 1]), _leaf([1, 1])), 2, 1, ForestParams(n_trees=2))
    assert model.predict_proba(np.zeros((1, 1)))[0].tolist() == [0.625, 0.375]


def test_averaging_goes_through_the_split():
    model = ForestModel((_stump(0.5, [3, 1], [0, 2]), _leaf([1, 1])), 2, 1,
                        ForestParams(n_trees=2))
    p = model.predict_proba(np.array([[0.0], [0.5], [0.9]]))
    assert p.tolist() == [[0.625, 0.375], [0.625, 0.375], [0.25, 0.75]]


def test_argmax_and_tie_break():
    model = ForestModel((_leaf([2, 7, 1]),), 3, 1, ForestParams(n_trees=1))
    assert model.predict_hard(np.zeros(1)) == 1
    tie = ForestModel((_leaf([1, 0]), _leaf([0, 1])), 2, 1, ForestParams(n_trees=2))
    assert tie.predict_proba(np.zeros(1)).tolist() == [0.5, 0.5]
    assert tie.predict_hard(np.zeros(1)) == 0


def test_hundred_trees_and_dominant_class():
    rng = np.random.default_rng(9)
    X = rng.random((500, 4))
    y = (X[:, 0] > 0.75).astype(int)
    model = fit_forest(X, y, 2, ForestParams(n_trees=100, seed=1))
    assert len(model.trees) == 100
    hard = model.predict_hard(rng.random((2000, 4)))
    assert np.bincount(hard).max() / len(hard) > 0.6


@settings(max_examples=30, deadline=None)
@given(hnp.arrays(np.float64, (20, 6), elements=st.floats(-1e6, 1e6)))
def test_probabilities_and_consistency(X):
    model = _fitted()
    p = model.predict_proba(X)
    assert np.all(p >= 0)
    assert np.all(np.abs(p.sum(axis=1) - 1) <= 1e-12)
    assert np.array_equal(model.predict_hard(X), np.argmax(p, axis=1))


_MODEL = []


def _fitted():
    if not _MODEL:
        X, y = _toy()
        _MODEL.append(fit_forest(X, y, 4, ForestParams(n_trees=30, seed=2)))
    return _MODEL[0]


def test_module_level_functions():
    X, _ = _toy(1)
    model = _fitted()
    assert np.array_equal(predict_proba(model, X), model.predict_proba(X))
    assert np.array_equal(predict_hard(model, X), model.predict_hard(X))


def test_dimension_mismatch():
    with pytest.raises(ValidationError):
        _fitted().predict_proba(np.zeros((2, 5)))


def test_save_load_is_exact(tmp_path):
    model = _fitted()
    save_model(model, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    X = np.random.default_rng(3).normal(size=(1000, 6))
    assert model.predict_proba(X).tobytes() == back.predict_proba(X).tobytes()
    save_model(back, tmp_path / "m2.json")
    assert (tmp_path / "m.json").read_bytes() == (tmp_path / "m2.json").read_bytes()


def test_truncated_and_corrupt_files(tmp_path):
    save_model(_fitted(), tmp_path / "m.json")
    text = (tmp_path / "m.json").read_text()
    (tmp_path / "cut.json").write_text(text[: len(text) // 2])
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "cut.json")
    doc = json.loads(text)
    doc["version"] = 99
    (tmp_path / "v.json").write_text(json.dumps(doc))
    with pytest.raises(ModelFormatError, match="version"):
        load_model(tmp_path / "v.json")
    doc = model_to_dict(_fitted())
    doc["trees"][0]["nodes"]["left"][0] = 0
    (tmp_path / "loop.json").write_text(json.dumps(doc))
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "loop.json")
    doc = model_to_dict(_fitted())
    del doc["trees"][0]["nodes"]["counts"]
    (tmp_path / "k.json").write_text(json.dumps(doc))
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "k.json")


def test_seed_determinism_and_thread_independence(tmp_path):
    X, y = _toy(5)
    params = ForestParams(n_trees=16, seed=42)
    for i, n_jobs in enumerate((1, 1, 4)):
        save_model(fit_forest(X, y, 4, params, n_jobs=n_jobs), tmp_path / f"m{i}.json")
    blobs = {(tmp_path / f"m{i}.json").read_bytes() for i in range(3)}
    assert len(blobs) == 1
    other = fit_forest(X, y, 4, ForestParams(n_trees=16, seed=43))
    assert model_to_dict(other) != json.loads(blobs.pop())


def test_mixed_labels_are_soft():
    X = np.repeat(np.arange(10, dtype=float)[:, None], 4, axis=0)
    y = np.tile([0, 1, 0, 1], 10)
    model = fit_forest(X, y, 2, ForestParams(n_trees=50, seed=1))
    assert np.all(model.predict_proba(np.arange(10.0)[:, None]).max(axis=1) < 1)


def test_depth_and_leaf_size_limits():
    X, y = _toy(6)
    stump = fit_forest(X, y, 4, ForestParams(n_trees=5, max_depth=0))
    assert all(t.n_nodes == 1 for t in stump.trees)
    model = fit_forest(X, y, 4, ForestParams(n_trees=5, min_leaf=7))
    for t in model.trees:
        assert t.counts[t.is_leaf].sum(axis=1).min() >= 7


@pytest.mark.parametrize("bad", [
    {"n_trees": 0}, {"min_leaf": 0}, {"mtry": 0}, {"seed": -1}, {"max_depth": -2}])
def test_bad_params(bad):
    with pytest.raises(ValidationError):
        ForestParams(**bad)


def test_mtry_default_and_limit():
    assert ForestParams().resolved_mtry(48) == 6
    with pytest.raises(ValidationError):
        ForestParams(mtry=7).resolved_mtry(6)


def test_training_input_checks():
    with pytest.raises(ValidationError):
        fit_forest(np.zeros((3, 2)), np.array([0, 1, 5]), 2, ForestParams())
    with pytest.raises(ValidationError):
        fit_forest(np.array([[np.nan, 0.0]]), np.array([0]), 1, ForestParams())


def test_sklearn_estimator_api():
    X, y = _toy(7)
    names = np.array(["urban", "suburban", "forest", "water"])[y]
    est = SoftRandomForestClassifier(n_estimators=20, random_state=5)
    assert clone(est).get_params() == est.get_params()
    est.fit(X, names)
    assert set(est.predict(X)) <= set(names)
    assert est.predict_proba(X).shape == (len(X), len(np.unique(names)))
    assert len(est.estimators_) == 20
    assert est.score(X, names) > 0.9
    sparse = SoftRandomForestClassifier(n_estimators=5, n_classes=6).fit(X, y)
    assert sparse.predict_proba(X).shape[1] == 6
