import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.exceptions import NotFittedError

from ecoserv._validation import ValidationError
from ecoserv.raster_io import read_raster
from ecoserv.scoring import (
    SupplyMatrix, SupplyMatrixScorer, extreme_mass, histogram, interior_occupancy, one_hot,
    pixel_baseline_map, read_matrix_csv, region_mask, render_histograms, sample_scores, score,
    score_map_from_proba, score_segments, shannon_entropy, write_histogram_csv, write_matrix_csv)

MATRIX = SupplyMatrix(("biodiversity", "groundwater_recharge"),
                      ("urban", "suburban", "forest", "water"),
                      np.array([[0, 2, 5, 3], [0, 1, 2, 2]]))


def probability_vectors(n_classes=4):
    return st.lists(st.floats(0, 1), min_size=n_classes, max_size=n_classes) \
        .filter(lambda v: sum(v) > 1e-3) \
        .map(lambda v: np.array(v) / np.sum(v))


def test_worked_examples():
    assert score(np.array([0.5, 0.5]), np.array([0, 2])) == 1.0
    for c in range(4):
        assert score(np.eye(4)[c], MATRIX.row("biodiversity")) == MATRIX.row("biodiversity")[c]


def test_example_matrix_ranges(bundle_dir):
    matrix = read_matrix_csv(f"{bundle_dir}/example_matrix.csv")
    assert matrix.weight_range("biodiversity") == (0, 5)
    assert matrix.weight_range("groundwater_recharge") == (0, 2)


@given(probability_vectors(), probability_vectors(), st.floats(0, 1))
def test_linearity(p, q, alpha):
    w = MATRIX.row("biodiversity")
    mixed = alpha * p + (1 - alpha) * q
    assert abs(score(mixed, w) - (alpha * score(p, w) + (1 - alpha) * score(q, w))) <= 1e-12


@given(probability_vectors(), st.lists(st.integers(0, 5), min_size=4, max_size=4))
def test_bounds(p, w):
    w = np.array(w)
    assert w.min() <= score(p, w) <= w.max()


@given(probability_vectors(), st.integers(0, 3), st.integers(0, 3), st.floats(0, 1))
def test_monotone_mass_shift(p, lo_c, hi_c, frac):
    w = MATRIX.row("biodiversity")
    if w[lo_c] > w[hi_c]:
        lo_c, hi_c = hi_c, lo_c
    moved = p.copy()
    delta = frac * moved[lo_c]
    moved[lo_c] -= delta
    moved[hi_c] += delta
    assert score(moved, w) >= score(p, w) - 1e-12


def test_hard_mode_takes_argmax_weight():
    rng = np.random.default_rng(1)
    proba = rng.dirichlet(np.ones(4), size=500)
    hard = score_segments(proba, MATRIX, "hard")
    expected = MATRIX.weights.T[np.argmax(proba, axis=1)]
    assert np.array_equal(hard, expected.astype(float))
    onehot = one_hot(np.argmax(proba, axis=1), 4)
    assert np.array_equal(score_segments(onehot, MATRIX, "soft"), hard)


def test_soft_scores_are_richer_than_hard():
    rng = np.random.default_rng(2)
    labels = np.arange(100).reshape(10, 10)
    proba = rng.dirichlet(np.full(4, 0.7), size=100)
    soft = score_map_from_proba(proba, labels, MATRIX, "soft")
    hard = score_map_from_proba(proba, labels, MATRIX, "hard")
    for s in MATRIX.services:
        assert np.unique(soft.service(s)).size > np.unique(hard.service(s)).size
        assert set(np.unique(hard.service(s))) <= set(MATRIX.row(s).astype(float))


def test_score_map_broadcast():
    labels = np.array([[0, 0, 1], [2, 1, 1]])
    proba = np.array([[1, 0, 0, 0], [0, 0, 0.5, 0.5], [0, 0, 0, 1.0]])
    smap = score_map_from_proba(proba, labels, MATRIX)
    assert smap.service("biodiversity").tolist() == [[0, 0, 4], [3, 4, 4]]
    assert smap.to_raster().band_names == MATRIX.services
    with pytest.raises(ValidationError):
        score_map_from_proba(proba[:2], labels, MATRIX)


def test_pixel_baseline():
    uniform = np.full((5, 6), 2)
    smap = pixel_baseline_map(uniform, MATRIX)
    assert np.all(smap.service("biodiversity") == 5)
    rng = np.random.default_rng(3)
    labels = rng.integers(0, 4, (30, 30))
    smap = pixel_baseline_map(labels, MATRIX, service="groundwater_recharge")
    values = set(np.unique(smap.pixel_scores).tolist())
    assert values <= {0.0, 1.0, 2.0} and len(values) <= 4
    with pytest.raises(ValidationError):
        pixel_baseline_map(np.full((2, 2), 4), MATRIX)


def test_matrix_validation():
    with pytest.raises(ValidationError):
        SupplyMatrix(("a",), ("x", "y"), np.array([[0, 6]]))
    with pytest.raises(ValidationError):
        SupplyMatrix(("a",), ("x", "y"), np.array([[0.5, 1]]))
    with pytest.raises(ValidationError):
        SupplyMatrix(("a", "a"), ("x",), np.array([[1], [2]]))
    with pytest.raises(ValidationError):
        MATRIX.row("carbon")
    with pytest.raises(ValidationError):
        score(np.array([0.6, 0.6]), np.array([0, 1]))


def test_matrix_csv_round_trip(tmp_path):
    write_matrix_csv(MATRIX, tmp_path / "m.csv")
    back = read_matrix_csv(tmp_path / "m.csv")
    assert back.services == MATRIX.services and back.class_names == MATRIX.class_names
    assert np.array_equal(back.weights, MATRIX.weights)
    (tmp_path / "bad.csv").write_text("service,a,b\nx,1\n")
    with pytest.raises(ValidationError):
        read_matrix_csv(tmp_path / "bad.csv")


def test_sampling():
    values = np.full((20, 30), 1.5)
    assert np.all(sample_scores(values, 3000, seed=0) == 1.5)
    grid = np.arange(600, dtype=float).reshape(20, 30)
    a = sample_scores(grid, 100, seed=4, region=(5, 2, 10, 8))
    assert np.array_equal(a, sample_scores(grid, 100, seed=4, region=(5, 2, 10, 8)))
    ys, xs = np.divmod(a.astype(int), 30)
    assert xs.min() >= 5 and xs.max() < 10 and ys.min() >= 2 and ys.max() < 8
    with pytest.raises(ValidationError):
        sample_scores(grid, 10, seed=0, region=(3, 3, 3, 9))


def test_sample_mean_close_to_region_mean():
    rng = np.random.default_rng(5)
    values = rng.random((100, 100)) * 2
    region = (10, 20, 70, 90)
    n = 20_000
    samples = sample_scores(values, n, seed=9, region=region)
    inside = values[region_mask(values.shape, region)]
    assert abs(samples.mean() - inside.mean()) <= 3 * inside.std() / np.sqrt(n)


def test_histogram_and_statistics(tmp_path):
    edges, counts = histogram(np.zeros(50), 21, 0, 2)
    assert counts[0] == 50 and counts.sum() == 50 and len(edges) == 22
    _, counts = histogram([0, 2, 2, 1, 5, -1], 21, 0, 2)
    assert counts.tolist() == [1] + [0] * 9 + [1] + [0] * 9 + [2]
    assert extreme_mass(counts) == 0.75
    assert interior_occupancy(counts) == 1
    assert shannon_entropy([4, 0, 4]) == pytest.approx(1.0)
    assert shannon_entropy([7]) == 0.0
    write_histogram_csv(edges, counts, tmp_path / "h.csv")
    assert (tmp_path / "h.csv").read_text().splitlines()[0] == "bin_lo,bin_hi,count"


def test_histogram_png_is_reproducible(tmp_path):
    hists = {"soft": histogram(np.linspace(0, 2, 99), 21, 0, 2),
             "hard": histogram(np.array([0, 2, 2]), 21, 0, 2)}
    render_histograms(hists, tmp_path / "a.png", title="t")
    render_histograms(hists, tmp_path / "b.png", title="t")
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()
    assert read_raster(tmp_path / "a.png").shape == (400, 600)


def test_scorer_estimator():
    scorer = SupplyMatrixScorer(MATRIX, mode="hard")
    proba = np.array([[0.1, 0.2, 0.6, 0.1], [0.4, 0.4, 0.1, 0.1]])
    assert scorer.fit_transform(proba).tolist() == [[5, 2], [0, 0]]
    assert list(scorer.get_feature_names_out()) == list(MATRIX.services)
    with pytest.raises(NotFittedError):
        SupplyMatrixScorer(MATRIX).transform(proba)
