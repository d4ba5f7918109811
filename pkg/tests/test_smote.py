import numpy as np
import pytest

from kiteupset.errors import NumericalFailure
from kiteupset.features import FeatureMatrix
from kiteupset.smote import balance, mahalanobis_neighbors, regularized_covariance, smote_oversample


def test_two_points_stay_on_segment(rng):
    a, b = np.array([0.0, 1.0]), np.array([4.0, 3.0])
    out = smote_oversample(np.vstack([a, b]), k=1, n_new=200, rng=rng)
    d = b - a
    for p in out:
        rel = p - a
        assert abs(rel[0] * d[1] - rel[1] * d[0]) < 1e-9
        t = float(rel @ d / (d @ d))
        assert -1e-12 <= t <= 1.0 + 1e-12


def test_duplicated_point_reproduces_itself(rng):
    minority = np.array([[1.0, 2.0], [1.0, 2.0]])
    out = smote_oversample(minority, k=1, n_new=10, rng=rng)
    assert np.allclose(out, [1.0, 2.0])


def test_mahalanobis_neighbor_differs_from_euclidean():
    x = np.array([[0.0, 0.0], [5.0, 0.0], [0.0, 2.0]])
    euclid = np.argsort(np.linalg.norm(x - x[0], axis=1))[1]
    assert euclid == 2
    nn = mahalanobis_neighbors(x, 1, cov=np.diag([100.0, 1.0]))
    assert nn[0, 0] == 1


def test_neighbors_exclude_the_row_itself():
    x = np.array([[0.0], [0.0], [1.0], [3.0]])
    nn = mahalanobis_neighbors(x, 2)
    for i, row in enumerate(nn):
        assert i not in row


def test_too_few_minority_samples():
    with pytest.raises(ValueError):
        mahalanobis_neighbors(np.zeros((2, 2)), 2)


def test_regularized_covariance():
    x = np.array([[0.0, 0.0], [2.0, 0.0], [4.0, 0.0]])
    cov = regularized_covariance(x)
    assert cov[0, 0] == pytest.approx(4.0)
    assert cov[1, 1] > 0.0
    np.linalg.cholesky(cov)
    assert np.array_equal(regularized_covariance(np.ones((3, 2))), np.eye(2))
    with pytest.raises(NumericalFailure):
        regularized_covariance(np.array([[0.0, np.inf], [1.0, 2.0]]))


def test_balance_fills_minority_to_ratio(rng):
    x = np.vstack([rng.standard_normal((20, 3)), rng.standard_normal((5, 3)) + 3.0])
    y = np.array([1] * 20 + [-1] * 5)
    fm = FeatureMatrix(x, y, ("a", "b", "c"))
    balanced = balance(fm, k=3, rng=rng)
    assert balanced.counts() == {-1: 20, 1: 20}
    assert int(balanced.synthetic.sum()) == 15
    assert np.all(balanced.y[balanced.synthetic] == -1)
    lo, hi = x[20:].min(axis=0), x[20:].max(axis=0)
    synth = balanced.x[balanced.synthetic]
    assert np.all(synth >= lo - 1e-12) and np.all(synth <= hi + 1e-12)

    half = balance(fm, k=3, rng=rng, ratio=0.5)
    assert half.counts()[-1] == 10


def test_balance_noop_when_already_balanced(rng):
    fm = FeatureMatrix(rng.standard_normal((4, 2)), np.array([1, 1, -1, -1]), ("a", "b"))
    assert balance(fm, k=1, rng=rng) is fm


def test_balance_single_minority_sample(rng):
    fm = FeatureMatrix(rng.standard_normal((4, 2)), np.array([1, 1, 1, -1]), ("a", "b"))
    with pytest.raises(ValueError):
        balance(fm, k=1, rng=rng)
