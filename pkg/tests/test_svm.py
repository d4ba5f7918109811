import numpy as np
import pytest

from kiteupset.errors import SchemaError, SvmTrainingError
from kiteupset.scoring import mcc_from_labels
from kiteupset.svm import SvmModel, kernel_matrix, load_model, save_model, smo_solve, svm_predict, train_svm

XOR_X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
XOR_Y = np.array([1, 1, -1, -1])


def _single_sv(bias: float) -> SvmModel:
    return SvmModel(
        support_vectors=np.array([[0.0]]),
        alphas=np.array([2.0]),
        labels=np.array([1.0]),
        bias=bias,
        sigma2=1.0,
        c=10.0,
        feature_names=("a",),
        selected=(0,),
        mean=np.array([0.0]),
        scale=np.array([1.0]),
    )


def test_separated_pair():
    model = train_svm(np.array([[0.0], [10.0]]), np.array([1, -1]), sigma2=0.1, c=10.0)
    assert model.n_support == 2
    assert svm_predict(model, np.array([0.0]))[1] == 1
    assert svm_predict(model, np.array([10.0]))[1] == -1


def test_xor_is_learned():
    model = train_svm(XOR_X, XOR_Y, sigma2=0.5, c=10.0)
    y_hat = np.where(model.decision(XOR_X) >= 0.0, 1, -1)
    assert mcc_from_labels(XOR_Y, y_hat) == pytest.approx(1.0)


def test_duplicated_rows_leave_decision_unchanged(rng):
    x = np.vstack([rng.normal(2.0, 0.5, (10, 2)), rng.normal(-2.0, 0.5, (10, 2))])
    y = np.array([1] * 10 + [-1] * 10)
    once = train_svm(x, y, sigma2=2.0, c=1e3, tol=1e-10)
    twice = train_svm(np.vstack([x, x]), np.concatenate([y, y]), sigma2=2.0, c=1e3, tol=1e-10)
    grid = np.array([[a, b] for a in np.linspace(-3, 3, 7) for b in np.linspace(-3, 3, 7)])
    assert np.allclose(once.decision(grid), twice.decision(grid), atol=1e-6)


def test_dual_constraints_hold(rng):
    x = rng.standard_normal((30, 2))
    y = np.where(x[:, 0] + 0.3 * rng.standard_normal(30) > 0, 1, -1)
    sol = smo_solve(kernel_matrix(x, x, 1.0), y, c=2.0)
    assert np.all(sol.alpha >= 0.0) and np.all(sol.alpha <= 2.0)
    assert float(sol.alpha @ y) == pytest.approx(0.0, abs=1e-9)
    assert sol.gap < 1e-3


def test_only_support_vectors_are_stored():
    model = train_svm(XOR_X, XOR_Y, sigma2=0.5, c=10.0)
    assert np.all(model.alphas > 0.0)
    assert model.support_vectors.shape == (model.n_support, 2)


def test_non_convergence_raises():
    with pytest.raises(SvmTrainingError):
        train_svm(XOR_X, XOR_Y, sigma2=0.5, c=10.0, max_iter=1)


def test_single_class_rejected():
    with pytest.raises(ValueError):
        train_svm(XOR_X, np.ones(4), sigma2=1.0, c=1.0)


def test_predict_on_support_vector():
    assert svm_predict(_single_sv(0.0), np.array([0.0])) == (2.0, 1)


def test_zero_decision_counts_as_nominal():
    f, y_hat = svm_predict(_single_sv(-2.0), np.array([0.0]))
    assert f == 0.0
    assert y_hat == 1


def test_far_query_falls_back_to_bias():
    f, y_hat = svm_predict(_single_sv(-0.3), np.array([100.0]))
    assert f == pytest.approx(-0.3)
    assert y_hat == -1


def test_schema_mismatch():
    model = _single_sv(0.0)
    with pytest.raises(SchemaError):
        svm_predict(model, np.array([0.0, 1.0]))
    with pytest.raises(SchemaError):
        svm_predict(model, np.zeros((2, 1)))


def test_selected_columns_are_used():
    x = np.column_stack([np.arange(8.0), np.repeat([1.0, -1.0], 4)])
    model = train_svm(x, np.repeat([1, -1], 4), sigma2=1.0, c=10.0, feature_names=("noise", "sign"), selected=(1,))
    assert model.selected == (1,)
    assert svm_predict(model, np.array([100.0, 1.0]))[1] == 1
    assert svm_predict(model, np.array([-100.0, -1.0]))[1] == -1


def test_saved_model_reproduces_decision(tmp_path):
    model = train_svm(XOR_X, XOR_Y, sigma2=0.5, c=10.0)
    path = tmp_path / "svm.json"
    save_model(path, model, {"config_hash": "abc"})
    loaded = load_model(path)
    probe = np.array([[0.2, 0.9], [0.7, 0.1]])
    assert np.allclose(loaded.decision(probe), model.decision(probe), rtol=0, atol=1e-12)


def test_load_rejects_unknown_schema(tmp_path):
    path = tmp_path / "svm.json"
    save_model(path, _single_sv(0.0))
    text = path.read_text().replace("svm/1", "svm/0")
    path.write_text(text)
    with pytest.raises(SchemaError):
        load_model(path)
