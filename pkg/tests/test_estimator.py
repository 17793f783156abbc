import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from fedlayers.estimator import FederatedGLClassifier, GLClassifier

TINY = dict(embedding_dim=4, blocks=1, heads=2, hidden=8, batches=3, epochs=3)


def _blobs(seed, n=45, d=3, labels=("no", "yes")):
    r = np.random.default_rng(seed)
    y = np.asarray(labels)[np.arange(n) % len(labels)]
    X = r.normal(size=(n, d)) + (np.arange(n) % len(labels))[:, None] * 2.0
    return X, y


def test_params_round_trip_through_clone():
    est = GLClassifier(hidden=32, lr=0.01)
    params = est.get_params()
    assert params["hidden"] == 32 and params["lr"] == 0.01
    assert clone(est).get_params() == params
    fed = FederatedGLClassifier(selector=("ff2",), eta=0.5)
    assert clone(fed).get_params()["selector"] == ("ff2",)


def test_fit_predict_with_string_labels():
    X, y = _blobs(0)
    est = GLClassifier(**TINY, lr=1e-2).fit(X, y)
    assert list(est.classes_) == ["no", "yes"]
    proba = est.predict_proba(X)
    assert proba.shape == (45, 2)
    np.testing.assert_allclose(proba.sum(axis=1), 1, atol=1e-12)
    assert set(est.predict(X)) <= {"no", "yes"}
    assert est.score(X, y) > 0.8


def test_multiclass_proba_shape():
    X, y = _blobs(1, n=60, labels=(3, 5, 9))
    est = GLClassifier(**TINY).fit(X, y)
    assert est.predict_proba(X).shape == (60, 3)


def test_not_fitted():
    with pytest.raises(NotFittedError):
        GLClassifier().predict(np.zeros((2, 3)))


def test_same_seed_same_predictions():
    X, y = _blobs(2)
    a = GLClassifier(**TINY, random_state=4).fit(X, y).predict_proba(X)
    b = GLClassifier(**TINY, random_state=4).fit(X, y).predict_proba(X)
    assert np.array_equal(a, b)


def test_federated_heterogeneous_clients():
    Xa, ya = _blobs(3, d=3, labels=(0, 1))
    Xb, yb = _blobs(4, d=5, labels=("a", "b", "c"))
    fed = FederatedGLClassifier(**TINY).fit([Xa, Xb], [ya, yb], ["left", "right"])
    assert fed.predict_proba(Xa, "left").shape == (45, 2)
    assert fed.predict_proba(Xb, "right").shape == (45, 3)
    assert set(fed.predict(Xb, "right")) <= {"a", "b", "c"}
    assert fed.round_log_.steps_per_client() == {"left": 9, "right": 9}
    left, right = fed.clients_["left"], fed.clients_["right"]
    for x, y in zip(left.partition.global_arrays(), right.partition.global_arrays()):
        assert np.array_equal(x, y)


def test_federated_length_mismatch():
    with pytest.raises(ValueError):
        FederatedGLClassifier().fit([np.zeros((4, 2))], [])
