import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from fibrosim.estimators import BasinClassifier, HomogeneousSimulator
from fibrosim.ode import integrate_rk


def test_simulator_matches_integrator(p0):
    X = np.array([[0.1, 0.5, 0.25], [0.0, 0.3, 0.0]])
    out = HomogeneousSimulator(t_end=1.0, dt=1e-2).fit_transform(X)
    ref = integrate_rk(X, p0, 1.0, 1e-2).final
    np.testing.assert_array_equal(out, ref)


def test_picard_method_close_to_rk():
    X = np.array([[0.1, 0.5, 0.25]])
    a = HomogeneousSimulator(t_end=0.5, method="picard").fit_transform(X)
    b = HomogeneousSimulator(t_end=0.5, dt=1e-3).fit_transform(X)
    np.testing.assert_allclose(a, b, atol=1e-8)


def test_params_and_clone():
    est = HomogeneousSimulator(t_end=3.0)
    assert clone(est).get_params()["t_end"] == 3.0
    est.set_params(dt=0.5)
    assert est.dt == 0.5


def test_not_fitted_and_bad_input(p0):
    with pytest.raises(NotFittedError):
        HomogeneousSimulator().transform([[0, 0.3, 0]])
    with pytest.raises(ValueError):
        HomogeneousSimulator().fit().transform([[0, 0.3]])
    with pytest.raises(ValueError):
        HomogeneousSimulator(method="euler").fit()
    with pytest.raises(ValueError):
        HomogeneousSimulator(params=p0.replace(tau=0.0)).fit()


def test_classifier_predicts_basins():
    clf = BasinClassifier(alpha="H").fit()
    pred = clf.predict([[0.02, 0.05], [0.3, 0.3], [0.95, 0.005]])
    assert list(pred) == ["extinction", "nontrivial", "extinction"]
    assert set(pred) <= set(clf.classes_)


def test_classifier_in_pipeline():
    pipe = make_pipeline(BasinClassifier(alpha="T"))
    pipe.fit(np.zeros((1, 2)))
    assert list(pipe.predict([[0.3, 0.3]])) == ["nontrivial"]
    with pytest.raises(ValueError):
        BasinClassifier(alpha="X").fit()
