"""scikit-learn style wrappers around the homogeneous integrator and the basin classifier.

These let the ODE flow and the attractor tagging slot into pipelines and
grid searches; the underlying modules stay plain functions.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .model import default_params, validate_params
from .ode import integrate_picard, integrate_rk
from .portrait import EXTINCTION, NONTRIVIAL, UNDECIDED, classify_states, embed


def _resolve(params):
    p = default_params() if params is None else params
    bad = validate_params(p)
    if bad:
        raise ValueError("; ".join(f"{v.clause} ({v.subject})" for v in bad))
    return p


class HomogeneousSimulator(TransformerMixin, BaseEstimator):
    """Map initial states ``(phi_T, phi_H, phi_M)`` to the state at ``t_end``.

    ``method`` is ``"rk4"`` (batched, step ``dt``) or ``"picard"``.
    """

    def __init__(self, params=None, t_end: float = 1.0, dt: float = 1e-2, method: str = "rk4"):
        self.params = params
        self.t_end = t_end
        self.dt = dt
        self.method = method

    def fit(self, X=None, y=None):
        if self.method not in ("rk4", "picard"):
            raise ValueError(f"unknown method {self.method!r}")
        self.params_ = _resolve(self.params)
        self.n_features_in_ = 3
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=float)
        if X.shape[1] != 3:
            raise ValueError(f"expected 3 columns (phi_T, phi_H, phi_M), got {X.shape[1]}")
        if self.method == "rk4":
            traj = integrate_rk(X, self.params_, self.t_end, self.dt, record_every=10**9)
        else:
            traj = integrate_picard(X, self.params_, self.t_end)
        return traj.states[-1]


class BasinClassifier(ClassifierMixin, BaseEstimator):
    """Predict the attractor reached from single-population states ``(phi_M, phi_alpha)``.

    Labels are ``"extinction"``, ``"nontrivial"`` and, when ``t_max`` is too
    short to decide, ``"undecided"``. ``fit`` ignores its data; the model is
    fully determined by ``params``.
    """

    def __init__(self, params=None, alpha: str = "H", t_max: float = 500.0, dt: float = 0.05):
        self.params = params
        self.alpha = alpha
        self.t_max = t_max
        self.dt = dt

    def fit(self, X=None, y=None):
        if self.alpha not in ("T", "H"):
            raise ValueError("alpha must be 'T' or 'H'")
        self.params_ = _resolve(self.params)
        self.classes_ = np.array([EXTINCTION, NONTRIVIAL, UNDECIDED], dtype=object)
        self.n_features_in_ = 2
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=float)
        if X.shape[1] != 2:
            raise ValueError(f"expected 2 columns (phi_M, phi_alpha), got {X.shape[1]}")
        states = embed(X[:, 0], X[:, 1], self.alpha)
        return classify_states(states, self.alpha, self.params_, t_max=self.t_max, dt=self.dt)
