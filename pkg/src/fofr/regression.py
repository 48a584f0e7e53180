"""Scikit-learn style estimators wrapping the functional pipeline.

``FunctionOnFunctionRegression`` accepts plain (n, G) arrays for predictor
and response curves sampled on a shared equispaced design, handles centering
internally, and exposes the inference procedures as methods. Raw curves go
in; means are restored on prediction.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core import center_sample, empirical_covariance, make_grid
from .eigensystem import solve_eigensystem
from .estimator import fit, fit_scalar
from .inference import (
    bootstrap_ensemble,
    bootstrap_ensemble_scalar,
    classical_test_bt,
    extremal_sets,
    plrt,
    pointwise_interval,
    prediction_band,
    relevant_test,
    relevant_test_scalar,
    simultaneous_region,
)
from .simulation import default_truncation

__all__ = ["FunctionOnFunctionRegression", "ScalarOnFunctionRegression"]


class FunctionOnFunctionRegression(RegressorMixin, BaseEstimator):
    """Penalized RKHS estimator of the slope surface with sup-norm inference.

    Parameters
    ----------
    n_components : int, optional
        Basis truncation per direction; defaults to ceil(n^(2/5)).
    lambda_ : float, optional
        Fixed smoothing parameter; chosen by GCV when omitted.
    lambda_grid : array-like, optional
        Search grid for GCV (positive values).
    bootstrap_replicates : int, default=300
        Multiplier-bootstrap sample size Q for the inference methods.
    alpha : float, default=0.05
        Default level for bands and tests.
    random_state : int, optional
        Seed for all bootstrap draws; required by the stochastic methods.
    """

    def __init__(
        self,
        n_components=None,
        lambda_=None,
        lambda_grid=None,
        bootstrap_replicates=300,
        alpha=0.05,
        random_state=None,
    ):
        self.n_components = n_components
        self.lambda_ = lambda_
        self.lambda_grid = lambda_grid
        self.bootstrap_replicates = bootstrap_replicates
        self.alpha = alpha
        self.random_state = random_state

    def _resolved_grid(self):
        if self.lambda_ is not None:
            if self.lambda_ <= 0:
                raise ValueError("fixed lambda_ must be > 0")
            return np.asarray([self.lambda_], dtype=float)
        return self.lambda_grid

    def fit(self, X, Y):
        """Fit from raw curve matrices of equal shape (n, G)."""
        X = check_array(X, dtype=np.float64)
        Y = check_array(Y, dtype=np.float64)
        if X.shape != Y.shape:
            raise ValueError(f"X and Y must share shape, got {X.shape} vs {Y.shape}")
        n, G = X.shape
        self.grid_ = make_grid(G)
        self.X_ = center_sample(X, self.grid_)
        self.Y_ = center_sample(Y, self.grid_)
        self.covariance_ = empirical_covariance(self.X_)
        v = self.n_components if self.n_components is not None else default_truncation(n)
        self.eigensystem_ = solve_eigensystem(self.covariance_, v, self.grid_)
        self.model_ = fit(self.X_, self.Y_, self.eigensystem_, self._resolved_grid())
        self.coef_ = self.model_.beta_hat.values
        self.n_features_in_ = G
        self._ensembles = {}
        return self

    def predict(self, X):
        """Conditional-mean response curves for new predictor curves."""
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.grid_.size:
            raise ValueError(f"X must have {self.grid_.size} columns, got {X.shape[1]}")
        centered = X - self.X_.mean.values
        return self.Y_.mean.values + self.grid_.weight * centered @ self.coef_

    def _ensemble(self, Q=None, random_state=None):
        check_is_fitted(self, "model_")
        Q = Q if Q is not None else self.bootstrap_replicates
        seed = random_state if random_state is not None else self.random_state
        if seed is None:
            raise ValueError("bootstrap methods need random_state (at init or call)")
        key = (Q, seed)
        if key not in self._ensembles:
            self._ensembles[key] = bootstrap_ensemble(
                self.X_, self.Y_, self.model_, Q, seed, self._resolved_grid()
            )
        return self._ensembles[key]

    def confidence_band(self, alpha=None, Q=None, random_state=None):
        """Simultaneous confidence band for the slope surface."""
        alpha = alpha if alpha is not None else self.alpha
        return simultaneous_region(self._ensemble(Q, random_state), self.model_, alpha)

    def pointwise_interval(self, s_index, t_index, alpha=None):
        alpha = alpha if alpha is not None else self.alpha
        return pointwise_interval(
            self.model_, self.eigensystem_, s_index, t_index, alpha
        )

    def _as_surface(self, beta_star):
        if beta_star is None:
            return self.grid_.surface(np.zeros((self.grid_.size, self.grid_.size)))
        return self.grid_.surface(np.asarray(beta_star, dtype=float))

    def classical_test(
        self, beta_star=None, method="bt", alpha=None, Q=None, random_state=None
    ):
        """Test equality with a given surface (zero when omitted)."""
        alpha = alpha if alpha is not None else self.alpha
        surface = self._as_surface(beta_star)
        if method == "bt":
            band = simultaneous_region(self._ensemble(Q, random_state), self.model_, alpha)
            return classical_test_bt(surface, band)
        if method == "plrt":
            return plrt(surface, self.X_, self.Y_, self.eigensystem_, 0.0, alpha)
        raise ValueError(f"method must be 'bt' or 'plrt', got {method!r}")

    def relevant_test_sup(
        self, delta, beta_star=None, alpha=None, c=None, Q=None, random_state=None
    ):
        """Test whether the sup deviation from beta_star exceeds delta."""
        alpha = alpha if alpha is not None else self.alpha
        surface = self._as_surface(beta_star)
        masks = extremal_sets(self.model_, surface, c)
        return relevant_test(surface, delta, alpha, self._ensemble(Q, random_state), masks)

    def prediction_band(self, x0, alpha=None, Q=None, random_state=None):
        """Simultaneous band for the conditional mean at a raw predictor curve."""
        alpha = alpha if alpha is not None else self.alpha
        x0 = np.asarray(x0, dtype=float).ravel()
        centered = self.grid_.curve(x0 - self.X_.mean.values)
        band = prediction_band(
            centered, self.model_, self._ensemble(Q, random_state), alpha
        )
        shift = self.Y_.mean.values
        return type(band)(
            lower=self.grid_.curve(band.lower.values + shift),
            upper=self.grid_.curve(band.upper.values + shift),
            alpha=band.alpha,
            quantile=band.quantile,
            Q=band.Q,
        )


class ScalarOnFunctionRegression(RegressorMixin, BaseEstimator):
    """Scalar-response special case: functional predictors, scalar targets."""

    def __init__(
        self,
        n_components=None,
        lambda_=None,
        lambda_grid=None,
        bootstrap_replicates=300,
        alpha=0.05,
        random_state=None,
    ):
        self.n_components = n_components
        self.lambda_ = lambda_
        self.lambda_grid = lambda_grid
        self.bootstrap_replicates = bootstrap_replicates
        self.alpha = alpha
        self.random_state = random_state

    def _resolved_grid(self):
        if self.lambda_ is not None:
            if self.lambda_ <= 0:
                raise ValueError("fixed lambda_ must be > 0")
            return np.asarray([self.lambda_], dtype=float)
        return self.lambda_grid

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        y = np.asarray(y, dtype=float).ravel()
        if y.size != X.shape[0]:
            raise ValueError("y must have one entry per predictor curve")
        n, G = X.shape
        self.grid_ = make_grid(G)
        self.X_ = center_sample(X, self.grid_)
        self.y_mean_ = float(y.mean())
        self.y_ = y - self.y_mean_
        self.covariance_ = empirical_covariance(self.X_)
        v = self.n_components if self.n_components is not None else default_truncation(n)
        self.eigensystem_ = solve_eigensystem(self.covariance_, v, self.grid_)
        self.model_ = fit_scalar(self.X_, self.y_, self.eigensystem_, self._resolved_grid())
        self.coef_ = self.model_.beta_hat.values
        self.n_features_in_ = G
        self._ensembles = {}
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        centered = X - self.X_.mean.values
        return self.y_mean_ + self.grid_.weight * centered @ self.coef_

    def _ensemble(self, Q=None, random_state=None):
        check_is_fitted(self, "model_")
        Q = Q if Q is not None else self.bootstrap_replicates
        seed = random_state if random_state is not None else self.random_state
        if seed is None:
            raise ValueError("bootstrap methods need random_state (at init or call)")
        key = (Q, seed)
        if key not in self._ensembles:
            self._ensembles[key] = bootstrap_ensemble_scalar(
                self.X_, self.y_, self.model_, Q, seed, self._resolved_grid()
            )
        return self._ensembles[key]

    def relevant_test_sup(
        self, delta, beta_star=None, alpha=None, c=None, Q=None, random_state=None
    ):
        """Test whether the sup deviation of the slope curve exceeds delta."""
        alpha = alpha if alpha is not None else self.alpha
        if beta_star is None:
            curve = self.grid_.curve(np.zeros(self.grid_.size))
        else:
            curve = self.grid_.curve(np.asarray(beta_star, dtype=float))
        return relevant_test_scalar(
            curve, delta, alpha, self._ensemble(Q, random_state), self.model_, c
        )
