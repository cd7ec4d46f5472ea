"""Gaussian naive Bayes, k-nearest neighbours and L2 logistic regression."""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logsumexp

from .base import GlareClassifier, zscore_fit


class GaussianNaiveBayes(GlareClassifier):
    def __init__(self, var_smoothing=1e-9):
        self.var_smoothing = var_smoothing

    def _fit(self, X, y):
        floor = self.var_smoothing * max(float(X.var(axis=0).max()), 1.0)
        self.means_ = np.array([X[y == c].mean(axis=0) for c in (0, 1)])
        self.vars_ = np.array([X[y == c].var(axis=0) for c in (0, 1)]) + floor
        self.log_prior_ = np.log(np.array([np.mean(y == 0), np.mean(y == 1)]))

    def _score(self, X):
        ll = []
        for c in (0, 1):
            v = self.vars_[c]
            ll.append(self.log_prior_[c] - 0.5 * np.sum(np.log(2 * np.pi * v) + (X - self.means_[c]) ** 2 / v, axis=1))
        ll = np.column_stack(ll)
        return np.exp(ll[:, 1] - logsumexp(ll, axis=1))

    def _get_state(self):
        return {"means": self.means_.tolist(), "vars": self.vars_.tolist(), "log_prior": self.log_prior_.tolist()}

    def _set_state(self, state):
        self.means_ = np.asarray(state["means"])
        self.vars_ = np.asarray(state["vars"])
        self.log_prior_ = np.asarray(state["log_prior"])


class KNearestNeighbors(GlareClassifier):
    """Glare fraction among the ``k`` nearest z-scored training rows (ties by row order)."""

    def __init__(self, k=5):
        self.k = k

    def _fit(self, X, y):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        self.mu_, self.sd_ = zscore_fit(X)
        self.X_ = (X - self.mu_) / self.sd_
        self.y_ = y.astype(np.float64)

    def _score(self, X):
        Z = (X - self.mu_) / self.sd_
        d2 = ((Z[:, None, :] - self.X_[None, :, :]) ** 2).sum(axis=2)
        k = min(self.k, self.X_.shape[0])
        nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
        return self.y_[nearest].mean(axis=1)

    def _get_state(self):
        return {"mu": self.mu_.tolist(), "sd": self.sd_.tolist(), "X": self.X_.tolist(), "y": self.y_.tolist()}

    def _set_state(self, state):
        self.mu_ = np.asarray(state["mu"])
        self.sd_ = np.asarray(state["sd"])
        self.X_ = np.asarray(state["X"], dtype=np.float64).reshape(-1, self.mu_.size)
        self.y_ = np.asarray(state["y"], dtype=np.float64)


class LogisticRegression(GlareClassifier):
    """L2-penalised logistic regression on z-scored features (intercept unpenalised)."""

    def __init__(self, C=1.0, max_iter=1000):
        self.C = C
        self.max_iter = max_iter

    def _fit(self, X, y):
        if self.C <= 0:
            raise ValueError("C must be positive")
        self.mu_, self.sd_ = zscore_fit(X)
        Z = (X - self.mu_) / self.sd_
        n, m = Z.shape
        lam = 1.0 / self.C

        def loss(w):
            z = Z @ w[1:] + w[0]
            # log(1 + e^z) - y z, computed stably
            nll = np.sum(np.logaddexp(0.0, z) - y * z)
            r = expit(z) - y
            grad = np.concatenate([[r.sum()], Z.T @ r + lam * w[1:]])
            return nll + 0.5 * lam * w[1:] @ w[1:], grad

        res = minimize(loss, np.zeros(m + 1), jac=True, method="L-BFGS-B",
                       options={"maxiter": self.max_iter})
        self.intercept_ = float(res.x[0])
        self.coef_ = res.x[1:]

    def _score(self, X):
        return expit(((X - self.mu_) / self.sd_) @ self.coef_ + self.intercept_)

    def _get_state(self):
        return {"mu": self.mu_.tolist(), "sd": self.sd_.tolist(),
                "coef": self.coef_.tolist(), "intercept": self.intercept_}

    def _set_state(self, state):
        self.mu_ = np.asarray(state["mu"])
        self.sd_ = np.asarray(state["sd"])
        self.coef_ = np.asarray(state["coef"])
        self.intercept_ = float(state["intercept"])
