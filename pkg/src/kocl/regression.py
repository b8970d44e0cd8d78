"""Online Bayesian linear regression with a learnable forgetting coefficient.

The filter tracks a Gaussian posterior over an m-dimensional weight
vector.  Each step scores the incoming point under the one-step-ahead
predictive density N(y | phi' m-, phi' A- phi + sigma2), nudges the
forgetting coefficient gamma = exp(-0.5 * delta) by gradient ascent on
that log density, applies the parameter-drift transition with the new
gamma, and folds the observation in with a rank-one update.

Two mean-transition policies are supported: the default shrinks the
predicted mean toward zero (``mean- = gamma * mean``); the
``NON_SHRINKING`` variant keeps ``mean- = mean`` (an empirical-Bayes
choice for tracking signals far from zero) while the covariance follows
the usual drift either way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DomainError, NumericError
from .filter_core import (
    Hyperparams,
    PsdMatrix,
    excess_quad_form,
    init_state,
    predict_step,
    update_step,
)

LOG_2PI = math.log(2.0 * math.pi)


class MeanTransition(Enum):
    SHRINKING = "shrinking"
    NON_SHRINKING = "non_shrinking"


@dataclass(frozen=True)
class GaussianPrediction:
    """One-step-ahead predictive density; variance includes observation noise."""

    mean: float
    variance: float

    def log_density(self, y: float) -> float:
        r = y - self.mean
        return -0.5 * (LOG_2PI + math.log(self.variance) + r * r / self.variance)


class RegressionFilter:
    """Single-output Kalman recursion over predictor weights.

    Parameters
    ----------
    dim : feature dimension m.
    hp : noise/prior hyperparameters; defaults to sigma2=1, sigmaw2=1/m.
    delta0 : initial forgetting parameter, gamma = exp(-0.5 * delta).
    delta_lr : SGD step size for the per-step delta update.
    mean_transition : SHRINKING or NON_SHRINKING predicted-mean policy.
    """

    def __init__(
        self,
        dim: int,
        hp: Hyperparams | None = None,
        *,
        delta0: float = 0.0,
        delta_lr: float = 1.0,
        mean_transition: MeanTransition = MeanTransition.SHRINKING,
    ):
        if hp is None:
            hp = Hyperparams.defaults(dim, 1)
        self.hp = hp
        self.mean, self.cov = init_state(dim, 1, hp)
        if delta0 < 0.0:
            raise DomainError(f"delta must be >= 0, got {delta0}")
        if delta_lr <= 0.0:
            raise DomainError(f"delta_lr must be > 0, got {delta_lr}")
        self.delta = float(delta0)
        self.delta_lr = float(delta_lr)
        self.mean_transition = mean_transition

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def gamma(self) -> float:
        """Forgetting coefficient exp(-0.5 * delta), in (0, 1]."""
        return math.exp(-0.5 * self.delta)

    def predicted_state(self) -> tuple[np.ndarray, PsdMatrix]:
        """State after the drift transition with the current gamma, not committed."""
        mean_pred, cov_pred = predict_step(self.mean, self.cov, self.gamma, self.hp)
        if self.mean_transition is MeanTransition.NON_SHRINKING:
            mean_pred = self.mean.copy()
        return mean_pred, cov_pred

    def predict(self, phi: np.ndarray) -> GaussianPrediction:
        """Predictive density for the next target at feature vector ``phi``."""
        phi = self._check_phi(phi)
        mean_pred, cov_pred = self.predicted_state()
        mu = float(phi @ mean_pred[:, 0])
        var = self.hp.sigma2 + cov_pred.quad_form(phi)
        return GaussianPrediction(mean=mu, variance=var)

    def delta_gradient(self, phi: np.ndarray, y: float) -> float:
        """d/d(delta) of the predictive log density at the current state.

        The gamma-dependence runs through mu = gamma * (phi' mean) (held
        at phi' mean for the non-shrinking variant) and var = sigma2 + c
        + gamma^2 * q with c = sigmaw2 * |phi|^2 and q = phi' (A -
        sigmaw2 I) phi; the posterior (mean, A) itself is a constant.
        """
        phi = self._check_phi(phi)
        g = self.gamma
        a = float(phi @ self.mean[:, 0])
        c = self.hp.sigmaw2 * float(phi @ phi)
        q = excess_quad_form(self.cov, phi, self.hp.sigmaw2)
        shrinking = self.mean_transition is MeanTransition.SHRINKING
        mu = g * a if shrinking else a
        var = self.hp.sigma2 + c + g * g * q
        resid = y - mu
        d_mu = (resid / var) * (a if shrinking else 0.0)
        d_var = (resid * resid - var) / (2.0 * var * var) * (2.0 * g * q)
        return (d_mu + d_var) * (-0.5 * g)

    def observe(self, phi: np.ndarray, y: float, *, learn_delta: bool = True) -> float:
        """Score, adapt delta, transition, and update on one point.

        Returns the log predictive density of ``y`` computed before any
        parameter or state change (prequential order).  A numeric error
        leaves the filter untouched.
        """
        phi = self._check_phi(phi)
        y = float(y)
        if not math.isfinite(y):
            raise NumericError("non-finite target in observe")
        score = self.predict(phi).log_density(y)
        old_delta = self.delta
        if learn_delta:
            self.apply_delta_step(self.delta_gradient(phi, y))
        try:
            self.advance(phi, y, transition=True)
        except Exception:
            self.delta = old_delta
            raise
        return score

    def apply_delta_step(self, grad: float) -> None:
        """One SGD ascent step on delta, clipped at 0 from below."""
        self.delta = max(0.0, self.delta + self.delta_lr * float(grad))

    def advance(self, phi: np.ndarray, y: float, *, transition: bool = True) -> None:
        """Commit one Kalman step: optional drift transition, then rank-one update."""
        phi = self._check_phi(phi)
        if transition:
            mean_pred, cov_pred = self.predicted_state()
        else:
            mean_pred, cov_pred = self.mean, self.cov
        self.mean, self.cov = update_step(
            mean_pred, cov_pred, phi, np.array([float(y)]), self.hp
        )

    def _check_phi(self, phi: np.ndarray) -> np.ndarray:
        phi = np.asarray(phi, dtype=np.float64)
        if phi.shape != (self.dim,):
            raise DomainError(f"feature vector must have shape ({self.dim},), got {phi.shape}")
        return phi


def blr_posterior(
    features: np.ndarray, targets: np.ndarray, hp: Hyperparams
) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form stationary (gamma = 1) Bayesian linear regression posterior.

    A = (sigma2^-1 * sum phi phi' + sigmaw2^-1 * I)^-1 and
    m = A * sigma2^-1 * sum phi y, solved directly.  The sigmaw2^-1 * I
    term keeps the system nonsingular for any amount of data, including
    none.  This is the independent reference the recursive filter is
    checked against.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise DomainError(f"features must be 2-D (n, m), got shape {features.shape}")
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    n, m = features.shape
    if targets.shape != (n,):
        raise DomainError(f"targets must have shape ({n},), got {targets.shape}")
    precision = features.T @ features / hp.sigma2 + np.eye(m) / hp.sigmaw2
    cov = np.linalg.inv(precision)
    cov = (cov + cov.T) / 2.0
    mean = cov @ (features.T @ targets) / hp.sigma2
    return mean, cov
