"""Linear-Gaussian state-space primitives shared by the online learners.

The state is a Gaussian over linear predictor weights: a mean matrix of
shape (m, K) -- one column per output, K = 1 for regression -- and a
single m x m covariance shared by all K columns.  Two operations move it
forward:

* ``predict_step`` applies the variance-preserving parameter drift
  ``mean' = gamma * mean`` and ``cov' = gamma^2 * cov + (1 - gamma^2) *
  sigmaw2 * I``.  At ``gamma = 1`` the state is copied forward; at
  ``gamma = 0`` it is reset to the prior ``N(0, sigmaw2 * I)``.
* ``update_step`` folds in one observation ``(phi, y)`` through a
  rank-one Kalman update with shared denominator
  ``sigma2 + phi' cov phi``.

Everything here is a pure function of its arguments; per-step cost is
O(K m + m^2) and nothing larger than one m x m and one m x K array is
ever materialized.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, NumericError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Hyperparams:
    """Observation-noise variance ``sigma2`` and prior weight variance ``sigmaw2``.

    ``jitter`` optionally adds a small diagonal term after each rank-one
    update for ill-conditioned feature streams.  It defaults to 0: the
    recursions are algebraically PSD-preserving, so intervention is
    opt-in (and logged when applied).
    """

    sigma2: float
    sigmaw2: float
    jitter: float = 0.0

    def __post_init__(self) -> None:
        if not (self.sigma2 > 0.0):
            raise ConfigError(f"sigma2 must be > 0, got {self.sigma2}")
        if not (self.sigmaw2 > 0.0):
            raise ConfigError(f"sigmaw2 must be > 0, got {self.sigmaw2}")
        if self.jitter < 0.0:
            raise ConfigError(f"jitter must be >= 0, got {self.jitter}")

    @classmethod
    def defaults(cls, dim: int, num_outputs: int) -> "Hyperparams":
        """Default values sigma2 = 1/K and sigmaw2 = 1/m."""
        if dim < 1 or num_outputs < 1:
            raise ConfigError(
                f"need dim >= 1 and num_outputs >= 1, got ({dim}, {num_outputs})"
            )
        return cls(sigma2=1.0 / num_outputs, sigmaw2=1.0 / dim)


class PsdMatrix:
    """Dense symmetric positive-semidefinite m x m covariance.

    The wrapped array is re-symmetrized ((A + A') / 2) on construction,
    which is a bitwise no-op for already-symmetric input, so repeated
    wrapping does not drift.  PSD-ness is maintained algebraically by the
    operations in this module and checked in tests, not per step (an
    eigendecomposition would break the O(m^2) step budget).
    """

    __slots__ = ("values",)

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ConfigError(f"covariance must be square, got shape {values.shape}")
        self.values = (values + values.T) / 2.0

    @classmethod
    def scaled_identity(cls, dim: int, scale: float) -> "PsdMatrix":
        if dim < 1:
            raise ConfigError(f"dimension must be >= 1, got {dim}")
        return cls(scale * np.eye(dim))

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def matvec(self, phi: np.ndarray) -> np.ndarray:
        return self.values @ phi

    def quad_form(self, phi: np.ndarray) -> float:
        """phi' A phi, clamped at 0 to absorb rounding."""
        return max(float(phi @ self.values @ phi), 0.0)

    def copy(self) -> "PsdMatrix":
        out = object.__new__(PsdMatrix)
        out.values = self.values.copy()
        return out

    def max_asymmetry(self) -> float:
        return float(np.max(np.abs(self.values - self.values.T)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.values)[0])

    def max_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.values)[-1])

    def __repr__(self) -> str:  # pragma: no cover
        return f"PsdMatrix(dim={self.dim})"


def init_state(dim: int, num_outputs: int, hp: Hyperparams) -> tuple[np.ndarray, PsdMatrix]:
    """All-zero (m, K) mean and prior covariance sigmaw2 * I."""
    if dim < 1:
        raise ConfigError(f"feature dimension must be >= 1, got {dim}")
    if num_outputs < 1:
        raise ConfigError(f"output count must be >= 1, got {num_outputs}")
    mean = np.zeros((dim, num_outputs))
    cov = PsdMatrix.scaled_identity(dim, hp.sigmaw2)
    return mean, cov


def predict_step(
    mean: np.ndarray, cov: PsdMatrix, gamma: float, hp: Hyperparams
) -> tuple[np.ndarray, PsdMatrix]:
    """Parameter-drift transition toward the prior.

    Computed as ``cov' = sigmaw2 * I + gamma^2 * (cov - sigmaw2 * I)``,
    algebraically identical to ``gamma^2 * cov + (1 - gamma^2) * sigmaw2
    * I`` but exact when ``cov`` already equals ``sigmaw2 * I`` (the
    variance-preserving property holds bitwise).  ``gamma = 1`` returns
    copies of the input.
    """
    if not (0.0 <= gamma <= 1.0):
        raise DomainError(f"gamma must lie in [0, 1], got {gamma}")
    if gamma == 1.0:
        return mean.copy(), cov.copy()
    g2 = gamma * gamma
    prior = hp.sigmaw2 * np.eye(cov.dim)
    cov_pred = prior + g2 * (cov.values - prior)
    return gamma * mean, PsdMatrix(cov_pred)


def excess_quad_form(cov: PsdMatrix, phi: np.ndarray, sigmaw2: float) -> float:
    """phi' (A - sigmaw2 * I) phi, without forming the shifted matrix.

    Computed as ``phi @ (A phi - sigmaw2 * phi)`` so the result is
    exactly zero when A equals the stationary prior -- the same anchor
    the rewritten transition in ``predict_step`` preserves bitwise.
    The predicted scalar variance of any projection is then
    ``sigmaw2 * |phi|^2 + gamma^2 * excess``, and its gamma-derivative
    vanishes identically at the prior.
    """
    return float(phi @ (cov.matvec(phi) - sigmaw2 * phi))


def update_step(
    mean: np.ndarray,
    cov: PsdMatrix,
    phi: np.ndarray,
    y: np.ndarray,
    hp: Hyperparams,
) -> tuple[np.ndarray, PsdMatrix]:
    """Rank-one Kalman update shared across the K output columns.

    With ``d = sigma2 + phi' A phi`` computed once:

        mean' = mean + (A phi / d) (y' - phi' mean)
        A'    = A - (A phi)(A phi)' / d

    A zero feature vector leaves the state unchanged.  Non-finite inputs
    raise ``NumericError`` before anything is computed, so callers'
    state is never half-updated.
    """
    phi = np.asarray(phi, dtype=np.float64)
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if phi.shape != (mean.shape[0],):
        raise DomainError(
            f"feature vector has shape {phi.shape}, state expects ({mean.shape[0]},)"
        )
    if y.shape != (mean.shape[1],):
        raise DomainError(
            f"target has shape {y.shape}, state expects ({mean.shape[1]},)"
        )
    if not np.all(np.isfinite(phi)) or not np.all(np.isfinite(y)):
        raise NumericError("non-finite feature or target in update")

    cov_phi = cov.matvec(phi)
    denom = hp.sigma2 + float(phi @ cov_phi)
    gain = cov_phi / denom
    resid = y - phi @ mean
    new_mean = mean + np.outer(gain, resid)
    new_cov_values = cov.values - np.outer(cov_phi, gain)
    if hp.jitter > 0.0:
        logger.debug("applying diagonal jitter %g after update", hp.jitter)
        new_cov_values = new_cov_values + hp.jitter * np.eye(cov.dim)
    return new_mean, PsdMatrix(new_cov_values)
