"""Multi-class online learner on shared-covariance Kalman statistics.

K class-weight columns share a single m x m covariance, so one step
costs O(Km + m^2) like the univariate case.  Class probabilities come
from a Monte-Carlo average of softmaxes over the Gaussian logit
distribution N(mu, s^2 I); a positive calibration scalar ``alpha``
rescales the logits inside each softmax.  Both the forgetting parameter
``delta`` and ``alpha`` adapt online by SGD ascent on the log predictive
density.  The loss value and its gradients share the same noise draws
(common random numbers), which makes the gradients exact pathwise
derivatives of the realized estimate and lets finite-difference checks
agree to tight tolerances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericError
from .filter_core import (
    Hyperparams,
    excess_quad_form,
    init_state,
    predict_step,
    update_step,
)

# A class can receive numerically zero Monte-Carlo mass with finite S;
# the floor keeps log predictive values finite.
PROB_FLOOR = 1e-12
ALPHA_MIN = 1e-6

Seed = int | np.random.SeedSequence


@dataclass(frozen=True)
class LogitMoments:
    """Gaussian logit distribution N(mu, s2 * I) after the drift transition.

    The variance is isotropic over the K classes because all class
    columns share one covariance.
    """

    mu: np.ndarray
    s2: float


@dataclass(frozen=True)
class ClassStepRecord:
    """Outcome of one scored-then-trained step."""

    log_predictive: float
    probs: np.ndarray
    gamma: float

    @property
    def predicted_class(self) -> int:
        # argmax; ties resolve to the lowest class index
        return int(np.argmax(self.probs))


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def mc_class_probs(
    moments: LogitMoments, alpha: float, n_samples: int, seed: Seed
) -> np.ndarray:
    """Monte-Carlo class probabilities: mean of softmax(alpha*mu + alpha*s*eps).

    Deterministic given ``seed``.  With ``s2 = 0`` the estimator
    collapses to a single exact softmax and no draws are made.  At
    ``alpha = 1`` the computed logits are bitwise equal to the
    uncalibrated ``mu + s * eps``.
    """
    if n_samples < 1:
        raise DomainError(f"n_samples must be >= 1, got {n_samples}")
    if not (alpha > 0.0):
        raise DomainError(f"alpha must be > 0, got {alpha}")
    if moments.s2 <= 0.0:
        return _softmax(alpha * moments.mu)
    s = math.sqrt(moments.s2)
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal((n_samples, moments.mu.shape[0]))
    logits = alpha * moments.mu + (alpha * s) * eps
    return _softmax(logits).mean(axis=0)


def floored_log(p: float) -> float:
    return math.log(max(float(p), PROB_FLOOR))


class ClassifierFilter:
    """Online multi-class filter over shared-covariance weight columns.

    Parameters
    ----------
    dim : feature dimension m.
    num_classes : number of classes K; targets are one-hot rows.
    hp : noise/prior hyperparameters; defaults to sigma2=1/K, sigmaw2=1/m.
    delta0 : initial forgetting parameter, gamma = exp(-0.5 * delta).
    alpha0 : initial calibration scale, > 0.
    delta_lr, alpha_lr : SGD step sizes.
    num_mc_samples : Monte-Carlo sample count S per evaluation.
    rng_seed : base seed; step draws depend only on (rng_seed, draw index),
        so a run replays bitwise.
    """

    def __init__(
        self,
        dim: int,
        num_classes: int,
        hp: Hyperparams | None = None,
        *,
        delta0: float = 0.0,
        alpha0: float = 1.0,
        delta_lr: float = 0.1,
        alpha_lr: float = 0.1,
        num_mc_samples: int = 32,
        rng_seed: int = 0,
    ):
        if hp is None:
            hp = Hyperparams.defaults(dim, num_classes)
        self.hp = hp
        self.means, self.cov = init_state(dim, num_classes, hp)
        if delta0 < 0.0:
            raise DomainError(f"delta must be >= 0, got {delta0}")
        if not (alpha0 > 0.0):
            raise DomainError(f"alpha must be > 0, got {alpha0}")
        if delta_lr <= 0.0 or alpha_lr <= 0.0:
            raise DomainError("learning rates must be > 0")
        if num_mc_samples < 1:
            raise DomainError(f"num_mc_samples must be >= 1, got {num_mc_samples}")
        if rng_seed < 0:
            raise DomainError(f"rng_seed must be >= 0, got {rng_seed}")
        self.delta = float(delta0)
        self.alpha = float(alpha0)
        self.delta_lr = float(delta_lr)
        self.alpha_lr = float(alpha_lr)
        self.num_mc_samples = int(num_mc_samples)
        self.rng_seed = int(rng_seed)
        self._draw_index = 0

    @property
    def dim(self) -> int:
        return self.means.shape[0]

    @property
    def num_classes(self) -> int:
        return self.means.shape[1]

    @property
    def gamma(self) -> float:
        return math.exp(-0.5 * self.delta)

    def next_step_seed(self) -> np.random.SeedSequence:
        """Fresh per-evaluation seed; reuse it to share draws across calls."""
        seed = np.random.SeedSequence(entropy=(self.rng_seed, self._draw_index))
        self._draw_index += 1
        return seed

    def logit_moments(self, phi: np.ndarray) -> LogitMoments:
        """Predicted logit distribution at ``phi``: mu = gamma * M'phi,
        s2 = sigmaw2 * |phi|^2 + gamma^2 * phi'(A - sigmaw2 I)phi.

        This is the scalar form of running ``predict_step`` with the
        current gamma and projecting; the predicted matrices themselves
        are never materialized for scoring.
        """
        phi = self._check_phi(phi)
        g = self.gamma
        c = self.hp.sigmaw2 * float(phi @ phi)
        q = excess_quad_form(self.cov, phi, self.hp.sigmaw2)
        s2 = c + g * g * q
        return LogitMoments(mu=g * (self.means.T @ phi), s2=max(s2, 0.0))

    def predict_probs(self, phi: np.ndarray, seed: Seed) -> np.ndarray:
        return mc_class_probs(self.logit_moments(phi), self.alpha, self.num_mc_samples, seed)

    def log_predictive(self, phi: np.ndarray, class_k: int, seed: Seed) -> float:
        """Floored log of the Monte-Carlo probability of ``class_k``."""
        class_k = self._check_class(class_k)
        return floored_log(self.predict_probs(phi, seed)[class_k])

    def delta_alpha_gradients(
        self, phi: np.ndarray, class_k: int, seed: Seed
    ) -> tuple[float, float]:
        """Gradients of the log predictive w.r.t. delta and alpha.

        Must be called with the same ``seed`` as the matching
        probability evaluation: the eps draws are shared, so these are
        exact derivatives of that realized estimate.  The posterior
        (means, cov) is treated as constant; the gamma dependence runs
        through the predicted logit moments, the alpha dependence
        through the logit scaling.
        """
        phi = self._check_phi(phi)
        class_k = self._check_class(class_k)
        g = self.gamma
        alpha = self.alpha
        a = self.means.T @ phi
        c = self.hp.sigmaw2 * float(phi @ phi)
        q = excess_quad_form(self.cov, phi, self.hp.sigmaw2)
        s2 = c + g * g * q
        mu = g * a
        if s2 <= 0.0:
            # degenerate spread: a single exact softmax, no draws
            p = _softmax(alpha * mu)
            p_hat = float(p[class_k])
            d_alpha_hat = p_hat * (float(mu[class_k]) - float(p @ mu))
            d_gamma_hat = alpha * p_hat * (float(a[class_k]) - float(p @ a))
        else:
            s = math.sqrt(s2)
            rng = np.random.default_rng(seed)
            eps = rng.standard_normal((self.num_mc_samples, self.num_classes))
            logits = alpha * mu + (alpha * s) * eps
            probs = _softmax(logits)
            # per-sample logit derivatives: dZ/dalpha = Z / alpha,
            # dZ/dgamma = alpha * a + alpha * (gamma * q / s) * eps
            grad_a = logits / alpha
            grad_g = alpha * a + (alpha * (g * q / s)) * eps
            p_hat = float(probs[:, class_k].mean())
            d_alpha_hat = float(
                (probs[:, class_k] * (grad_a[:, class_k] - (probs * grad_a).sum(axis=1))).mean()
            )
            d_gamma_hat = float(
                (probs[:, class_k] * (grad_g[:, class_k] - (probs * grad_g).sum(axis=1))).mean()
            )
        if p_hat <= PROB_FLOOR:
            # inside the floor the loss is constant
            return 0.0, 0.0
        d_alpha = d_alpha_hat / p_hat
        d_delta = (d_gamma_hat / p_hat) * (-0.5 * g)
        return d_delta, d_alpha

    def observe_class(
        self,
        phi: np.ndarray,
        y_onehot: np.ndarray,
        *,
        learn_delta: bool = True,
        learn_alpha: bool = False,
    ) -> ClassStepRecord:
        """Score one point, adapt (delta, alpha), transition, update.

        The returned log predictive and probabilities are computed
        before any parameter or state change (prequential order).  When
        both learning flags are set, delta and alpha take a simultaneous
        step from one shared gradient evaluation.
        """
        phi = self._check_phi(phi)
        class_k = self._check_onehot(y_onehot)
        seed = self.next_step_seed()
        probs = self.predict_probs(phi, seed)
        score = floored_log(probs[class_k])
        old_delta, old_alpha = self.delta, self.alpha
        if learn_delta or learn_alpha:
            d_delta, d_alpha = self.delta_alpha_gradients(phi, class_k, seed)
            if learn_delta:
                self.apply_delta_step(d_delta)
            if learn_alpha:
                self.apply_alpha_step(d_alpha)
        try:
            self.advance(phi, class_k, transition=True)
        except Exception:
            self.delta, self.alpha = old_delta, old_alpha
            raise
        return ClassStepRecord(log_predictive=score, probs=probs, gamma=self.gamma)

    def apply_delta_step(self, grad: float) -> None:
        """One SGD ascent step on delta, clipped at 0 from below."""
        self.delta = max(0.0, self.delta + self.delta_lr * float(grad))

    def apply_alpha_step(self, grad: float) -> None:
        """One SGD ascent step on alpha, clipped away from 0."""
        self.alpha = max(ALPHA_MIN, self.alpha + self.alpha_lr * float(grad))

    def advance(self, phi: np.ndarray, class_k: int, *, transition: bool = True) -> None:
        """Commit one Kalman step on a one-hot target for ``class_k``."""
        phi = self._check_phi(phi)
        class_k = self._check_class(class_k)
        if transition:
            means_pred, cov_pred = predict_step(self.means, self.cov, self.gamma, self.hp)
        else:
            means_pred, cov_pred = self.means, self.cov
        y = np.zeros(self.num_classes)
        y[class_k] = 1.0
        self.means, self.cov = update_step(means_pred, cov_pred, phi, y, self.hp)

    def _check_phi(self, phi: np.ndarray) -> np.ndarray:
        phi = np.asarray(phi, dtype=np.float64)
        if phi.shape != (self.dim,):
            raise DomainError(f"feature vector must have shape ({self.dim},), got {phi.shape}")
        if not np.all(np.isfinite(phi)):
            raise NumericError("non-finite feature vector")
        return phi

    def _check_class(self, class_k: int) -> int:
        class_k = int(class_k)
        if not 0 <= class_k < self.num_classes:
            raise DomainError(
                f"class index {class_k} out of range [0, {self.num_classes})"
            )
        return class_k

    def _check_onehot(self, y_onehot: np.ndarray) -> int:
        y = np.asarray(y_onehot, dtype=np.float64)
        if y.shape != (self.num_classes,):
            raise DomainError(
                f"one-hot target must have shape ({self.num_classes},), got {y.shape}"
            )
        is_onehot = np.all((y == 0.0) | (y == 1.0)) and float(y.sum()) == 1.0
        if not is_onehot:
            raise DomainError("target is not a one-hot vector")
        return int(np.argmax(y))
