"""Online threshold learners.

Two layers live here. The functional layer (``gcaci_init``/``gcaci_update``,
``ftrl_init``/``ftrl_step``, ``aci_step``, ``swap_predict``/``swap_update``)
advances one round at a time on explicit state values. The estimator layer
wraps the same rules in scikit-learn style classes whose ``fit`` runs the
whole online protocol over a stream and keeps the path of iterates.

Estimators take ``X`` as the ``(T, k)`` group-membership matrix and ``y`` as
the realized scores. Passing ``X=None`` means a single all-ones group.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .core import Grid, Transcript, pinball_loss
from .exceptions import ConfigError, DataError, DimensionError, NumericalError
from .validation import (check_group_vector, check_positive_int, check_rate,
                         check_score, check_step, check_stream)

__all__ = [
    "ThetaState", "gcaci_init", "gcaci_predict", "gcaci_update",
    "Regularizer", "euclidean_regularizer", "hyperbolic_regularizer",
    "get_regularizer", "FTRLState", "ftrl_init", "ftrl_step", "aci_step",
    "SwapLearnerState", "swap_init", "swap_predict", "swap_update",
    "GroupConditionalACI", "AdaptiveConformalInference", "FTRLCoverage",
    "SwapRegretQuantile", "ScriptedPredictor", "stationary_distribution",
]


# ---------------------------------------------------------------------------
# GCACI, one round at a time


@dataclass(frozen=True)
class ThetaState:
    theta: np.ndarray
    eta: float
    q: float
    t: int = 1

    @property
    def k(self):
        return self.theta.shape[0]


def _readonly(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def gcaci_init(k, q, eta):
    """Zero parameter vector of length ``k`` at round 1."""
    k = check_positive_int(k, "k")
    return ThetaState(_readonly(np.zeros(k)), check_step(eta), check_rate(q), 1)


def gcaci_predict(state, g):
    g = check_group_vector(g, state.k)
    return float(state.theta @ g)


def gcaci_update(state, g, tau):
    """Update A (``theta + eta q g``) when the prediction falls short of ``tau``,
    otherwise Update B (``theta - eta (1 - q) g``)."""
    g = check_group_vector(g, state.k)
    tau = check_score(tau)
    if state.theta @ g < tau:
        theta = state.theta + state.eta * state.q * g
    else:
        theta = state.theta - state.eta * (1.0 - state.q) * g
    return replace(state, theta=_readonly(theta), t=state.t + 1)


def aci_step(state, tau):
    """One round of scalar ACI: the ``k = 1``, ``g = [1]`` case of GCACI."""
    if state.k != 1:
        raise DimensionError(f"ACI state must have k=1, got k={state.k}")
    one = np.ones(1)
    return gcaci_predict(state, one), gcaci_update(state, one, tau)


# ---------------------------------------------------------------------------
# FTRL with a mirror-map regularizer


@dataclass(frozen=True)
class Regularizer:
    """Strictly convex regularizer given by its value, gradient and the
    inverse of its gradient (the mirror map)."""

    name: str
    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    inv_grad: Callable[[np.ndarray], np.ndarray]

    def validate(self, k, random_state=0, n_checks=20, atol=1e-9):
        """Round-trip ``inv_grad(grad(theta)) == theta`` on random points."""
        rng = np.random.default_rng(random_state)
        for _ in range(n_checks):
            theta = rng.normal(scale=3.0, size=k)
            back = np.asarray(self.inv_grad(np.asarray(self.grad(theta))), dtype=float)
            if back.shape != theta.shape or not np.allclose(back, theta, rtol=0, atol=atol):
                raise ConfigError(
                    f"regularizer {self.name!r} has no valid inverse gradient: "
                    f"round trip of {theta} gave {back}")
        return self


def euclidean_regularizer(eta):
    """``R(theta) = ||theta||^2 / (2 eta)``; FTRL with it is GCACI."""
    eta = check_step(eta)
    return Regularizer(
        "euclidean",
        value=lambda th: float(th @ th) / (2.0 * eta),
        grad=lambda th: th / eta,
        inv_grad=lambda z: eta * z,
    )


def hyperbolic_regularizer(eta):
    """``R(theta) = sum(cosh(theta)) / eta``. Grows exponentially, so the
    iterates move logarithmically in the accumulated gradient."""
    eta = check_step(eta)
    return Regularizer(
        "hyperbolic",
        value=lambda th: float(np.sum(np.cosh(th))) / eta,
        grad=lambda th: np.sinh(th) / eta,
        inv_grad=lambda z: np.arcsinh(eta * z),
    )


_REGULARIZERS = {"euclidean": euclidean_regularizer,
                 "hyperbolic": hyperbolic_regularizer}


def get_regularizer(name, eta):
    if isinstance(name, Regularizer):
        return name
    try:
        return _REGULARIZERS[name](eta)
    except KeyError:
        raise ConfigError(
            f"unknown regularizer {name!r}; choose from {sorted(_REGULARIZERS)}") from None


@dataclass(frozen=True)
class FTRLState:
    """``grad_sum`` is the running sum of linear-loss gradients."""

    regularizer: Regularizer
    q: float
    grad_sum: np.ndarray
    theta: np.ndarray
    t: int = 1

    @property
    def k(self):
        return self.grad_sum.shape[0]

    @property
    def regularizer_gradient(self):
        """``grad R(theta_t)``, equal to ``-grad_sum`` by first-order optimality."""
        return -self.grad_sum


def ftrl_init(k, q, regularizer):
    k = check_positive_int(k, "k")
    regularizer.validate(k)
    zero = np.zeros(k)
    return FTRLState(regularizer, check_rate(q), _readonly(zero),
                     _readonly(regularizer.inv_grad(-zero)), 1)


def ftrl_step(state, g, tau):
    """Predict with the current leader, then fold in this round's gradient.

    Returns ``(prediction, new_state)``.
    """
    g = check_group_vector(g, state.k)
    tau = check_score(tau)
    pred = float(state.theta @ g)
    # linear-loss gradient: -q g when the score escapes, (1 - q) g when covered
    grad_sum = state.grad_sum + g * (float(tau <= pred) - state.q)
    theta = state.regularizer.inv_grad(-grad_sum)
    return pred, replace(state, grad_sum=_readonly(grad_sum),
                         theta=_readonly(theta), t=state.t + 1)


# ---------------------------------------------------------------------------
# Swap-regret meta-learner over a grid


class SwapLearnerState:
    """Full-information swap-regret reduction over the levels of a grid.

    One multiplicative-weights sub-learner per level; row ``a`` of ``Q`` is
    sub-learner ``a``'s distribution and the learner plays from the
    stationary distribution ``p = p Q``. Sub-learner ``a`` is charged the
    pinball loss vector scaled by ``p[a]``.
    """

    max_iter = 10_000
    tol = 1e-10

    def __init__(self, grid, q, horizon=None, random_state=None):
        self.grid = grid
        self.q = check_rate(q)
        self.horizon = None if horizon is None else check_positive_int(horizon, "horizon")
        self.rng = learner_rng(random_state)
        m = len(grid)
        self.levels = grid.levels
        self.cum_loss = np.zeros((m, m))
        self.t = 0
        self.last_action = None
        self.Q = np.full((m, m), 1.0 / m)
        self.p = np.full(m, 1.0 / m)

    @property
    def learning_rate(self):
        m = len(self.grid)
        steps = self.horizon if self.horizon is not None else max(self.t, 1)
        return math.sqrt(math.log(m) / steps)

    def _refresh(self):
        logits = -self.learning_rate * self.cum_loss
        logits -= logits.max(axis=1, keepdims=True)
        Q = np.exp(logits)
        Q /= Q.sum(axis=1, keepdims=True)
        self.Q = Q
        self.p = stationary_distribution(Q, self.p, self.max_iter, self.tol)

    def predict(self):
        cdf = np.cumsum(self.p)
        idx = int(np.searchsorted(cdf, self.rng.random() * cdf[-1], side="right"))
        idx = min(idx, len(self.p) - 1)
        self.last_action = idx
        return float(self.levels[idx])

    def update(self, tau):
        tau = check_score(tau)
        losses = pinball_loss(self.levels, tau, self.q)
        self.cum_loss += np.outer(self.p, losses)
        self.t += 1
        self._refresh()
        return self

    def stationarity_gap(self):
        return float(np.abs(self.p - self.p @ self.Q).sum())


def stationary_distribution(Q, p0=None, max_iter=10_000, tol=1e-10):
    """Fixed point ``p = p Q`` of a row-stochastic matrix by power iteration."""
    m = Q.shape[0]
    p = np.full(m, 1.0 / m) if p0 is None else np.asarray(p0, dtype=float)
    delta = np.inf
    for it in range(1, max_iter + 1):
        nxt = p @ Q
        nxt /= nxt.sum()
        delta = np.abs(nxt - p).sum()
        p = nxt
        if delta <= tol:
            return p
    raise NumericalError(
        f"power iteration did not converge in {max_iter} iterations "
        f"(last L1 step {delta:.3e}, tolerance {tol:.1e}, matrix size {m})")


LEARNER_SEED_TAG = 1


def learner_rng(random_state):
    """Generator for a learner's internal randomization.

    Integer seeds are mixed with a learner tag so the draws stay independent
    of a score stream built from the same integer.
    """
    if isinstance(random_state, np.random.Generator):
        return random_state
    if random_state is None:
        return np.random.default_rng()
    return np.random.default_rng([LEARNER_SEED_TAG, int(random_state)])


def swap_init(n, q, horizon=None, random_state=None):
    return SwapLearnerState(Grid(n), q, horizon, random_state)


def swap_predict(state):
    return state.predict()


def swap_update(state, tau):
    return state.update(tau)


# ---------------------------------------------------------------------------
# Estimators



class _OnlineEstimator(BaseEstimator):
    """Shared plumbing for the online estimators.

    Subclasses implement ``_start(k)``, ``predict_one(g)`` and
    ``update_one(g, tau, prediction)``. ``partial_fit`` validates a batch and
    feeds it through that per-round protocol, which the harness also drives
    directly.
    """

    _state_attrs = ()

    def _reset(self):
        for attr in self._state_attrs + ("predictions_", "groups_seen_", "scores_seen_"):
            self.__dict__.pop(attr, None)

    @property
    def n_groups_(self):
        check_is_fitted(self, "groups_seen_")
        return self.groups_seen_.shape[1]

    def start(self, k):
        """Reset to a fresh state for ``k`` groups."""
        self._reset()
        self._start(check_positive_int(k, "k"))
        self.groups_seen_ = np.empty((0, k))
        self.scores_seen_ = np.empty(0)
        self.predictions_ = np.empty(0)
        return self

    def fit(self, X, y):
        """Run the online protocol over the stream from a fresh state.

        Parameters
        ----------
        X : array-like of shape (T, k) or None
            Group membership weights per round; ``None`` means one all-ones
            group.
        y : array-like of shape (T,)
            Realized scores in [0, 1].

        Returns
        -------
        self
        """
        self._reset()
        return self.partial_fit(X, y)

    def partial_fit(self, X, y):
        """Continue the online protocol from the current state."""
        k = self.groups_seen_.shape[1] if hasattr(self, "groups_seen_") else None
        G, tau = check_stream(X, y, k=k)
        if k is None:
            self.start(G.shape[1])
        preds = np.empty(tau.shape[0])
        for t in range(tau.shape[0]):
            g = G[t]
            preds[t] = pred = self.predict_one(g)
            self.update_one(g, tau[t], pred)
        self.record(G, tau, preds)
        return self

    def record(self, G, tau, preds):
        """Append finished rounds to the stored history."""
        self.groups_seen_ = np.vstack([self.groups_seen_, G])
        self.scores_seen_ = np.concatenate([self.scores_seen_, tau])
        self.predictions_ = np.concatenate([self.predictions_, preds])
        self._finish()
        return self

    def _finish(self):
        pass

    def transcript(self, group_names=None):
        """Transcript of every round seen since the last ``fit``."""
        check_is_fitted(self, "predictions_")
        return Transcript(self.groups_seen_, self.scores_seen_, self.predictions_,
                          self.q, group_names)

    @property
    def coverage_(self):
        check_is_fitted(self, "predictions_")
        return float(np.mean(self.predictions_ >= self.scores_seen_))


class _ThetaEstimator(_OnlineEstimator):
    """Estimators carrying a parameter vector ``theta_`` and its path."""

    _state_attrs = ("theta_", "theta_path_", "_path")

    def _finish(self):
        if self.record_path:
            self.theta_path_ = np.array(self._path)

    def predict(self, X):
        """Thresholds ``<theta, g>`` for new rows under the current iterate."""
        check_is_fitted(self, "theta_")
        G = np.ones((1, 1)) if X is None else np.asarray(X, dtype=float)
        if G.ndim == 1:
            G = G[None, :]
        if G.shape[1] != self.theta_.shape[0]:
            raise DimensionError(
                f"expected {self.theta_.shape[0]} group columns, got {G.shape[1]}")
        return G @ self.theta_

    @property
    def norm_trace_(self):
        """``||theta_t||_inf`` for ``t = 1 .. T+1``."""
        check_is_fitted(self, "theta_path_")
        return np.abs(self.theta_path_).max(axis=1)


class GroupConditionalACI(_ThetaEstimator):
    """Group-conditional adaptive conformal inference.

    Online gradient descent on the pinball loss of ``<theta, g_t>``. After
    ``T`` rounds every group ``i`` satisfies
    ``|Cov_i - q| = |theta_{T+1, i}| / (eta T_i)``.

    Parameters
    ----------
    q : float, default=0.9
        Target coverage rate in (0, 1).
    eta : float, default=1.0
        Step size in (0, 1].
    record_path : bool, default=True
        Keep every iterate in ``theta_path_``. Needed for norm traces.

    Attributes
    ----------
    theta_ : ndarray of shape (k,)
        Current iterate, i.e. ``theta_{T+1}`` after ``T`` rounds.
    theta_path_ : ndarray of shape (T + 1, k)
        Row ``t - 1`` holds ``theta_t``; the last row is ``theta_{T+1}``.
    predictions_ : ndarray of shape (T,)
    """

    def __init__(self, q=0.9, eta=1.0, record_path=True):
        self.q = q
        self.eta = eta
        self.record_path = record_path

    def _start(self, k):
        q, eta = check_rate(self.q), check_step(self.eta)
        self._up, self._down = eta * q, eta * (1.0 - q)
        self.theta_ = np.zeros(k)
        self._path = [self.theta_.copy()] if self.record_path else None

    def predict_one(self, g):
        return float(self.theta_ @ g)

    def update_one(self, g, tau, prediction):
        if prediction < tau:
            self.theta_ += self._up * g
        else:
            self.theta_ -= self._down * g
        if self._path is not None:
            self._path.append(self.theta_.copy())


class AdaptiveConformalInference(GroupConditionalACI):
    """Scalar ACI: GCACI with the single all-ones group. ``X`` is ignored."""

    def partial_fit(self, X, y):
        y = np.asarray(y, dtype=float).reshape(-1)
        return super().partial_fit(np.ones((y.shape[0], 1)), y)

    def predict(self, X=None):
        check_is_fitted(self, "theta_")
        n = 1 if X is None else len(X)
        return np.full(n, self.theta_[0])


class FTRLCoverage(_ThetaEstimator):
    """Follow-the-regularized-leader on the linearized pinball loss.

    The leader is computed in closed form through the mirror map,
    ``theta_t = inv_grad_R(-sum of past gradients)``.

    Parameters
    ----------
    q : float, default=0.9
    eta : float, default=1.0
        Scale passed to named regularizers.
    regularizer : {"euclidean", "hyperbolic"} or Regularizer
    record_path : bool, default=True
    """

    _state_attrs = _ThetaEstimator._state_attrs + ("grad_sum_", "regularizer_")

    def __init__(self, q=0.9, eta=1.0, regularizer="euclidean", record_path=True):
        self.q = q
        self.eta = eta
        self.regularizer = regularizer
        self.record_path = record_path

    def _start(self, k):
        self._q = check_rate(self.q)
        self.regularizer_ = get_regularizer(self.regularizer, self.eta).validate(k)
        self.grad_sum_ = np.zeros(k)
        self.theta_ = np.asarray(self.regularizer_.inv_grad(-self.grad_sum_), dtype=float)
        self._path = [self.theta_.copy()] if self.record_path else None

    def predict_one(self, g):
        return float(self.theta_ @ g)

    def update_one(self, g, tau, prediction):
        # linear-loss gradient: -q g when the score escapes, (1 - q) g when covered
        self.grad_sum_ += g * ((1.0 if tau <= prediction else 0.0) - self._q)
        self.theta_ = np.asarray(self.regularizer_.inv_grad(-self.grad_sum_), dtype=float)
        if self._path is not None:
            self._path.append(self.theta_.copy())

    @property
    def regularizer_gradient_(self):
        """``grad R(theta_{T+1})``; equals ``sum_t g_t (q - 1[tau_t <= tau_hat_t])``."""
        check_is_fitted(self, "grad_sum_")
        return -self.grad_sum_


class SwapRegretQuantile(_OnlineEstimator):
    """Randomized swap-regret learner predicting levels of a grid.

    Group weights, if given, are recorded in the transcript but do not
    influence predictions.

    Parameters
    ----------
    q : float, default=0.9
    n : int, default=20
        Grid resolution; predictions lie in ``{0, 1/n, ..., 1}``.
    horizon : int or None, default=None
        Known horizon fixes the sub-learner rate at ``sqrt(ln(n+1)/horizon)``;
        ``None`` uses the anytime rate ``sqrt(ln(n+1)/t)``.
    random_state : int or None
    """

    _state_attrs = ("state_", "max_stationarity_gap_")

    def __init__(self, q=0.9, n=20, horizon=None, random_state=None):
        self.q = q
        self.n = n
        self.horizon = horizon
        self.random_state = random_state

    def _start(self, k):
        self.state_ = swap_init(self.n, self.q, self.horizon, self.random_state)
        self.max_stationarity_gap_ = 0.0

    def predict_one(self, g=None):
        return self.state_.predict()

    def update_one(self, g, tau, prediction):
        self.state_.update(tau)
        gap = self.state_.stationarity_gap()
        if gap > self.max_stationarity_gap_:
            self.max_stationarity_gap_ = gap

    @property
    def distribution_(self):
        check_is_fitted(self, "state_")
        return self.state_.p.copy()

    def predict(self, X=None):
        """Draw levels from the current distribution without updating it."""
        check_is_fitted(self, "state_")
        n = 1 if X is None else len(X)
        cdf = np.cumsum(self.state_.p)
        u = self.state_.rng.random(n) * cdf[-1]
        idx = np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)
        return self.state_.levels[idx]


class ScriptedPredictor(_OnlineEstimator):
    """Replays a fixed prediction sequence; used for the adversarial examples
    and for re-auditing externally produced predictions."""

    _state_attrs = ("_cursor",)

    def __init__(self, predictions=None, q=0.5):
        self.predictions = predictions
        self.q = q

    def _start(self, k):
        if self.predictions is None:
            raise ConfigError("scripted predictor needs a prediction sequence")
        self._script = np.asarray(self.predictions, dtype=float)
        self._cursor = 0

    def predict_one(self, g=None):
        if self._cursor >= self._script.shape[0]:
            raise DataError("scripted predictions exhausted")
        return float(self._script[self._cursor])

    def update_one(self, g, tau, prediction):
        self._cursor += 1
