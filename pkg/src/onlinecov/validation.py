"""Input validation helpers used by estimators, auditors and the harness."""
import numbers

import numpy as np
from sklearn.utils import check_array

from .exceptions import ConfigError, DataError, DimensionError


def check_rate(q):
    """Return ``q`` as float after checking it lies in the open interval (0, 1)."""
    if isinstance(q, bool) or not isinstance(q, numbers.Real):
        raise ConfigError(f"coverage rate must be a real number, got {q!r}")
    q = float(q)
    if not 0.0 < q < 1.0:
        raise ConfigError(f"coverage rate q must lie in (0, 1), got {q}")
    return q


def check_step(eta):
    """Step sizes are restricted to (0, 1]; the norm envelope assumes it."""
    if isinstance(eta, bool) or not isinstance(eta, numbers.Real):
        raise ConfigError(f"step size must be a real number, got {eta!r}")
    eta = float(eta)
    if not 0.0 < eta <= 1.0:
        raise ConfigError(f"step size eta must lie in (0, 1], got {eta}")
    return eta


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_score(tau):
    tau = float(tau)
    if not 0.0 <= tau <= 1.0 or np.isnan(tau):
        raise DataError(f"score must lie in [0, 1], got {tau}")
    return tau


def check_scores(tau):
    """Validate a 1-D array of nonconformity scores in [0, 1]."""
    tau = check_array(tau, ensure_2d=False, dtype=np.float64,
                      ensure_all_finite=True, ensure_min_samples=0)
    if tau.ndim != 1:
        raise DataError(f"scores must be 1-D, got shape {tau.shape}")
    bad = np.flatnonzero((tau < 0.0) | (tau > 1.0))
    if bad.size:
        i = int(bad[0])
        raise DataError(f"score at round {i + 1} is {tau[i]}, outside [0, 1]")
    return tau


def check_group_vector(g, k):
    g = np.asarray(g, dtype=np.float64)
    if g.ndim != 1 or g.shape[0] != k:
        raise DimensionError(
            f"group vector has shape {g.shape}, expected ({k},)")
    if np.any((g < 0.0) | (g > 1.0)) or not np.all(np.isfinite(g)):
        raise DataError("group weights must lie in [0, 1]")
    return g


def check_group_matrix(G, n_rounds=None, k=None):
    """Validate a ``(T, k)`` membership matrix with entries in [0, 1]."""
    G = check_array(G, dtype=np.float64, ensure_all_finite=True,
                    ensure_min_samples=0, ensure_min_features=1)
    if n_rounds is not None and G.shape[0] != n_rounds:
        raise DimensionError(
            f"group matrix has {G.shape[0]} rows, expected {n_rounds}")
    if k is not None and G.shape[1] != k:
        raise DimensionError(
            f"group matrix has {G.shape[1]} columns, expected k={k}")
    bad = np.argwhere((G < 0.0) | (G > 1.0))
    if bad.size:
        t, i = (int(v) for v in bad[0])
        raise DataError(
            f"group weight g_{i + 1} at round {t + 1} is {G[t, i]}, outside [0, 1]")
    return G


def check_stream(G, tau, k=None):
    """Validate a paired stream: ``G`` may be ``None`` meaning all-ones, k=1."""
    tau = check_scores(tau)
    if G is None:
        G = np.ones((tau.shape[0], 1 if k is None else k))
    else:
        G = check_group_matrix(G, n_rounds=tau.shape[0], k=k)
    return G, tau
