"""Score and group streams.

Every generator returns a :class:`Stream`: the scores, an optional
membership matrix when the construction fixes its own groups, and an
optional scripted prediction sequence for the adversarial examples.
Iterating a stream yields ``(t, g_t, tau_t)`` one round at a time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import GroupSpec, Transcript, parse_rounds_csv
from .exceptions import ConfigError, DataError
from .validation import check_positive_int, check_rate

STREAM_KINDS = ("iid", "example1", "example2", "lower_bound", "two_phase_shift", "csv")


@dataclass(frozen=True)
class Stream:
    tau: np.ndarray
    g: Optional[np.ndarray] = None
    scripted: Optional[np.ndarray] = None
    group_names: Optional[tuple] = None
    context: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.tau.shape[0]

    def __iter__(self):
        for t in range(len(self)):
            g = None if self.g is None else self.g[t]
            yield t + 1, g, float(self.tau[t])

    def scripted_transcript(self, q):
        """Transcript of the scripted predictor paired with this stream."""
        if self.scripted is None:
            raise ConfigError("stream has no scripted predictions")
        g = self.g if self.g is not None else np.ones((len(self), 1))
        return Transcript(g, self.tau, self.scripted, q, self.group_names)


# ---------------------------------------------------------------------------
# distributions


def _rejection(rng, draw, size, max_rounds=1000):
    out = np.empty(0)
    for _ in range(max_rounds):
        x = draw(max(size - out.size, 16) * 2)
        out = np.concatenate([out, x[(x >= 0.0) & (x <= 1.0)]])
        if out.size >= size:
            return out[:size]
    raise ConfigError("rejection sampler accepted too few draws; distribution "
                      "puts almost no mass on [0, 1]")


def sample_distribution(dist, size, rng):
    """Draw ``size`` scores in [0, 1].

    ``dist`` is a mapping with ``name`` in ``uniform`` (``low``, ``high``),
    ``beta`` (``a``, ``b`` and optional ``loc``, ``scale``) or ``discrete``
    (``values``, ``weights``). Shifted or scaled beta draws that leave [0, 1]
    are rejected and redrawn, which changes the nominal distribution.
    """
    name = dist.get("name")
    if name == "uniform":
        low, high = float(dist.get("low", 0.0)), float(dist.get("high", 1.0))
        if not 0.0 <= low < high <= 1.0:
            raise ConfigError(f"uniform needs 0 <= low < high <= 1, got ({low}, {high})")
        return rng.uniform(low, high, size)
    if name == "beta":
        a, b = float(dist.get("a", 1.0)), float(dist.get("b", 1.0))
        loc, scale = float(dist.get("loc", 0.0)), float(dist.get("scale", 1.0))
        if a <= 0 or b <= 0 or scale <= 0:
            raise ConfigError(f"beta needs a, b, scale > 0, got a={a}, b={b}, scale={scale}")
        return _rejection(rng, lambda m: loc + scale * rng.beta(a, b, m), size)
    if name == "discrete":
        values = np.asarray(dist.get("values", []), dtype=float)
        weights = np.asarray(dist.get("weights", np.ones(values.size)), dtype=float)
        if values.size == 0 or values.shape != weights.shape:
            raise ConfigError("discrete needs matching non-empty values and weights")
        if np.any((values < 0) | (values > 1)) or np.any(weights < 0) or weights.sum() <= 0:
            raise ConfigError("discrete values must lie in [0, 1] with nonnegative weights")
        return values[rng.choice(values.size, size=size, p=weights / weights.sum())]
    raise ConfigError(f"unknown distribution {name!r}")


def distribution_quantile(dist, q):
    """Exact ``q``-quantile for uniform and discrete specs."""
    q = check_rate(q)
    if dist["name"] == "uniform":
        low, high = float(dist.get("low", 0.0)), float(dist.get("high", 1.0))
        return low + q * (high - low)
    if dist["name"] == "discrete":
        values = np.asarray(dist["values"], dtype=float)
        weights = np.asarray(dist.get("weights", np.ones(values.size)), dtype=float)
        order = np.argsort(values)
        cdf = np.cumsum(weights[order]) / weights.sum()
        return float(values[order][np.searchsorted(cdf, q - 1e-12)])
    raise ConfigError(f"no closed-form quantile for {dist['name']!r}")


# ---------------------------------------------------------------------------
# streams


# Streams and learners tag their seed sequences differently so that a run
# using one seed for both does not feed the learner the scores' own draws.
STREAM_SEED_TAG = 0


def _rng(seed):
    if seed is None:
        raise ConfigError("stochastic streams need an explicit seed")
    return np.random.default_rng([STREAM_SEED_TAG, seed])


def iid_stream(T, distribution, seed):
    """``T`` i.i.d. scores. Groups come from a separate :class:`GroupSpec` list."""
    T = check_positive_int(T, "horizon T")
    return Stream(sample_distribution(distribution, T, _rng(seed)),
                  meta={"kind": "iid", "distribution": dict(distribution)})


def example1_stream(T):
    """Alternating scores 0.5 (odd rounds) and 1 (even rounds).

    The scripted predictor answers 0.4 and 0.9, which never covers yet has no
    external regret at q = 0.5.
    """
    T = check_positive_int(T, "horizon T")
    odd = (np.arange(1, T + 1) % 2) == 1
    return Stream(tau=np.where(odd, 0.5, 1.0),
                  g=np.ones((T, 1)),
                  scripted=np.where(odd, 0.4, 0.9),
                  group_names=("all",),
                  meta={"kind": "example1"})


def example2_stream(T, seed):
    """Contexts A/B drawn uniformly; score 0.5 on A and 1 on B.

    Groups are ``[A, B, all]``; the scripted predictor plays 0.4 on A and
    0.9 on B.
    """
    T = check_positive_int(T, "horizon T")
    is_a = _rng(seed).random(T) < 0.5
    g = np.column_stack([is_a, ~is_a, np.ones(T, dtype=bool)]).astype(float)
    return Stream(tau=np.where(is_a, 0.5, 1.0), g=g,
                  scripted=np.where(is_a, 0.4, 0.9),
                  group_names=("A", "B", "all"),
                  context=np.where(is_a, "A", "B"),
                  meta={"kind": "example2", "seed": seed})


def lower_bound_weights(T):
    t = np.arange(1, T + 1, dtype=float)
    w = np.zeros(T)
    w[1:] = 1.0 / (2.0 * np.sqrt(t[1:] - 1.0))
    return w


def lower_bound_stream(T):
    """Single real-valued group ``g_1 = 0``, ``g_t = 1 / (2 sqrt(t - 1))``
    with every score equal to 1. Drives GCACI's iterate to grow like sqrt(T).
    """
    T = check_positive_int(T, "horizon T", minimum=2)
    return Stream(tau=np.ones(T), g=lower_bound_weights(T)[:, None],
                  group_names=("decay",), meta={"kind": "lower_bound"})


def lower_bound_theta(T, q, eta=1.0):
    """Closed form ``theta_{T+1} = eta q sum_{j=1}^{T-1} 1/(2 sqrt j)`` on that stream."""
    j = np.arange(1, T, dtype=float)
    return eta * q * math.fsum(1.0 / (2.0 * np.sqrt(j)))


def two_phase_shift_stream(T, split, dist1, dist2, seed):
    """First ``ceil(split * T)`` scores from ``dist1``, the rest from ``dist2``."""
    T = check_positive_int(T, "horizon T")
    if not 0.0 < float(split) < 1.0:
        raise ConfigError(f"split must lie in (0, 1), got {split}")
    n1 = math.ceil(split * T)
    rng = _rng(seed)
    tau = np.concatenate([sample_distribution(dist1, n1, rng),
                          sample_distribution(dist2, T - n1, rng)])
    return Stream(tau, meta={"kind": "two_phase_shift", "split_round": n1 + 1})


def csv_ingest(path):
    """Read scores (and, if present, groups and predictions) from CSV.

    Scores must already be normalized into [0, 1]; min-max scaling of raw
    scores is the suggested convention.
    """
    g, tau, tau_hat = parse_rounds_csv(path)
    return Stream(tau=tau, g=g if g.shape[1] else None, scripted=tau_hat,
                  meta={"kind": "csv", "path": str(path)})


# ---------------------------------------------------------------------------
# groups


def _modular(i):
    return GroupSpec(
        name=f"mod{i}", kind="binary",
        generator=lambda t, past=None: 1.0 if t % i == 0 else 0.0,
        batch=lambda ts: (np.asarray(ts) % i == 0).astype(float))


def modular_groups(k):
    """Binary groups ``G_i`` active on rounds ``t`` with ``t % i == 0``, i = 1..k."""
    k = check_positive_int(k, "k")
    return [_modular(i) for i in range(1, k + 1)]


def all_rounds_group(name="all"):
    return GroupSpec(name=name, kind="binary",
                     generator=lambda t, past=None: 1.0,
                     batch=lambda ts: np.ones(len(ts)))


def make_stream(spec):
    """Build a stream from a config mapping with ``kind`` among
    :data:`STREAM_KINDS`."""
    spec = dict(spec)
    kind = spec.get("kind")
    T = spec.get("T")
    if kind == "iid":
        return iid_stream(T, spec.get("distribution", {"name": "uniform"}), spec.get("seed"))
    if kind == "example1":
        return example1_stream(T)
    if kind == "example2":
        return example2_stream(T, spec.get("seed"))
    if kind == "lower_bound":
        return lower_bound_stream(T)
    if kind == "two_phase_shift":
        return two_phase_shift_stream(
            T, spec.get("split", 0.5),
            spec.get("dist1", {"name": "uniform", "low": 0.0, "high": 0.5}),
            spec.get("dist2", {"name": "uniform", "low": 0.5, "high": 1.0}),
            spec.get("seed"))
    if kind == "csv":
        if "path" not in spec:
            raise ConfigError("csv stream needs a path")
        stream = csv_ingest(spec["path"])
        if T is not None and T < len(stream):
            stream = Stream(stream.tau[:T], None if stream.g is None else stream.g[:T],
                            None if stream.scripted is None else stream.scripted[:T],
                            stream.group_names, None, stream.meta)
        return stream
    raise ConfigError(f"unknown stream kind {kind!r}; choose from {STREAM_KINDS}")
