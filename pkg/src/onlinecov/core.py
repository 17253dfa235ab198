"""Transcripts, groups, grids and the pinball loss.

A transcript is stored column-wise: a ``(T, k)`` membership matrix, the
realized scores and the predicted thresholds. Arrays are marked read-only
so a transcript can be shared freely once built.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from .exceptions import ConfigError, DataError, DimensionError
from .validation import (check_group_matrix, check_group_vector,
                         check_positive_int, check_rate, check_score,
                         check_scores)

FLOAT_FORMAT = "%.17g"


def pinball_loss(tau_hat, tau, q):
    """Pinball loss of predicting ``tau_hat`` when the realized score is ``tau``.

    Works elementwise on arrays. Returns ``q * (tau - tau_hat)`` when
    ``tau >= tau_hat`` and ``(q - 1) * (tau - tau_hat)`` otherwise.

    >>> round(pinball_loss(0.4, 0.5, 0.5), 12)
    0.05
    """
    q = check_rate(q)
    diff = np.subtract(tau, tau_hat, dtype=np.float64)
    out = np.where(diff >= 0.0, q * diff, (q - 1.0) * diff)
    return float(out) if out.ndim == 0 else out


def pinball_subgradient(tau_hat, tau, q):
    """Subgradient of the pinball loss in ``tau_hat``.

    ``-q`` when the score exceeds the prediction, ``1 - q`` otherwise. A tie
    counts as covered.
    """
    q = check_rate(q)
    covered = np.less_equal(tau, tau_hat)
    out = np.where(covered, 1.0 - q, -q)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Round:
    t: int
    g: np.ndarray
    tau: float
    tau_hat: float

    @property
    def covered(self):
        return self.tau_hat >= self.tau


def _frozen(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


class Transcript:
    """Realized sequence of (group weights, score, prediction) triples.

    Parameters
    ----------
    g : array-like of shape (T, k)
        Group membership weights in [0, 1].
    tau : array-like of shape (T,)
        Realized scores in [0, 1].
    tau_hat : array-like of shape (T,)
        Predicted thresholds. Unbounded; learners may predict outside [0, 1].
    q : float
        Target coverage rate in (0, 1).
    group_names : sequence of str, optional
        Defaults to ``g_1 .. g_k``.
    """

    __slots__ = ("g", "tau", "tau_hat", "q", "group_names")

    def __init__(self, g, tau, tau_hat, q, group_names=None):
        tau = check_scores(tau)
        g = np.asarray(g, dtype=np.float64)
        if g.ndim == 1:
            g = g.reshape(-1, 1)
        g = check_group_matrix(g, n_rounds=len(tau))
        tau_hat = np.asarray(tau_hat, dtype=np.float64).reshape(-1)
        if tau_hat.shape[0] != tau.shape[0]:
            raise DimensionError(
                f"{tau_hat.shape[0]} predictions for {tau.shape[0]} scores")
        if not np.all(np.isfinite(tau_hat)):
            raise DataError("predictions must be finite")
        k = g.shape[1]
        if group_names is None:
            group_names = tuple(f"g_{i + 1}" for i in range(k))
        group_names = tuple(str(n) for n in group_names)
        if len(group_names) != k:
            raise DimensionError(f"{len(group_names)} group names for k={k}")
        object.__setattr__(self, "g", _frozen(g))
        object.__setattr__(self, "tau", _frozen(tau))
        object.__setattr__(self, "tau_hat", _frozen(tau_hat))
        object.__setattr__(self, "q", check_rate(q))
        object.__setattr__(self, "group_names", group_names)

    @classmethod
    def empty(cls, k, q, group_names=None):
        return cls(np.empty((0, k)), np.empty(0), np.empty(0), q, group_names)

    def __setattr__(self, name, value):
        raise AttributeError("Transcript is immutable")

    @property
    def k(self):
        return self.g.shape[1]

    @property
    def covered(self):
        """Boolean coverage indicator ``tau_hat >= tau`` per round."""
        return self.tau_hat >= self.tau

    def __len__(self):
        return self.tau.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return Transcript(self.g[i], self.tau[i], self.tau_hat[i], self.q,
                              self.group_names)
        t = range(len(self))[i]
        return Round(t + 1, self.g[t], float(self.tau[t]), float(self.tau_hat[t]))

    def __iter__(self) -> Iterator[Round]:
        for t in range(len(self)):
            yield self[t]

    def __eq__(self, other):
        if not isinstance(other, Transcript):
            return NotImplemented
        return (self.q == other.q and self.g.shape == other.g.shape
                and np.array_equal(self.g, other.g)
                and np.array_equal(self.tau, other.tau)
                and np.array_equal(self.tau_hat, other.tau_hat))

    def __repr__(self):
        return f"Transcript(T={len(self)}, k={self.k}, q={self.q})"

    def with_names(self, group_names):
        return Transcript(self.g, self.tau, self.tau_hat, self.q, group_names)


def append_round(transcript, g, tau, tau_hat):
    """Return a new transcript with one more round; the input is untouched."""
    g = check_group_vector(g, transcript.k)
    tau = check_score(tau)
    return Transcript(np.vstack([transcript.g, g[None, :]]),
                      np.append(transcript.tau, tau),
                      np.append(transcript.tau_hat, float(tau_hat)),
                      transcript.q, transcript.group_names)


@dataclass(frozen=True)
class Grid:
    """Evenly spaced prediction levels ``{0, 1/n, ..., 1}``."""

    n: int

    def __post_init__(self):
        check_positive_int(self.n, "grid size n")

    @property
    def levels(self):
        return np.arange(self.n + 1) / self.n

    def __len__(self):
        return self.n + 1

    def bin(self, values):
        """Index of the nearest level; exact midpoints round down.

        Values outside [0, 1] clamp to the end levels.
        """
        idx = np.ceil(np.asarray(values, dtype=np.float64) * self.n - 0.5)
        return np.clip(idx, 0, self.n).astype(np.int64)

    def label(self, index):
        return format_level(index / self.n)


def format_level(value):
    return f"{value:.6g}"


@dataclass(frozen=True)
class SmoothnessProfile:
    r: int
    alpha: float
    rho: float

    def __post_init__(self):
        check_positive_int(self.r, "resolution r")
        if not 0.0 <= self.alpha <= self.rho <= 1.0:
            raise ConfigError(
                f"need 0 <= alpha <= rho <= 1, got alpha={self.alpha}, rho={self.rho}")
        if self.alpha * self.r > 1.0 + 1e-12:
            raise ConfigError(f"alpha * r must be <= 1, got {self.alpha * self.r}")


GroupGenerator = Callable[[int, Optional[Transcript]], float]


@dataclass(frozen=True)
class GroupSpec:
    """A named prediction-independent group.

    ``generator(t, past)`` returns the membership weight of round ``t``
    (1-based) given the transcript of rounds ``1 .. t-1``; it never sees the
    current prediction. ``batch``, when present, maps an array of round
    indices to weights and must agree with ``generator``; groups that read the
    past transcript leave it unset.
    """

    name: str
    kind: str
    generator: GroupGenerator
    batch: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None,
                                                               compare=False)

    def __post_init__(self):
        if self.kind not in ("binary", "weighted"):
            raise ConfigError(f"group kind must be binary or weighted, got {self.kind!r}")

    def weight(self, t, past=None):
        w = float(self.generator(t, past))
        if not 0.0 <= w <= 1.0:
            raise DataError(f"group {self.name!r} returned weight {w} at round {t}")
        if self.kind == "binary" and w not in (0.0, 1.0):
            raise DataError(f"binary group {self.name!r} returned weight {w} at round {t}")
        return w

    @property
    def history_free(self):
        return self.batch is not None


def materialize_groups(groups: Sequence[GroupSpec], n_rounds):
    """Membership matrix for history-free groups over rounds ``1 .. n_rounds``."""
    t = np.arange(1, n_rounds + 1)
    cols = []
    for spec in groups:
        if spec.batch is None:
            raise ConfigError(
                f"group {spec.name!r} reads the transcript; materialize it online")
        w = np.asarray(spec.batch(t), dtype=np.float64)
        if spec.kind == "binary" and not np.all((w == 0.0) | (w == 1.0)):
            raise DataError(f"binary group {spec.name!r} produced non-binary weights")
        cols.append(w)
    G = np.column_stack(cols) if cols else np.empty((n_rounds, 0))
    return check_group_matrix(G, n_rounds=n_rounds) if n_rounds else G


# ---------------------------------------------------------------------------
# CSV format: header ``t,tau,tau_hat,g_1,...,g_k``


def write_transcript_csv(transcript, path):
    """Write a transcript; floats use 17 significant digits so reads are exact."""
    k = transcript.k
    header = ["t", "tau", "tau_hat"] + [f"g_{i + 1}" for i in range(k)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for t in range(len(transcript)):
            row = [str(t + 1), FLOAT_FORMAT % transcript.tau[t],
                   FLOAT_FORMAT % transcript.tau_hat[t]]
            row.extend(FLOAT_FORMAT % v for v in transcript.g[t])
            writer.writerow(row)


def parse_rounds_csv(path, require_tau_hat=False):
    """Parse the transcript CSV layout.

    Returns ``(g, tau, tau_hat)`` where ``tau_hat`` is ``None`` when the
    column is absent. Every malformed row raises :class:`DataError` carrying
    its line number.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError("empty file", line=1) from None
        if "tau" not in header:
            raise DataError("missing column 'tau'", line=1)
        has_hat = "tau_hat" in header
        if require_tau_hat and not has_hat:
            raise DataError("missing column 'tau_hat'", line=1)
        gcols = [h for h in header if h.startswith("g_")]
        expected = [f"g_{i + 1}" for i in range(len(gcols))]
        if gcols != expected:
            raise DataError(f"group columns must be g_1..g_k in order, got {gcols}", line=1)
        pos = {h: i for i, h in enumerate(header)}
        taus, hats, gs = [], [], []
        last_t = 0
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(
                    f"expected {len(header)} fields, got {len(row)}", line=lineno)
            try:
                tau = float(row[pos["tau"]])
                hat = float(row[pos["tau_hat"]]) if has_hat else None
                g = [float(row[pos[c]]) for c in gcols]
                t = int(row[pos["t"]]) if "t" in pos else last_t + 1
            except ValueError as exc:
                raise DataError(f"non-numeric cell ({exc})", line=lineno) from None
            if not (0.0 <= tau <= 1.0):
                raise DataError(f"tau={tau} outside [0, 1]", line=lineno)
            if hat is not None and not math.isfinite(hat):
                raise DataError(f"tau_hat={hat} is not finite", line=lineno)
            if any(not (0.0 <= v <= 1.0) for v in g):
                raise DataError("group weight outside [0, 1]", line=lineno)
            if t <= last_t:
                raise DataError(f"round index {t} is not increasing", line=lineno)
            last_t = t
            taus.append(tau)
            hats.append(hat)
            gs.append(g)
    tau = np.array(taus, dtype=np.float64)
    g = np.array(gs, dtype=np.float64).reshape(len(taus), len(gcols))
    tau_hat = np.array(hats, dtype=np.float64) if has_hat else None
    return g, tau, tau_hat


def read_transcript_csv(path, q, group_names=None):
    g, tau, tau_hat = parse_rounds_csv(path, require_tau_hat=True)
    if g.shape[1] == 0:
        raise DataError("transcript needs at least one group column g_1", line=1)
    return Transcript(g, tau, tau_hat, q, group_names)
