"""Coverage and regret audits of finished transcripts.

Everything here is a pure function of a transcript: no learner state is
needed, so transcripts produced elsewhere and read from CSV audit the same
way as runs of the bundled learners.

Regret is measured as realized pinball loss minus comparator pinball loss,
so a positive value means some comparator would have done better.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .core import Grid, GroupSpec, SmoothnessProfile, Transcript, format_level, pinball_loss
from .exceptions import ConfigError, DataError
from .validation import check_positive_int

ATOL = 1e-9

__all__ = [
    "CoverageEntry", "CoverageReport", "RegretEntry", "RegretReport",
    "CheckEntry", "TheoremCheck", "THEOREMS",
    "coverage", "group_coverage", "threshold_calibrated_coverage",
    "multivalid_coverage", "external_regret", "swap_regret",
    "group_conditional_regret", "smoothness_estimate", "check_theorem_bounds",
    "check_norm_envelope", "norm_envelope", "write_report_csv",
]


# ---------------------------------------------------------------------------
# report types


@dataclass(frozen=True)
class CoverageEntry:
    entity: str
    size: float
    coverage: Optional[float]
    deviation: Optional[float]

    @property
    def defined(self):
        return self.size > 0


@dataclass
class CoverageReport:
    """Per-entity coverage. Entities of size zero are kept with ``coverage``
    and ``deviation`` set to ``None`` (undefined, not zero)."""

    kind: str
    q: float
    entries: list

    def __getitem__(self, entity):
        for e in self.entries:
            if e.entity == entity:
                return e
        raise KeyError(entity)

    def defined(self):
        return [e for e in self.entries if e.defined]

    @property
    def max_deviation(self):
        devs = [e.deviation for e in self.defined()]
        return max(devs) if devs else None

    def to_dict(self):
        return {"kind": self.kind, "q": self.q,
                "entries": [asdict(e) for e in self.entries]}

    def rows(self):
        return [(e.entity, e.size, e.coverage, None, None) for e in self.entries]


@dataclass(frozen=True)
class RegretEntry:
    entity: str
    value: float
    comparator: object


@dataclass
class RegretReport:
    """``comparator`` is a grid level for external kinds and a
    ``{level: level}`` table for swap kinds."""

    kind: str
    n: int
    entries: list

    def __getitem__(self, entity):
        for e in self.entries:
            if e.entity == entity:
                return e
        raise KeyError(entity)

    @property
    def value(self):
        """Largest regret over entities (the transcript's regret level)."""
        return max(e.value for e in self.entries)

    def to_dict(self):
        return {"kind": self.kind, "n": self.n,
                "entries": [asdict(e) for e in self.entries]}

    def rows(self):
        return [(e.entity, None, e.value, None, None) for e in self.entries]


@dataclass(frozen=True)
class CheckEntry:
    entity: str
    size: float
    value: float
    bound: Optional[float]
    status: str

    @property
    def slack(self):
        if self.bound is None or self.value is None:
            return None
        return self.bound - self.value


@dataclass
class TheoremCheck:
    """Outcome of evaluating one bound on realized quantities.

    ``status`` is ``pass`` only when every evaluated entity satisfies its
    bound; ``vacuous`` means a prerequisite (usually positive smoothness
    mass ``alpha``) was missing for some entity and nothing failed.
    """

    name: str
    status: str
    entries: list
    details: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.status == "pass"

    @property
    def min_slack(self):
        slacks = [e.slack for e in self.entries if e.slack is not None]
        return min(slacks) if slacks else None

    def to_dict(self):
        return {"name": self.name, "status": self.status, "details": self.details,
                "min_slack": self.min_slack,
                "entries": [dict(asdict(e), slack=e.slack) for e in self.entries]}

    def rows(self):
        return [(e.entity, e.size, e.value, e.bound, e.slack) for e in self.entries]


def write_report_csv(report, path):
    """Flat ``entity,size,value,bound,slack`` rows for any report type."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["entity", "size", "value", "bound", "slack"])
        for row in report.rows():
            writer.writerow(["" if v is None else (repr(float(v)) if isinstance(v, float) else v)
                             for v in row])


def reports_to_json(reports):
    return json.dumps({name: r.to_dict() for name, r in reports.items()},
                      indent=2, default=_json_default)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not serializable: {type(obj)}")


# ---------------------------------------------------------------------------
# helpers


def _nonempty(transcript):
    if len(transcript) == 0:
        raise DataError("transcript is empty")


def _groups(transcript, groups):
    """Resolve ``groups`` into a ``(T, k)`` weight matrix and names.

    ``None`` uses the transcript's own columns; an array is taken as the
    membership matrix; a list of :class:`GroupSpec` is materialized round by
    round, giving each generator the transcript prefix before that round.
    """
    T = len(transcript)
    if groups is None:
        return transcript.g, list(transcript.group_names)
    if isinstance(groups, np.ndarray):
        G = np.asarray(groups, dtype=float)
        if G.ndim == 1:
            G = G[:, None]
        if G.shape[0] != T:
            raise DataError(f"group matrix has {G.shape[0]} rows for {T} rounds")
        return G, [f"g_{i + 1}" for i in range(G.shape[1])]
    specs = list(groups)
    if not all(isinstance(s, GroupSpec) for s in specs):
        raise ConfigError("groups must be None, an array, or a list of GroupSpec")
    G = np.empty((T, len(specs)))
    for i, spec in enumerate(specs):
        if spec.batch is not None:
            G[:, i] = spec.batch(np.arange(1, T + 1))
        else:
            G[:, i] = [spec.weight(t + 1, transcript[:t]) for t in range(T)]
    return G, [s.name for s in specs]


def _cov_entry(entity, weights, covered, q):
    size = float(weights.sum())
    if size <= 0:
        return CoverageEntry(entity, 0.0, None, None)
    cov = float(weights @ covered) / size
    return CoverageEntry(entity, size, cov, abs(cov - q))


def _loss_matrix(transcript, grid):
    """Pinball loss of every grid level on every round, shape (T, n+1)."""
    return pinball_loss(grid.levels[None, :], transcript.tau[:, None], transcript.q)


def _realized_loss(transcript):
    return pinball_loss(transcript.tau_hat, transcript.tau, transcript.q)


def _as_grid(grid):
    return grid if isinstance(grid, Grid) else Grid(grid)


# ---------------------------------------------------------------------------
# coverage


def coverage(transcript):
    """Fraction of rounds with ``tau_hat >= tau``."""
    _nonempty(transcript)
    return float(np.mean(transcript.covered))


def group_coverage(transcript, groups=None):
    """Weighted coverage and size of every group."""
    _nonempty(transcript)
    G, names = _groups(transcript, groups)
    cov = transcript.covered.astype(float)
    entries = [_cov_entry(name, G[:, i], cov, transcript.q) for i, name in enumerate(names)]
    return CoverageReport("group", transcript.q, entries)


def threshold_calibrated_coverage(transcript, grid):
    """Coverage on each level set of the (binned) prediction."""
    _nonempty(transcript)
    grid = _as_grid(grid)
    idx = grid.bin(transcript.tau_hat)
    cov = transcript.covered.astype(float)
    entries = [_cov_entry(grid.label(a), (idx == a).astype(float), cov, transcript.q)
               for a in range(len(grid))]
    return CoverageReport("threshold", transcript.q, entries)


def multivalid_coverage(transcript, grid, groups=None):
    """Coverage on every group x level cell, entities named ``group@level``."""
    _nonempty(transcript)
    grid = _as_grid(grid)
    G, names = _groups(transcript, groups)
    idx = grid.bin(transcript.tau_hat)
    cov = transcript.covered.astype(float)
    entries = []
    for i, name in enumerate(names):
        for a in range(len(grid)):
            w = G[:, i] * (idx == a)
            entries.append(_cov_entry(f"{name}@{grid.label(a)}", w, cov, transcript.q))
    return CoverageReport("multivalid", transcript.q, entries)


# ---------------------------------------------------------------------------
# regret


def _external(weights, realized, L, grid):
    gains = weights @ realized - weights @ L
    b = int(np.argmax(gains))
    return float(gains[b]), float(grid.levels[b])


def _swap(weights, realized, L, idx, grid):
    """Sum over levels of the best per-level relabeling gain, floored at 0."""
    m = len(grid)
    w = weights
    real_by_level = np.bincount(idx, weights=w * realized, minlength=m)
    comp_by_level = np.empty((m, m))
    for b in range(m):
        comp_by_level[:, b] = np.bincount(idx, weights=w * L[:, b], minlength=m)
    counts = np.bincount(idx, weights=w, minlength=m)
    gains = real_by_level[:, None] - comp_by_level
    total = 0.0
    phi = {}
    for a in range(m):
        if counts[a] <= 0:
            continue
        b = int(np.argmax(gains[a]))
        if gains[a, b] > 0:
            total += gains[a, b]
            phi[grid.label(a)] = grid.label(b)
        else:
            phi[grid.label(a)] = grid.label(a)
    return float(total), phi


def external_regret(transcript, grid):
    """Realized loss minus the loss of the best fixed grid level."""
    _nonempty(transcript)
    grid = _as_grid(grid)
    w = np.ones(len(transcript))
    value, level = _external(w, _realized_loss(transcript), _loss_matrix(transcript, grid), grid)
    return RegretReport("external", grid.n, [RegretEntry("all", value, level)])


def swap_regret(transcript, grid):
    """Regret against the best level-to-level relabeling of predictions.

    Predictions are binned to the nearest grid level to define the level
    sets. A level whose best relabeling does not help keeps its own
    predictions, so every level contributes at least zero.
    """
    _nonempty(transcript)
    grid = _as_grid(grid)
    w = np.ones(len(transcript))
    value, phi = _swap(w, _realized_loss(transcript), _loss_matrix(transcript, grid),
                       grid.bin(transcript.tau_hat), grid)
    return RegretReport("swap", grid.n, [RegretEntry("all", value, phi)])


def group_conditional_regret(transcript, grid, kind="external", groups=None):
    """Per-group regret on the weighted subsequence of each group.

    ``kind="swap"`` needs binary groups.
    """
    _nonempty(transcript)
    grid = _as_grid(grid)
    G, names = _groups(transcript, groups)
    realized = _realized_loss(transcript)
    L = _loss_matrix(transcript, grid)
    entries = []
    if kind == "external":
        for i, name in enumerate(names):
            value, level = _external(G[:, i], realized, L, grid)
            entries.append(RegretEntry(name, value, level))
    elif kind == "swap":
        if not np.all((G == 0.0) | (G == 1.0)):
            raise ConfigError(
                "group swap regret is defined here for binary groups only; "
                "the calibration bounds it feeds assume binary membership")
        idx = grid.bin(transcript.tau_hat)
        for i, name in enumerate(names):
            value, phi = _swap(G[:, i], realized, L, idx, grid)
            entries.append(RegretEntry(name, value, phi))
    else:
        raise ConfigError(f"kind must be 'external' or 'swap', got {kind!r}")
    return RegretReport(f"group-{kind}", grid.n, entries)


# ---------------------------------------------------------------------------
# smoothness

_EDGE = 1e-12


def smoothness_estimate(samples, r):
    """Empirical ``(alpha, rho)`` at resolution ``r``.

    ``rho`` is the largest fraction of samples inside a closed interval of
    width ``1/r`` within [0, 1]; ``alpha`` the smallest. Intervals are slid
    over the sorted sample, so both are exact for the empirical distribution
    up to a ``1e-12`` tolerance on interval endpoints.
    """
    r = check_positive_int(r, "resolution r")
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size == 0:
        raise DataError("smoothness estimate needs at least one sample")
    if x[0] < 0 or x[-1] > 1:
        raise DataError("samples must lie in [0, 1]")
    N = x.size
    w = 1.0 / r
    top = 1.0 - w

    def count(lo, hi, left_open=False):
        side = "right" if left_open else "left"
        return (np.searchsorted(x, hi + _EDGE, side="right")
                - np.searchsorted(x, lo if left_open else lo - _EDGE, side=side))

    starts = np.minimum(x, top)
    rho = count(starts, starts + w).max() / N

    lows = [count(np.array([0.0]), np.array([w]))[0],
            count(np.array([top]), np.array([1.0]))[0]]
    inner = x[x < top - _EDGE]
    if inner.size:
        lows.append(count(inner, inner + w, left_open=True).min())
    alpha = min(lows) / N
    return SmoothnessProfile(r, float(min(alpha, 1.0 / r)), float(rho))


# ---------------------------------------------------------------------------
# bound checks


def norm_envelope(t, q, eta, k):
    """Proven bound on ``||theta_t||_2`` for GCACI: ``sqrt((t-1) eta (eta k m^2 + 2q))``
    with ``m = max(q, 1-q)``."""
    t = np.asarray(t, dtype=float)
    return np.sqrt(np.maximum(t - 1.0, 0.0) * eta * (eta * k * max(q, 1 - q) ** 2 + 2 * q))


def check_norm_envelope(theta_path, q, eta):
    """Check ``||theta_t||_2^2 <= (t-1) eta (eta k m^2 + 2q)`` at every step.

    ``theta_path`` row ``t-1`` holds ``theta_t``.
    """
    theta_path = np.atleast_2d(np.asarray(theta_path, dtype=float))
    k = theta_path.shape[1]
    t = np.arange(1, theta_path.shape[0] + 1)
    sq = np.einsum("ij,ij->i", theta_path, theta_path)
    bound = norm_envelope(t, q, eta, k) ** 2
    slack = bound - sq
    worst = int(np.argmin(slack))
    violations = int(np.sum(sq > bound + ATOL))
    entry = CheckEntry("all_steps", float(len(t)), float(sq[worst]), float(bound[worst]),
                       "pass" if violations == 0 else "fail")
    return TheoremCheck("norm_envelope", "pass" if violations == 0 else "fail", [entry],
                        {"violations": violations, "steps": int(len(t)),
                         "worst_step": worst + 1})


def _status(entries):
    states = {e.status for e in entries}
    if "fail" in states:
        return "fail"
    if "vacuous" in states or not entries:
        return "vacuous"
    return "pass"


def _entry(entity, size, value, bound):
    if bound is None or not math.isfinite(bound):
        return CheckEntry(entity, size, value, None, "vacuous")
    return CheckEntry(entity, size, value, bound, "pass" if value <= bound + ATOL else "fail")


def _theta_from_transcript(transcript, G, eta):
    """``eta * sum_t g_t (q - 1[tau_t <= tau_hat_t])`` per group."""
    return eta * (G.T @ (transcript.q - transcript.covered.astype(float)))


def _check_ftrl(transcript, groups, grad=None, **_):
    G, names = _groups(transcript, groups)
    if grad is None:
        grad = _theta_from_transcript(transcript, G, 1.0)
    gnorm = float(np.max(np.abs(grad)))
    rep = group_coverage(transcript, G)
    entries = []
    for name, e in zip(names, rep.entries):
        if not e.defined:
            entries.append(CheckEntry(name, 0.0, None, None, "vacuous"))
            continue
        entries.append(_entry(name, e.size, e.deviation, gnorm / e.size))
    return entries, {"regularizer_gradient_inf_norm": gnorm}


def _check_gcaci(transcript, groups, theta=None, eta=None, **_):
    if eta is None:
        raise ConfigError("the GCACI coverage check needs the step size eta")
    G, names = _groups(transcript, groups)
    if theta is None:
        theta = _theta_from_transcript(transcript, G, eta)
    theta = np.asarray(theta, dtype=float)
    tnorm = float(np.max(np.abs(theta)))
    rep = group_coverage(transcript, G)
    entries = []
    exact = {}
    for i, (name, e) in enumerate(zip(names, rep.entries)):
        if not e.defined:
            entries.append(CheckEntry(name, 0.0, None, None, "vacuous"))
            continue
        entries.append(_entry(name, e.size, e.deviation, tnorm / (e.size * eta)))
        exact[name] = abs(theta[i]) / (e.size * eta)
    return entries, {"theta_inf_norm": tnorm, "coordinate_bound": exact}


def _profile_or_none(samples, r):
    if len(samples) == 0:
        return None
    return smoothness_estimate(samples, r)


def _check_stochastic(transcript, groups, grid, r, epsilon=0.0, **_):
    T = len(transcript)
    gamma = max(external_regret(transcript, grid).value, 0.0)
    prof = smoothness_estimate(transcript.tau, r)
    dev = abs(coverage(transcript) - transcript.q)
    bound = None
    if prof.alpha > 0:
        bound = math.sqrt(2 * prof.rho * (gamma + epsilon) / (T * prof.alpha)) + epsilon / T
    return ([_entry("all", float(T), dev, bound)],
            {"gamma": gamma, "alpha": prof.alpha, "rho": prof.rho, "r": r,
             "epsilon": epsilon})


def _level_bound(prof, r, n, gamma, size):
    if prof is None or prof.alpha <= 0:
        return None
    return (prof.rho / 2 + prof.rho * r / n
            + math.sqrt(2 * gamma / (size * prof.alpha * r)))


def _check_swap_to_calibrated(transcript, groups, grid, r, min_size=1, **_):
    gamma = swap_regret(transcript, grid).value
    idx = grid.bin(transcript.tau_hat)
    rep = threshold_calibrated_coverage(transcript, grid)
    entries, profiles = [], {}
    for a, e in enumerate(rep.entries):
        if not e.defined or e.size < min_size:
            continue
        prof = smoothness_estimate(transcript.tau[idx == a], r)
        profiles[e.entity] = (prof.alpha, prof.rho)
        entries.append(_entry(e.entity, e.size, e.deviation,
                              _level_bound(prof, r, grid.n, gamma, e.size)))
    return entries, {"gamma": gamma, "r": r, "n": grid.n, "profiles": profiles,
                     "min_size": min_size}


def _common_profile(sample_sets, r):
    profs = [smoothness_estimate(s, r) for s in sample_sets if len(s)]
    if not profs:
        return None, None
    return min(p.alpha for p in profs), max(p.rho for p in profs)


def _cov_to_regret_bound(T, gamma, alpha, rho, r):
    if alpha is None or alpha <= 0:
        return None
    return T * gamma ** 2 * rho / (alpha ** 2 * r)


def _check_calibrated_to_swap(transcript, groups, grid, r, **_):
    T = len(transcript)
    rep = threshold_calibrated_coverage(transcript, grid)
    gamma = rep.max_deviation
    idx = grid.bin(transcript.tau_hat)
    alpha, rho = _common_profile([transcript.tau[idx == a] for a in range(len(grid))], r)
    value = swap_regret(transcript, grid).value
    bound = _cov_to_regret_bound(T, gamma, alpha, rho, r)
    return ([_entry("all", float(T), value, bound)],
            {"gamma": gamma, "alpha": alpha, "rho": rho, "r": r})


def _binary(G):
    if not np.all((G == 0.0) | (G == 1.0)):
        raise ConfigError("this bound assumes binary groups")


def _check_group_swap_to_multivalid(transcript, groups, grid, r, min_size=1, **_):
    G, names = _groups(transcript, groups)
    _binary(G)
    gamma = group_conditional_regret(transcript, grid, "swap", G).value
    idx = grid.bin(transcript.tau_hat)
    rep = multivalid_coverage(transcript, grid, G)
    entries = []
    for i, name in enumerate(names):
        for a in range(len(grid)):
            e = rep.entries[i * len(grid) + a]
            if not e.defined or e.size < min_size:
                continue
            cell = (G[:, i] == 1.0) & (idx == a)
            prof = smoothness_estimate(transcript.tau[cell], r)
            entries.append(_entry(f"{name}@{grid.label(a)}", e.size, e.deviation,
                                  _level_bound(prof, r, grid.n, gamma, e.size)))
    return entries, {"gamma": gamma, "r": r, "n": grid.n, "min_size": min_size}


def _check_multivalid_to_group_swap(transcript, groups, grid, r, **_):
    G, names = _groups(transcript, groups)
    _binary(G)
    T = len(transcript)
    gamma = multivalid_coverage(transcript, grid, G).max_deviation
    idx = grid.bin(transcript.tau_hat)
    cells = [transcript.tau[(G[:, i] == 1.0) & (idx == a)]
             for i in range(G.shape[1]) for a in range(len(grid))]
    alpha, rho = _common_profile(cells, r)
    bound = _cov_to_regret_bound(T, gamma, alpha, rho, r)
    reg = group_conditional_regret(transcript, grid, "swap", G)
    entries = [_entry(e.entity, float(G[:, i].sum()), e.value, bound)
               for i, e in enumerate(reg.entries)]
    return entries, {"gamma": gamma, "alpha": alpha, "rho": rho, "r": r}


def _check_quantile_gap(transcript, groups, grid, r, **_):
    """Expected-loss gap of each grid level over the empirical q-quantile."""
    tau = np.sort(transcript.tau)
    q = transcript.q
    N = tau.size
    star = float(tau[max(math.ceil(q * N) - 1, 0)])
    prof = smoothness_estimate(tau, r)
    base = float(np.mean(pinball_loss(star, tau, q)))
    entries = []
    for level in grid.levels:
        gap = float(np.mean(pinball_loss(level, tau, q))) - base
        need = prof.alpha * r * (star - level) ** 2 / 2
        if abs(star - level) < 1.0 / r:
            # below the profile's resolution: no mass guarantee, nothing to check
            status = "vacuous"
        else:
            status = "pass" if need <= gap + ATOL else "fail"
        # lower bound, so value is the required gap and bound the realized one
        entries.append(CheckEntry(format_level(level), float(N), need, gap, status))
    return entries, {"quantile": star, "alpha": prof.alpha, "rho": prof.rho, "r": r}


THEOREMS = {
    "ftrl_group_coverage": _check_ftrl,
    "gcaci_group_coverage": _check_gcaci,
    "stochastic_external_coverage": _check_stochastic,
    "swap_to_calibrated": _check_swap_to_calibrated,
    "calibrated_to_swap": _check_calibrated_to_swap,
    "group_swap_to_multivalid": _check_group_swap_to_multivalid,
    "multivalid_to_group_swap": _check_multivalid_to_group_swap,
    "quantile_loss_gap": _check_quantile_gap,
}
"""Bound checks by name.

ftrl_group_coverage
    ``|Cov_i - q| <= ||grad R(theta_{T+1})||_inf / T_i`` for FTRL transcripts.
gcaci_group_coverage
    ``|Cov_i - q| <= ||theta_{T+1}||_inf / (T_i eta)``; needs ``eta``.
stochastic_external_coverage
    ``|Cov - q| <= sqrt(2 rho (gamma + eps) / (T alpha)) + eps / T`` with
    ``gamma`` the external regret, for i.i.d. scores without context.
swap_to_calibrated
    per level: ``|Cov - q| <= rho/2 + rho r/n + sqrt(2 gamma / (T_level alpha r))``
    with ``gamma`` the swap regret.
calibrated_to_swap
    swap regret ``<= T gamma^2 rho / (alpha^2 r)`` with ``gamma`` the largest
    per-level coverage deviation.
group_swap_to_multivalid, multivalid_to_group_swap
    the same two statements on group x level cells for binary groups.
quantile_loss_gap
    ``E p(level) - E p(tau*) >= alpha r (tau* - level)^2 / 2`` on the
    empirical score distribution; the entry ``value`` is the required gap
    and ``bound`` the realized one. Levels within ``1/r`` of ``tau*`` are
    vacuous since smoothness says nothing about mass at that scale.
"""


def check_theorem_bounds(transcript, which, grid=None, groups=None, r=10,
                         theta_path=None, **kwargs):
    """Evaluate a named bound on the transcript's realized quantities.

    Parameters
    ----------
    transcript : Transcript
    which : str
        A key of :data:`THEOREMS`, or ``"norm_envelope"`` (needs
        ``theta_path`` and ``eta``).
    grid : Grid or int, optional
        Required by the regret-based checks.
    groups : None, array or list of GroupSpec
    r : int
        Smoothness resolution.
    **kwargs
        ``theta``, ``eta``, ``grad``, ``epsilon``, ``min_size`` as the
        individual checks need them.

    Returns
    -------
    TheoremCheck
    """
    if which == "norm_envelope":
        if theta_path is None or kwargs.get("eta") is None:
            raise ConfigError("norm_envelope needs theta_path and eta")
        return check_norm_envelope(theta_path, transcript.q, kwargs["eta"])
    try:
        fn = THEOREMS[which]
    except KeyError:
        raise ConfigError(f"unknown check {which!r}; choose from "
                          f"{sorted(THEOREMS) + ['norm_envelope']}") from None
    _nonempty(transcript)
    if grid is None and which not in ("ftrl_group_coverage", "gcaci_group_coverage"):
        raise ConfigError(f"{which} needs a grid")
    grid = None if grid is None else _as_grid(grid)
    entries, details = fn(transcript, groups, grid=grid, r=r, **kwargs)
    return TheoremCheck(which, _status(entries), entries, details)
