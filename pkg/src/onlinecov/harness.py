"""Compose streams, groups and learners into reproducible runs.

A run config is one JSON document with sections ``stream``, ``groups``,
``learner``, ``audit`` and ``output`` plus a top-level ``seed``. ``run``
executes the online loop and writes ``transcript.csv``, ``trace.csv`` (for
learners with a parameter vector) and ``summary.json`` into the output
directory.
"""
from __future__ import annotations

import copy
import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import auditors
from .core import FLOAT_FORMAT, Grid, Transcript, read_transcript_csv, write_transcript_csv
from .environments import STREAM_KINDS, all_rounds_group, make_stream, modular_groups
from .exceptions import ConfigError, DataError
from .learners import (AdaptiveConformalInference, FTRLCoverage, GroupConditionalACI,
                       ScriptedPredictor, SwapRegretQuantile)
from .validation import check_positive_int, check_rate, check_step

log = logging.getLogger(__name__)

LEARNER_KINDS = ("gcaci", "aci", "ftrl", "swap", "scripted")
GROUP_KINDS = ("all", "modular", "stream")
NEVER = "never"

DEFAULT_CONFIG = {
    "seed": 0,
    "stream": {"kind": "iid", "T": 10000, "seed": 0,
               "distribution": {"name": "uniform", "low": 0.0, "high": 1.0}},
    "groups": [{"kind": "modular", "k": 20}],
    "learner": {"kind": "gcaci", "q": 0.9, "eta": 1.0, "k": None,
                "regularizer": "euclidean", "n": 20, "horizon": None, "seed": 0},
    "audit": {"n": 20, "r": 10, "epsilon": 0.0, "min_size": 1,
              "convergence_epsilon": 0.01,
              "theorems": ["gcaci_group_coverage", "ftrl_group_coverage", "norm_envelope"]},
    "output": {"dir": "runs/default"},
}


@dataclass
class RunConfig:
    stream: dict
    groups: list
    learner: dict
    audit: dict = field(default_factory=lambda: copy.deepcopy(DEFAULT_CONFIG["audit"]))
    output: dict = field(default_factory=lambda: copy.deepcopy(DEFAULT_CONFIG["output"]))
    seed: int = 0

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - {"stream", "groups", "learner", "audit", "output", "seed"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        for key in ("stream", "learner"):
            if key not in data:
                raise ConfigError(f"config needs a {key!r} section")
        audit = copy.deepcopy(DEFAULT_CONFIG["audit"])
        audit.update(data.get("audit", {}))
        output = copy.deepcopy(DEFAULT_CONFIG["output"])
        output.update(data.get("output", {}))
        cfg = cls(stream=dict(data["stream"]), groups=list(data.get("groups", [{"kind": "stream"}])),
                  learner=dict(data["learner"]), audit=audit, output=output,
                  seed=data.get("seed", 0))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self):
        return {"seed": self.seed, "stream": self.stream, "groups": self.groups,
                "learner": self.learner, "audit": self.audit, "output": self.output}

    def with_seed(self, seed):
        """Copy with every seed (top level, stream, learner) set to ``seed``."""
        cfg = copy.deepcopy(self)
        cfg.seed = seed
        cfg.stream["seed"] = seed
        cfg.learner["seed"] = seed
        return cfg

    def with_output(self, directory):
        cfg = copy.deepcopy(self)
        cfg.output["dir"] = str(directory)
        return cfg

    def validate(self):
        check_positive_int(self.seed, "seed", minimum=0)
        kind = self.stream.get("kind")
        if kind not in STREAM_KINDS:
            raise ConfigError(f"stream kind must be one of {STREAM_KINDS}, got {kind!r}")
        if kind != "csv":
            check_positive_int(self.stream.get("T"), "stream.T")
        if kind in ("iid", "example2", "two_phase_shift") and self.stream.get("seed") is None:
            raise ConfigError(f"stream kind {kind!r} needs an explicit seed")
        if not self.groups:
            raise ConfigError("groups must list at least one group spec")
        for g in self.groups:
            if g.get("kind") not in GROUP_KINDS:
                raise ConfigError(f"group kind must be one of {GROUP_KINDS}, got {g.get('kind')!r}")
            if g["kind"] == "modular":
                check_positive_int(g.get("k"), "modular group k")
        lk = self.learner.get("kind")
        if lk not in LEARNER_KINDS:
            raise ConfigError(f"learner kind must be one of {LEARNER_KINDS}, got {lk!r}")
        check_rate(self.learner.get("q"))
        if lk in ("gcaci", "aci", "ftrl"):
            check_step(self.learner.get("eta"))
        if lk == "swap":
            check_positive_int(self.learner.get("n"), "learner.n")
            if self.learner.get("seed") is None:
                raise ConfigError("swap learner needs an explicit seed")
        check_positive_int(self.audit.get("n", 20), "audit.n")
        check_positive_int(self.audit.get("r", 10), "audit.r")
        for name in self.audit.get("theorems", []):
            if name not in auditors.THEOREMS and name != "norm_envelope":
                raise ConfigError(f"unknown theorem check {name!r}")
        eps = self.audit.get("convergence_epsilon", 0.01)
        if not eps > 0:
            raise ConfigError(f"convergence epsilon must be > 0, got {eps}")
        return self


def template():
    """The default config with every field and seed spelled out."""
    return copy.deepcopy(DEFAULT_CONFIG)


# ---------------------------------------------------------------------------
# building blocks


def build_groups(config, stream):
    """Membership matrix and names for the config's group list."""
    T = len(stream)
    cols, names = [], []
    for spec in config.groups:
        kind = spec["kind"]
        if kind == "stream":
            if stream.g is None:
                raise ConfigError(f"stream kind {stream.meta.get('kind')!r} carries no groups")
            cols.append(stream.g)
            names.extend(stream.group_names or [f"g_{i + 1}" for i in range(stream.g.shape[1])])
        elif kind == "all":
            g = all_rounds_group(spec.get("name", "all"))
            cols.append(g.batch(np.arange(1, T + 1))[:, None])
            names.append(g.name)
        else:
            specs = modular_groups(spec["k"])
            t = np.arange(1, T + 1)
            cols.append(np.column_stack([s.batch(t) for s in specs]))
            names.extend(s.name for s in specs)
    return np.hstack(cols), names


def build_learner(config, stream, k):
    lc = config.learner
    kind = lc["kind"]
    if lc.get("k") is not None and lc["k"] != k:
        raise ConfigError(f"learner.k={lc['k']} but the group list defines {k} groups")
    q = lc["q"]
    if kind == "gcaci":
        return GroupConditionalACI(q=q, eta=lc["eta"])
    if kind == "aci":
        if k != 1:
            raise ConfigError(f"aci runs on one group, got {k}")
        return AdaptiveConformalInference(q=q, eta=lc["eta"])
    if kind == "ftrl":
        return FTRLCoverage(q=q, eta=lc["eta"], regularizer=lc.get("regularizer", "euclidean"))
    if kind == "swap":
        return SwapRegretQuantile(q=q, n=lc["n"], horizon=lc.get("horizon"),
                                  random_state=lc["seed"])
    if stream.scripted is None:
        raise ConfigError("scripted learner needs a stream with scripted predictions")
    return ScriptedPredictor(predictions=stream.scripted, q=q)


@dataclass
class RunResult:
    transcript: Transcript
    theta_path: Optional[np.ndarray]
    counters: dict
    config: RunConfig
    eta: Optional[float] = None
    extra: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)

    @property
    def theta_final(self):
        return None if self.theta_path is None else self.theta_path[-1]


def _execute(config):
    """Build everything, then run the loop. Nothing is written here."""
    stream = make_stream(config.stream)
    G, names = build_groups(config, stream)
    k = G.shape[1]
    learner = build_learner(config, stream, k)
    learner.start(k)
    T = len(stream)
    tau = stream.tau
    preds = np.empty(T)
    sizes = np.zeros(k)
    hits = np.zeros(k)
    for t in range(T):
        g = G[t]
        pred = learner.predict_one(g)
        preds[t] = pred
        learner.update_one(g, tau[t], pred)
        sizes += g
        if pred >= tau[t]:
            hits += g
    learner.record(G, tau, preds)
    transcript = Transcript(G, tau, preds, config.learner["q"], names)
    counters = {name: {"size": float(sizes[i]), "covered": float(hits[i]),
                       "coverage": (float(hits[i] / sizes[i]) if sizes[i] > 0 else None)}
                for i, name in enumerate(names)}
    theta_path = getattr(learner, "theta_path_", None)
    extra = {}
    if isinstance(learner, FTRLCoverage):
        extra["regularizer_gradient"] = learner.regularizer_gradient_.tolist()
    if isinstance(learner, SwapRegretQuantile):
        extra["max_stationarity_gap"] = learner.max_stationarity_gap_
    eta = config.learner.get("eta") if config.learner["kind"] in ("gcaci", "aci", "ftrl") else None
    return RunResult(transcript, theta_path, counters, config, eta, extra)


def write_trace_csv(theta_path, q, eta, path):
    """``t,norm_inf,envelope,theta_1..theta_k`` for ``t = 1 .. T+1``."""
    T1, k = theta_path.shape
    t = np.arange(1, T1 + 1)
    env = auditors.norm_envelope(t, q, eta, k)
    norms = np.abs(theta_path).max(axis=1)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "norm_inf", "envelope"] + [f"theta_{i + 1}" for i in range(k)])
        for i in range(T1):
            w.writerow([int(t[i]), FLOAT_FORMAT % norms[i], FLOAT_FORMAT % env[i]]
                       + [FLOAT_FORMAT % v for v in theta_path[i]])


def run(config, write=True):
    """Execute a run and (by default) write its outputs.

    Returns
    -------
    RunResult
    """
    if isinstance(config, dict):
        config = RunConfig.from_dict(config)
    result = _execute(config)
    if write:
        out = Path(config.output["dir"])
        out.mkdir(parents=True, exist_ok=True)
        write_transcript_csv(result.transcript, out / "transcript.csv")
        if result.theta_path is not None:
            write_trace_csv(result.theta_path, result.transcript.q, result.eta,
                            out / "trace.csv")
        summary = {
            "config": config.to_dict(),
            "T": len(result.transcript),
            "k": result.transcript.k,
            "group_names": list(result.transcript.group_names),
            "eta": result.eta,
            "coverage": auditors.coverage(result.transcript),
            "counters": result.counters,
            "theta_final": None if result.theta_final is None else result.theta_final.tolist(),
            **result.extra,
        }
        with open(out / "summary.json", "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2)
        if config.audit.get("theorems"):
            result.reports = audit_result(result, out)
        log.info("run written to %s", out)
    return result


# ---------------------------------------------------------------------------
# audits


def audit_transcript(transcript, n=20, r=10, theorems=(), eta=None, theta=None,
                     grad=None, theta_path=None, epsilon=0.0, min_size=1):
    """Every coverage and regret report plus the selected bound checks."""
    grid = Grid(n)
    reports = {
        "coverage_groups": auditors.group_coverage(transcript),
        "coverage_threshold": auditors.threshold_calibrated_coverage(transcript, grid),
        "coverage_multivalid": auditors.multivalid_coverage(transcript, grid),
        "regret_external": auditors.external_regret(transcript, grid),
        "regret_swap": auditors.swap_regret(transcript, grid),
        "regret_group_external": auditors.group_conditional_regret(transcript, grid, "external"),
    }
    if np.all((transcript.g == 0.0) | (transcript.g == 1.0)):
        reports["regret_group_swap"] = auditors.group_conditional_regret(transcript, grid, "swap")
    for name in theorems:
        if name == "norm_envelope" and theta_path is None:
            log.info("skipping norm_envelope: no parameter trace")
            continue
        if name == "gcaci_group_coverage" and eta is None:
            log.info("skipping gcaci_group_coverage: no step size")
            continue
        if name in ("group_swap_to_multivalid", "multivalid_to_group_swap") \
                and "regret_group_swap" not in reports:
            log.info("skipping %s: groups are not binary", name)
            continue
        reports[f"check_{name}"] = auditors.check_theorem_bounds(
            transcript, name, grid=grid, r=r, theta=theta, eta=eta, grad=grad,
            theta_path=theta_path, epsilon=epsilon, min_size=min_size)
    return reports


def write_reports(reports, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "reports.json", "w", encoding="utf-8") as fh:
        fh.write(auditors.reports_to_json(reports))
    for name, report in reports.items():
        auditors.write_report_csv(report, out / f"{name}.csv")


def audit_result(result, out=None):
    a = result.config.audit
    reports = audit_transcript(
        result.transcript, n=a.get("n", 20), r=a.get("r", 10),
        theorems=a.get("theorems", ()), eta=result.eta, theta=result.theta_final,
        grad=(np.asarray(result.extra["regularizer_gradient"])
              if "regularizer_gradient" in result.extra else None),
        theta_path=result.theta_path, epsilon=a.get("epsilon", 0.0),
        min_size=a.get("min_size", 1))
    if out is not None:
        write_reports(reports, out)
    return reports


def audit(transcript_path, q, n=20, r=10, theorems=(), eta=None, out=None,
          group_names=None, epsilon=0.0, min_size=1):
    """Audit a transcript CSV without any learner.

    ``theta`` is not available from a file; checks that need it rebuild it
    from the transcript via the closed form.
    """
    transcript = read_transcript_csv(transcript_path, q, group_names)
    reports = audit_transcript(transcript, n=n, r=r, theorems=theorems, eta=eta,
                               epsilon=epsilon, min_size=min_size)
    if out is not None:
        write_reports(reports, out)
    return reports


def failed_checks(reports):
    return [name for name, rep in reports.items()
            if isinstance(rep, auditors.TheoremCheck) and rep.status == "fail"]


# ---------------------------------------------------------------------------
# convergence and sweeps


def running_coverage(transcript, i):
    """Cumulative weighted coverage of group ``i`` at each of its rounds."""
    w = transcript.g[:, i]
    mask = w > 0
    w = w[mask]
    cov = transcript.covered[mask].astype(float)
    return np.cumsum(w * cov) / np.cumsum(w)


def convergence_time(transcript, epsilon=0.01):
    """Earliest within-group step after which running coverage stays within
    ``epsilon`` of ``q``, per group. ``"never"`` when the last step is still
    outside (or the group is empty).
    """
    if not epsilon > 0:
        raise ConfigError(f"epsilon must be > 0, got {epsilon}")
    out = {}
    for i, name in enumerate(transcript.group_names):
        rc = running_coverage(transcript, i)
        outside = np.flatnonzero(np.abs(rc - transcript.q) > epsilon)
        if rc.size == 0 or (outside.size and outside[-1] == rc.size - 1):
            out[name] = NEVER
        else:
            out[name] = int(outside[-1] + 2) if outside.size else 1
    return out


def _sweep_one(args):
    config, eta, epsilon, write = args
    cfg = copy.deepcopy(config)
    cfg.learner["eta"] = eta
    cfg.output["dir"] = str(Path(config.output["dir"]) / f"eta_{eta:g}")
    result = run(cfg, write=write)
    return eta, convergence_time(result.transcript, epsilon)


def sweep_eta(config, etas, epsilon=0.01, jobs=1, write=True):
    """One run per step size with identical seeds; convergence step per group.

    Returns rows ``(eta, group, convergence_step)``; also written to
    ``sweep_eta.csv`` in the output directory when ``write`` is set.
    """
    if isinstance(config, dict):
        config = RunConfig.from_dict(config)
    if config.learner["kind"] not in ("gcaci", "aci", "ftrl"):
        raise ConfigError("eta sweeps need a gcaci, aci or ftrl learner")
    etas = [check_step(e) for e in etas]
    if not epsilon > 0:
        raise ConfigError(f"epsilon must be > 0, got {epsilon}")
    tasks = [(config, eta, epsilon, write) for eta in etas]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_one, tasks))
    else:
        results = [_sweep_one(t) for t in tasks]
    rows = [(eta, group, step) for eta, table in results for group, step in table.items()]
    if write:
        out = Path(config.output["dir"])
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "sweep_eta.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["eta", "group", "convergence_step"])
            for eta, group, step in rows:
                w.writerow([repr(eta), group, step])
    return rows


def trace_norms(run_dir, out=None):
    """Read a run's ``trace.csv`` and write ``norms.csv`` with
    ``t,norm_inf,envelope``. Returns the three columns as arrays."""
    run_dir = Path(run_dir)
    path = run_dir / "trace.csv"
    if not path.exists():
        raise DataError(f"{path} not found; the run recorded no parameter trace")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t, norm, env = data[:, 0].astype(int), data[:, 1], data[:, 2]
    out = Path(out) if out is not None else run_dir / "norms.csv"
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "norm_inf", "envelope"])
        for i in range(t.size):
            w.writerow([int(t[i]), FLOAT_FORMAT % norm[i], FLOAT_FORMAT % env[i]])
    return t, norm, env
