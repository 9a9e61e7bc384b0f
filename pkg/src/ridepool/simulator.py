"""Round-by-round simulation, replay, and multi-policy experiments."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from ridepool import rng as rngmod
from ridepool.lp import LpSolution, solve_instance
from ridepool.model import Instance, dumps_canonical
from ridepool.offline import SizeLimitExceeded, expected_offline_optimal
from ridepool.policies import (
    AdapBatch,
    AdapShare,
    ClampActivated,
    EpsGreedy,
    GreedyPolicy,
    Opera1,
    Opera2,
    Policy,
    RandomPolicy,
    RoundContext,
    Telemetry,
    estimate_tables,
    gamma_fixed_point,
)

log = logging.getLogger(__name__)

TRACE_FORMAT = "ridepool-trace/1"
WORKERS_ENV = "RIDEPOOL_WORKERS"


class InvariantViolation(RuntimeError):
    def __init__(self, t: int, message: str):
        super().__init__(f"round {t}: {message}")
        self.round = t


# -- arrivals --------------------------------------------------------------


def sample_batch(row: Sequence[float], b: int, rng: np.random.Generator) -> tuple[int, ...]:
    """``b`` iid draws from ``row`` followed by a uniform shuffle (the labels)."""
    row = np.asarray(row, dtype=float)
    draws = rng.choice(len(row), size=int(b), p=row / row.sum())
    perm = rng.permutation(int(b))
    return tuple(int(v) for v in draws[perm])


def sample_arrivals(inst: Instance, rng: np.random.Generator) -> list[tuple[int, ...]]:
    return [sample_batch(inst.probs[t], int(inst.batch_sizes[t]), rng) for t in range(inst.T)]


# -- traces ----------------------------------------------------------------


@dataclass(frozen=True)
class TraceEvent:
    t: int
    step: int
    resource: int
    group: int
    labels: tuple[int, ...]
    weight: float
    duration: int


@dataclass
class Trace:
    policy: str
    seed: int
    instance: int
    run: int
    arrivals: list[tuple[int, ...]]
    events: list[TraceEvent] = field(default_factory=list)
    reward: float = 0.0

    def assignments(self) -> list[tuple[int, int, int, tuple[int, ...]]]:
        return [(e.t, e.resource, e.group, e.labels) for e in self.events]

    def to_json(self) -> str:
        d = {
            "format": TRACE_FORMAT,
            "policy": self.policy,
            "seed": self.seed,
            "instance": self.instance,
            "run": self.run,
            "arrivals": [list(a) for a in self.arrivals],
            "events": [[e.t, e.step, e.resource, e.group, list(e.labels), e.weight, e.duration] for e in self.events],
            "reward": self.reward,
        }
        return dumps_canonical(d)

    @classmethod
    def from_json(cls, text: str) -> "Trace":
        d = json.loads(text)
        if d.get("format") != TRACE_FORMAT:
            raise ValueError(f"unsupported trace format {d.get('format')!r}")
        ev = [TraceEvent(a, b, c, g, tuple(l), w, du) for a, b, c, g, l, w, du in d["events"]]
        return cls(d["policy"], d["seed"], d["instance"], d["run"], [tuple(a) for a in d["arrivals"]], ev, d["reward"])


@dataclass
class EpisodeResult:
    reward: float
    trace: Trace


def _check_round(inst: Instance, t: int, batch: tuple[int, ...], idle: np.ndarray, assigns) -> None:
    """Legality of one round's assignments, recomputed from scratch."""
    used_r: set[int] = set()
    used_l: set[int] = set()
    counts = np.zeros(inst.num_groups, dtype=np.int64)
    for a in assigns:
        u, g, labels = a.resource, a.group, a.labels
        if not 0 <= u < inst.num_resources:
            raise InvariantViolation(t, f"unknown resource {u}")
        if not idle[u]:
            raise InvariantViolation(t, f"resource {u} assigned while busy")
        if u in used_r:
            raise InvariantViolation(t, f"resource {u} assigned twice")
        used_r.add(u)
        if not labels or any(not 0 <= i < len(batch) for i in labels):
            raise InvariantViolation(t, f"labels {labels} outside the batch")
        if used_l & set(labels) or len(set(labels)) != len(labels):
            raise InvariantViolation(t, f"vertex reused in {labels}")
        used_l |= set(labels)
        if len(labels) > inst.kappa:
            raise InvariantViolation(t, f"group of {len(labels)} exceeds capacity {inst.kappa}")
        if tuple(sorted(batch[i] for i in labels)) != inst.catalog[g].members:
            raise InvariantViolation(t, f"labels {labels} do not form group {g}")
        counts[g] += 1
    # group-count rows hold automatically once vertices are disjoint; keep the check explicit
    bc = np.bincount(np.asarray(batch, dtype=np.int64), minlength=inst.num_types)
    for g in np.flatnonzero(counts):
        formable = 1
        for v, n in inst.catalog[g].multiplicities.items():
            formable *= math.comb(int(bc[v]), n)
        if counts[g] > formable:
            raise InvariantViolation(t, f"group {g} used {counts[g]} times, only {formable} formable")


def run_episode(
    inst: Instance,
    policy: Policy,
    seed: int = 0,
    instance: int = 0,
    run: int = 0,
    arrivals: Sequence[Sequence[int]] | None = None,
    check: bool = True,
) -> EpisodeResult:
    """Simulate one episode; all randomness comes from named streams."""
    if arrivals is None:
        arrivals = sample_arrivals(inst, rngmod.stream(seed, instance, run, rngmod.ARRIVALS))
    else:
        arrivals = [tuple(int(v) for v in a) for a in arrivals]
        if len(arrivals) != inst.T:
            raise ValueError("explicit arrivals must cover every round")
    prng = rngmod.stream(seed, instance, run, rngmod.POLICY)
    orng = rngmod.stream(seed, instance, run, rngmod.OCCUPANCY)
    coin = rngmod.stream(seed, instance, run, rngmod.COIN)
    busy_until = np.zeros(inst.num_resources, dtype=np.int64)
    trace = Trace(policy.name, int(seed), int(instance), int(run), list(arrivals))
    reward = 0.0
    W = inst.weights
    policy.begin_episode()
    for t in range(inst.T):
        batch = arrivals[t]
        idle = busy_until <= t
        ctx = RoundContext(inst, t, batch, idle, prng, coin)
        assigns = policy.run_round(ctx)
        if check:
            _check_round(inst, t, batch, idle, assigns)
        for a in assigns:
            w = float(W[a.resource, a.group, t])
            d = inst.occupancy.draw(a.resource, a.group, t, orng)
            busy_until[a.resource] = t + d
            reward += w
            trace.events.append(
                TraceEvent(t, int(a.step), int(a.resource), int(a.group), tuple(int(x) for x in a.labels), w, int(d))
            )
    trace.reward = reward
    return EpisodeResult(reward, trace)


def replay(inst: Instance, trace: Trace) -> float:
    """Re-apply a trace's events with full legality checks; returns the reward."""
    busy_until = np.zeros(inst.num_resources, dtype=np.int64)
    reward = 0.0
    by_round: dict[int, list[TraceEvent]] = {}
    for e in trace.events:
        by_round.setdefault(e.t, []).append(e)
    for t in range(inst.T):
        evs = by_round.get(t, [])
        idle = busy_until <= t
        _check_round(inst, t, trace.arrivals[t], idle, [_AsAssignment(e) for e in evs])
        for e in evs:
            if e.weight != float(inst.weights[e.resource, e.group, t]):
                raise InvariantViolation(t, "trace weight differs from the instance")
            busy_until[e.resource] = t + e.duration
            reward += e.weight
    return reward


@dataclass(frozen=True)
class _AsAssignment:
    e: TraceEvent

    @property
    def resource(self):
        return self.e.resource

    @property
    def group(self):
        return self.e.group

    @property
    def labels(self):
        return self.e.labels


# -- experiments -----------------------------------------------------------

POLICY_NAMES = ("adapbatch", "adapshare", "opera1", "opera2", "random", "greedy", "eps-greedy")


@dataclass(frozen=True)
class PolicySpec:
    name: str
    gamma: str | float = "auto"
    beta_samples: int = 10_000
    epsilon: float = 0.1
    mode: str = "auto"

    def resolved_gamma(self, kappa: int) -> float:
        """``auto``: 1/2 for ADAPBatch, the fixed point for ADAPShare."""
        if self.gamma == "auto":
            return 0.5 if self.name == "adapbatch" else gamma_fixed_point(kappa).gamma
        if self.gamma == "fixed-point":
            return gamma_fixed_point(kappa).gamma
        return float(self.gamma)


@dataclass
class ExperimentConfig:
    policies: list[PolicySpec]
    runs: int = 100
    seed: int = 0
    lp_method: str = "auto"
    exact_offline: bool = False
    workers: int | None = None

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d.pop("workers")
        return d


@dataclass
class PolicyRow:
    policy: str
    instance: int
    runs: int
    mean_reward: float
    std_reward: float
    lp_bound: float
    cr_lp: float
    offline_opt: float | None
    cr_offline: float | None
    clamp_rate: float
    fallbacks: int
    gamma: float | None
    error: str = ""
    rewards: list[float] = field(default_factory=list, repr=False)

    @property
    def stderr(self) -> float:
        return self.std_reward / np.sqrt(self.runs) if self.runs else float("nan")


CSV_COLUMNS = [
    "policy",
    "instance",
    "runs",
    "mean_reward",
    "std_reward",
    "stderr",
    "lp_bound",
    "cr_lp",
    "offline_opt",
    "cr_offline",
    "clamp_rate",
    "fallbacks",
    "gamma",
    "error",
]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _finite(obj):
    """NaN and infinities become null so the report stays strict JSON."""
    if isinstance(obj, float):
        return obj if np.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    rows: list[PolicyRow]
    instances: list[dict]

    def summary(self) -> dict[str, dict[str, float]]:
        """Per policy: mean and pooled standard error over all episodes."""
        out = {}
        for name in dict.fromkeys(r.policy for r in self.rows):
            rs = np.concatenate([r.rewards for r in self.rows if r.policy == name and r.rewards] or [np.zeros(0)])
            crs = [r.cr_lp for r in self.rows if r.policy == name and not r.error]
            out[name] = {
                "episodes": int(rs.size),
                "mean_reward": float(rs.mean()) if rs.size else float("nan"),
                "stderr": float(rs.std(ddof=1) / np.sqrt(rs.size)) if rs.size > 1 else float("nan"),
                "mean_cr_lp": float(np.mean(crs)) if crs else float("nan"),
            }
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            vals = {**asdict(r), "stderr": float(r.stderr)}
            w.writerow([_fmt(vals[c]) for c in CSV_COLUMNS])
        return buf.getvalue()

    def to_json(self) -> str:
        from ridepool import __version__

        d = {
            "format": "ridepool-report/1",
            "version": __version__,
            "config": self.config.to_dict(),
            "instances": self.instances,
            "summary": self.summary(),
        }
        return json.dumps(_finite(d), sort_keys=True, indent=2, allow_nan=False) + "\n"

    def write(self, directory: str | Path, stem: str = "report") -> tuple[Path, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        c, j = directory / f"{stem}.csv", directory / f"{stem}.json"
        c.write_text(self.to_csv())
        j.write_text(self.to_json())
        return c, j


def build_policy(spec: PolicySpec, inst: Instance, lp: LpSolution | None, seed: int, instance: int) -> Policy:
    n = spec.name
    if n == "random":
        return RandomPolicy(inst)
    if n == "greedy":
        return GreedyPolicy(inst)
    if lp is None:
        raise ValueError(f"policy {n} needs an LP solution")
    if n == "opera1":
        return Opera1(inst, lp)
    if n == "opera2":
        return Opera2(inst, lp)
    if n == "eps-greedy":
        return EpsGreedy(inst, lp, spec.epsilon)
    gamma = spec.resolved_gamma(inst.kappa)
    if n in ("adapshare", "adapbatch"):
        tables = estimate_tables(inst, lp, gamma, spec.beta_samples, seed, spec.mode, instance)
        if n == "adapbatch":
            return AdapBatch(inst, lp, tables.beta, gamma)
        return AdapShare(inst, lp, tables, gamma)
    raise ValueError(f"unknown policy {n!r}; choose from {', '.join(POLICY_NAMES)}")


def _episodes(args) -> tuple[list[float], Telemetry]:
    spec, inst, lp, seed, instance, runs = args
    policy = build_policy(spec, inst, lp, seed, instance)
    return [run_episode(inst, policy, seed, instance, r).reward for r in runs], policy.telemetry


def worker_count(config: ExperimentConfig) -> int:
    if config.workers is not None:
        return max(1, int(config.workers))
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def run_experiment(config: ExperimentConfig, instances: Sequence[Instance]) -> ExperimentReport:
    """Solve the LP per instance, run every policy ``config.runs`` times, aggregate.

    A policy that fails on an instance gets a row carrying the error; the
    remaining rows are still produced.
    """
    rows: list[PolicyRow] = []
    meta = []
    workers = worker_count(config)
    needs_lp = any(s.name not in ("random", "greedy") for s in config.policies)
    for k, inst in enumerate(instances):
        sol = solve_instance(inst, config.lp_method)[1] if needs_lp else None
        bound = sol.objective if sol is not None else float("nan")
        offline = None
        if config.exact_offline:
            try:
                offline = expected_offline_optimal(inst)
            except (SizeLimitExceeded, ValueError) as exc:
                log.warning("instance %d: no exact offline optimum (%s)", k, exc)
        meta.append({"instance": k, "lp_bound": bound if sol is not None else None, "offline_opt": offline, "metadata": inst.metadata})
        for spec in config.policies:
            gamma = spec.resolved_gamma(inst.kappa) if spec.name.startswith("adap") else None
            try:
                runs = list(range(config.runs))
                if workers > 1 and config.runs > 1:
                    chunks = [runs[i::workers] for i in range(workers)]
                    with ProcessPoolExecutor(workers) as ex:
                        parts = list(ex.map(_episodes, [(spec, inst, sol, config.seed, k, c) for c in chunks]))
                    rewards = [0.0] * config.runs
                    tele = Telemetry()
                    for c, (rs, te) in zip(chunks, parts):
                        for r, v in zip(c, rs):
                            rewards[r] = v
                        tele.merge(te)
                else:
                    rewards, tele = _episodes((spec, inst, sol, config.seed, k, runs))
                if tele.clamps:
                    warnings.warn(
                        ClampActivated(f"{spec.name} on instance {k}: {tele.clamps} of {tele.samples} rules above 1"),
                        stacklevel=2,
                    )
                arr = np.asarray(rewards)
                mean = float(arr.mean())
                std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
                rows.append(
                    PolicyRow(
                        spec.name, k, arr.size, mean, std, bound,
                        mean / bound if bound > 0 else float("nan"),
                        offline, (mean / offline if offline else None),
                        tele.clamp_rate, tele.fallbacks, gamma, "", list(rewards),
                    )
                )
            except Exception as exc:  # keep partial results
                log.error("policy %s failed on instance %d: %s", spec.name, k, exc)
                rows.append(PolicyRow(spec.name, k, 0, float("nan"), float("nan"), bound, float("nan"), offline, None, 0.0, 0, gamma, f"{type(exc).__name__}: {exc}"))
    return ExperimentReport(config, rows, meta)
