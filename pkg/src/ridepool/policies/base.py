"""Shared policy plumbing: per-round context, assignments, telemetry."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ridepool.model import Instance


class InconsistentState(RuntimeError):
    """A policy was offered something the model forbids (e.g. a consumed vertex)."""


class ClampActivated(UserWarning):
    """An assignment rule summed above 1 and was renormalized."""


@dataclass(frozen=True)
class Assignment:
    resource: int
    group: int
    labels: tuple[int, ...]  # 0-based batch positions consumed
    step: int = -1  # lattice step for adaptive policies


@dataclass
class Telemetry:
    """Counts of sampling events and of rules that had to be clamped."""

    samples: int = 0
    clamps: int = 0
    max_rule: float = 0.0
    fallbacks: int = 0  # Greedy rounds solved heuristically

    def record(self, total: float) -> bool:
        self.samples += 1
        if total > self.max_rule:
            self.max_rule = total
        if total > 1.0:
            self.clamps += 1
            return True
        return False

    @property
    def clamp_rate(self) -> float:
        return self.clamps / self.samples if self.samples else 0.0

    def merge(self, other: "Telemetry") -> None:
        self.samples += other.samples
        self.clamps += other.clamps
        self.fallbacks += other.fallbacks
        self.max_rule = max(self.max_rule, other.max_rule)


@dataclass
class RoundContext:
    """What a policy sees in round ``t``: the labeled batch and idle resources."""

    inst: Instance
    t: int
    batch: tuple[int, ...]  # batch[i] = type of the vertex with label i
    idle: np.ndarray  # bool (U,)
    rng: np.random.Generator
    coin: np.random.Generator | None = None
    consumed: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.consumed = np.zeros(len(self.batch), dtype=bool)
        self.idle = np.array(self.idle, dtype=bool)

    def counts(self) -> np.ndarray:
        """Unconsumed vertices per type."""
        c = np.zeros(self.inst.num_types, dtype=np.int64)
        for i, v in enumerate(self.batch):
            if not self.consumed[i]:
                c[v] += 1
        return c

    def take(self, u: int, g: int, labels: Sequence[int], step: int = -1) -> Assignment:
        labels = tuple(int(i) for i in labels)
        if not self.idle[u]:
            raise InconsistentState(f"resource {u} is not idle at t={self.t}")
        if any(self.consumed[i] for i in labels):
            raise InconsistentState(f"labels {labels} already consumed at t={self.t}")
        self.idle[u] = False
        self.consumed[list(labels)] = True
        return Assignment(u, g, labels, step)

    def labels_for(self, g: int) -> tuple[int, ...]:
        """Lowest unconsumed labels that form group ``g``."""
        need = dict(self.inst.catalog[g].multiplicities)
        out = []
        for i, v in enumerate(self.batch):
            if not self.consumed[i] and need.get(v, 0) > 0:
                out.append(i)
                need[v] -= 1
        if any(n > 0 for n in need.values()):
            raise InconsistentState(f"group {g} is not formable from the remaining batch")
        return tuple(out)


class Policy:
    """Base class. ``run_round`` returns the round's assignments in order."""

    name = "policy"
    uses_lp = False

    def __init__(self) -> None:
        self.telemetry = Telemetry()

    def begin_episode(self) -> None:
        pass

    def run_round(self, ctx: RoundContext) -> list[Assignment]:
        raise NotImplementedError


def sample_rule(rates: np.ndarray, uniform: float) -> tuple[int, bool]:
    """Pick index ``k`` with probability ``rates[k]``; -1 for the residual mass.

    If the rates sum above 1 they are renormalized and the clamp flag is set.
    """
    total = float(rates.sum())
    clamped = total > 1.0
    if clamped:
        rates = rates / total
    cum = np.cumsum(rates)
    k = int(np.searchsorted(cum, uniform, side="right"))
    if k >= len(rates):
        if cum.size and cum[-1] >= 1.0 - 1e-12:
            # a full distribution whose float sum fell just short of the draw
            return int(np.flatnonzero(rates > 0)[-1]), clamped
        return -1, clamped
    return k, clamped
