"""Group types: multisets of vertex types that can share one resource.

Everything here is pure and cheap; a :class:`GroupCatalog` is built once per
instance and reused by the LP builders, the policies and the simulator.
"""

from __future__ import annotations

import csv
import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

MAX_GROUP_TYPES = 10**6
_COUNT_LIMIT = 2**62


@dataclass(frozen=True, order=True)
class GroupType:
    """Sorted tuple of vertex-type ids, repetition allowed."""

    members: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.members:
            raise ValueError("a group needs at least one member")
        if tuple(sorted(self.members)) != self.members:
            raise ValueError(f"members must be sorted: {self.members}")

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def multiplicities(self) -> dict[int, int]:
        """Map vertex type -> number of times it appears in the group."""
        return dict(Counter(self.members))

    def count(self, v: int) -> int:
        return self.members.count(v)

    def __str__(self) -> str:
        return "(" + ",".join(f"v{m}" for m in self.members) + ")"


def count_group_types(num_types: int, kappa: int) -> int:
    """Number of multisets of size 1..kappa over ``num_types`` elements."""
    if num_types < 1:
        raise ValueError("num_types must be >= 1")
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    total = 0
    for k in range(1, kappa + 1):
        total += math.comb(num_types + k - 1, k)
        if total > _COUNT_LIMIT:
            raise OverflowError(f"group count exceeds 2^62 for n={num_types}, kappa={kappa}")
    return total


def enumerate_group_types(
    num_types: int,
    kappa: int,
    predicate: Callable[[GroupType], bool] | None = None,
    limit: int = MAX_GROUP_TYPES,
) -> list[GroupType]:
    """All group types ordered by size, then lexicographically.

    Without a ``predicate`` the enumeration refuses to produce more than
    ``limit`` groups; with one, only groups passing it are kept (singletons
    are always kept so every arrival can be served alone).
    """
    total = count_group_types(num_types, kappa)
    if predicate is None and total > limit:
        raise ValueError(
            f"{total} group types for |V|={num_types}, kappa={kappa} exceeds {limit}; "
            "supply a pruning predicate"
        )
    out = []
    for k in range(1, kappa + 1):
        for members in itertools.combinations_with_replacement(range(num_types), k):
            g = GroupType(members)
            if predicate is None or k == 1 or predicate(g):
                out.append(g)
    return out


def falling_factorial(b: int, k: int) -> int:
    out = 1
    for i in range(k):
        out *= b - i
    return out


def h_factor(g: GroupType, b: int) -> int:
    """Number of step positions at which a group of type ``g`` is considered.

    ``b (b-1) ... (b-|g|+1) / prod_v n_v!``; for pairs this gives
    ``b(b-1)`` for two distinct types and ``b(b-1)/2`` for a repeated type.
    """
    if b < g.size:
        raise ValueError(f"batch size {b} cannot hold a group of size {g.size}")
    denom = 1
    for n in g.multiplicities.values():
        denom *= math.factorial(n)
    num = falling_factorial(b, g.size)
    assert num % denom == 0
    return num // denom


def expected_group_count(g: GroupType, probs: Sequence[float], b: int) -> float:
    """Expected number of distinct groups of type ``g`` formable from a batch."""
    if b < g.size:
        return 0.0
    prod = 1.0
    for v, n in g.multiplicities.items():
        prod *= float(probs[v]) ** n
    return h_factor(g, b) * prod


def expected_vertex_count(v: int, probs: Sequence[float], b: int) -> float:
    return b * float(probs[v])


def formable_count(g: GroupType, counts: Sequence[int]) -> int:
    """Number of distinct vertex subsets of a realized batch forming ``g``."""
    out = 1
    for v, n in g.multiplicities.items():
        out *= math.comb(int(counts[v]), n)
    return out


# -- step lattice ----------------------------------------------------------


def is_active_step(step: Sequence[int]) -> bool:
    """True if the step is (d1..ds, ds, ..., ds) with d1..ds distinct."""
    s = len(step)
    while s > 1 and step[s - 1] == step[s - 2]:
        s -= 1
    head = step[:s]
    return len(set(head)) == len(head)


def step_labels(step: Sequence[int]) -> tuple[int, ...]:
    """Distinct labels of an active step in visiting order."""
    s = len(step)
    while s > 1 and step[s - 1] == step[s - 2]:
        s -= 1
    return tuple(step[:s])


@lru_cache(maxsize=None)
def lattice_steps(b: int, kappa: int) -> tuple[tuple[int, ...], ...]:
    """Active steps of the ``b**kappa`` lattice in lexicographic order.

    Each entry is the tuple of distinct 0-based labels the step looks at.
    Inactive lattice positions (where the algorithm does nothing) are left out.
    """
    out = []
    for step in itertools.product(range(b), repeat=kappa):
        if is_active_step(step):
            out.append(step_labels(step))
    return tuple(out)


def canonical_visit(labels: Sequence[int], types: Sequence[int]) -> bool:
    """Whether ordered ``labels`` are the canonical visit of their group.

    A concrete group is processed once: at the ordering where
    (type, label) strictly increases along the tuple.
    """
    for a, b in zip(labels, labels[1:]):
        ka, kb = (types[a], a), (types[b], b)
        if not ka < kb:
            return False
    return True


@dataclass(frozen=True)
class StepVisit:
    group: GroupType
    first_visit: bool
    labels: tuple[int, ...]


def group_of_step(step: Sequence[int], labels: Sequence[int]) -> StepVisit | None:
    """Group formed at a 1-based lattice ``step`` for a realized batch.

    ``labels[i]`` is the vertex type carrying label ``i + 1``. Returns ``None``
    for inert lattice positions; otherwise the group and whether this is its
    first (processed) visit. Non-first visits must be skipped by the caller.
    """
    b = len(labels)
    if any(not 1 <= i <= b for i in step):
        raise ValueError(f"step {tuple(step)} out of range for batch of {b}")
    zero = tuple(i - 1 for i in step)
    if not is_active_step(zero):
        return None
    d = step_labels(zero)
    members = tuple(sorted(labels[i] for i in d))
    return StepVisit(GroupType(members), canonical_visit(d, labels), d)


def step_type_probability(g: GroupType, labels: Sequence[int], probs: Sequence[float]) -> float:
    """Probability that the ordered ``labels`` carry group ``g`` canonically.

    Nonzero only when, inside every run of equal member types, the labels
    increase; then it is ``prod_v p_v ** n_v``.
    """
    if len(labels) != g.size:
        return 0.0
    m = g.members
    for k in range(len(m) - 1):
        if m[k] == m[k + 1] and not labels[k] < labels[k + 1]:
            return 0.0
    prod = 1.0
    for v, n in g.multiplicities.items():
        prod *= float(probs[v]) ** n
    return prod


# -- catalog ---------------------------------------------------------------


@dataclass(frozen=True)
class GroupCatalog:
    """Indexed list of group types for one instance."""

    num_types: int
    kappa: int
    groups: tuple[GroupType, ...]
    pruned: bool = False
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        index = {g.members: i for i, g in enumerate(self.groups)}
        if len(index) != len(self.groups):
            raise ValueError("duplicate group types in catalog")
        for g in self.groups:
            if g.size > self.kappa or g.members[-1] >= self.num_types:
                raise ValueError(f"group {g} inconsistent with |V|={self.num_types}, kappa={self.kappa}")
        object.__setattr__(self, "_index", index)
        n = np.zeros((len(self.groups), self.num_types), dtype=np.int64)
        for i, g in enumerate(self.groups):
            for v, c in g.multiplicities.items():
                n[i, v] = c
        n.setflags(write=False)
        object.__setattr__(self, "membership", n)
        sizes = n.sum(axis=1)
        sizes.setflags(write=False)
        object.__setattr__(self, "sizes", sizes)

    membership: np.ndarray = field(init=False, repr=False, compare=False)
    sizes: np.ndarray = field(init=False, repr=False, compare=False)

    @classmethod
    def full(cls, num_types: int, kappa: int) -> "GroupCatalog":
        return cls(num_types, kappa, tuple(enumerate_group_types(num_types, kappa)))

    @classmethod
    def build(
        cls,
        num_types: int,
        kappa: int,
        predicate: Callable[[GroupType], bool] | None = None,
    ) -> "GroupCatalog":
        groups = enumerate_group_types(num_types, kappa, predicate)
        return cls(num_types, kappa, tuple(groups), pruned=predicate is not None)

    @classmethod
    def from_members(cls, num_types: int, kappa: int, members: Iterable[Sequence[int]]) -> "GroupCatalog":
        groups = tuple(GroupType(tuple(m)) for m in members)
        full = len(groups) == count_group_types(num_types, kappa) and groups == tuple(
            enumerate_group_types(num_types, kappa, limit=len(groups))
        )
        return cls(num_types, kappa, groups, pruned=not full)

    def __len__(self) -> int:
        return len(self.groups)

    def __getitem__(self, i: int) -> GroupType:
        return self.groups[i]

    def __iter__(self):
        return iter(self.groups)

    def index(self, members: Sequence[int]) -> int:
        """Catalog index of a group given its (unsorted) members; -1 if absent."""
        return self._index.get(tuple(sorted(members)), -1)

    def singleton(self, v: int) -> int:
        return self._index[(v,)]

    def h_table(self, batch_sizes: Sequence[int]) -> np.ndarray:
        """``h[g, t]``; zero where the group cannot fit in the batch."""
        out = np.zeros((len(self.groups), len(batch_sizes)))
        for t, b in enumerate(batch_sizes):
            for i, g in enumerate(self.groups):
                if g.size <= b:
                    out[i, t] = h_factor(g, int(b))
        return out

    def q_table(self, probs: np.ndarray, batch_sizes: Sequence[int]) -> np.ndarray:
        """Expected formable count ``q[g, t]`` for every group and round."""
        probs = np.asarray(probs, dtype=float)
        # prod_v p_v^{n_v} for all groups at once
        logless = np.ones((len(self.groups), probs.shape[0]))
        n = self.membership
        for v in range(self.num_types):
            col = n[:, v]
            nz = col > 0
            if nz.any():
                logless[nz] *= probs[:, v][None, :] ** col[nz][:, None]
        return self.h_table(batch_sizes) * logless

    def formable_mask(self, counts: np.ndarray) -> np.ndarray:
        """Groups that can still be formed from remaining vertex ``counts``."""
        return np.all(self.membership <= counts, axis=1)

    def member_lookup(self, size: int) -> np.ndarray:
        """Dense table from sorted member tuple (base-|V| code) to catalog index."""
        return _member_lookup(self, size)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["group_index", "members", "size", "multiplicities"])
            for i, g in enumerate(self.groups):
                mult = " ".join(f"{v}:{n}" for v, n in sorted(g.multiplicities.items()))
                writer.writerow([i, " ".join(map(str, g.members)), g.size, mult])


def _member_lookup(catalog: GroupCatalog, size: int) -> np.ndarray:
    cache = catalog.__dict__.setdefault("_lookup_cache", {})
    if size not in cache:
        n = catalog.num_types
        table = np.full(n**size, -1, dtype=np.int64)
        for i, g in enumerate(catalog.groups):
            if g.size == size:
                code = 0
                for m in g.members:
                    code = code * n + m
                table[code] = i
        cache[size] = table
    return cache[size]
