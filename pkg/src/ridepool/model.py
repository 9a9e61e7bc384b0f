"""Problem data model: resources, vertex types, arrivals, weights, occupancy."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from ridepool.grouping import GroupCatalog

FORMAT = "ridepool-instance/1"
PROB_TOL = 1e-9


@dataclass(frozen=True)
class VertexType:
    id: int
    label: str | None = None


@dataclass(frozen=True)
class Resource:
    id: int
    capacity: int


@dataclass(frozen=True)
class OccupancyDistribution:
    """Number of rounds a resource stays busy after an assignment."""

    support: tuple[int, ...]
    probabilities: tuple[float, ...]

    @classmethod
    def constant(cls, c: int) -> "OccupancyDistribution":
        return cls((int(c),), (1.0,))

    @property
    def is_constant(self) -> bool:
        return len(self.support) == 1

    def survival(self, d: int) -> float:
        """``Pr[c > d]``."""
        return float(sum(p for s, p in zip(self.support, self.probabilities) if s > d))

    def pmf(self, k: int) -> float:
        return float(sum(p for s, p in zip(self.support, self.probabilities) if s == k))

    def sample(self, rng: np.random.Generator) -> int:
        if self.is_constant:
            return self.support[0]
        return int(self.support[int(rng.choice(len(self.support), p=self.probabilities))])

    def problems(self) -> list[str]:
        errs = []
        if len(self.support) != len(self.probabilities) or not self.support:
            errs.append("support and probabilities differ in length")
            return errs
        if min(self.support) < 1:
            errs.append("occupancy support values must be >= 1")
        if min(self.probabilities) < 0:
            errs.append("occupancy probabilities must be nonnegative")
        if abs(sum(self.probabilities) - 1.0) > PROB_TOL:
            errs.append("occupancy probabilities do not sum to 1")
        return errs


class OccupancyModel:
    """Occupancy per (resource, group, round).

    Stored as an integer array of constants plus a sparse dict of categorical
    overrides; the constant array holds 0 at overridden cells.
    """

    def __init__(self, constants: np.ndarray, dists: Mapping[tuple[int, int, int], OccupancyDistribution] | None = None):
        constants = np.array(constants, dtype=np.int64)
        constants.setflags(write=False)
        self.constants = constants
        self.dists: dict[tuple[int, int, int], OccupancyDistribution] = {}
        for key, dist in (dists or {}).items():
            key = tuple(int(k) for k in key)
            if dist.is_constant:
                raise ValueError("put constant occupancy in the constants array")
            self.dists[key] = dist  # type: ignore[index]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.constants.shape  # type: ignore[return-value]

    @property
    def is_constant(self) -> bool:
        return not self.dists

    def get(self, u: int, g: int, t: int) -> OccupancyDistribution:
        d = self.dists.get((u, g, t))
        if d is not None:
            return d
        return OccupancyDistribution.constant(int(self.constants[u, g, t]))

    def draw(self, u: int, g: int, t: int, rng: np.random.Generator) -> int:
        """Constant cells never touch ``rng``."""
        d = self.dists.get((u, g, t))
        if d is None:
            return int(self.constants[u, g, t])
        return d.sample(rng)

    def pmf_entries(self, u: int, g: int, t: int) -> list[tuple[int, float]]:
        d = self.dists.get((u, g, t))
        if d is None:
            return [(int(self.constants[u, g, t]), 1.0)]
        return [(s, p) for s, p in zip(d.support, d.probabilities) if p > 0]

    def means(self) -> np.ndarray:
        """Expected occupancy per (resource, group, round)."""
        out = self.constants.astype(float)
        for (u, g, t), d in self.dists.items():
            out[u, g, t] = float(np.dot(d.support, d.probabilities))
        return out

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, OccupancyModel)
            and np.array_equal(self.constants, other.constants)
            and self.dists == other.dists
        )


@dataclass(frozen=True, eq=False)
class Instance:
    """A complete problem instance. Arrays are read-only after construction.

    Shapes: ``probs`` (T, |V|), ``weights`` (|U|, |G|, T), occupancy likewise.
    Rounds are 0-based.
    """

    kappa: int
    batch_sizes: np.ndarray
    vertex_types: tuple[VertexType, ...]
    resources: tuple[Resource, ...]
    probs: np.ndarray
    weights: np.ndarray
    occupancy: OccupancyModel
    catalog: GroupCatalog
    relax_batch_assumption: bool = False
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("batch_sizes", "probs", "weights"):
            arr = np.array(getattr(self, name), dtype=np.int64 if name == "batch_sizes" else float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def T(self) -> int:
        return len(self.batch_sizes)

    @property
    def num_resources(self) -> int:
        return len(self.resources)

    @property
    def num_types(self) -> int:
        return len(self.vertex_types)

    @property
    def num_groups(self) -> int:
        return len(self.catalog)

    def q_groups(self) -> np.ndarray:
        """Expected formable group counts, shape (|G|, T)."""
        cache = self.__dict__.setdefault("_cache", {})
        if "q" not in cache:
            q = self.catalog.q_table(self.probs, self.batch_sizes)
            q.setflags(write=False)
            cache["q"] = q
        return cache["q"]

    def q_vertices(self) -> np.ndarray:
        """Expected vertex counts ``b^t p_v^t``, shape (|V|, T)."""
        return (self.batch_sizes[:, None] * self.probs).T

    def h_groups(self) -> np.ndarray:
        cache = self.__dict__.setdefault("_cache", {})
        if "h" not in cache:
            h = self.catalog.h_table(self.batch_sizes)
            h.setflags(write=False)
            cache["h"] = h
        return cache["h"]

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        U, G, T = self.weights.shape
        nz = np.argwhere(self.weights != 0)
        weights = [[int(u), int(g), int(t), float(self.weights[u, g, t])] for u, g, t in nz]
        occ: list = []
        for u in range(U):
            rows = []
            for g in range(G):
                cells = []
                for t in range(T):
                    d = self.occupancy.dists.get((u, g, t))
                    if d is None:
                        cells.append(int(self.occupancy.constants[u, g, t]))
                    else:
                        cells.append({"support": list(d.support), "probs": list(d.probabilities)})
                rows.append(cells)
            occ.append(rows)
        out: dict[str, Any] = {
            "format": FORMAT,
            "kappa": self.kappa,
            "T": self.T,
            "batch_sizes": [int(b) for b in self.batch_sizes],
            "vertex_types": [{"id": v.id, "label": v.label} for v in self.vertex_types],
            "resources": [{"id": r.id, "capacity": r.capacity} for r in self.resources],
            "probs": [[float(p) for p in row] for row in self.probs],
            "weights": weights,
            "occupancy": occ,
            "relax_batch_assumption": self.relax_batch_assumption,
            "metadata": self.metadata,
        }
        if self.catalog.pruned:
            out["groups"] = [list(g.members) for g in self.catalog]
        return out

    def to_json(self) -> str:
        return dumps_canonical(self.to_dict())

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Instance":
        if d.get("format", FORMAT) != FORMAT:
            raise ValueError(f"unknown instance format {d.get('format')!r}")
        kappa = int(d["kappa"])
        vtypes = tuple(VertexType(int(v["id"]), v.get("label")) for v in d["vertex_types"])
        resources = tuple(Resource(int(r["id"]), int(r["capacity"])) for r in d["resources"])
        if "groups" in d:
            catalog = GroupCatalog.from_members(len(vtypes), kappa, d["groups"])
        else:
            catalog = GroupCatalog.full(len(vtypes), kappa)
        T = int(d["T"])
        U, G = len(resources), len(catalog)
        weights = np.zeros((U, G, T))
        for u, g, t, w in d["weights"]:
            weights[int(u), int(g), int(t)] = float(w)
        consts = np.zeros((U, G, T), dtype=np.int64)
        dists = {}
        occ = d["occupancy"]
        if len(occ) != U or any(len(row) != G for row in occ):
            raise ValueError("occupancy table shape does not match resources x groups")
        for u in range(U):
            for g in range(G):
                cells = occ[u][g]
                if len(cells) != T:
                    raise ValueError("occupancy table shape does not match T")
                for t, cell in enumerate(cells):
                    if isinstance(cell, dict):
                        dist = OccupancyDistribution(
                            tuple(int(s) for s in cell["support"]), tuple(float(p) for p in cell["probs"])
                        )
                        if dist.is_constant:
                            consts[u, g, t] = dist.support[0]
                        else:
                            dists[(u, g, t)] = dist
                    else:
                        consts[u, g, t] = int(cell)
        return cls(
            kappa=kappa,
            batch_sizes=np.array(d["batch_sizes"], dtype=np.int64),
            vertex_types=vtypes,
            resources=resources,
            probs=np.array(d["probs"], dtype=float).reshape(T, len(vtypes)),
            weights=weights,
            occupancy=OccupancyModel(consts, dists),
            catalog=catalog,
            relax_batch_assumption=bool(d.get("relax_batch_assumption", False)),
            metadata=dict(d.get("metadata", {})),
        )

    @classmethod
    def from_json(cls, text: str) -> "Instance":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path: str | Path) -> "Instance":
        return cls.from_json(Path(path).read_text())


def dumps_canonical(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def make_instance(
    *,
    kappa: int,
    batch_sizes: Sequence[int],
    probs: np.ndarray,
    weights: np.ndarray,
    occupancy: np.ndarray | OccupancyModel,
    num_resources: int | None = None,
    catalog: GroupCatalog | None = None,
    labels: Sequence[str | None] | None = None,
    relax_batch_assumption: bool = False,
    metadata: dict | None = None,
) -> Instance:
    """Convenience constructor from bare arrays."""
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    T, V = probs.shape
    weights = np.asarray(weights, dtype=float)
    U = weights.shape[0] if num_resources is None else num_resources
    if catalog is None:
        catalog = GroupCatalog.full(V, kappa)
    if not isinstance(occupancy, OccupancyModel):
        occ = np.asarray(occupancy, dtype=np.int64)
        if occ.ndim == 0:
            occ = np.full((U, len(catalog), T), int(occ), dtype=np.int64)
        occupancy = OccupancyModel(occ)
    labels = labels or [None] * V
    return Instance(
        kappa=kappa,
        batch_sizes=np.asarray(batch_sizes, dtype=np.int64),
        vertex_types=tuple(VertexType(i, labels[i]) for i in range(V)),
        resources=tuple(Resource(i, kappa) for i in range(U)),
        probs=probs,
        weights=weights,
        occupancy=occupancy,
        catalog=catalog,
        relax_batch_assumption=relax_batch_assumption,
        metadata=dict(metadata or {}),
    )


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def __bool__(self) -> bool:
        return self.ok

    def __str__(self) -> str:
        if self.ok:
            return "instance OK"
        return "instance invalid:\n" + "\n".join(f"  - {e}" for e in self.errors)


def validate_instance(inst: Instance) -> ValidationReport:
    """Check every structural and probabilistic invariant; never raises."""
    errs: list[str] = []
    if inst.kappa < 1:
        errs.append(f"kappa must be >= 1, got {inst.kappa}")
    T = inst.T
    if T < 1:
        errs.append("need at least one round")
    if [v.id for v in inst.vertex_types] != list(range(inst.num_types)):
        errs.append("vertex type ids must be dense 0..|V|-1")
    if [r.id for r in inst.resources] != list(range(inst.num_resources)):
        errs.append("resource ids must be dense 0..|U|-1")
    if not inst.resources:
        errs.append("need at least one resource")
    caps = {r.capacity for r in inst.resources}
    if caps and caps != {inst.kappa}:
        errs.append(f"all resources must share capacity kappa={inst.kappa}, found {sorted(caps)}")
    for t, b in enumerate(inst.batch_sizes):
        if b < 1:
            errs.append(f"batch size must be >= 1 at t={t}")
        elif b <= inst.kappa and not inst.relax_batch_assumption:
            errs.append(f"batch size b^t={b} at t={t} violates the b^t > kappa={inst.kappa} assumption")
    if inst.probs.shape != (T, inst.num_types):
        errs.append(f"probs has shape {inst.probs.shape}, expected {(T, inst.num_types)}")
    else:
        if not np.all(np.isfinite(inst.probs)) or np.any(inst.probs < 0):
            errs.append("arrival probabilities must be finite and nonnegative")
        for t, row in enumerate(inst.probs):
            if abs(row.sum() - 1.0) > PROB_TOL:
                errs.append(f"arrival probabilities do not sum to 1 at t={t} (sum={row.sum():.12g})")
    cat = inst.catalog
    if cat.num_types != inst.num_types or cat.kappa != inst.kappa:
        errs.append("group catalog does not match |V| and kappa")
    if any((v,) not in cat._index for v in range(cat.num_types)):
        errs.append("group catalog is missing singleton groups")
    shape = (inst.num_resources, len(cat), T)
    if inst.weights.shape != shape:
        errs.append(f"weights have shape {inst.weights.shape}, expected {shape}")
    elif not np.all(np.isfinite(inst.weights)) or np.any(inst.weights < 0):
        errs.append("weights must be finite and nonnegative")
    occ = inst.occupancy
    if occ.shape != shape:
        errs.append(f"occupancy has shape {occ.shape}, expected {shape}")
    else:
        const_cells = np.ones(shape, dtype=bool)
        for key, dist in occ.dists.items():
            if not all(0 <= k < s for k, s in zip(key, shape)):
                errs.append(f"occupancy override {key} out of range")
                continue
            const_cells[key] = False
            errs.extend(f"occupancy {key}: {e}" for e in dist.problems())
        if np.any(occ.constants[const_cells] < 1):
            errs.append("occupancy constants must be >= 1")
    return ValidationReport(errs)
