"""Instance generation: the synthetic family and trip-record ingestion."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from ridepool import rng as rngmod
from ridepool.grouping import GroupCatalog
from ridepool.model import Instance, OccupancyModel, make_instance

KM_PER_DEG_LAT = 111.195
# lat_min, lon_min, lat_max, lon_max
MANHATTAN_BBOX = (40.700, -74.020, 40.880, -73.907)
TRIP_FIELDS = ("pickup_datetime", "pickup_lat", "pickup_lon", "dropoff_lat", "dropoff_lon")


def linear_revenue(base: float, per_round: float = 0.5) -> Callable[[np.ndarray], np.ndarray]:
    """Taxi-style revenue: a base fare plus a charge per round of occupancy."""

    def revenue(c: np.ndarray) -> np.ndarray:
        return base + per_round * np.asarray(c, dtype=float)

    return revenue


# -- synthetic family ------------------------------------------------------


@dataclass(frozen=True)
class SyntheticParams:
    num_resources: int = 10
    num_types: int = 10
    rounds: int = 200
    kappa: int = 2
    batch_size: int = 5
    base_revenue: float = 5.0
    max_occupancy: int = 60


def generate_synthetic(params: SyntheticParams, seed: int, instance: int = 0) -> Instance:
    """Random instance of the synthetic family.

    Arrival rows are uniform on the simplex; occupancy is uniform on
    ``{1..max_occupancy}`` per (resource, group, round); revenue is
    ``base + 0.5 * c``.
    """
    p = params
    if p.batch_size <= p.kappa:
        raise ValueError("batch_size must exceed kappa")
    gen = rngmod.stream(seed, instance, 0, rngmod.GENERATOR)
    catalog = GroupCatalog.full(p.num_types, p.kappa)
    probs = gen.dirichlet(np.ones(p.num_types), size=p.rounds)
    probs /= probs.sum(axis=1, keepdims=True)
    occ = gen.integers(1, p.max_occupancy + 1, size=(p.num_resources, len(catalog), p.rounds))
    weights = linear_revenue(p.base_revenue)(occ)
    meta = {"generator": "synthetic", "seed": int(seed), "instance": int(instance), "params": asdict(p)}
    return make_instance(
        kappa=p.kappa,
        batch_sizes=[p.batch_size] * p.rounds,
        probs=probs,
        weights=weights,
        occupancy=occ,
        catalog=catalog,
        metadata=meta,
    )


# -- grid ------------------------------------------------------------------


@dataclass(frozen=True)
class Grid:
    """Square cells laid over a lat/lon box (equirectangular projection)."""

    bbox: tuple[float, float, float, float]
    cell_km: float
    rows: int
    cols: int

    @classmethod
    def over(cls, bbox: Sequence[float], cell_km: float) -> "Grid":
        if cell_km <= 0:
            raise ValueError("cell_km must be positive")
        lat0, lon0, lat1, lon1 = map(float, bbox)
        if not (lat1 > lat0 and lon1 > lon0):
            raise ValueError("bounding box must be (lat_min, lon_min, lat_max, lon_max)")
        h, w = _box_km(lat0, lon0, lat1, lon1)
        return cls((lat0, lon0, lat1, lon1), float(cell_km), max(1, math.ceil(h / cell_km - 1e-9)), max(1, math.ceil(w / cell_km - 1e-9)))

    @property
    def num_cells(self) -> int:
        return self.rows * self.cols

    def cell_of(self, lat: np.ndarray, lon: np.ndarray) -> np.ndarray:
        """Cell index per point; -1 outside the box."""
        lat0, lon0, lat1, lon1 = self.bbox
        lat = np.asarray(lat, dtype=float)
        lon = np.asarray(lon, dtype=float)
        kx = KM_PER_DEG_LAT * math.cos(math.radians((lat0 + lat1) / 2))
        r = np.floor((lat - lat0) * KM_PER_DEG_LAT / self.cell_km).astype(np.int64)
        c = np.floor((lon - lon0) * kx / self.cell_km).astype(np.int64)
        r = np.minimum(r, self.rows - 1)  # points on the far edge
        c = np.minimum(c, self.cols - 1)
        inside = (lat >= lat0) & (lat <= lat1) & (lon >= lon0) & (lon <= lon1)
        return np.where(inside, r * self.cols + c, -1)

    def centers(self) -> np.ndarray:
        """``(num_cells, 2)`` lat/lon of cell centers."""
        lat0, lon0, lat1, lon1 = self.bbox
        kx = KM_PER_DEG_LAT * math.cos(math.radians((lat0 + lat1) / 2))
        rr, cc = np.divmod(np.arange(self.num_cells), self.cols)
        return np.column_stack([lat0 + (rr + 0.5) * self.cell_km / KM_PER_DEG_LAT, lon0 + (cc + 0.5) * self.cell_km / kx])


def _box_km(lat0: float, lon0: float, lat1: float, lon1: float) -> tuple[float, float]:
    kx = KM_PER_DEG_LAT * math.cos(math.radians((lat0 + lat1) / 2))
    return (lat1 - lat0) * KM_PER_DEG_LAT, (lon1 - lon0) * kx


@dataclass
class GridResult:
    cells: np.ndarray  # compact cell id per kept point
    kept: np.ndarray  # boolean mask over the input points
    dropped: int
    cell_map: dict[int, int]  # raw grid cell -> compact id
    grid: Grid

    @property
    def num_cells(self) -> int:
        return len(self.cell_map)


def grid_discretize(
    points: np.ndarray,
    cell_km: float,
    bbox: Sequence[float] = MANHATTAN_BBOX,
    occupied_only: bool = False,
) -> GridResult:
    """Map lat/lon points to square cells; points outside ``bbox`` are dropped.

    With ``occupied_only`` the cells are renumbered densely over those that
    hold at least one point, otherwise every grid cell keeps its raw index.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    grid = Grid.over(bbox, cell_km)
    raw = grid.cell_of(pts[:, 0], pts[:, 1])
    kept = raw >= 0
    if occupied_only:
        used = np.unique(raw[kept])
        cell_map = {int(c): i for i, c in enumerate(used)}
    else:
        cell_map = {c: c for c in range(grid.num_cells)}
    lut = np.full(grid.num_cells, -1, dtype=np.int64)
    for k, v in cell_map.items():
        lut[k] = v
    return GridResult(lut[raw[kept]], kept, int((~kept).sum()), cell_map, grid)


# -- trip ingestion --------------------------------------------------------


@dataclass
class Trip:
    pickup: datetime
    origin: tuple[float, float]
    dest: tuple[float, float]
    dropoff: datetime | None = None


@dataclass
class TripTable:
    trips: list[Trip]
    bad_rows: int = 0

    @property
    def days(self) -> list[str]:
        return sorted({t.pickup.date().isoformat() for t in self.trips})


def read_trips(path: str | Path) -> TripTable:
    """Read a trip CSV with columns pickup_datetime, pickup_lat, pickup_lon,
    dropoff_lat, dropoff_lon and an optional dropoff_datetime."""
    trips: list[Trip] = []
    bad = 0
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [f for f in TRIP_FIELDS if f not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing trip columns {missing}")
        has_drop = "dropoff_datetime" in reader.fieldnames
        for row in reader:
            try:
                pick = datetime.fromisoformat(row["pickup_datetime"].strip())
                drop = datetime.fromisoformat(row["dropoff_datetime"].strip()) if has_drop and row["dropoff_datetime"] else None
                trips.append(
                    Trip(
                        pick,
                        (float(row["pickup_lat"]), float(row["pickup_lon"])),
                        (float(row["dropoff_lat"]), float(row["dropoff_lon"])),
                        drop,
                    )
                )
            except (ValueError, KeyError, AttributeError):
                bad += 1
    return TripTable(trips, bad)


@dataclass
class ArrivalEstimate:
    probs: np.ndarray  # (T, V + 1), null type last
    batch_sizes: np.ndarray
    mean_counts: np.ndarray
    type_counts: np.ndarray  # (T, V) summed over training days
    null_type: int
    train_days: list[str]
    test_days: list[str]
    round_minutes: float
    report: dict = field(default_factory=dict)


def split_days(days: Sequence[str], train_days: int | Sequence[str] | None) -> tuple[list[str], list[str]]:
    """Disjoint train/test split; an int takes the first ``n`` days for training."""
    days = sorted(days)
    if train_days is None:
        n = max(1, len(days) // 2) if len(days) > 1 else len(days)
        train = days[:n]
    elif isinstance(train_days, int):
        train = days[:train_days]
    else:
        train = sorted(train_days)
        unknown = set(train) - set(days)
        if unknown:
            raise ValueError(f"training days not in data: {sorted(unknown)}")
    test = [d for d in days if d not in set(train)]
    if not train:
        raise ValueError("no training days")
    return train, test


def _round_of(ts: datetime, T: int) -> int:
    minutes = ts.hour * 60 + ts.minute + ts.second / 60
    return min(T - 1, int(minutes * T // (24 * 60)))


def estimate_arrival_model(
    table: TripTable,
    types: np.ndarray,
    num_types: int,
    rounds: int,
    train_days: int | Sequence[str] | None = None,
    kappa: int = 1,
    pad_batches: bool = False,
) -> ArrivalEstimate:
    """Per-round OD frequencies and batch sizes from the training days.

    ``types[i]`` is the OD type of trip ``i`` (-1 = dropped). The batch size
    is the mean per-round count rounded up, so the null type (index
    ``num_types``) absorbs the remaining mass. With ``pad_batches`` batches
    are raised to ``kappa + 1``.
    """
    train, test = split_days(table.days, train_days)
    train_set = set(train)
    counts = np.zeros((rounds, num_types))
    for trip, v in zip(table.trips, types):
        if v >= 0 and trip.pickup.date().isoformat() in train_set:
            counts[_round_of(trip.pickup, rounds), v] += 1
    per_day = counts / len(train)
    mean = per_day.sum(axis=1)
    b = np.maximum(1, np.ceil(mean - 1e-9)).astype(np.int64)
    if pad_batches:
        b = np.maximum(b, kappa + 1)
    probs = np.zeros((rounds, num_types + 1))
    probs[:, :num_types] = per_day / b[:, None]
    probs[:, num_types] = np.maximum(0.0, 1.0 - probs[:, :num_types].sum(axis=1))
    return ArrivalEstimate(
        probs=probs,
        batch_sizes=b,
        mean_counts=mean,
        type_counts=counts,
        null_type=num_types,
        train_days=train,
        test_days=test,
        round_minutes=24 * 60 / rounds,
    )


@dataclass
class TripInstance:
    instance: Instance
    estimate: ArrivalEstimate
    grid: GridResult
    test_arrivals: dict[str, list[list[int]]]  # day -> per-round realized types


def _haversine_km(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    la1, lo1, la2, lo2 = map(np.radians, (a[..., 0], a[..., 1], b[..., 0], b[..., 1]))
    h = np.sin((la2 - la1) / 2) ** 2 + np.cos(la1) * np.cos(la2) * np.sin((lo2 - lo1) / 2) ** 2
    return 2 * 6371.0 * np.arcsin(np.sqrt(h))


def instance_from_trips(
    path: str | Path,
    cell_km: float = 4.0,
    rounds: int = 240,
    kappa: int = 2,
    num_resources: int = 10,
    bbox: Sequence[float] = MANHATTAN_BBOX,
    train_days: int | Sequence[str] | None = None,
    base_revenue: float = 5.0,
    speed_kmh: float = 20.0,
    occupied_only: bool = True,
    pad_batches: bool = True,
) -> TripInstance:
    """Grid-discretized instance from a trip CSV.

    Vertex types are origin-destination cell pairs plus a trailing null type.
    Occupancy of an OD pair is its median training-day trip duration in
    rounds (at least 1); without drop-off times, or for unseen pairs, the
    straight-line distance between cell centers at ``speed_kmh`` stands in.
    A group occupies a resource for its longest member plus one round per
    extra member. Groups containing the null type earn nothing.
    """
    table = read_trips(path)
    if not table.trips:
        raise ValueError(f"{path}: no usable trip rows")
    pts = np.array([t.origin for t in table.trips] + [t.dest for t in table.trips])
    gres = grid_discretize(pts, cell_km, bbox, occupied_only=occupied_only)
    n = len(table.trips)
    full = np.full(2 * n, -1, dtype=np.int64)
    full[gres.kept] = gres.cells
    o, d = full[:n], full[n:]
    C = gres.num_cells
    types = np.where((o >= 0) & (d >= 0), o * C + d, -1)
    V = C * C
    est = estimate_arrival_model(table, types, V, rounds, train_days, kappa, pad_batches)
    round_min = est.round_minutes

    # per-OD occupancy in rounds
    durations: dict[int, list[float]] = defaultdict(list)
    train_set = set(est.train_days)
    for trip, v in zip(table.trips, types):
        if v >= 0 and trip.dropoff is not None and trip.pickup.date().isoformat() in train_set:
            durations[int(v)].append((trip.dropoff - trip.pickup).total_seconds() / 60)
    inv = {c: raw for raw, c in gres.cell_map.items()}
    centers = gres.grid.centers()
    c_type = np.ones(V + 1, dtype=np.int64)
    for v in range(V):
        if durations.get(v):
            minutes = float(np.median(durations[v]))
        else:
            a, b = centers[inv[v // C]], centers[inv[v % C]]
            minutes = float(_haversine_km(a, b)) / speed_kmh * 60
        c_type[v] = max(1, math.ceil(minutes / round_min - 1e-9))

    catalog = GroupCatalog.full(V + 1, kappa)
    occ_g = np.array([c_type[list(g.members)].max() + g.size - 1 for g in catalog], dtype=np.int64)
    null_g = np.array([V in g.members for g in catalog])
    w_g = np.where(null_g, 0.0, linear_revenue(base_revenue)(occ_g))
    T = rounds
    occ = np.broadcast_to(occ_g[None, :, None], (num_resources, len(catalog), T)).copy()
    weights = np.broadcast_to(w_g[None, :, None], (num_resources, len(catalog), T)).copy()
    labels = [f"{inv[v // C]}->{inv[v % C]}" for v in range(V)] + ["null"]
    meta = {
        "generator": "trips",
        "source": str(path),
        "cell_km": cell_km,
        "bbox": list(bbox),
        "num_cells": C,
        "train_days": est.train_days,
        "test_days": est.test_days,
        "dropped_points": gres.dropped,
        "bad_rows": table.bad_rows,
    }
    inst = make_instance(
        kappa=kappa,
        batch_sizes=est.batch_sizes,
        probs=est.probs,
        weights=weights,
        occupancy=OccupancyModel(occ),
        catalog=catalog,
        labels=labels,
        relax_batch_assumption=bool(np.any(est.batch_sizes <= kappa)),
        metadata=meta,
    )
    test_set = set(est.test_days)
    arrivals: dict[str, list[list[int]]] = {d: [[] for _ in range(T)] for d in est.test_days}
    for trip, v in zip(table.trips, types):
        day = trip.pickup.date().isoformat()
        if v >= 0 and day in test_set:
            arrivals[day][_round_of(trip.pickup, T)].append(int(v))
    return TripInstance(inst, est, gres, arrivals)


def write_trips(path: str | Path, rows: Iterable[Sequence]) -> None:
    """Write trip rows (pickup_datetime, lat, lon, lat, lon[, dropoff_datetime])."""
    rows = list(rows)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = list(TRIP_FIELDS)
        if rows and len(rows[0]) > len(TRIP_FIELDS):
            header.append("dropoff_datetime")
        w.writerow(header)
        for r in rows:
            w.writerow([x.isoformat() if isinstance(x, datetime) else x for x in r])


# -- tiny instances for exact checks ----------------------------------------


@dataclass(frozen=True)
class TinyParams:
    max_resources: int = 2
    max_types: int = 2
    max_rounds: int = 3
    max_batch: int = 2
    max_kappa: int = 2
    zero_weight_prob: float = 0.2


def generate_tiny(params: TinyParams, seed: int, instance: int = 0) -> Instance:
    """Small random instance with constant occupancy, sized for exhaustive search.

    Batches may not exceed capacity here, so the batch assumption is relaxed.
    """
    p = params
    gen = rngmod.stream(seed, instance, 0, rngmod.GENERATOR)
    U = int(gen.integers(1, p.max_resources + 1))
    V = int(gen.integers(1, p.max_types + 1))
    T = int(gen.integers(1, p.max_rounds + 1))
    kappa = int(gen.integers(1, p.max_kappa + 1))
    b = gen.integers(1, p.max_batch + 1, size=T)
    catalog = GroupCatalog.full(V, kappa)
    G = len(catalog)
    probs = gen.dirichlet(np.ones(V), size=T)
    probs /= probs.sum(axis=1, keepdims=True)
    w = np.round(gen.uniform(0.0, 3.0, size=(U, G, T)), 3)
    w[gen.random((U, G, T)) < p.zero_weight_prob] = 0.0
    occ = gen.integers(1, T + 1, size=(U, G, T))
    return make_instance(
        kappa=kappa,
        batch_sizes=b,
        probs=probs,
        weights=w,
        occupancy=occ,
        catalog=catalog,
        relax_batch_assumption=bool(np.any(b <= kappa)),
        metadata={"generator": "tiny", "seed": int(seed), "instance": int(instance), "params": asdict(p)},
    )
