"""Benchmark LPs upper-bounding the expected offline optimum.

All three LPs share one column layout: ``x[u, g, t]`` at column
``(u * G + g) * T + t``; for unit capacity the groups are the singletons, so
``g == v``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ridepool.model import Instance


@dataclass(frozen=True, eq=False)
class LpModel:
    """``max c.x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  0 <= x <= 1``.

    ``n_struct`` leading columns are the assignment variables; any columns
    after them are auxiliary (compact reuse form only).
    """

    kind: str
    shape: tuple[int, int, int]
    objective: np.ndarray
    A_ub: sp.csr_matrix
    b_ub: np.ndarray
    row_names: list[str]
    A_eq: sp.csr_matrix | None = None
    b_eq: np.ndarray | None = None
    n_struct: int = field(default=-1)

    def __post_init__(self) -> None:
        if self.n_struct < 0:
            object.__setattr__(self, "n_struct", int(np.prod(self.shape)))

    @property
    def num_columns(self) -> int:
        return self.A_ub.shape[1]

    @property
    def num_rows(self) -> int:
        return self.A_ub.shape[0]

    def column(self, u: int, g: int, t: int) -> int:
        _, G, T = self.shape
        return (u * G + g) * T + t

    def column_key(self, j: int) -> tuple[int, int, int]:
        U, G, T = self.shape
        u, rest = divmod(j, G * T)
        g, t = divmod(rest, T)
        return u, g, t

    def scaled(self, lam: float) -> "LpModel":
        obj = self.objective * lam
        return LpModel(self.kind, self.shape, obj, self.A_ub, self.b_ub, self.row_names, self.A_eq, self.b_eq, self.n_struct)

    def same_as(self, other: "LpModel") -> bool:
        """Coefficient-for-coefficient equality (ignores ``kind``)."""
        return (
            self.shape == other.shape
            and np.array_equal(self.objective, other.objective)
            and np.array_equal(self.b_ub, other.b_ub)
            and self.A_ub.shape == other.A_ub.shape
            and (self.A_ub != other.A_ub).nnz == 0
            and self.row_names == other.row_names
            and (self.A_eq is None) == (other.A_eq is None)
        )


def survival_coefficients(inst: Instance) -> dict[tuple[int, int, int], list[tuple[int, float]]]:
    """Nonzero ``Pr[c > d]`` for d >= 1 per (u, g, t'); empty dict entries omitted.

    Constant occupancy contributes ``1`` for ``1 <= d < c``.
    """
    out: dict[tuple[int, int, int], list[tuple[int, float]]] = {}
    for key, dist in inst.occupancy.dists.items():
        t0 = key[2]
        vals = [(d, dist.survival(d)) for d in range(1, inst.T - t0)]
        out[key] = [(d, s) for d, s in vals if s > 0]
    return out


def _reuse_rows_expanded(inst: Instance):
    """Triplets of the per-(u, t) reuse rows in expanded form."""
    U, T = inst.num_resources, inst.T
    G = inst.num_groups
    rows, cols, vals = [], [], []
    # current-round term
    u, g, t = np.meshgrid(np.arange(U), np.arange(G), np.arange(T), indexing="ij")
    rows.append((u * T + t).ravel())
    cols.append(((u * G + g) * T + t).ravel())
    vals.append(np.ones(u.size))
    # carried-over terms from constant occupancy: x^{t'} blocks rows t' + 1 .. t' + c - 1
    consts = inst.occupancy.constants
    overridden = np.zeros(consts.shape, dtype=bool)
    for key in inst.occupancy.dists:
        overridden[key] = True
    for d in range(1, T):
        mask = (consts > d) & ~overridden
        mask[:, :, T - d :] = False
        uu, gg, tt = np.nonzero(mask)
        if uu.size:
            rows.append(uu * T + tt + d)
            cols.append((uu * G + gg) * T + tt)
            vals.append(np.ones(uu.size))
    for (uu, gg, tt), entries in survival_coefficients(inst).items():
        for d, s in entries:
            rows.append(np.array([uu * T + tt + d]))
            cols.append(np.array([(uu * G + gg) * T + tt]))
            vals.append(np.array([s]))
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def _reuse_compact(inst: Instance):
    """Reuse rows with carry variables ``s[u, t]`` (t >= 1).

    ``s[u, t] = sum_{t' < t} sum_g x[u, g, t'] Pr[c > t - t']`` is tracked by
    ``s[u, t] - s[u, t-1] - sum_g x[u, g, t-1] + sum_{t' <= t-1} sum_g x[u, g, t'] Pr[c = t - t'] = 0``.
    """
    U, G, T = inst.num_resources, inst.num_groups, inst.T
    n_struct = U * G * T
    n_aux = U * max(T - 1, 0)

    def aux(u, t):  # column of s[u, t], t >= 1
        return n_struct + u * (T - 1) + (t - 1)

    # inequality rows: s[u,t] + sum_g x[u,g,t] <= 1
    u, g, t = np.meshgrid(np.arange(U), np.arange(G), np.arange(T), indexing="ij")
    r_ub = [(u * T + t).ravel()]
    c_ub = [((u * G + g) * T + t).ravel()]
    v_ub = [np.ones(u.size)]
    uu, tt = np.meshgrid(np.arange(U), np.arange(1, T), indexing="ij")
    r_ub.append((uu * T + tt).ravel())
    c_ub.append(aux(uu, tt).ravel())
    v_ub.append(np.ones(uu.size))

    # equality rows indexed (u, t) for t = 1..T-1
    def eq_row(u, t):
        return u * (T - 1) + (t - 1)

    r_eq, c_eq, v_eq = [], [], []
    r_eq.append(eq_row(uu, tt).ravel())
    c_eq.append(aux(uu, tt).ravel())
    v_eq.append(np.ones(uu.size))
    prev = tt > 1
    r_eq.append(eq_row(uu[prev], tt[prev]))
    c_eq.append(aux(uu[prev], tt[prev] - 1))
    v_eq.append(-np.ones(int(prev.sum())))
    # -x[u, g, t-1] enters row t
    mask = t < T - 1
    r_eq.append(eq_row(u[mask], t[mask] + 1))
    c_eq.append((u[mask] * G + g[mask]) * T + t[mask])
    v_eq.append(-np.ones(int(mask.sum())))
    # +x[u, g, t'] Pr[c = k] enters row t' + k
    consts = inst.occupancy.constants
    overridden = np.zeros(consts.shape, dtype=bool)
    for key in inst.occupancy.dists:
        overridden[key] = True
    release = t + consts
    mask = (~overridden) & (release <= T - 1)
    r_eq.append(eq_row(u[mask], release[mask]))
    c_eq.append((u[mask] * G + g[mask]) * T + t[mask])
    v_eq.append(np.ones(int(mask.sum())))
    for (u0, g0, t0), dist in inst.occupancy.dists.items():
        for k, p in zip(dist.support, dist.probabilities):
            if p > 0 and t0 + k <= T - 1:
                r_eq.append(np.array([eq_row(u0, t0 + k)]))
                c_eq.append(np.array([(u0 * G + g0) * T + t0]))
                v_eq.append(np.array([p]))
    n_cols = n_struct + n_aux
    A_ub = sp.csr_matrix(
        (np.concatenate(v_ub), (np.concatenate(r_ub), np.concatenate(c_ub))), shape=(U * T, n_cols)
    )
    A_eq = sp.csr_matrix(
        (np.concatenate(v_eq), (np.concatenate(r_eq), np.concatenate(c_eq))), shape=(n_aux, n_cols)
    )
    A_eq.sum_duplicates()
    A_eq.eliminate_zeros()
    return A_ub, A_eq, n_aux


def _assemble(
    inst: Instance,
    kind: str,
    vertex_rhs: np.ndarray,
    with_group_rows: bool,
    reuse: str,
) -> LpModel:
    U, G, T, V = inst.num_resources, inst.num_groups, inst.T, inst.num_types
    n_struct = U * G * T
    N = inst.catalog.membership
    names = [f"reuse[u={u},t={t}]" for u in range(U) for t in range(T)]

    if reuse == "expanded":
        r, c, v = _reuse_rows_expanded(inst)
        reuse_block = sp.csr_matrix((v, (r, c)), shape=(U * T, n_struct))
        reuse_block.sum_duplicates()
        A_eq = b_eq = None
        n_aux = 0
    elif reuse == "compact":
        reuse_block, A_eq, n_aux = _reuse_compact(inst)
        b_eq = np.zeros(A_eq.shape[0])
    else:
        raise ValueError(f"unknown reuse form {reuse!r}")
    n_cols = n_struct + n_aux

    # vertex rows (v, t): sum_g sum_u n[g, v] x[u, g, t] <= rhs[v, t]
    gg, vv = np.nonzero(N)
    uu, tt = np.meshgrid(np.arange(U), np.arange(T), indexing="ij")
    rows, cols, vals = [], [], []
    for g, v in zip(gg, vv):
        rows.append((v * T + tt).ravel())
        cols.append(((uu * G + g) * T + tt).ravel())
        vals.append(np.full(uu.size, float(N[g, v])))
    vertex_block = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(V * T, n_cols)
    )
    names += [f"vertex[v={v},t={t}]" for v in range(V) for t in range(T)]
    blocks = [reuse_block, vertex_block]
    rhs = [np.ones(U * T), np.asarray(vertex_rhs, dtype=float).ravel()]

    if with_group_rows:
        multi = [g for g in range(G) if inst.catalog[g].size >= 2]
        if multi:
            q = inst.q_groups()
            rows, cols = [], []
            for k, g in enumerate(multi):
                rows.append((k * T + tt).ravel())
                cols.append(((uu * G + g) * T + tt).ravel())
            r = np.concatenate(rows)
            group_block = sp.csr_matrix((np.ones(r.size), (r, np.concatenate(cols))), shape=(len(multi) * T, n_cols))
            blocks.append(group_block)
            rhs.append(np.concatenate([q[g] for g in multi]))
            names += [f"group[g={g},t={t}]" for g in multi for t in range(T)]

    A_ub = sp.vstack(blocks, format="csr")
    A_ub.sum_duplicates()
    obj = np.zeros(n_cols)
    obj[:n_struct] = inst.weights.ravel()
    return LpModel(
        kind=kind,
        shape=(U, G, T),
        objective=obj,
        A_ub=A_ub,
        b_ub=np.concatenate(rhs),
        row_names=names,
        A_eq=A_eq,
        b_eq=b_eq,
        n_struct=n_struct,
    )


def build_lp_sequential(inst: Instance, reuse: str = "expanded") -> LpModel:
    """Unit capacity, one arrival per round: vertex rows have RHS ``p_v^t``."""
    if inst.kappa != 1:
        raise ValueError("LPSequential needs kappa = 1")
    if np.any(inst.batch_sizes != 1):
        raise ValueError("LPSequential needs unit batches")
    return _assemble(inst, "sequential", inst.probs.T, with_group_rows=False, reuse=reuse)


def build_lp_batch(inst: Instance, reuse: str = "expanded") -> LpModel:
    """Unit capacity with batches: vertex rows have RHS ``q_v^t = b^t p_v^t``."""
    if inst.kappa != 1:
        raise ValueError("LPBatch needs kappa = 1")
    return _assemble(inst, "batch", inst.q_vertices(), with_group_rows=False, reuse=reuse)


def build_lp_share(inst: Instance, reuse: str = "expanded") -> LpModel:
    """Multi-capacity LP over group types.

    Group rows are emitted only for groups of size >= 2: for a singleton the
    group row is implied by its vertex row. With kappa = 1 the model is
    therefore identical to :func:`build_lp_batch`.
    """
    cat = inst.catalog
    if cat.kappa != inst.kappa or cat.num_types != inst.num_types:
        raise ValueError("group catalog inconsistent with instance kappa / |V|")
    if any(g.size > inst.kappa for g in cat):
        raise ValueError("catalog holds groups larger than kappa")
    return _assemble(inst, "share", inst.q_vertices(), with_group_rows=True, reuse=reuse)


def build_lp(inst: Instance, reuse: str = "expanded") -> LpModel:
    """The benchmark LP for an instance: LPBatch when kappa = 1, else LPShare."""
    if inst.kappa == 1:
        return build_lp_batch(inst, reuse=reuse)
    return build_lp_share(inst, reuse=reuse)


def revenue_rate(inst: Instance) -> np.ndarray:
    """Weight per expected busy round, shape (U, G, T): a column priority
    for the pricing loop in :func:`ridepool.lp.solve_lp`."""
    return inst.weights / inst.occupancy.means()
