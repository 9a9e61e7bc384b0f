"""LP solving: the bundled dense simplex for small models, HiGHS for large ones."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from ridepool.lp.build import LpModel, build_lp, revenue_rate
from ridepool.lp.simplex import IterationLimit, simplex_max

log = logging.getLogger(__name__)

FEAS_TOL = 1e-7
DENSE_LIMIT = 4_000_000  # tableau cells
PRICING_MIN_COLUMNS = 50_000  # below this HiGHS gets the whole model at once
PRICING_SEED = 5  # initial columns per (resource, round)
PRICING_BATCH = 3  # columns added per (resource, round) and pass


class LpError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class LpSolution:
    x: np.ndarray  # structural columns only, flat
    objective: float
    status: str
    iterations: int
    method: str
    shape: tuple[int, int, int]

    @property
    def values(self) -> np.ndarray:
        """Assignment probabilities ``x[u, g, t]``."""
        return self.x.reshape(self.shape)


def _implied_upper_bounds(model: LpModel) -> np.ndarray:
    """Columns whose ``x <= 1`` already follows from a nonnegative row."""
    A = model.A_ub.tocsc()
    implied = np.zeros(A.shape[1], dtype=bool)
    row_nonneg = np.ones(A.shape[0], dtype=bool)
    coo = model.A_ub.tocoo()
    row_nonneg[coo.row[coo.data < 0]] = False
    for j in range(A.shape[1]):
        lo, hi = A.indptr[j], A.indptr[j + 1]
        rows, vals = A.indices[lo:hi], A.data[lo:hi]
        ok = row_nonneg[rows] & (vals > 0) & (model.b_ub[rows] / np.where(vals > 0, vals, 1) <= 1.0)
        implied[j] = bool(ok.any())
    return implied


def solve_lp(
    model: LpModel,
    method: str = "auto",
    max_iter: int = 200_000,
    priority: np.ndarray | None = None,
) -> LpSolution:
    """Solve to optimality. ``method`` is ``auto``, ``simplex`` or ``highs``.

    Large models go to HiGHS through a pricing loop: a restricted model over
    the ``PRICING_SEED`` best assignment columns per (resource, round) by
    ``priority`` (default: the objective) is solved, columns with improving
    reduced cost are added, and this repeats until none is left. The result
    is optimal for the full model.
    """
    if not np.all(np.isfinite(model.b_ub)) or np.any(model.b_ub < 0):
        raise LpError("right-hand sides must be finite and nonnegative")
    m, n = model.A_ub.shape
    if method == "auto":
        method = "simplex" if model.A_eq is None and m * (n + m) <= DENSE_LIMIT else "highs"
    if method == "simplex":
        if model.A_eq is not None:
            raise LpError("the dense simplex takes inequality-only models; use reuse='expanded'")
        A = model.A_ub.toarray()
        b = model.b_ub.copy()
        need = ~_implied_upper_bounds(model)
        if need.any():
            idx = np.flatnonzero(need)
            extra = np.zeros((idx.size, n))
            extra[np.arange(idx.size), idx] = 1.0
            A = np.vstack([A, extra])
            b = np.concatenate([b, np.ones(idx.size)])
        try:
            res = simplex_max(model.objective, A, b, max_iter=max_iter)
        except IterationLimit as exc:
            raise LpError(str(exc)) from exc
        x, obj, iters = res.x, res.objective, res.iterations
    elif method == "highs":
        if model.n_struct >= PRICING_MIN_COLUMNS:
            x, iters = _highs_priced(model, priority)
        else:
            x, _, iters = _highs(model, np.arange(n))
        obj = float(model.objective @ x)
    else:
        raise ValueError(f"unknown LP method {method!r}")
    sol = LpSolution(x[: model.n_struct].copy(), obj, "optimal", iters, method, model.shape)
    viol = max_violation(model, x)
    if viol > FEAS_TOL:
        raise LpError(f"solver returned an infeasible point (violation {viol:.3g})")
    log.debug("solved %s LP (%d x %d) by %s: %.9g", model.kind, m, n, method, obj)
    return sol


def _highs(model: LpModel, cols: np.ndarray):
    """Solve the model restricted to ``cols``; returns the full-length x,
    the row duals (inequality, equality) and the iteration count."""
    A_ub = model.A_ub[:, cols] if cols.size < model.num_columns else model.A_ub
    A_eq = None
    if model.A_eq is not None:
        A_eq = model.A_eq[:, cols] if cols.size < model.num_columns else model.A_eq
    res = linprog(
        -model.objective[cols],
        A_ub=A_ub,
        b_ub=model.b_ub,
        A_eq=A_eq,
        b_eq=model.b_eq,
        bounds=(0.0, 1.0),
        method="highs-ipm",
        options={"primal_feasibility_tolerance": 1e-9, "dual_feasibility_tolerance": 1e-9},
    )
    # x = 0 is always feasible and the box is bounded, so only these can happen
    assert res.status in (0, 1), f"unexpected HiGHS status {res.status}: {res.message}"
    if res.status == 1:
        raise LpError(f"iteration limit: {res.message}")
    x = np.zeros(model.num_columns)
    x[cols] = np.clip(res.x, 0.0, 1.0)
    duals = (res.ineqlin.marginals, None if A_eq is None else res.eqlin.marginals)
    return x, duals, int(getattr(res, "nit", 0))


def _highs_priced(model: LpModel, priority: np.ndarray | None) -> tuple[np.ndarray, int]:
    U, G, T = model.shape
    n, ns = model.num_columns, model.n_struct
    score = (model.objective[:ns] if priority is None else np.asarray(priority, dtype=float).ravel()).reshape(U, G, T)
    active = np.zeros(n, dtype=bool)
    active[ns:] = True
    keep = min(PRICING_SEED, G)
    top = np.argsort(-score, axis=1, kind="stable")[:, :keep, :]
    active[_flat(top, G, T)] = True
    A_ub, A_eq = model.A_ub.tocsc(), None if model.A_eq is None else model.A_eq.tocsc()
    tol = 1e-9 * max(1.0, float(np.abs(model.objective).max(initial=0.0)))
    total = 0
    while True:
        x, (y_ub, y_eq), iters = _highs(model, np.flatnonzero(active))
        total += iters
        # reduced costs of the minimization form; negative means improving
        rc = -model.objective - A_ub.T @ y_ub
        if A_eq is not None:
            rc -= A_eq.T @ y_eq
        improving = ~active & (rc < -tol)
        if not improving.any():
            return x, total
        ranked = np.where(improving[:ns], rc[:ns], 0.0).reshape(U, G, T)
        best = np.argsort(ranked, axis=1, kind="stable")[:, : min(PRICING_BATCH, G), :]
        add = np.zeros(n, dtype=bool)
        add[_flat(best, G, T)] = True
        add &= improving
        log.debug("pricing: %d columns active, %d improving, adding %d", active.sum(), improving.sum(), add.sum())
        active |= add


def _flat(groups: np.ndarray, G: int, T: int) -> np.ndarray:
    """Column indices for an array ``groups[u, k, t]`` of group ids."""
    U, _, _ = groups.shape
    return ((np.arange(U)[:, None, None] * G + groups) * T + np.arange(T)[None, None, :]).ravel()


def solve_instance(inst, method: str = "auto") -> tuple[LpModel, LpSolution]:
    """Build and solve the benchmark LP: expanded reuse rows for the dense
    simplex, the compact form otherwise."""
    model = build_lp(inst, reuse="expanded" if method == "simplex" else "compact")
    if method == "auto" and model.A_eq is not None:
        method = "highs"
    return model, solve_lp(model, method=method, priority=revenue_rate(inst))


def max_violation(model: LpModel, x: np.ndarray) -> float:
    """Largest constraint violation, recomputed row by row from the model."""
    x = np.asarray(x, dtype=float)
    if x.size == model.n_struct and model.num_columns > model.n_struct:
        raise ValueError("need auxiliary columns to check a compact model")
    viol = 0.0
    if x.size:
        viol = max(viol, float(-x.min()), float(x.max() - 1.0))
    A = model.A_ub
    for i in range(A.shape[0]):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        lhs = float(A.data[lo:hi] @ x[A.indices[lo:hi]])
        viol = max(viol, lhs - float(model.b_ub[i]))
    if model.A_eq is not None:
        r = model.A_eq @ x - model.b_eq
        if r.size:
            viol = max(viol, float(np.abs(r).max()))
    return viol


def check_feasibility(model: LpModel, sol: LpSolution, tol: float = FEAS_TOL) -> bool:
    """Independent row-by-row recheck of an expanded-form solution."""
    if model.A_eq is not None:
        raise ValueError("check_feasibility needs an expanded-form model")
    return max_violation(model, sol.x) <= tol


def to_dense(model: LpModel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(c, A, b)`` as dense arrays, for small-model cross checks."""
    A = model.A_ub.toarray() if sp.issparse(model.A_ub) else np.asarray(model.A_ub)
    return model.objective.copy(), A, model.b_ub.copy()
