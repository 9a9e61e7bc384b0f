"""Dense primal simplex for ``max c.x s.t. A x <= b, x >= 0`` with ``b >= 0``.

The slack basis is feasible from the start, so no phase one is needed.
Pricing is Dantzig's rule over a window of columns (partial pricing);
after a run of degenerate pivots the solver switches to Bland's rule until
the objective moves again, which rules out cycling. Ties always go to the
lowest index, so the result is a deterministic function of the input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-10
COST_TOL = 1e-10


class SimplexError(RuntimeError):
    pass


class IterationLimit(SimplexError):
    pass


class Unbounded(SimplexError):
    pass


@dataclass
class SimplexResult:
    x: np.ndarray
    objective: float
    basis: np.ndarray
    iterations: int


def simplex_max(
    c: np.ndarray,
    A: np.ndarray,
    b: np.ndarray,
    max_iter: int = 100_000,
    window: int = 64,
    degenerate_switch: int = 8,
) -> SimplexResult:
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    if np.any(b < 0):
        raise ValueError("right-hand sides must be nonnegative")
    if m == 0:
        if np.any(c > COST_TOL):
            raise Unbounded("unconstrained positive objective")
        return SimplexResult(np.zeros(n), 0.0, np.zeros(0, dtype=int), 0)

    # tableau rows 0..m-1 hold [A | I | b]; reduced costs kept separately
    tab = np.zeros((m, n + m + 1))
    tab[:, :n] = A
    tab[:, n : n + m] = np.eye(m)
    tab[:, -1] = b
    cost = np.zeros(n + m + 1)
    cost[:n] = c  # reduced cost of nonbasic j is cost[j]; cost[-1] = -objective
    basis = np.arange(n, n + m)
    ncols = n + m

    it = 0
    start = 0
    degenerate_run = 0
    while True:
        # entering column
        if degenerate_run >= degenerate_switch:
            pos = np.flatnonzero(cost[:ncols] > COST_TOL)
            if pos.size == 0:
                break
            j = int(pos[0])
        else:
            j = -1
            for k in range(0, ncols, window):
                lo = (start + k) % ncols
                seg = cost[lo : min(lo + window, ncols)]
                if seg.size and seg.max() > COST_TOL:
                    j = lo + int(np.argmax(seg))
                    start = lo
                    break
            if j < 0:
                if np.any(cost[:ncols] > COST_TOL):  # window wrap can skip a head segment
                    j = int(np.argmax(cost[:ncols]))
                else:
                    break
        if it >= max_iter:
            raise IterationLimit(f"no convergence after {max_iter} pivots")
        col = tab[:, j]
        rows = np.flatnonzero(col > PIVOT_TOL)
        if rows.size == 0:
            raise Unbounded(f"column {j} unbounded")
        ratios = tab[rows, -1] / col[rows]
        best = ratios.min()
        ties = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
        r = int(ties[np.argmin(basis[ties])])  # Bland leaving rule
        degenerate_run = degenerate_run + 1 if best <= 1e-12 else 0

        piv = tab[r, j]
        tab[r] /= piv
        f = tab[:, j].copy()
        f[r] = 0.0
        nz = np.flatnonzero(f)
        if nz.size:
            tab[nz] -= np.outer(f[nz], tab[r])
        cost -= cost[j] * tab[r]
        cost[j] = 0.0
        basis[r] = j
        it += 1

    # recompute basic values from the original data for accuracy
    full = np.hstack([A, np.eye(m)])
    B = full[:, basis]
    try:
        xb = np.linalg.solve(B, b)
    except np.linalg.LinAlgError:  # pragma: no cover - basis is nonsingular by construction
        xb = tab[:, -1]
    xb[np.abs(xb) < 1e-13] = 0.0
    z = np.zeros(ncols)
    z[basis] = xb
    x = z[:n]
    return SimplexResult(x, float(c @ x), basis.copy(), it)
