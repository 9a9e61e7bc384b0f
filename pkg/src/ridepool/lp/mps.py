"""Fixed-column MPS export for cross-checking with external solvers.

Layout (1-based columns): field 1 at 2-3, field 2 at 5-12, field 3 at
15-22, field 4 at 25-36, field 5 at 40-47, field 6 at 50-61. Rows are
named ``R<7 digits>``, columns ``C<7 digits>``, the objective ``OBJ``.
An ``OBJSENSE MAX`` section marks maximization; every column gets
``UP BND <col> 1``. Only inequality-form (expanded) models are exported.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ridepool.lp.build import LpModel


def _num(v: float) -> str:
    s = f"{v:.12g}"
    if len(s) > 12:
        s = f"{v:.6e}"
    return s


def _line(f1: str = "", f2: str = "", f3: str = "", f4: str = "", f5: str = "", f6: str = "") -> str:
    out = f" {f1:<2} {f2:<8}  {f3:<8}  {f4:>12}"
    if f5:
        out += f"   {f5:<8}  {f6:>12}"
    return out.rstrip()


def write_mps(model: LpModel, path: str | Path, name: str = "RIDEPOOL") -> None:
    if model.A_eq is not None:
        raise ValueError("export the expanded form (no equality rows)")
    m, n = model.A_ub.shape
    if m >= 10**7 or n >= 10**7:
        raise ValueError("model too large for 8-character fixed MPS names")
    rname = [f"R{i:07d}" for i in range(m)]
    cname = [f"C{j:07d}" for j in range(n)]
    lines = [f"NAME          {name}", "OBJSENSE", "    MAX", "ROWS", " N  OBJ"]
    lines += [f" L  {r}" for r in rname]
    lines.append("COLUMNS")
    A = model.A_ub.tocsc()
    for j in range(n):
        entries = []
        if model.objective[j] != 0:
            entries.append(("OBJ", model.objective[j]))
        lo, hi = A.indptr[j], A.indptr[j + 1]
        entries += [(rname[i], v) for i, v in zip(A.indices[lo:hi], A.data[lo:hi])]
        for k in range(0, len(entries), 2):
            pair = entries[k : k + 2]
            if len(pair) == 2:
                lines.append(_line("", cname[j], pair[0][0], _num(pair[0][1]), pair[1][0], _num(pair[1][1])))
            else:
                lines.append(_line("", cname[j], pair[0][0], _num(pair[0][1])))
    lines.append("RHS")
    for i in range(m):
        if model.b_ub[i] != 0:
            lines.append(_line("", "RHS", rname[i], _num(model.b_ub[i])))
    lines.append("BOUNDS")
    for j in range(n):
        lines.append(_line("UP", "BND", cname[j], "1"))
    lines.append("ENDATA")
    Path(path).write_text("\n".join(lines) + "\n")


def read_mps(path: str | Path) -> tuple[np.ndarray, sp.csr_matrix, np.ndarray, np.ndarray]:
    """Parse a file written by :func:`write_mps` into ``(c, A, b, ub)``."""
    section = None
    rows: dict[str, int] = {}
    cols: dict[str, int] = {}
    obj: dict[int, float] = {}
    entries: list[tuple[int, int, float]] = []
    rhs: dict[int, float] = {}
    ub: dict[int, float] = {}
    for raw in Path(path).read_text().splitlines():
        if not raw.strip():
            continue
        if not raw.startswith(" "):
            section = raw.split()[0]
            continue
        f = raw.split()
        if section == "ROWS":
            if f[0] == "L":
                rows[f[1]] = len(rows)
        elif section == "COLUMNS":
            j = cols.setdefault(f[0], len(cols))
            for rn, val in zip(f[1::2], f[2::2]):
                if rn == "OBJ":
                    obj[j] = float(val)
                else:
                    entries.append((rows[rn], j, float(val)))
        elif section == "RHS":
            rhs[rows[f[1]]] = float(f[2])
        elif section == "BOUNDS":
            ub[cols[f[2]]] = float(f[3])
    m, n = len(rows), len(cols)
    c = np.zeros(n)
    for j, v in obj.items():
        c[j] = v
    r, cc, v = zip(*entries) if entries else ((), (), ())
    A = sp.csr_matrix((np.array(v, dtype=float), (np.array(r, dtype=int), np.array(cc, dtype=int))), shape=(m, n))
    b = np.zeros(m)
    for i, val in rhs.items():
        b[i] = val
    u = np.full(n, np.inf)
    for j, val in ub.items():
        u[j] = val
    return c, A, b, u
