"""Linear-program container and a two-phase revised simplex solver.

The in-repo solver runs a small presolve first: fixed columns are substituted
out, and every free column that appears in an equality row is eliminated by
pivoting on that row.  The reduced program is equilibrated and handed to a
revised simplex that keeps an explicit basis inverse, refactored from the
original data every few dozen pivots.  Pricing is Dantzig's rule with a Harris
ratio test, falling back to Bland's rule only after a long run of degenerate
pivots.  Programs with many more rows than columns are solved through their
dual so the basis stays small.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

log = logging.getLogger(__name__)

INF = math.inf
LE, EQ, GE = "<=", "=", ">="

FEAS_TOL = 1e-7
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
REFACTOR_EVERY = 50
DUAL_RATIO = 1.2
STALL_LIMIT = 2000
HARRIS_TOL = 1e-9
STABLE_PIVOT = 1e-6


class LPSolverError(RuntimeError):
    """Numerical failure inside the solver; never a silent wrong answer."""


@dataclass
class LinearProgram:
    """A maximization LP with bounded variables and sparse linear rows."""

    names: list = field(default_factory=list)
    lower: list = field(default_factory=list)
    upper: list = field(default_factory=list)
    rows: list = field(default_factory=list)  # (idx array, coef array, sense, rhs, name)
    objective: dict = field(default_factory=dict)

    @property
    def n_vars(self) -> int:
        return len(self.names)

    @property
    def n_constraints(self) -> int:
        return len(self.rows)

    def add_variable(self, name: str, lower: float = 0.0, upper: float = INF) -> int:
        self.names.append(name)
        self.lower.append(float(lower))
        self.upper.append(float(upper))
        return len(self.names) - 1

    def add_variables(self, names, lower=0.0, upper=INF) -> np.ndarray:
        start = len(self.names)
        names = list(names)
        self.names.extend(names)
        self.lower.extend([float(lower)] * len(names))
        self.upper.extend([float(upper)] * len(names))
        return np.arange(start, start + len(names))

    def set_bounds(self, j: int, lower: float, upper: float) -> None:
        self.lower[j], self.upper[j] = float(lower), float(upper)

    def add_constraint(self, idx, coef, sense: str, rhs: float, name: str = "") -> int:
        if sense not in (LE, EQ, GE):
            raise ValueError(f"unknown relation {sense!r}")
        idx = np.asarray(idx, dtype=np.int64).reshape(-1)
        coef = np.asarray(coef, dtype=float).reshape(-1)
        if idx.shape != coef.shape:
            raise ValueError("index and coefficient arrays differ in length")
        if idx.size and (idx.min() < 0 or idx.max() >= self.n_vars):
            raise ValueError(f"constraint {name!r} references an undeclared variable")
        if not np.all(np.isfinite(coef)) or not math.isfinite(rhs):
            raise ValueError(f"constraint {name!r} has non-finite data")
        self.rows.append((idx, coef, sense, float(rhs), name or f"c{len(self.rows)}"))
        return len(self.rows) - 1

    def add_objective(self, idx, coef) -> None:
        for j, c in zip(np.atleast_1d(idx), np.atleast_1d(coef)):
            if c:
                self.objective[int(j)] = self.objective.get(int(j), 0.0) + float(c)

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for j, v in self.objective.items():
            c[j] = v
        return c

    def dump(self) -> str:
        """Plain-text rendering, one line per constraint (debug aid)."""
        lines = ["max: " + _fmt_terms(self.names, self.objective.items())]
        for idx, coef, sense, rhs, name in self.rows:
            lines.append(f"{name}: {_fmt_terms(self.names, zip(idx, coef))} {sense} {rhs:g}")
        for n, lo, hi in zip(self.names, self.lower, self.upper):
            if lo != 0.0 or hi != INF:
                lines.append(f"bound: {lo:g} <= {n} <= {hi:g}")
        return "\n".join(lines)


def _fmt_terms(names, terms) -> str:
    parts = [f"{c:g}*{names[j]}" for j, c in terms]
    return " + ".join(parts) if parts else "0"


@dataclass
class LPSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    objective: float = math.nan
    x: np.ndarray = None
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def solve_lp(lp: LinearProgram, method: str = "simplex") -> LPSolution:
    """Solve ``lp``; ``method`` is ``"simplex"`` (in-repo) or ``"highs"`` (scipy)."""
    if method == "simplex":
        return _solve_presolved(lp)
    if method == "highs":
        return _solve_highs(lp)
    raise ValueError(f"unknown LP method {method!r}")


def verify_solution(lp: LinearProgram, sol: LPSolution, tol: float = FEAS_TOL) -> list:
    """Re-check bounds, rows and the objective of ``sol``; return violations."""
    if not sol.optimal:
        raise ValueError("verify_solution needs an optimal solution")
    x = np.asarray(sol.x, dtype=float)
    out = []
    for j, (lo, hi) in enumerate(zip(lp.lower, lp.upper)):
        if x[j] < lo - tol:
            out.append(f"bound {lp.names[j]} >= {lo:g}: residual {lo - x[j]:.3g}")
        if x[j] > hi + tol:
            out.append(f"bound {lp.names[j]} <= {hi:g}: residual {x[j] - hi:.3g}")
    for idx, coef, sense, rhs, name in lp.rows:
        lhs = float(coef @ x[idx])
        if sense == LE:
            r = lhs - rhs
        elif sense == GE:
            r = rhs - lhs
        else:
            r = abs(lhs - rhs)
        if r > tol:
            out.append(f"{name}: {lhs:.12g} {sense} {rhs:.12g} violated by {r:.3g}")
    value = float(lp.objective_vector() @ x)
    if abs(value - sol.objective) > tol * (1 + abs(value)):
        out.append(f"objective: reported {sol.objective:.12g}, recomputed {value:.12g}")
    return out


# ---------------------------------------------------------------------------
# presolve


def _solve_presolved(lp: LinearProgram) -> LPSolution:
    n = lp.n_vars
    lower = np.asarray(lp.lower, dtype=float)
    upper = np.asarray(lp.upper, dtype=float)
    if np.any(lower > upper):
        return LPSolution("infeasible")
    fixed = lower == upper
    free = np.isneginf(lower) & np.isposinf(upper)

    rows = []  # [dict, sense, rhs]
    col_rows: dict = {}
    for r, (idx, coef, sense, rhs, _) in enumerate(lp.rows):
        d: dict = {}
        for j, c in zip(idx.tolist(), coef.tolist()):
            if fixed[j]:
                rhs -= c * lower[j]
            elif c:
                d[j] = d.get(j, 0.0) + c
        rows.append([d, sense, rhs])
        for j in d:
            col_rows.setdefault(j, set()).add(r)
    obj = {j: c for j, c in lp.objective.items() if not fixed[j]}
    obj_const = sum(c * lower[j] for j, c in lp.objective.items() if fixed[j])

    # eliminate free columns through equality rows, in row order
    eliminated = []  # (var, {k: coef}, const), meaning var = const + sum coef*x_k
    alive = [True] * len(rows)
    for r, (d, sense, rhs) in enumerate(rows):
        if sense != EQ:
            continue
        cands = [j for j in d if free[j] and abs(d[j]) > 1e-12]
        if not cands:
            continue
        v = min(cands, key=lambda j: (len(col_rows[j]), j))
        cv = d[v]
        expr = {k: -c / cv for k, c in d.items() if k != v}
        const = rhs / cv
        eliminated.append((v, expr, const))
        alive[r] = False
        for k in d:
            col_rows[k].discard(r)
        for r2 in sorted(col_rows.pop(v, ())):
            d2 = rows[r2][0]
            f = d2.pop(v)
            rows[r2][2] -= f * const
            for k, e in expr.items():
                val = d2.get(k, 0.0) + f * e
                if abs(val) < 1e-14:
                    if k in d2:
                        del d2[k]
                        col_rows[k].discard(r2)
                else:
                    if k not in d2:
                        col_rows[k].add(r2)
                    d2[k] = val
        if v in obj:
            f = obj.pop(v)
            obj_const += f * const
            for k, e in expr.items():
                val = obj.get(k, 0.0) + f * e
                if abs(val) < 1e-14:
                    obj.pop(k, None)
                else:
                    obj[k] = val

    gone = {v for v, _, _ in eliminated}
    keep = [j for j in range(n) if not fixed[j] and j not in gone]

    # column transform to x >= 0: x_j = shift + sign * x'_j (free columns split)
    cols = []  # (orig j, sign, shift)
    extra_rows = []
    for j in keep:
        lo, hi = lower[j], upper[j]
        if math.isfinite(lo):
            cols.append((j, 1.0, lo))
            if math.isfinite(hi):
                extra_rows.append((len(cols) - 1, hi - lo))
        elif math.isfinite(hi):
            cols.append((j, -1.0, hi))
        else:
            cols.append((j, 1.0, 0.0))
            cols.append((j, -1.0, 0.0))
    pos_of: dict = {}
    for p, (j, _, _) in enumerate(cols):
        pos_of.setdefault(j, []).append(p)

    live_rows = [rows[r] for r in range(len(rows)) if alive[r]]
    m = len(live_rows) + len(extra_rows)
    A = np.zeros((m, len(cols)))
    b = np.zeros(m)
    senses = []
    for i, (d, sense, rhs) in enumerate(live_rows):
        for j, c in d.items():
            for p in pos_of[j]:
                _, sg, sh = cols[p]
                A[i, p] += c * sg
            rhs -= c * cols[pos_of[j][0]][2]
        b[i] = rhs
        senses.append(sense)
    for k, (p, cap) in enumerate(extra_rows):
        A[len(live_rows) + k, p] = 1.0
        b[len(live_rows) + k] = cap
        senses.append(LE)
    c = np.zeros(len(cols))
    for j, v in obj.items():
        for p in pos_of[j]:
            _, sg, sh = cols[p]
            c[p] += v * sg
        obj_const += v * cols[pos_of[j][0]][2]

    # rows emptied by presolve
    empty = ~np.any(A != 0, axis=1) if m else np.zeros(0, dtype=bool)
    for i in np.flatnonzero(empty):
        r, s = b[i], senses[i]
        if (s == EQ and abs(r) > FEAS_TOL) or (s == LE and r < -FEAS_TOL) or (s == GE and r > FEAS_TOL):
            return LPSolution("infeasible")
    if empty.any():
        A, b = A[~empty], b[~empty]
        senses = [s for s, e in zip(senses, empty) if not e]

    # equilibrate rows then columns; positive scales keep every relation intact
    row_scale = np.ones(A.shape[0])
    col_scale = np.ones(A.shape[1])
    if A.size:
        amax = np.abs(A).max(axis=1)
        row_scale = np.where(amax > 0, 1.0 / np.where(amax > 0, amax, 1.0), 1.0)
        A = A * row_scale[:, None]
        b = b * row_scale
        cmax = np.abs(A).max(axis=0)
        col_scale = np.where(cmax > 0, 1.0 / np.where(cmax > 0, cmax, 1.0), 1.0)
        A = A * col_scale
    status, xr, iters = _simplex(A, b, c * col_scale, senses)
    if status == "optimal":
        xr = xr * col_scale
    if status != "optimal":
        return LPSolution(status, iterations=iters)

    x = np.zeros(n)
    x[fixed] = lower[fixed]
    for j in keep:
        x[j] = 0.0
    for p, (j, sg, sh) in enumerate(cols):
        x[j] += sg * xr[p]
    for j in keep:
        x[j] += cols[pos_of[j][0]][2]
    for v, expr, const in reversed(eliminated):
        x[v] = const + sum(e * x[k] for k, e in expr.items())
    value = float(lp.objective_vector() @ x)
    return LPSolution("optimal", value, x, iters)


# ---------------------------------------------------------------------------
# revised simplex


def _simplex(A: np.ndarray, b: np.ndarray, c: np.ndarray, senses: list):
    """Maximize ``c @ x`` s.t. rows of ``A x (sense) b``, ``x >= 0``.

    Tall programs are solved through their dual so the basis stays small; the
    primal point is read off the dual's simplex multipliers.
    """
    m, n = A.shape
    if m > DUAL_RATIO * max(n, 1):
        out = _solve_via_dual(A, b, c, senses)
        if out is not None:
            return out
    status, x, _, iters = _revised(A, b, c, senses)
    return status, x, iters


def _solve_via_dual(A, b, c, senses):
    # dual: min b.y s.t. A^T y >= c, y >= 0 on <= rows, y <= 0 on >= rows, free on = rows
    blocks, costs = [], []
    for i, s in enumerate(senses):
        if s == LE:
            blocks.append((i, 1.0))
        elif s == GE:
            blocks.append((i, -1.0))
        else:
            blocks.append((i, 1.0))
            blocks.append((i, -1.0))
    rows_of = np.array([i for i, _ in blocks], dtype=np.int64)
    signs = np.array([sg for _, sg in blocks])
    Ad = (A[rows_of] * signs[:, None]).T  # (n, k)
    cd = -b[rows_of] * signs  # maximize -b.y
    status, w, duals, iters = _revised(Ad, c, cd, [GE] * A.shape[1])
    if status == "unbounded":
        return "infeasible", None, iters
    if status != "optimal":
        return None  # primal is unbounded or infeasible; let the primal run decide
    x = np.maximum(-duals, 0.0)
    # trust the multipliers only if they give a feasible point with matching value
    lhs = A @ x
    scale = 1.0 + np.abs(b)
    viol = np.where(
        np.array([s == LE for s in senses]), lhs - b,
        np.where(np.array([s == GE for s in senses]), b - lhs, np.abs(lhs - b)),
    )
    if np.any(viol > FEAS_TOL * scale) or abs(c @ x + cd @ w) > 1e-7 * (1.0 + abs(c @ x)):
        log.debug("dual route rejected (max violation %.3g); falling back to primal", viol.max(initial=0.0))
        return None
    return "optimal", x, iters


class _Basis:
    """Explicit dense basis inverse over structural, slack and artificial columns."""

    def __init__(self, A, b, senses):
        m, n = A.shape
        self.A, self.b, self.m, self.n = A, b, m, n
        self.At = sparse.csr_matrix(A.T)
        slack_rows = [i for i, s in enumerate(senses) if s != EQ]
        art_rows = [i for i, s in enumerate(senses) if s != LE]
        self.slack_row = np.array(slack_rows, dtype=np.int64)
        self.slack_sign = np.array([1.0 if senses[i] == LE else -1.0 for i in slack_rows])
        self.art_row = np.array(art_rows, dtype=np.int64)
        self.n_slack = len(slack_rows)
        self.unit_row = np.concatenate([self.slack_row, self.art_row])
        self.unit_sign = np.concatenate([self.slack_sign, np.ones(len(art_rows))])
        self.art0 = n + self.n_slack
        self.N = self.art0 + len(art_rows)
        head = np.empty(m, dtype=np.int64)
        for k, i in enumerate(slack_rows):
            if senses[i] == LE:
                head[i] = n + k
        for k, i in enumerate(art_rows):
            head[i] = self.art0 + k
        self.head = head

    def column(self, j: int) -> np.ndarray:
        if j < self.n:
            return self.A[:, j]
        v = np.zeros(self.m)
        if j < self.art0:
            v[self.slack_row[j - self.n]] = self.slack_sign[j - self.n]
        else:
            v[self.art_row[j - self.art0]] = 1.0
        return v

    def matrix(self) -> np.ndarray:
        return np.column_stack([self.column(j) for j in self.head])

    def refactor(self):
        # basic unit columns pin their rows; only the structural block needs inverting
        m, n = self.m, self.n
        head = self.head
        struct = np.flatnonzero(head < n)
        unit = np.flatnonzero(head >= n)
        unit_rows = self.unit_row[head[unit] - n]
        unit_sign = self.unit_sign[head[unit] - n]
        free_rows = np.setdiff1d(np.arange(m), unit_rows)
        if free_rows.size != struct.size:
            raise LPSolverError("singular basis during refactorization")
        cols = head[struct]
        inv = np.zeros((m, m))
        if struct.size:
            try:
                M = np.linalg.inv(self.A[np.ix_(free_rows, cols)])
            except np.linalg.LinAlgError as exc:
                raise LPSolverError("singular basis during refactorization") from exc
            inv[np.ix_(struct, free_rows)] = M
            coupling = self.A[np.ix_(unit_rows, cols)] @ M  # (|unit|, k)
            inv[np.ix_(unit, free_rows)] = -unit_sign[:, None] * coupling
        inv[unit, unit_rows] = unit_sign
        self.inv = inv
        xb = inv @ self.b
        if np.any(xb < -FEAS_TOL * (1.0 + np.abs(self.b).max(initial=0.0))):
            raise LPSolverError(f"basis lost primal feasibility (min {xb.min():.3g})")
        self.xb = np.maximum(xb, 0.0)

    def reduced_costs(self, cost: np.ndarray) -> tuple:
        y = cost[self.head] @ self.inv
        d = np.empty(self.N)
        d[: self.n] = cost[: self.n] - self.At @ y
        d[self.n : self.art0] = cost[self.n : self.art0] - y[self.slack_row] * self.slack_sign
        d[self.art0 :] = cost[self.art0 :] - y[self.art_row]
        d[self.head] = 0.0
        return d, y


def _revised(A, b, c, senses):
    """Two-phase revised simplex; returns (status, x, row multipliers, iterations)."""
    m, n = A.shape
    if m == 0:
        if np.any(c > OPT_TOL):
            return "unbounded", None, None, 0
        return "optimal", np.zeros(n), np.zeros(0), 0
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    senses = list(senses)
    flip = b < 0
    A[flip] *= -1
    b[flip] *= -1
    senses = [{LE: GE, GE: LE, EQ: EQ}[s] if f else s for s, f in zip(senses, flip)]

    B = _Basis(A, b, senses)
    B.refactor()
    allowed = np.ones(B.N, dtype=bool)
    iters = 0
    if B.N > B.art0:
        cost1 = np.zeros(B.N)
        cost1[B.art0 :] = -1.0
        status, iters = _iterate(B, cost1, allowed, iters)
        if status != "optimal":
            raise LPSolverError("phase 1 terminated abnormally")
        infeas = float(B.xb[B.head >= B.art0].sum())
        if infeas > FEAS_TOL * max(1.0, float(b.max())):
            return "infeasible", None, None, iters
        _drive_out_artificials(B)
        allowed[B.art0 :] = False
    cost2 = np.zeros(B.N)
    cost2[:n] = c
    status, iters = _iterate(B, cost2, allowed, iters)
    if status == "unbounded":
        return "unbounded", None, None, iters
    x = np.zeros(B.N)
    x[B.head] = B.xb
    _, y = B.reduced_costs(cost2)
    y = np.where(flip, -y, y)
    return "optimal", np.maximum(x[:n], 0.0), y, iters


def _drive_out_artificials(B: _Basis) -> None:
    """Swap zero-level artificials out of the basis where a structural pivot exists."""
    for r in np.flatnonzero(B.head >= B.art0):
        row = B.inv[r]
        vals = np.concatenate([row @ B.A, row[B.slack_row] * B.slack_sign])
        vals[B.head[B.head < B.art0]] = 0.0
        j = int(np.argmax(np.abs(vals)))
        if abs(vals[j]) > 1e-7:
            _pivot(B, r, j, B.inv @ B.column(j))
        # otherwise the row is redundant and the artificial stays basic at zero
    B.refactor()


def _pivot(B: _Basis, r: int, e: int, w: np.ndarray) -> None:
    theta = B.xb[r] / w[r]
    B.xb -= theta * w
    B.xb[r] = theta
    np.maximum(B.xb, 0.0, out=B.xb)
    pr = B.inv[r] / w[r]
    nz = np.flatnonzero(w)
    B.inv[nz] -= w[nz, None] * pr
    B.inv[r] = pr
    B.head[r] = e


def _iterate(B: _Basis, cost, allowed, iters):
    max_iter = iters + 50 * (B.m + B.N) + 1000
    since = 0
    stall = 0
    banned = np.zeros(B.N, dtype=bool)  # entering columns whose only pivots are tiny
    lenient = False
    while True:
        if iters >= max_iter:
            raise LPSolverError(f"simplex did not converge in {max_iter} iterations")
        d, _ = B.reduced_costs(cost)
        d[~allowed] = -np.inf
        price = np.where(banned, -np.inf, d)
        bland = stall >= STALL_LIMIT
        if bland:
            cand = np.flatnonzero(price > OPT_TOL)
            e = int(cand[0]) if cand.size else -1
        else:
            e = int(np.argmax(price))
            if price[e] <= OPT_TOL:
                e = -1
        if e < 0:
            if since:
                # confirm on a fresh factorization before declaring optimality
                B.refactor()
                since = 0
                continue
            if banned.any():
                banned[:] = False
                lenient = True
                continue
            return "optimal", iters
        w = B.inv @ B.column(e)
        mask = w > PIVOT_TOL
        if not mask.any():
            return "unbounded", iters
        rows = np.flatnonzero(mask)
        xb = B.xb[rows]
        ratios = xb / w[rows]
        theta = ratios.min()
        if bland:
            ties = rows[ratios <= theta + 1e-12 * (1.0 + theta)]
            stable = ties[w[ties] >= STABLE_PIVOT]
            if stable.size:
                ties = stable
            r = int(ties[np.argmin(B.head[ties])])
        else:
            # Harris two-pass test: within a small relaxation, take the largest pivot
            relaxed = ((xb + HARRIS_TOL) / w[rows]).min()
            ties = rows[ratios <= relaxed]
            r = int(ties[np.argmax(w[ties])])
        if w[r] < STABLE_PIVOT and not lenient:
            banned[e] = True
            continue
        stall = stall + 1 if B.xb[r] / w[r] <= 1e-12 else 0
        _pivot(B, r, e, w)
        banned[:] = False
        lenient = False
        iters += 1
        since += 1
        if since >= REFACTOR_EVERY:
            B.refactor()
            since = 0


# ---------------------------------------------------------------------------
# scipy / HiGHS backend


def _solve_highs(lp: LinearProgram) -> LPSolution:
    from scipy.optimize import linprog
    from scipy.sparse import coo_matrix

    n = lp.n_vars
    ub_r, ub_c, ub_v, ub_b = [], [], [], []
    eq_r, eq_c, eq_v, eq_b = [], [], [], []
    for idx, coef, sense, rhs, _ in lp.rows:
        if sense == EQ:
            k = len(eq_b)
            eq_r.extend([k] * len(idx)), eq_c.extend(idx), eq_v.extend(coef), eq_b.append(rhs)
        else:
            sg = 1.0 if sense == LE else -1.0
            k = len(ub_b)
            ub_r.extend([k] * len(idx)), ub_c.extend(idx), ub_v.extend(sg * coef), ub_b.append(sg * rhs)
    A_ub = coo_matrix((ub_v, (ub_r, ub_c)), shape=(len(ub_b), n)).tocsr() if ub_b else None
    A_eq = coo_matrix((eq_v, (eq_r, eq_c)), shape=(len(eq_b), n)).tocsr() if eq_b else None
    bounds = [(None if math.isinf(lo) else lo, None if math.isinf(hi) else hi) for lo, hi in zip(lp.lower, lp.upper)]
    res = linprog(
        -lp.objective_vector(),
        A_ub=A_ub,
        b_ub=ub_b or None,
        A_eq=A_eq,
        b_eq=eq_b or None,
        bounds=bounds,
        method="highs",
        options={"primal_feasibility_tolerance": 1e-9, "dual_feasibility_tolerance": 1e-9},
    )
    if res.status == 0:
        x = np.asarray(res.x, dtype=float)
        return LPSolution("optimal", float(lp.objective_vector() @ x), x, int(getattr(res, "nit", 0)))
    if res.status == 2:
        return LPSolution("infeasible")
    if res.status == 3:
        return LPSolution("unbounded")
    raise LPSolverError(f"HiGHS failed: {res.message}")
