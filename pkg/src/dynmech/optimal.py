"""Optimal dynamic mechanism against a patient agent via one linear program."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .env import DynamicEnvironment, extended_initial, extended_tensor, feasible_mask
from .lp import EQ, GE, INF, LE, LinearProgram, LPSolution, LPSolverError, solve_lp
from .mechanism import NEG_TOL, Mechanism

IR_MODES = ("none", "overall", "dynamic")
PAYMENT_MODES = ("none", "nonnegative", "interval")
ZERO_MASS = 1e-12
PHANTOM_TOL = 1e-9


class InfeasibleProgram(RuntimeError):
    """No mechanism satisfies the requested constraints."""


class UnboundedProgram(RuntimeError):
    """The principal's objective is unbounded (valued payments without IR)."""


class PhantomPaymentWarning(UserWarning):
    """The LP put payments on zero-mass pairs, which the extracted mechanism drops.

    Nonnegative payments without dynamic IR leave ``y`` untied to ``z``.  The
    LP value is then a supremum approached by branches played with vanishing
    probability that carry large payments (see ``smoothed_mechanism``); the
    extracted mechanism may fall short of it and may not be IC.
    """


@dataclass(frozen=True)
class SolveConfig:
    ir_mode: str = "none"
    payment_mode: str = "none"
    payment_bounds: tuple = (0.0, 0.0)  # (lower, upper) per unit of mass, interval mode only
    payment_valuation: float = 1.0
    agent_discount: float = 1.0
    lp_backend: str = "simplex"

    def __post_init__(self):
        if self.ir_mode not in IR_MODES:
            raise ValueError(f"ir_mode must be one of {IR_MODES}, got {self.ir_mode!r}")
        if self.payment_mode not in PAYMENT_MODES:
            raise ValueError(f"payment_mode must be one of {PAYMENT_MODES}, got {self.payment_mode!r}")
        lo, hi = self.payment_bounds
        if self.payment_mode == "interval" and lo > hi:
            raise ValueError(f"payment interval lower bound {lo} exceeds upper bound {hi}")
        if not 0.0 <= self.agent_discount <= 1.0:
            raise ValueError("agent_discount must lie in [0, 1]")
        if not np.isfinite(self.payment_valuation):
            raise ValueError("payment_valuation must be finite")

    @classmethod
    def from_flags(cls, ir="none", payments="none", payment_valuation=1.0, discount=1.0, lp_backend="simplex"):
        """Build a config from CLI-style strings, e.g. ``payments="interval:0:2"``."""
        bounds = (0.0, 0.0)
        if payments in ("nonneg", "nonnegative"):
            payments = "nonnegative"
        elif payments.startswith("interval"):
            parts = payments.split(":")
            if len(parts) != 3:
                raise ValueError(f"expected interval:<a>:<b>, got {payments!r}")
            bounds = (float(parts[1]), float(parts[2]))
            payments = "interval"
        return cls(ir, payments, bounds, float(payment_valuation), float(discount), lp_backend)


@dataclass
class LPIndexMap:
    """Column indices of each variable family."""

    x: np.ndarray  # (|H|, S, A)
    y: np.ndarray  # (|H|, S)
    z: np.ndarray  # (|H|, S)
    u: np.ndarray  # (|H|, S)
    u3: np.ndarray  # (|H|, S, S), indexed [h, true s, report s']

    @property
    def n_columns(self) -> int:
        return self.x.size + self.y.size + self.z.size + self.u.size + self.u3.size


def _descendants(env: DynamicEnvironment):
    """For every pair ``(i, s)``: arrays of feasibly extending pairs and their depth."""
    ix = env.index
    S, A = env.n_states, env.n_actions
    out = [[None] * S for _ in range(len(ix))]
    for t in range(env.horizon - 1, -1, -1):
        for i in ix.level(t):
            for s in range(S):
                hs, ss, dd = [np.array([i])], [np.array([s])], [np.array([0])]
                if t < env.horizon - 1:
                    for a in range(A):
                        k = ix.child(i, s, a)
                        for s2 in np.flatnonzero(env.P[t, s, a] > 0):
                            kh, ks, kd = out[k][s2]
                            hs.append(kh)
                            ss.append(ks)
                            dd.append(kd + 1)
                out[i][s] = (np.concatenate(hs), np.concatenate(ss), np.concatenate(dd))
    return out


def build_lp(env: DynamicEnvironment, config: SolveConfig = SolveConfig()) -> tuple[LinearProgram, LPIndexMap]:
    """Assemble the flow / utility / IC / IR program for ``env`` under ``config``."""
    ix = env.index
    T, S, A = env.horizon, env.n_states, env.n_actions
    H = len(ix)
    delta, c = config.agent_discount, config.payment_valuation
    lp = LinearProgram()

    def fam(prefix, shape, lower, upper):
        names = [f"{prefix}[{','.join(map(str, k))}]" for k in np.ndindex(*shape)]
        return lp.add_variables(names, lower, upper).reshape(shape)

    x = fam("x", (H, S, A), 0.0, INF)
    if config.payment_mode == "none":
        y = fam("y", (H, S), 0.0, 0.0)
    elif config.payment_mode == "nonnegative":
        y = fam("y", (H, S), 0.0, INF)
    else:
        y = fam("y", (H, S), -INF, INF)
    z = fam("z", (H, S), -INF, INF)
    u = fam("u", (H, S), -INF, INF)
    u3 = fam("w", (H, S, S), -INF, INF)
    index = LPIndexMap(x, y, z, u, u3)

    PE = extended_tensor(env)
    P0E = extended_initial(env)
    feas = feasible_mask(env)
    lengths = ix.lengths

    # objective over feasible pairs only
    for i, s in zip(*np.nonzero(feas)):
        lp.add_objective(x[i, s], env.vP[lengths[i], s])
        if c:
            lp.add_objective(y[i, s], c)

    # flow
    for i in range(H):
        for s in range(S):
            lp.add_constraint(np.r_[z[i, s], x[i, s]], np.r_[1.0, -np.ones(A)], EQ, 0.0, f"flow[{i},{s}]")
    for s in range(S):
        lp.add_constraint([z[0, s]], [1.0], EQ, P0E[s], f"init[{s}]")
    for t in range(T - 1):
        for i in ix.level(t):
            for s in range(S):
                for a in range(A):
                    k = ix.child(i, s, a)
                    for s2 in range(S):
                        lp.add_constraint([z[k, s2], x[i, s, a]], [1.0, -PE[t, s, a, s2]], EQ, 0.0, f"trans[{i},{s},{a},{s2}]")

    # utility: u(h,s) equals the discounted agent surplus over feasible extensions
    desc = _descendants(env)
    for i in range(H):
        for s in range(S):
            dh, ds, dd = desc[i][s]
            w = delta ** dd.astype(float)
            vals = env.vA[lengths[dh], ds]  # (k, A)
            idx = np.concatenate([[u[i, s]], x[dh, ds].ravel(), y[dh, ds]])
            coef = np.concatenate([[1.0], -(w[:, None] * vals).ravel(), w])
            lp.add_constraint(idx, coef, EQ, 0.0, f"util[{i},{s}]")

    # one-step deviation values
    for i in range(H):
        t = lengths[i]
        for s in range(S):
            for q in range(S):
                idx = [u3[i, s, q], *x[i, q], y[i, q]]
                coef = [1.0, *(-env.vA[t, s]), 1.0]
                if t < T - 1 and delta:
                    for a in range(A):
                        k = ix.child(i, q, a)
                        ratio = env.P[t, s, a] / PE[t, q, a]
                        idx.extend(u[k])
                        coef.extend(-delta * ratio)
                lp.add_constraint(idx, coef, EQ, 0.0, f"dev[{i},{s},{q}]")

    # IC: truth beats each one-step deviation, rescaled to the deviation's mass
    sp_ap = ix.last_pairs
    for i in range(H):
        t = lengths[i]
        row = P0E if t == 0 else PE[t - 1, sp_ap[i, 0], sp_ap[i, 1]]
        for s in range(S):
            for q in range(S):
                lp.add_constraint([u[i, s], u3[i, s, q]], [1.0, -row[s] / row[q]], GE, 0.0, f"ic[{i},{s},{q}]")

    if config.ir_mode == "dynamic":
        for i in range(H):
            for s in range(S):
                lp.add_constraint([u[i, s]], [1.0], GE, 0.0, f"ir[{i},{s}]")
    elif config.ir_mode == "overall":
        on = np.flatnonzero(env.P0 > 0)
        lp.add_constraint(u[0, on], np.ones(on.size), GE, 0.0, "ir")

    if config.payment_mode == "interval":
        lo, hi = config.payment_bounds
        for i in range(H):
            for s in range(S):
                lp.add_constraint([y[i, s], z[i, s]], [1.0, -lo], GE, 0.0, f"paylo[{i},{s}]")
                lp.add_constraint([y[i, s], z[i, s]], [1.0, -hi], LE, 0.0, f"payhi[{i},{s}]")
    return lp, index


def extract_mechanism(env: DynamicEnvironment, sol: LPSolution, index: LPIndexMap) -> Mechanism:
    """Normalize flows into a table mechanism; zero-mass pairs get uniform play."""
    if not sol.optimal:
        raise ValueError(f"cannot extract a mechanism from a {sol.status} solution")
    x = sol.x[index.x]
    if x.min(initial=0.0) < -NEG_TOL:
        raise LPSolverError(f"solver returned negative action mass {x.min():.3g}")
    x = np.maximum(x, 0.0)
    z = sol.x[index.z]
    y = sol.x[index.y]
    live = z > ZERO_MASS
    A = env.n_actions
    zs = np.where(live, z, 1.0)
    pi = np.where(live[..., None], x / zs[..., None], 1.0 / A)
    pi = pi / pi.sum(axis=-1, keepdims=True)
    pay = np.where(live, y / zs, 0.0)
    return Mechanism.table(pi, pay)


@dataclass
class OptimalResult:
    mechanism: Mechanism
    value: float
    lp: Optional[LinearProgram] = field(default=None, repr=False)
    index: Optional[LPIndexMap] = field(default=None, repr=False)
    solution: Optional[LPSolution] = field(default=None, repr=False)
    phantom_payment: float = 0.0  # total LP payment on zero-mass pairs

    def __iter__(self):
        return iter((self.mechanism, self.value))


def solve_optimal(env: DynamicEnvironment, config: SolveConfig = SolveConfig()) -> OptimalResult:
    """Optimal IC (and optionally IR) mechanism; unpacks as ``(mechanism, value)``."""
    lp, index = build_lp(env, config)
    sol = solve_lp(lp, method=config.lp_backend)
    if sol.status == "infeasible":
        raise InfeasibleProgram(f"no mechanism satisfies {config}")
    if sol.status == "unbounded":
        raise UnboundedProgram(f"objective unbounded under {config}")
    z, y = sol.x[index.z], sol.x[index.y]
    phantom = float(np.abs(y[z <= ZERO_MASS]).sum())
    if phantom > PHANTOM_TOL:
        warnings.warn(
            f"LP places {phantom:.3g} of payment on zero-mass pairs; the value {sol.objective:.9g} "
            "is a supremum and the extracted mechanism may miss it or fail IC",
            PhantomPaymentWarning,
            stacklevel=2,
        )
    return OptimalResult(extract_mechanism(env, sol, index), sol.objective, lp, index, sol, phantom)


def smoothed_mechanism(env: DynamicEnvironment, result: OptimalResult, eps: float) -> Mechanism:
    """Mechanism whose value and IC/IR slack approach the LP's as ``eps`` goes to 0.

    Every pair mixes its LP policy with ``eps`` of uniform play, so zero-mass
    pairs get positive flow, and each pair charges its LP payment divided by
    that flow (computed with the same phantom transitions as the LP).  Only
    useful when ``result.phantom_payment`` is positive; otherwise the plain
    extraction is already exact.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    x, y, z = (result.solution.x[f] for f in (result.index.x, result.index.y, result.index.z))
    A = env.n_actions
    live = z > ZERO_MASS
    pi = np.where(live[..., None], np.maximum(x, 0.0) / np.where(live, z, 1.0)[..., None], 1.0 / A)
    pi = (1.0 - eps) * pi / pi.sum(axis=-1, keepdims=True) + eps / A
    ix = env.index
    PE = extended_tensor(env)
    flow = np.zeros_like(z)
    flow[0] = extended_initial(env)
    for t in range(env.horizon - 1):
        lvl = slice(ix.level(t).start, ix.level(t).stop)
        mass = flow[lvl, :, None] * pi[lvl]  # (n, S, A)
        flow[ix.children_block(t).reshape(-1)] = (mass[..., None] * PE[t][None]).reshape(-1, env.n_states)
    return Mechanism.table(pi, y / flow)
