"""Optimal succinct mechanism against a myopic agent, built one time layer at a time."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import DynamicEnvironment
from .lp import EQ, GE, INF, LinearProgram, solve_lp
from .mechanism import Mechanism
from .optimal import InfeasibleProgram, SolveConfig, UnboundedProgram


@dataclass
class StaticInstance:
    """One-shot screening problem: types report once, the principal acts once."""

    q: np.ndarray  # (S,) type weights, need not sum to 1
    principal_util: np.ndarray  # (S, A)
    agent_util: np.ndarray  # (S, A)
    config: SolveConfig = SolveConfig()
    # the per-layer IR rule differs from the top-level one for overall IR
    apply_overall_ir: bool = True

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.principal_util = np.asarray(self.principal_util, dtype=float)
        self.agent_util = np.asarray(self.agent_util, dtype=float)
        if self.q.ndim != 1 or np.any(self.q < 0):
            raise ValueError("q must be a nonnegative vector")
        S = self.q.size
        if self.principal_util.shape[0] != S or self.agent_util.shape != self.principal_util.shape:
            raise ValueError("utility matrices must be (types, actions) and match q")


@dataclass
class StaticSolution:
    policy: np.ndarray  # (S, A)
    payment: np.ndarray  # (S,)
    value: float


def opt_stat_mech(inst: StaticInstance) -> StaticSolution:
    """Best one-shot IC mechanism for a static instance."""
    S, A = inst.principal_util.shape
    cfg = inst.config
    lp = LinearProgram()
    pi = lp.add_variables([f"pi[{s},{a}]" for s in range(S) for a in range(A)]).reshape(S, A)
    if cfg.payment_mode == "none":
        pay = lp.add_variables([f"p[{s}]" for s in range(S)], 0.0, 0.0)
    elif cfg.payment_mode == "nonnegative":
        pay = lp.add_variables([f"p[{s}]" for s in range(S)], 0.0, INF)
    else:
        lo, hi = cfg.payment_bounds
        pay = lp.add_variables([f"p[{s}]" for s in range(S)], lo, hi)
    for s in range(S):
        lp.add_objective(pi[s], inst.q[s] * inst.principal_util[s])
        lp.add_objective([pay[s]], [inst.q[s] * cfg.payment_valuation])
        lp.add_constraint(pi[s], np.ones(A), EQ, 1.0, f"sum[{s}]")
    vA = inst.agent_util
    for s in range(S):
        for r in range(S):
            if r == s:
                continue
            # truthful s at least as good as reporting r
            idx = np.r_[pi[s], pay[s], pi[r], pay[r]]
            coef = np.r_[vA[s], -1.0, -vA[s], 1.0]
            lp.add_constraint(idx, coef, GE, 0.0, f"ic[{s},{r}]")
    if cfg.ir_mode == "dynamic":
        for s in range(S):
            lp.add_constraint(np.r_[pi[s], pay[s]], np.r_[vA[s], -1.0], GE, 0.0, f"ir[{s}]")
    elif cfg.ir_mode == "overall" and inst.apply_overall_ir:
        idx = np.r_[pi.ravel(), pay]
        coef = np.r_[(inst.q[:, None] * vA).ravel(), -inst.q]
        lp.add_constraint(idx, coef, GE, 0.0, "ir")
    sol = solve_lp(lp, method=cfg.lp_backend)
    if sol.status == "infeasible":
        raise InfeasibleProgram(f"static instance infeasible under {cfg}")
    if sol.status == "unbounded":
        raise UnboundedProgram(f"static instance unbounded under {cfg}")
    policy = np.maximum(sol.x[pi], 0.0)
    policy /= policy.sum(axis=1, keepdims=True)
    return StaticSolution(policy, sol.x[pay].copy(), sol.objective)


@dataclass
class MyopicResult:
    mechanism: Mechanism
    value: float
    static_calls: int

    def __iter__(self):
        return iter((self.mechanism, self.value))


def solve_myopic(env: DynamicEnvironment, config: SolveConfig = SolveConfig(), static_solver=opt_stat_mech) -> MyopicResult:
    """Backward layer-by-layer construction; ``config.agent_discount`` is ignored.

    Each time step ``t`` and previous pair ``(s_p, a_p)`` gets its own static
    instance whose type weights are the transition row into step ``t``.  Every
    slot is solved, including the identical ``t = 1`` slots, so the solver is
    called exactly ``T * S * A`` times.
    """
    T, S, A = env.horizon, env.n_states, env.n_actions
    policy = np.zeros((T, S, A, S, A))
    payment = np.zeros((T, S, A, S))
    onward = np.zeros((S, A, S))  # principal's onward value of slot (s_p, a_p, s) at t+1
    calls = 0
    value = 0.0
    for t in range(T - 1, -1, -1):
        util = env.vP[t].copy()
        if t < T - 1:
            util += np.einsum("sax,sax->sa", env.P[t], onward)
        layer = np.zeros((S, A, S))
        for sp in range(S):
            for ap in range(A):
                q = env.P0 if t == 0 else env.P[t - 1, sp, ap]
                inst = StaticInstance(q, util, env.vA[t], config, apply_overall_ir=(t == 0))
                sol = static_solver(inst)
                calls += 1
                policy[t, sp, ap] = sol.policy
                payment[t, sp, ap] = sol.payment
                layer[sp, ap] = np.einsum("sa,sa->s", sol.policy, util) + config.payment_valuation * sol.payment
                if t == 0 and sp == 0 and ap == 0:
                    value = sol.value
        onward = layer
    return MyopicResult(Mechanism.succinct(policy, payment), float(value), calls)
