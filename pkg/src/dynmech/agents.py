"""Naive MDP planner and exact best responses of patient and myopic agents."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import DynamicEnvironment
from .mechanism import Mechanism, ReportingStrategy, evaluate

TIE_RULES = ("truthful-first", "lowest-index", "adversarial")
TIE_TOL = 1e-9


@dataclass
class BestResponseResult:
    strategy: ReportingStrategy
    agent_value: float
    principal_value: float
    tie_rule: str


def naive_plan(env: DynamicEnvironment) -> tuple[Mechanism, float]:
    """Backward induction on the principal's values, ignoring the agent."""
    T, S = env.horizon, env.n_states
    policy = np.zeros((T, S, env.n_actions))
    V = np.zeros(S)
    for t in range(T - 1, -1, -1):
        Q = env.vP[t] + env.P[t] @ V
        best = np.argmax(Q, axis=1)  # argmax returns the first maximizer
        policy[t, np.arange(S), best] = 1.0
        V = Q[np.arange(S), best]
    return Mechanism.memoryless(policy), float(env.P0 @ V)


def _pick(Q: np.ndarray, W: np.ndarray | None, rule: str) -> np.ndarray:
    """Choose a report per (history, true state) from values ``Q[n, s, q]``."""
    best = Q.max(axis=2, keepdims=True)
    near = Q >= best - TIE_TOL * (1.0 + np.abs(best))
    first = np.argmax(near, axis=2)
    if rule == "lowest-index":
        return first
    if rule == "truthful-first":
        S = Q.shape[1]
        truthful_ok = near[:, np.arange(S), np.arange(S)]
        return np.where(truthful_ok, np.arange(S)[None, :], first)
    # adversarial: principal-worst among agent-optimal reports, lowest index after that
    return np.argmin(np.where(near, W, np.inf), axis=2)


def best_response(
    env: DynamicEnvironment,
    mech: Mechanism,
    agent_kind: str = "patient",
    discount: float = 1.0,
    tie_rule: str = "truthful-first",
    payment_valuation: float = 1.0,
) -> BestResponseResult:
    """Optimal deterministic reporting strategy against a fixed mechanism.

    A patient agent weighs the future by ``discount``.  A myopic agent looks
    only at the current step, so its ``agent_value`` is the first-step
    utility (``discount`` is ignored).  ``adversarial`` ties pick, among
    agent-optimal reports, the one worst for the principal.
    """
    if agent_kind not in ("patient", "myopic"):
        raise ValueError(f"unknown agent kind {agent_kind!r}")
    if tie_rule not in TIE_RULES:
        raise ValueError(f"unknown tie rule {tie_rule!r}")
    if not 0.0 <= discount <= 1.0:
        raise ValueError("discount must lie in [0, 1]")
    mech = mech.to_table(env)
    ix = env.index
    S, A = env.n_states, env.n_actions
    look = discount if agent_kind == "patient" else 0.0
    adversarial = tie_rule == "adversarial"

    # choice[h', s]: report made at reported history h' with true state s
    choice = np.zeros((len(ix), S), dtype=np.int64)
    V = np.zeros((len(ix), S))
    W = np.zeros((len(ix), S)) if adversarial else None
    for t in range(env.horizon - 1, -1, -1):
        lvl = slice(ix.level(t).start, ix.level(t).stop)
        n = lvl.stop - lvl.start
        pol, pay = mech.policy[lvl], mech.payment[lvl]  # (n, q, a), (n, q)
        gA = np.broadcast_to(env.vA[t][None, :, None, :], (n, S, S, A))
        gP = np.broadcast_to(env.vP[t][None, :, None, :], (n, S, S, A)) if adversarial else None
        if t < env.horizon - 1:
            kids = ix.children_block(t)  # (n, q, a)
            if look:
                gA = gA + look * np.einsum("nqax,sax->nsqa", V[kids], env.P[t])
            if adversarial:
                gP = gP + np.einsum("nqax,sax->nsqa", W[kids], env.P[t])
        Q = np.einsum("nqa,nsqa->nsq", pol, gA) - pay[:, None, :]
        Wq = None
        if adversarial:
            Wq = np.einsum("nqa,nsqa->nsq", pol, gP) + payment_valuation * pay[:, None, :]
        c = _pick(Q, Wq, tie_rule)
        choice[lvl] = c
        V[lvl] = np.take_along_axis(Q, c[..., None], axis=2)[..., 0]
        if adversarial:
            W[lvl] = np.take_along_axis(Wq, c[..., None], axis=2)[..., 0]

    # replay over true histories, tracking the reported history of each
    reports = np.zeros((len(ix), S), dtype=np.int64)
    rep = np.zeros(len(ix), dtype=np.int64)
    for t in range(env.horizon):
        lvl = slice(ix.level(t).start, ix.level(t).stop)
        reports[lvl] = choice[rep[lvl]]
        if t < env.horizon - 1:
            local = rep[lvl] - ix.offsets[t]
            kids = ix.children_block(t)
            rep_kids = ix.offsets[t + 1] + local[:, None, None] * ix.radix + reports[lvl][:, :, None] * A + np.arange(A)
            rep[kids.reshape(-1)] = rep_kids.reshape(-1)

    strategy = ReportingStrategy(reports)
    res = evaluate(env, mech, strategy, agent_discount=look, payment_valuation=payment_valuation)
    return BestResponseResult(strategy, res.agent_total, res.principal_total, tie_rule)
