"""Mechanism representations, exact utility evaluation and IC / IR verdicts."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from .env import DynamicEnvironment, format_history, parse_history

SUM_TOL = 1e-7
NEG_TOL = 1e-9
REACH_TOL = 1e-12
DEFAULT_TOL = 1e-6
ENUM_CAP_BITS = 24

KINDS = ("table", "succinct", "memoryless")


def _clean_rows(policy: np.ndarray) -> np.ndarray:
    policy = np.array(policy, dtype=float)
    if np.any(~np.isfinite(policy)):
        raise ValueError("policy has non-finite entries")
    if np.any(policy < -NEG_TOL):
        raise ValueError(f"policy has negative probability {policy.min():.3g}")
    policy = np.maximum(policy, 0.0)
    sums = policy.sum(axis=-1, keepdims=True)
    if np.any(np.abs(sums - 1.0) > SUM_TOL):
        bad = np.abs(sums - 1.0).max()
        raise ValueError(f"action distribution off by {bad:.3g} from summing to 1")
    return policy / sums


@dataclass(frozen=True, eq=False)
class Mechanism:
    """Action policy and payment rule in one of three layouts.

    ``table``:      policy ``(|H|, S, A)``, payment ``(|H|, S)``
    ``succinct``:   policy ``(T, S, A, S, A)`` indexed ``[t-1, s_p, a_p, s]``,
                    payment ``(T, S, A, S)``
    ``memoryless``: policy ``(T, S, A)`` indexed ``[t-1, s]``, payment ``(T, S)``
    """

    kind: str
    policy: np.ndarray
    payment: np.ndarray

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown mechanism representation {self.kind!r}")
        pol = _clean_rows(self.policy)
        pay = np.zeros(pol.shape[:-1]) if self.payment is None else np.array(self.payment, dtype=float)
        if pay.shape != pol.shape[:-1]:
            raise ValueError(f"payment shape {pay.shape} does not match policy {pol.shape}")
        if not np.all(np.isfinite(pay)):
            raise ValueError("payment has non-finite entries")
        pol.setflags(write=False)
        pay.setflags(write=False)
        object.__setattr__(self, "policy", pol)
        object.__setattr__(self, "payment", pay)

    @classmethod
    def table(cls, policy, payment=None) -> "Mechanism":
        return cls("table", policy, payment)

    @classmethod
    def succinct(cls, policy, payment=None) -> "Mechanism":
        return cls("succinct", policy, payment)

    @classmethod
    def memoryless(cls, policy, payment=None) -> "Mechanism":
        return cls("memoryless", policy, payment)

    def check_dims(self, env: DynamicEnvironment) -> None:
        T, S, A = env.horizon, env.n_states, env.n_actions
        if self.kind == "table":
            expected = (env.index.total, S, A)
        elif self.kind == "succinct":
            expected = (T, S, A, S, A)
        else:
            expected = (T, S, A)
        if self.policy.shape != expected:
            raise ValueError(f"{self.kind} mechanism has shape {self.policy.shape}, environment needs {expected}")

    def to_succinct(self, env: DynamicEnvironment) -> "Mechanism":
        self.check_dims(env)
        if self.kind == "succinct":
            return self
        if self.kind == "memoryless":
            S, A = env.n_states, env.n_actions
            pol = np.broadcast_to(self.policy[:, None, None], (env.horizon, S, A, S, A))
            pay = np.broadcast_to(self.payment[:, None, None], (env.horizon, S, A, S))
            return Mechanism.succinct(pol, pay)
        raise ValueError("a table mechanism has no succinct form in general")

    def to_table(self, env: DynamicEnvironment) -> "Mechanism":
        """Expand into a full ``(history, state)`` table."""
        self.check_dims(env)
        if self.kind == "table":
            return self
        m = self.to_succinct(env)
        ix = env.index
        t = ix.lengths
        sp, ap = ix.last_pairs[:, 0], ix.last_pairs[:, 1]
        return Mechanism.table(m.policy[t, sp, ap], m.payment[t, sp, ap])

    def lookup(self, env: DynamicEnvironment, history, state: int) -> tuple[np.ndarray, float]:
        """Action distribution and payment after reported ``history`` then ``state``."""
        history = tuple(tuple(p) for p in history)
        t = len(history)
        if t >= env.horizon:
            raise ValueError(f"history of length {t} leaves no step in a horizon of {env.horizon}")
        if self.kind == "table":
            key = (env.index.encode(history), state)
        elif self.kind == "succinct":
            sp, ap = history[-1] if history else (0, 0)
            key = (t, sp, ap, state)
        else:
            key = (t, state)
        return self.policy[key].copy(), float(self.payment[key])

    # JSON -----------------------------------------------------------------

    def to_json(self, env: DynamicEnvironment) -> dict:
        self.check_dims(env)
        st, ac = env.states, env.actions
        policy, payment = {}, {}
        for key, pol, pay in self._keyed(env):
            policy[key] = [float(v) for v in pol]
            payment[key] = float(pay)
        return {"repr": self.kind, "states": list(st), "actions": list(ac), "T": env.horizon,
                "policy": policy, "payment": payment}

    def _keyed(self, env):
        st, ac = env.states, env.actions
        if self.kind == "table":
            ix = env.index
            for i in range(len(ix)):
                hs = format_history(env, ix.decode(i))
                for s in range(env.n_states):
                    yield f"{hs}#{st[s]}", self.policy[i, s], self.payment[i, s]
        elif self.kind == "succinct":
            for t, sp, ap, s in np.ndindex(*self.payment.shape):
                yield f"t={t + 1},sp={st[sp]},ap={ac[ap]},s={st[s]}", self.policy[t, sp, ap, s], self.payment[t, sp, ap, s]
        else:
            for t, s in np.ndindex(*self.payment.shape):
                yield f"t={t + 1},s={st[s]}", self.policy[t, s], self.payment[t, s]

    @classmethod
    def from_json(cls, data: dict, env: DynamicEnvironment) -> "Mechanism":
        kind = data["repr"]
        T, S, A = env.horizon, env.n_states, env.n_actions
        s_of = {n: i for i, n in enumerate(env.states)}
        a_of = {n: i for i, n in enumerate(env.actions)}
        if kind == "table":
            shape = (len(env.index), S)
        elif kind == "succinct":
            shape = (T, S, A, S)
        elif kind == "memoryless":
            shape = (T, S)
        else:
            raise ValueError(f"unknown mechanism representation {kind!r}")
        pol = np.full(shape + (A,), np.nan)
        pay = np.zeros(shape)
        payments = data.get("payment", {})
        for key, probs in data["policy"].items():
            idx = _parse_key(kind, key, env, s_of, a_of)
            pol[idx] = probs
            pay[idx] = payments.get(key, 0.0)
        if np.isnan(pol).any():
            raise ValueError("mechanism file does not cover every entry")
        return cls(kind, pol, pay)


def _parse_key(kind, key, env, s_of, a_of):
    if kind == "table":
        hs, s = key.rsplit("#", 1)
        return (env.index.encode(parse_history(env, hs)), s_of[s])
    fields = dict(part.split("=", 1) for part in key.split(","))
    t = int(fields["t"]) - 1
    if kind == "succinct":
        return (t, s_of[fields["sp"]], a_of[fields["ap"]], s_of[fields["s"]])
    return (t, s_of[fields["s"]])


@dataclass(frozen=True, eq=False)
class ReportingStrategy:
    """Deterministic reports indexed by (true history index, true state)."""

    reports: np.ndarray

    def __post_init__(self):
        r = np.array(self.reports, dtype=np.int64)
        r.setflags(write=False)
        object.__setattr__(self, "reports", r)

    @classmethod
    def truthful(cls, env: DynamicEnvironment) -> "ReportingStrategy":
        S = env.n_states
        return cls(np.broadcast_to(np.arange(S), (len(env.index), S)))

    def is_truthful(self) -> bool:
        return bool(np.all(self.reports == np.arange(self.reports.shape[1])))

    def to_json(self, env: DynamicEnvironment) -> dict:
        ix = env.index
        out = {}
        for i in range(len(ix)):
            hs = format_history(env, ix.decode(i))
            for s in range(env.n_states):
                out[f"{hs}#{env.states[s]}"] = env.states[self.reports[i, s]]
        return {"strategy": out}


TRUTHFUL = None


@dataclass
class EvaluationResult:
    principal_total: float
    agent_total: float
    principal_onward: np.ndarray  # (|H|, S), indexed by true history
    agent_onward: np.ndarray


def reported_histories(env: DynamicEnvironment, strategy: ReportingStrategy) -> np.ndarray:
    """Global index of the reported history ``r(h)`` for every true history ``h``."""
    ix = env.index
    A = env.n_actions
    rep = np.zeros(len(ix), dtype=np.int64)
    for t in range(env.horizon - 1):
        lvl = ix.level(t)
        kids = ix.children_block(t)  # (n, S, A)
        local = rep[lvl.start : lvl.stop] - ix.offsets[t]
        r = strategy.reports[lvl.start : lvl.stop]  # (n, S)
        rep_kids = ix.offsets[t + 1] + local[:, None, None] * ix.radix + r[:, :, None] * A + np.arange(A)
        rep[kids.reshape(-1)] = rep_kids.reshape(-1)
    return rep


def evaluate(
    env: DynamicEnvironment,
    mech: Mechanism,
    strategy: Optional[ReportingStrategy] = TRUTHFUL,
    agent_discount: float = 1.0,
    payment_valuation: float = 1.0,
) -> EvaluationResult:
    """Exact expected utilities by backward recursion over true histories."""
    mech = mech.to_table(env)
    ix = env.index
    if strategy is None:
        strategy = ReportingStrategy.truthful(env)
    if strategy.reports.shape != (len(ix), env.n_states):
        raise ValueError(f"strategy shape {strategy.reports.shape} does not match environment")
    rep = reported_histories(env, strategy)
    pi, pay = mech.policy, mech.payment
    uP = np.zeros((len(ix), env.n_states))
    uA = np.zeros_like(uP)
    for t in range(env.horizon - 1, -1, -1):
        lvl = slice(ix.level(t).start, ix.level(t).stop)
        r = strategy.reports[lvl]
        hr = rep[lvl][:, None]
        pol = pi[hr, r]  # (n, S, A)
        p = pay[hr, r]
        gP = env.vP[t][None]
        gA = env.vA[t][None]
        if t < env.horizon - 1:
            kids = ix.children_block(t)
            gP = gP + np.einsum("nsax,sax->nsa", uP[kids], env.P[t])
            gA = gA + agent_discount * np.einsum("nsax,sax->nsa", uA[kids], env.P[t])
        uP[lvl] = np.einsum("nsa,nsa->ns", pol, gP) + payment_valuation * p
        uA[lvl] = np.einsum("nsa,nsa->ns", pol, gA) - p
    return EvaluationResult(
        float(env.P0 @ uP[0]), float(env.P0 @ uA[0]), uP, uA
    )


def reach_probabilities(env: DynamicEnvironment, mech: Mechanism) -> np.ndarray:
    """Probability of each (history, state) pair under truthful play."""
    mech = mech.to_table(env)
    ix = env.index
    z = np.zeros((len(ix), env.n_states))
    z[0] = env.P0
    for t in range(env.horizon - 1):
        lvl = ix.level(t)
        zx = z[lvl.start : lvl.stop, :, None] * mech.policy[lvl.start : lvl.stop]  # (n,S,A)
        kids = ix.children_block(t)
        z[kids.reshape(-1)] = (zx[..., None] * env.P[t][None]).reshape(-1, env.n_states)
    return z


def single_step_gains(env: DynamicEnvironment, mech: Mechanism, agent_discount: float = 1.0) -> np.ndarray:
    """Gain ``u_A^{r_{h,s,s'}}(h, s) - u_A(h, s)`` for every ``(h, s, s')``."""
    mech = mech.to_table(env)
    ix = env.index
    uA = evaluate(env, mech, agent_discount=agent_discount).agent_onward
    out = np.zeros((len(ix), env.n_states, env.n_states))
    for t in range(env.horizon):
        lvl = slice(ix.level(t).start, ix.level(t).stop)
        g = np.broadcast_to(env.vA[t][None, :, None, :], (lvl.stop - lvl.start,) + (env.n_states,) * 2 + (env.n_actions,))
        if t < env.horizon - 1:
            # continuation after reporting s' and seeing action a, from true state s
            kids = ix.children_block(t)  # (n, S', A)
            cont = np.einsum("nqax,sax->nsqa", uA[kids], env.P[t])
            g = g + agent_discount * cont
        pol = mech.policy[lvl]  # (n, S', A)
        dev = np.einsum("nqa,nsqa->nsq", pol, g) - mech.payment[lvl][:, None, :]
        out[lvl] = dev - uA[lvl][:, :, None]
    return out


def myopic_gains(env: DynamicEnvironment, mech: Mechanism) -> np.ndarray:
    """Immediate-utility gain from reporting ``s'`` instead of ``s`` at every ``(h, s)``."""
    mech = mech.to_table(env)
    ix = env.index
    t = ix.lengths
    imm = np.einsum("hqa,hsa->hsq", mech.policy, env.vA[t]) - mech.payment[:, None, :]
    return imm - np.einsum("hss->hs", imm)[:, :, None]


@dataclass
class ICVerdict:
    ok: bool
    gap: float
    deviation: Optional[tuple] = None  # (history, true state, report)
    deviation_gain: float = 0.0

    def __bool__(self):
        return self.ok


@dataclass
class IRVerdict:
    ok: bool
    worst: Optional[tuple] = None  # (history, state)
    worst_value: float = 0.0

    def __bool__(self):
        return self.ok


def _worst(env, gains, reach):
    masked = np.where(reach[..., None] > REACH_TOL, gains, -np.inf)
    i, s, q = np.unravel_index(int(np.argmax(masked)), masked.shape)
    return (env.index.decode(int(i)), int(s), int(q)), float(masked[i, s, q])


def check_ic(
    env: DynamicEnvironment,
    mech: Mechanism,
    agent_kind: str = "patient",
    discount: float = 1.0,
    tol: float = DEFAULT_TOL,
) -> ICVerdict:
    """Incentive-compatibility verdict against a patient or myopic agent."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    mech.check_dims(env)
    if agent_kind == "myopic":
        if mech.kind != "table":
            return _check_ic_myopic_succinct(env, mech.to_succinct(env), tol)
        gains = myopic_gains(env, mech)
        reach = reach_probabilities(env, mech)
        dev, gain = _worst(env, gains, reach)
        ok = gain <= tol
        return ICVerdict(ok, max(gain, 0.0), None if ok else dev, gain)
    if agent_kind != "patient":
        raise ValueError(f"unknown agent kind {agent_kind!r}")
    from .agents import best_response

    truth = evaluate(env, mech, agent_discount=discount).agent_total
    br = best_response(env, mech, "patient", discount=discount)
    gap = br.agent_value - truth
    gains = single_step_gains(env, mech, discount)
    dev, gain = _worst(env, gains, reach_probabilities(env, mech))
    ok = gap <= tol
    return ICVerdict(ok, gap, None if ok else dev, gain)


def succinct_reach(env: DynamicEnvironment, mech: Mechanism) -> np.ndarray:
    """Reach probability of each slot ``(t, s_p, a_p, s)`` under truthful play."""
    m = mech.to_succinct(env)
    T, S, A = env.horizon, env.n_states, env.n_actions
    rho = np.zeros((T, S, A, S))
    rho[0, 0, 0] = env.P0
    for t in range(T - 1):
        # mass on (s, a) at step t+1, then transition
        sa = np.einsum("pqs,pqsa->sa", rho[t], m.policy[t])
        rho[t + 1] = sa[:, :, None] * env.P[t]
    return rho


def _check_ic_myopic_succinct(env, m, tol):
    # imm[t, sp, ap, s, q] = utility of true s reporting q
    imm = np.einsum("tpqra,tsa->tpqsr", m.policy, env.vA) - m.payment[:, :, :, None, :]
    truth = np.einsum("tpqss->tpqs", imm)
    gains = imm - truth[..., None]
    reach = succinct_reach(env, m)
    masked = np.where(reach[..., None] > REACH_TOL, gains, -np.inf)
    flat = int(np.argmax(masked))
    t, sp, ap, s, q = np.unravel_index(flat, masked.shape)
    gain = float(masked[t, sp, ap, s, q])
    ok = gain <= tol
    dev = None if ok else ((int(t) + 1, int(sp), int(ap)), int(s), int(q))
    return ICVerdict(ok, max(gain, 0.0), dev, gain)


def check_ir(
    env: DynamicEnvironment,
    mech: Mechanism,
    mode: str = "dynamic",
    tol: float = DEFAULT_TOL,
    agent_discount: float = 1.0,
) -> IRVerdict:
    """Individual-rationality verdict: ``none``, ``overall`` or ``dynamic``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    if mode == "none":
        return IRVerdict(True)
    res = evaluate(env, mech, agent_discount=agent_discount)
    if mode == "overall":
        return IRVerdict(res.agent_total >= -tol, None, res.agent_total)
    if mode != "dynamic":
        raise ValueError(f"unknown IR mode {mode!r}")
    reach = reach_probabilities(env, mech)
    vals = np.where(reach > REACH_TOL, res.agent_onward, np.inf)
    i, s = np.unravel_index(int(np.argmin(vals)), vals.shape)
    worst = float(vals[i, s])
    if worst >= -tol:
        return IRVerdict(True, None, worst)
    return IRVerdict(False, (env.index.decode(int(i)), int(s)), worst)


def succinct_values(
    env: DynamicEnvironment,
    mech: Mechanism,
    payment_valuation: float = 1.0,
    agent_discount: float = 1.0,
):
    """Truthful totals of a succinct/memoryless mechanism without tabulating histories.

    Returns ``(principal_total, agent_total, uP, uA)`` with onward values indexed
    by slot ``[t-1, s_p, a_p, s]``.
    """
    m = mech.to_succinct(env)
    T, S, A = env.horizon, env.n_states, env.n_actions
    uP = np.zeros((T, S, A, S))
    uA = np.zeros((T, S, A, S))
    nextP = np.zeros((S, A, S))
    nextA = np.zeros((S, A, S))
    for t in range(T - 1, -1, -1):
        gP = env.vP[t] + np.einsum("sax,sax->sa", env.P[t], nextP) if t < T - 1 else env.vP[t]
        gA = env.vA[t] + agent_discount * np.einsum("sax,sax->sa", env.P[t], nextA) if t < T - 1 else env.vA[t]
        uP[t] = np.einsum("pqsa,sa->pqs", m.policy[t], gP) + payment_valuation * m.payment[t]
        uA[t] = np.einsum("pqsa,sa->pqs", m.policy[t], gA) - m.payment[t]
        nextP, nextA = uP[t], uA[t]
    return float(env.P0 @ uP[0, 0, 0]), float(env.P0 @ uA[0, 0, 0]), uP, uA


def decision_points(env: DynamicEnvironment) -> int:
    return len(env.index) * env.n_states


def enumerate_reporting_strategies(env: DynamicEnvironment, cap_bits: int = ENUM_CAP_BITS) -> Iterator[ReportingStrategy]:
    """Yield every deterministic reporting strategy exactly once."""
    D = decision_points(env)
    S = env.n_states
    bits = D * math.log2(S) if S > 1 else 0.0
    if bits > cap_bits:
        raise ValueError(
            f"refusing to enumerate {S}^{D} strategies ({bits:.1f} bits > cap {cap_bits})"
        )
    shape = (len(env.index), S)
    for combo in itertools.product(range(S), repeat=D):
        yield ReportingStrategy(np.array(combo, dtype=np.int64).reshape(shape))


def enumeration_size(env: DynamicEnvironment) -> int:
    return env.n_states ** decision_points(env)
