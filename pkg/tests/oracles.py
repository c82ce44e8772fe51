"""Brute-force references, independent of the library's backward recursions."""

import itertools

import numpy as np

from dynmech.mechanism import Mechanism


def path_values(env, mech, reports=None, discount=1.0, c=1.0):
    """Expected (principal, agent) totals by enumerating every trajectory forward.

    ``reports`` maps ``(true history, true state) -> reported state``; None is truthful.
    """
    T, S, A = env.horizon, env.n_states, env.n_actions
    total_p = total_a = 0.0

    def walk(t, true_h, rep_h, s, prob, acc_p, acc_a):
        nonlocal total_p, total_a
        r = s if reports is None else reports(true_h, s)
        pol, pay = mech.lookup(env, rep_h, r)
        for a in range(A):
            pa = prob * pol[a]
            if pa == 0.0:
                continue
            vp = acc_p + env.vP[t, s, a] + c * pay
            va = acc_a + discount**t * (env.vA[t, s, a] - pay)
            if t == T - 1:
                total_p += pa * vp
                total_a += pa * va
                continue
            for s2 in range(S):
                q = env.P[t, s, a, s2]
                if q > 0:
                    walk(t + 1, true_h + ((s, a),), rep_h + ((r, a),), s2, pa * q, vp, va)

    for s in range(S):
        if env.P0[s] > 0:
            walk(0, (), (), s, env.P0[s], 0.0, 0.0)
    return total_p, total_a


def brute_force_best(env, mech, discount=1.0, c=1.0):
    """Max agent value over all deterministic strategies (tiny envs only)."""
    from dynmech.mechanism import enumerate_reporting_strategies, evaluate

    best = -np.inf
    for strat in enumerate_reporting_strategies(env):
        best = max(best, evaluate(env, mech, strat, discount, c).agent_total)
    return best


def all_one_shot_maps(S):
    return list(itertools.product(range(S), repeat=S))


def random_table(env, seed, payments=False):
    rng = np.random.default_rng(seed)
    pol = rng.dirichlet(np.ones(env.n_actions), size=(len(env.index), env.n_states))
    pay = rng.normal(size=(len(env.index), env.n_states)) if payments else None
    return Mechanism.table(pol, pay)


def random_succinct(env, seed):
    rng = np.random.default_rng(seed)
    T, S, A = env.horizon, env.n_states, env.n_actions
    return Mechanism.succinct(rng.dirichlet(np.ones(A), size=(T, S, A, S)), rng.normal(size=(T, S, A, S)))
