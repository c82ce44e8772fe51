import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dynmech.agents import best_response, naive_plan
from dynmech.env import make_environment
from dynmech.instances import F1, env_opposed, env_single, gen_maxsat, gen_memoryless_gap
from dynmech.mechanism import Mechanism, evaluate

from conftest import rand_env
from oracles import brute_force_best
from oracles import random_table


def naive_oracle(env):
    """Best deterministic memoryless plan by enumerating every one (tiny envs)."""
    T, S, A = env.horizon, env.n_states, env.n_actions
    best = -np.inf
    for choice in itertools.product(range(A), repeat=T * S):
        pol = np.zeros((T, S, A))
        pol[np.repeat(np.arange(T), S), np.tile(np.arange(S), T), choice] = 1.0
        best = max(best, evaluate(env, Mechanism.memoryless(pol)).principal_total)
    return best


class TestNaive:
    def test_single(self):
        mech, value = naive_plan(env_single())
        assert value == pytest.approx(0.7)
        np.testing.assert_array_equal(mech.policy, [[[1.0]]])

    def test_opposed(self):
        mech, value = naive_plan(env_opposed())
        assert value == pytest.approx(1.0)
        np.testing.assert_array_equal(mech.policy[0], np.eye(2))

    def test_maxsat_f1(self):
        assert naive_plan(gen_maxsat(F1))[1] == pytest.approx(1.0)

    @given(st.integers(0, 10**6))
    def test_matches_enumeration(self, seed):
        env = rand_env(seed % 1000, T=2, S=2, A=2)
        assert naive_plan(env)[1] == pytest.approx(naive_oracle(env), abs=1e-12)

    @given(st.integers(0, 10**6), st.floats(-3, 3))
    def test_ignores_agent_values(self, seed, shift):
        env = rand_env(seed % 1000, T=2, S=2, A=3)
        other = make_environment(env.P0, env.P, env.vP, env.vA * -2.0 + shift)
        a, b = naive_plan(env), naive_plan(other)
        np.testing.assert_array_equal(a[0].policy, b[0].policy)
        assert a[1] == b[1]

    def test_value_is_truthful_evaluation(self):
        env = rand_env(11, T=3, S=3, A=2)
        mech, value = naive_plan(env)
        assert evaluate(env, mech).principal_total == pytest.approx(value, abs=1e-12)


class TestBestResponse:
    @given(st.integers(0, 10**6), st.sampled_from([1.0, 0.6, 0.0]), st.booleans())
    def test_dp_equals_enumeration(self, seed, delta, pay):
        env = rand_env(seed % 1000, T=2, S=2, A=2, sparse=seed % 3 == 0)
        mech = random_table(env, seed, payments=pay)
        br = best_response(env, mech, "patient", delta)
        assert br.agent_value == pytest.approx(brute_force_best(env, mech, delta), abs=1e-9)
        again = evaluate(env, mech, br.strategy, delta)
        assert again.agent_total == pytest.approx(br.agent_value, abs=1e-12)
        assert again.principal_total == pytest.approx(br.principal_value, abs=1e-12)

    def test_opposed_flips_both_reports(self):
        env = env_opposed()
        br = best_response(env, naive_plan(env)[0])
        assert br.strategy.reports.tolist() == [[1, 0]]
        assert br.principal_value == pytest.approx(0.0)
        assert br.agent_value == pytest.approx(1.0)

    @pytest.mark.parametrize("rule", ["truthful-first", "adversarial"])
    def test_naive_on_maxsat_f1(self, rule):
        env = gen_maxsat(F1)
        br = best_response(env, naive_plan(env)[0], tie_rule=rule)
        assert br.principal_value == pytest.approx(0.0)

    def test_single_state_is_truthful(self):
        env = rand_env(2, T=3, S=1, A=2)
        mech = random_table(env, 0, payments=True)
        br = best_response(env, mech)
        assert br.strategy.is_truthful()
        assert br.agent_value == pytest.approx(evaluate(env, mech).agent_total)

    def test_gap_reference(self):
        # state 2 gains 1 by claiming state 1; state 1 is indifferent and stays truthful
        env, ref = gen_memoryless_gap(2, "patient")
        br = best_response(env, ref)
        assert br.strategy.reports[0].tolist() == [0, 0]
        assert br.agent_value == pytest.approx(1.5)
        assert br.principal_value == pytest.approx(0.5)

    def test_tie_rules_differ_on_indifference(self):
        # agent indifferent everywhere; the principal prefers truth
        env = make_environment([0.5, 0.5], np.full((1, 2, 2, 2), 0.5), [np.eye(2)], np.zeros((1, 2, 2)))
        mech = Mechanism.memoryless([np.eye(2)])
        assert best_response(env, mech, tie_rule="truthful-first").strategy.is_truthful()
        low = best_response(env, mech, tie_rule="lowest-index")
        assert low.strategy.reports[0].tolist() == [0, 0]
        adv = best_response(env, mech, tie_rule="adversarial")
        assert adv.strategy.reports[0].tolist() == [1, 0]
        assert adv.principal_value == pytest.approx(0.0)
        assert adv.agent_value == pytest.approx(0.0)

    @given(st.integers(0, 10**6))
    def test_adversarial_never_better_for_principal(self, seed):
        env = rand_env(seed % 500, T=2, S=2, A=2)
        mech = naive_plan(env)[0]
        tf = best_response(env, mech, tie_rule="truthful-first")
        adv = best_response(env, mech, tie_rule="adversarial")
        assert adv.agent_value == pytest.approx(tf.agent_value, abs=1e-9)
        assert adv.principal_value <= tf.principal_value + 1e-9

    def test_myopic_value_is_first_step(self):
        env = rand_env(9, T=2, S=2, A=2)
        mech = random_table(env, 4)
        br = best_response(env, mech, "myopic")
        assert br.agent_value == pytest.approx(evaluate(env, mech, br.strategy, 0.0).agent_total)

    def test_argument_checks(self):
        env = env_single()
        m = Mechanism.memoryless([[[1.0]]])
        with pytest.raises(ValueError):
            best_response(env, m, "impatient")
        with pytest.raises(ValueError):
            best_response(env, m, tie_rule="random")
        with pytest.raises(ValueError):
            best_response(env, m, discount=1.5)
