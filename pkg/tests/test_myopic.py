import numpy as np
import pytest
from hypothesis import given, strategies as st

from dynmech.instances import env_single, gen_memoryless_gap
from dynmech.mechanism import check_ic, check_ir, evaluate, succinct_values
from dynmech.myopic import StaticInstance, opt_stat_mech, solve_myopic
from dynmech.optimal import InfeasibleProgram, SolveConfig, UnboundedProgram, solve_optimal

from conftest import rand_env


class TestStatic:
    def test_single_type(self):
        sol = opt_stat_mech(StaticInstance([1.0], [[0.2, 0.9, 0.5]], [[1.0, 0.0, 0.0]]))
        np.testing.assert_allclose(sol.policy, [[0.0, 1.0, 0.0]], atol=1e-9)
        assert sol.value == pytest.approx(0.9)

    def test_opposed_types(self):
        sol = opt_stat_mech(StaticInstance([0.5, 0.5], np.eye(2), 1.0 - np.eye(2)))
        assert sol.value == pytest.approx(0.5)

    def test_full_surplus_extraction(self):
        inst = StaticInstance([1.0], [[0.0, 0.0]], [[0.0, 1.0]], SolveConfig("dynamic", "nonnegative"))
        sol = opt_stat_mech(inst)
        np.testing.assert_allclose(sol.policy, [[0.0, 1.0]], atol=1e-9)
        assert sol.payment[0] == pytest.approx(1.0)
        assert sol.value == pytest.approx(1.0)

    def test_unbounded_without_ir(self):
        with pytest.raises(UnboundedProgram):
            opt_stat_mech(StaticInstance([1.0], [[0.0]], [[0.0]], SolveConfig(payment_mode="nonnegative")))

    def test_infeasible(self):
        inst = StaticInstance([1.0], [[0.0]], [[0.0]], SolveConfig("dynamic", "interval", (1.0, 2.0)))
        with pytest.raises(InfeasibleProgram):
            opt_stat_mech(inst)

    def test_rejects_negative_weights(self):
        with pytest.raises(ValueError):
            StaticInstance([-0.1, 1.1], np.eye(2), np.eye(2))

    @given(st.integers(0, 10**6))
    def test_solution_is_one_shot_ic(self, seed):
        rng = np.random.default_rng(seed)
        S, A = 3, 2
        inst = StaticInstance(rng.dirichlet(np.ones(S)), rng.random((S, A)), rng.normal(size=(S, A)))
        sol = opt_stat_mech(inst)
        u = sol.policy @ inst.agent_util.T - sol.payment[None, :]  # u[r, s]: type s reporting r
        assert np.all(np.diag(u)[None, :] >= u - 1e-7)


class TestSolveMyopic:
    def test_single(self):
        assert solve_myopic(env_single()).value == pytest.approx(0.7)

    def test_gap_instance(self):
        env, _ = gen_memoryless_gap(2, "myopic")
        res = solve_myopic(env)
        assert res.value == pytest.approx(1.0)
        pol = res.mechanism.policy
        np.testing.assert_allclose(pol[0, 0, 0], [[1, 0], [1, 0]], atol=1e-9)  # action 1 at step 1
        for i in range(2):
            # at step 2, play i when the step-1 state was i
            np.testing.assert_allclose(pol[1, i, :, i], np.tile(np.eye(2)[i], (2, 1)), atol=1e-9)

    def test_call_count(self):
        env = rand_env(0, T=3, S=2, A=3)
        res = solve_myopic(env)
        assert res.static_calls == 3 * 2 * 3

    def test_custom_solver_hook(self):
        seen = []

        def spy(inst):
            seen.append(inst.q.copy())
            return opt_stat_mech(inst)

        env = rand_env(0, T=2, S=2, A=2)
        solve_myopic(env, static_solver=spy)
        assert len(seen) == 8
        for q in seen[:4]:  # step 2 slots come first
            assert q.sum() == pytest.approx(1.0)
        for q in seen[4:]:
            np.testing.assert_array_equal(q, env.P0)

    @given(st.integers(0, 10**4), st.floats(-1, 1))
    def test_matches_general_lp_at_zero_discount(self, seed, eta):
        env = rand_env(seed, T=2, S=2, A=2, eta=eta)
        my = solve_myopic(env).value
        lp = solve_optimal(env, SolveConfig(agent_discount=0.0)).value
        assert my == pytest.approx(lp, abs=1e-6)

    @given(st.integers(0, 10**4), st.sampled_from(["overall", "dynamic"]))
    def test_matches_general_lp_with_payments(self, seed, ir):
        env = rand_env(seed, T=2, S=2, A=2)
        cfg = SolveConfig(ir, "interval", (-0.5, 0.5), payment_valuation=0.8)
        lp_cfg = SolveConfig(ir, "interval", (-0.5, 0.5), payment_valuation=0.8, agent_discount=0.0)
        try:
            lp = solve_optimal(env, lp_cfg).value
        except InfeasibleProgram:
            with pytest.raises(InfeasibleProgram):
                solve_myopic(env, cfg)
            return
        assert solve_myopic(env, cfg).value == pytest.approx(lp, abs=1e-6)

    @given(st.integers(0, 10**4), st.sampled_from(["none", "dynamic"]))
    def test_output_is_myopic_ic_and_ir(self, seed, ir):
        env = rand_env(seed, T=3, S=2, A=2, sparse=seed % 2 == 0)
        res = solve_myopic(env, SolveConfig(ir, "nonnegative" if ir == "dynamic" else "none"))
        assert res.mechanism.kind == "succinct"
        assert check_ic(env, res.mechanism, "myopic")
        assert check_ir(env, res.mechanism, ir, agent_discount=0.0)

    @given(st.integers(0, 10**4))
    def test_value_is_truthful_evaluation(self, seed):
        env = rand_env(seed, T=3, S=2, A=2)
        res = solve_myopic(env)
        assert evaluate(env, res.mechanism).principal_total == pytest.approx(res.value, abs=1e-9)

    def test_long_horizon(self):
        env = rand_env(5, T=50, S=5, A=5)
        res = solve_myopic(env)
        assert res.static_calls == 50 * 25
        assert check_ic(env, res.mechanism, "myopic")
        assert succinct_values(env, res.mechanism)[0] == pytest.approx(res.value, abs=1e-7)

    def test_discount_is_ignored(self):
        env = rand_env(2)
        assert solve_myopic(env, SolveConfig(agent_discount=0.9)).value == solve_myopic(env).value
