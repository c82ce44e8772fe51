import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dynmech.env import (
    DynamicEnvironment,
    HistoryIndex,
    InvalidEnvironment,
    enumerate_histories,
    extended_initial,
    extended_tensor,
    extended_transition,
    feasible_mask,
    feasibly_extends,
    format_history,
    is_feasible,
    load_environment,
    make_environment,
    parse_history,
    save_environment,
    validate_environment,
)
from dynmech.instances import A_NEG, A_POS, F2, gen_maxsat

from conftest import rand_env


def two_state(P0=(0.5, 0.5)):
    P = np.zeros((2, 2, 2, 2))
    P[..., 0] = 1.0
    P[0, 0, 0] = [0.4, 0.6]
    return DynamicEnvironment(2, np.array(P0), P, np.ones((2, 2, 2)), np.zeros((2, 2, 2)))


class TestValidation:
    def test_well_formed(self):
        assert validate_environment(two_state()) == []

    def test_bad_initial_sum(self):
        assert "initial_dist sums to 1.1" in validate_environment(two_state((0.5, 0.6)))

    def test_missing_state_column(self):
        env = two_state()
        bad = DynamicEnvironment(2, env.P0, env.P[..., :1], env.vP, env.vA)
        problems = validate_environment(bad)
        assert len(problems) == 1 and problems[0].startswith("dimension mismatch: P")

    def test_negative_probability_named(self):
        env = two_state()
        P = env.P.copy()
        P[1, 1, 0] = [1.5, -0.5]
        problems = validate_environment(DynamicEnvironment(2, env.P0, P, env.vP, env.vA))
        assert any("P[t=2][1][0][1]" in p for p in problems)

    def test_non_finite_value(self):
        env = two_state()
        vA = env.vA.copy()
        vA[0, 1, 1] = np.nan
        assert any("vA[t=1][1][1] is non-finite" in p for p in validate_environment(env.replace(agent_value=vA)))

    def test_make_environment_raises(self):
        with pytest.raises(InvalidEnvironment):
            make_environment([0.5, 0.6], np.full((1, 2, 1, 2), 0.5), np.zeros((1, 2, 1)), np.zeros((1, 2, 1)))

    def test_near_normalized_input_renormalized_exactly(self):
        env = make_environment([0.5 + 4e-10, 0.5], np.full((1, 2, 1, 2), 0.5), np.zeros((1, 2, 1)), np.zeros((1, 2, 1)))
        assert env.P0.sum() == 1.0


class TestHistories:
    def test_level_sizes(self):
        env = rand_env(0, T=2, S=2, A=2)
        assert len(enumerate_histories(env, 1)) == 4
        assert enumerate_histories(env, 0) == [()]
        env3 = rand_env(0, T=3, S=2, A=3)
        assert len(enumerate_histories(env3, 2)) == 36

    @given(st.integers(1, 4), st.integers(1, 3), st.integers(1, 3), st.data())
    def test_encode_decode_roundtrip(self, T, S, A, data):
        ix = HistoryIndex(T, S, A)
        i = data.draw(st.integers(0, ix.total - 1))
        h = ix.decode(i)
        assert ix.encode(h) == i
        assert ix.length_of(i) == len(h)
        assert ix.lengths[i] == len(h)
        if len(h) < T - 1:
            s, a = data.draw(st.integers(0, S - 1)), data.draw(st.integers(0, A - 1))
            assert ix.decode(ix.child(i, s, a)) == h + ((s, a),)

    def test_children_block_matches_child(self):
        ix = HistoryIndex(3, 2, 3)
        for t in range(2):
            block = ix.children_block(t)
            for n, i in enumerate(ix.level(t)):
                for s in range(2):
                    for a in range(3):
                        assert block[n, s, a] == ix.child(i, s, a)

    def test_history_text_roundtrip(self):
        env = rand_env(1, T=3)
        for i in range(len(env.index)):
            h = env.index.decode(i)
            assert parse_history(env, format_history(env, h)) == h


class TestFeasibility:
    def test_examples(self):
        env = two_state()
        assert is_feasible(env, (), 0)
        assert not is_feasible(env, ((1, 0),), 1)  # P_1(s1, a0, s1) = 0
        assert is_feasible(env, ((0, 0),), 1)

    def test_maxsat_chain(self):
        # clause {x1} is state 0; a_pos at step 1 satisfies it and moves to the sink
        env = gen_maxsat(F2)
        sink = env.n_states - 1
        assert env.states[sink] == "s0"
        assert is_feasible(env, ((0, A_POS),), sink)
        assert not is_feasible(env, ((0, A_NEG),), sink)
        assert is_feasible(env, ((0, A_NEG),), 0)

    def test_extends(self):
        env = two_state()
        assert feasibly_extends(env, ((), 0), ((), 0))
        assert feasibly_extends(env, ((), 0), (((0, 0),), 1))
        assert not feasibly_extends(env, ((), 0), (((1, 0),), 1))

    def test_extended_transition(self):
        env = make_environment([1.0, 0.0], [[[[0.7, 0.3]], [[1.0, 0.0]]]] * 2, np.zeros((2, 2, 1)), np.zeros((2, 2, 1)))
        assert extended_transition(env, 1, 0, 0, 1) == pytest.approx(0.3)
        assert extended_transition(env, 1, 1, 0, 1) == 1.0
        assert extended_transition(env, 0, 0, 0, 1) == 1.0
        assert extended_initial(env)[1] == 1.0
        assert np.all(extended_tensor(env) > 0)

    @given(st.integers(0, 500))
    def test_mask_matches_definition(self, seed):
        env = rand_env(seed, T=3, S=2, A=2, sparse=True)
        mask = feasible_mask(env)
        for i in range(len(env.index)):
            h = env.index.decode(i)
            for s in range(env.n_states):
                assert mask[i, s] == is_feasible(env, h, s)


def test_json_roundtrip(tmp_path):
    env = rand_env(3, T=2, S=3, A=2)
    path = tmp_path / "env.json"
    save_environment(env, path)
    back = load_environment(path)
    assert set(json.loads(path.read_text())) == {"T", "states", "actions", "P0", "P", "vP", "vA"}
    for a, b in [(env.P0, back.P0), (env.P, back.P), (env.vP, back.vP), (env.vA, back.vA)]:
        np.testing.assert_array_equal(a, b)
    assert back.states == env.states and back.actions == env.actions


def test_ragged_file_reports_mismatch(tmp_path):
    env = rand_env(3)
    d = env.to_dict()
    d["P"][0][0][0] = [1.0]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(d))
    with pytest.raises(InvalidEnvironment, match="dimension mismatch"):
        load_environment(path)
