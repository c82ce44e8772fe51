import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from dynmech.estimators import MyopicMechanismDesigner, NaivePlanner, OptimalMechanismDesigner
from dynmech.instances import env_opposed, gen_memoryless_gap
from dynmech.env import save_environment

from conftest import rand_env


def test_params_and_clone():
    est = OptimalMechanismDesigner(ir="dynamic", payments="nonneg", discount=0.5)
    params = est.get_params()
    assert params == dict(ir="dynamic", payments="nonneg", payment_valuation=1.0, discount=0.5, lp_backend="simplex")
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    est.set_params(ir="overall")
    assert est.ir == "overall"


def test_myopic_has_no_discount_param():
    assert "discount" not in MyopicMechanismDesigner().get_params()


def test_unfitted():
    with pytest.raises(NotFittedError):
        OptimalMechanismDesigner().predict([((), 0)])


def test_fit_predict_score():
    env = env_opposed()
    est = OptimalMechanismDesigner().fit(env)
    assert est.value_ == pytest.approx(0.5)
    assert est.score() == pytest.approx(0.5)
    probs = est.predict([((), 0), ((), 1)])
    assert probs.shape == (2, 2)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0)
    np.testing.assert_array_equal(est.predict_payment([((), 0)]), [0.0])


def test_fit_accepts_dict_and_path(tmp_path):
    env = env_opposed()
    save_environment(env, tmp_path / "e.json")
    a = NaivePlanner().fit(env.to_dict()).value_
    b = NaivePlanner().fit(tmp_path / "e.json").value_
    assert a == b == pytest.approx(1.0)


def test_fit_rejects_junk():
    with pytest.raises(TypeError):
        NaivePlanner().fit(42)


def test_myopic_gap():
    env, _ = gen_memoryless_gap(2, "myopic")
    est = MyopicMechanismDesigner().fit(env)
    assert est.static_calls_ == 8
    assert est.score() == pytest.approx(1.0)
    # step-2 action follows the step-1 state
    np.testing.assert_allclose(est.predict([(((1, 0),), 1), (((0, 0),), 0)]), [[0, 1], [1, 0]], atol=1e-9)


def test_score_on_other_env():
    a, b = rand_env(0), rand_env(1)
    est = NaivePlanner().fit(a)
    assert est.score(b) != est.score()


def test_empty_queries():
    est = NaivePlanner().fit(env_opposed())
    assert est.predict([]).shape == (0, 2)


@pytest.mark.parametrize("bad", [[((), 5)], [(((0, 0),), 0)], [3]])
def test_bad_queries(bad):
    est = NaivePlanner().fit(env_opposed())
    with pytest.raises(ValueError):
        est.predict(bad)


def test_designers_dominate_naive_response():
    env = rand_env(3, T=2, S=2, A=2, eta=-1.0)
    opt = OptimalMechanismDesigner().fit(env).score()
    my = MyopicMechanismDesigner().fit(env).score()
    naive = NaivePlanner().fit(env).score()
    assert opt <= naive + 1e-9 and my <= naive + 1e-9
