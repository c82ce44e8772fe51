"""scikit-learn style wrappers around the solvers.

``fit`` takes an environment (object, dict or JSON path), ``predict`` maps
``(reported history, state)`` queries to action distributions, and ``score``
is the principal's truthful value on an environment.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .agents import naive_plan
from .mechanism import evaluate, succinct_values
from .myopic import solve_myopic
from .optimal import SolveConfig, solve_optimal
from .validation import check_environment, check_queries


class _MechanismEstimator(BaseEstimator):
    def _config(self) -> SolveConfig:
        return SolveConfig.from_flags(self.ir, self.payments, self.payment_valuation, self.discount, self.lp_backend)

    def predict(self, X) -> np.ndarray:
        """Action distribution for each query, shape ``(n, A)``."""
        check_is_fitted(self, "mechanism_")
        queries = check_queries(self.env_, X)
        if not queries:
            return np.zeros((0, self.env_.n_actions))
        return np.stack([self.mechanism_.lookup(self.env_, h, s)[0] for h, s in queries])

    def predict_payment(self, X) -> np.ndarray:
        check_is_fitted(self, "mechanism_")
        return np.array([self.mechanism_.lookup(self.env_, h, s)[1] for h, s in check_queries(self.env_, X)])

    def score(self, env=None) -> float:
        """Truthful principal value; defaults to the fitted environment."""
        check_is_fitted(self, "mechanism_")
        env = self.env_ if env is None else check_environment(env)
        c = getattr(self, "payment_valuation", 1.0)
        if self.mechanism_.kind == "table":
            return evaluate(env, self.mechanism_, payment_valuation=c).principal_total
        # succinct forms avoid tabulating every history on long horizons
        return float(succinct_values(env, self.mechanism_, payment_valuation=c)[0])


class OptimalMechanismDesigner(_MechanismEstimator):
    """Optimal history-dependent IC mechanism for a patient agent."""

    def __init__(self, ir="none", payments="none", payment_valuation=1.0, discount=1.0, lp_backend="simplex"):
        self.ir = ir
        self.payments = payments
        self.payment_valuation = payment_valuation
        self.discount = discount
        self.lp_backend = lp_backend

    def fit(self, env, y=None):
        self.env_ = check_environment(env)
        res = solve_optimal(self.env_, self._config())
        self.mechanism_, self.value_ = res.mechanism, res.value
        return self


class MyopicMechanismDesigner(_MechanismEstimator):
    """Optimal succinct mechanism for an agent that only weighs the current step."""

    def __init__(self, ir="none", payments="none", payment_valuation=1.0, lp_backend="simplex"):
        self.ir = ir
        self.payments = payments
        self.payment_valuation = payment_valuation
        self.lp_backend = lp_backend

    discount = 0.0  # fixed; not a hyperparameter

    def fit(self, env, y=None):
        self.env_ = check_environment(env)
        res = solve_myopic(self.env_, self._config())
        self.mechanism_, self.value_, self.static_calls_ = res.mechanism, res.value, res.static_calls
        return self


class NaivePlanner(_MechanismEstimator):
    """Principal-optimal plan that trusts every report."""

    def fit(self, env, y=None):
        self.env_ = check_environment(env)
        self.mechanism_, self.value_ = naive_plan(self.env_)
        return self
