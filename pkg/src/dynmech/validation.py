"""Input coercion shared by the estimator layer and the CLI."""

from __future__ import annotations

import os
from collections.abc import Mapping

from .env import DynamicEnvironment, InvalidEnvironment, checked, load_environment


def check_environment(obj) -> DynamicEnvironment:
    """Accept an environment, its dict form, or a path to its JSON; return it validated."""
    if isinstance(obj, DynamicEnvironment):
        return checked(obj)
    if isinstance(obj, Mapping):
        return DynamicEnvironment.from_dict(dict(obj))
    if isinstance(obj, (str, os.PathLike)):
        return load_environment(obj)
    raise TypeError(f"expected an environment, dict or path, got {type(obj).__name__}")


def check_queries(env: DynamicEnvironment, X) -> list:
    """Normalize ``(history, state)`` queries, checking every index against ``env``."""
    out = []
    for n, item in enumerate(X):
        try:
            history, state = item
        except (TypeError, ValueError):
            raise ValueError(f"query {n}: expected a (history, state) pair") from None
        history = tuple((int(s), int(a)) for s, a in history)
        state = int(state)
        if len(history) >= env.horizon:
            raise ValueError(f"query {n}: history has length {len(history)}, horizon is {env.horizon}")
        for s, a in history + ((state, 0),):
            if not (0 <= s < env.n_states and 0 <= a < env.n_actions):
                raise ValueError(f"query {n}: pair ({s}, {a}) out of range")
        out.append((history, state))
    return out


__all__ = ["check_environment", "check_queries", "InvalidEnvironment"]
