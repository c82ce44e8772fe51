"""Dynamic environments, history enumeration and the extended transition operator.

Tensors are 0-indexed in time: ``P[t - 1]`` holds the transition at step ``t``,
and likewise for the valuation tensors.  States and actions are integer indices
into the ``states`` / ``actions`` name lists.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

PROB_TOL = 1e-9

History = tuple  # tuple[tuple[int, int], ...]
EMPTY: History = ()
SENTINEL = (0, 0)


class InvalidEnvironment(ValueError):
    """Raised when an environment fails validation."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid environment: " + "; ".join(self.violations))


@dataclass(frozen=True, eq=False)
class DynamicEnvironment:
    """Finite-horizon environment ``(T, S, A, P0, P, vP, vA)``.

    Shapes: ``P0`` is ``(S,)``, ``P`` is ``(T, S, A, S)``, ``vP`` and ``vA`` are
    ``(T, S, A)``.  Arrays are copied and made read-only on construction.
    """

    horizon: int
    initial_dist: np.ndarray
    transition: np.ndarray
    principal_value: np.ndarray
    agent_value: np.ndarray
    states: tuple = field(default=None)
    actions: tuple = field(default=None)

    def __post_init__(self):
        for name in ("initial_dist", "transition", "principal_value", "agent_value"):
            raw = getattr(self, name)
            try:
                arr = np.array(raw, dtype=float)
            except (ValueError, TypeError):
                arr = np.array(raw, dtype=object)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        S = self.initial_dist.shape[0] if self.initial_dist.ndim == 1 else 0
        A = self.principal_value.shape[-1] if self.principal_value.ndim == 3 else 0
        if A == 0 and self.transition.ndim == 4:
            A = self.transition.shape[2]
        if self.states is None:
            object.__setattr__(self, "states", tuple(f"s{i}" for i in range(S)))
        else:
            object.__setattr__(self, "states", tuple(str(s) for s in self.states))
        if self.actions is None:
            object.__setattr__(self, "actions", tuple(f"a{i}" for i in range(A)))
        else:
            object.__setattr__(self, "actions", tuple(str(a) for a in self.actions))
        object.__setattr__(self, "horizon", int(self.horizon))

    @property
    def T(self) -> int:
        return self.horizon

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    # short aliases used throughout the solvers
    P0 = property(lambda self: self.initial_dist)
    P = property(lambda self: self.transition)
    vP = property(lambda self: self.principal_value)
    vA = property(lambda self: self.agent_value)

    @cached_property
    def index(self) -> "HistoryIndex":
        return HistoryIndex(self.horizon, self.n_states, self.n_actions)

    def replace(self, **changes) -> "DynamicEnvironment":
        kw = dict(
            horizon=self.horizon,
            initial_dist=self.initial_dist,
            transition=self.transition,
            principal_value=self.principal_value,
            agent_value=self.agent_value,
            states=self.states,
            actions=self.actions,
        )
        kw.update(changes)
        return DynamicEnvironment(**kw)

    def to_dict(self) -> dict:
        return {
            "T": self.horizon,
            "states": list(self.states),
            "actions": list(self.actions),
            "P0": self.initial_dist.tolist(),
            "P": self.transition.tolist(),
            "vP": self.principal_value.tolist(),
            "vA": self.agent_value.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict, validate: bool = True) -> "DynamicEnvironment":
        try:
            env = cls(
                horizon=data["T"],
                initial_dist=np.asarray(data["P0"], dtype=float),
                transition=_ragged_array(data["P"]),
                principal_value=_ragged_array(data["vP"]),
                agent_value=_ragged_array(data["vA"]),
                states=data.get("states"),
                actions=data.get("actions"),
            )
        except KeyError as exc:
            raise InvalidEnvironment([f"missing key {exc.args[0]!r}"]) from None
        if validate:
            return checked(env)
        return env


def _ragged_array(data) -> np.ndarray:
    try:
        return np.asarray(data, dtype=float)
    except ValueError:
        # ragged nesting; keep as object so the validator can name the bad index
        return np.asarray(data, dtype=object)


def validate_environment(env: DynamicEnvironment) -> list[str]:
    """Return a list of violations; an empty list means the environment is OK."""
    out: list[str] = []
    T = env.horizon
    if T < 1:
        out.append(f"horizon T={T} must be >= 1")
    S, A = len(env.states), len(env.actions)
    if S < 1:
        out.append("state space is empty")
    if A < 1:
        out.append("action space is empty")
    if out:
        return out

    P0 = env.initial_dist
    if P0.shape != (S,):
        out.append(f"dimension mismatch: initial_dist has shape {P0.shape}, expected ({S},)")
    for name, arr, shape in (
        ("P", env.transition, (T, S, A, S)),
        ("vP", env.principal_value, (T, S, A)),
        ("vA", env.agent_value, (T, S, A)),
    ):
        if arr.dtype == object or arr.shape != shape:
            out.append(f"dimension mismatch: {name} has shape {_shape_desc(arr)}, expected {shape}")
    if out:
        return out

    if not np.all(np.isfinite(P0)):
        out.append("initial_dist has non-finite entries")
    else:
        for s in np.flatnonzero((P0 < 0) | (P0 > 1)):
            out.append(f"initial_dist[{s}]={P0[s]!r} outside [0, 1]")
        total = P0.sum()
        if abs(total - 1.0) > PROB_TOL:
            out.append(f"initial_dist sums to {total:.12g}")

    P = env.transition
    bad = ~np.isfinite(P)
    for idx in zip(*np.nonzero(bad)):
        out.append(f"P[t={idx[0] + 1}][{idx[1]}][{idx[2]}][{idx[3]}] is non-finite")
    if not bad.any():
        for idx in zip(*np.nonzero((P < 0) | (P > 1))):
            t, s, a, s2 = idx
            out.append(f"P[t={t + 1}][{s}][{a}][{s2}]={P[idx]!r} outside [0, 1]")
        sums = P.sum(axis=-1)
        for t, s, a in zip(*np.nonzero(np.abs(sums - 1.0) > PROB_TOL)):
            out.append(f"P[t={t + 1}][{s}][{a}] sums to {sums[t, s, a]:.12g}")

    for name, arr in (("vP", env.principal_value), ("vA", env.agent_value)):
        for t, s, a in zip(*np.nonzero(~np.isfinite(arr))):
            out.append(f"{name}[t={t + 1}][{s}][{a}] is non-finite")
    return out


def _shape_desc(arr) -> str:
    if arr.dtype != object:
        return str(arr.shape)
    return "ragged"


def checked(env: DynamicEnvironment) -> DynamicEnvironment:
    """Validate ``env`` and return a copy with distributions renormalized exactly."""
    violations = validate_environment(env)
    if violations:
        raise InvalidEnvironment(violations)
    P0 = env.initial_dist / env.initial_dist.sum()
    P = env.transition / env.transition.sum(axis=-1, keepdims=True)
    return env.replace(initial_dist=P0, transition=P)


def load_environment(path) -> DynamicEnvironment:
    with open(path) as fh:
        data = json.load(fh)
    return DynamicEnvironment.from_dict(data)


def save_environment(env: DynamicEnvironment, path) -> None:
    Path(path).write_text(json.dumps(env.to_dict(), indent=1) + "\n")


class HistoryIndex:
    """Dense mixed-radix codec for histories of length ``0 .. T-1``.

    A history of length ``t`` with steps ``(s_i, a_i)`` maps to
    ``offset[t] + sum_i (s_i * A + a_i) * (S*A)**(t-1-i)``.  Index 0 is the
    empty history, and indices are sorted by length.
    """

    def __init__(self, T: int, n_states: int, n_actions: int):
        self.T, self.S, self.A = T, n_states, n_actions
        self.radix = n_states * n_actions
        self.sizes = [self.radix**t for t in range(T)]
        self.offsets = [0]
        for n in self.sizes[:-1]:
            self.offsets.append(self.offsets[-1] + n)
        self.total = sum(self.sizes)

    def __len__(self) -> int:
        return self.total

    def level(self, t: int) -> range:
        return range(self.offsets[t], self.offsets[t] + self.sizes[t])

    def encode(self, h: History) -> int:
        t = len(h)
        if t >= self.T:
            raise ValueError(f"history length {t} exceeds T-1={self.T - 1}")
        code = 0
        for s, a in h:
            if not (0 <= s < self.S and 0 <= a < self.A):
                raise ValueError(f"step {(s, a)} out of range")
            code = code * self.radix + s * self.A + a
        return self.offsets[t] + code

    def decode(self, i: int) -> History:
        if not 0 <= i < self.total:
            raise ValueError(f"history index {i} out of range [0, {self.total})")
        t = self.length_of(i)
        code = i - self.offsets[t]
        steps = []
        for _ in range(t):
            code, d = divmod(code, self.radix)
            steps.append(divmod(d, self.A))
        return tuple(reversed(steps))

    def length_of(self, i: int) -> int:
        for t in range(self.T - 1, -1, -1):
            if i >= self.offsets[t]:
                return t
        raise ValueError(i)

    def child(self, i: int, s: int, a: int) -> int:
        """Index of ``h + (s, a)``; requires ``|h| <= T - 2``."""
        t = self.length_of(i)
        return self.offsets[t + 1] + (i - self.offsets[t]) * self.radix + s * self.A + a

    @cached_property
    def lengths(self) -> np.ndarray:
        out = np.empty(self.total, dtype=np.int64)
        for t in range(self.T):
            out[self.offsets[t] : self.offsets[t] + self.sizes[t]] = t
        return out

    @cached_property
    def last_pairs(self) -> np.ndarray:
        """``(total, 2)`` array of ``last(h)``; the empty history gets the sentinel."""
        out = np.zeros((self.total, 2), dtype=np.int64)
        out[0] = SENTINEL
        for t in range(1, self.T):
            codes = np.arange(self.sizes[t]) % self.radix
            sl = slice(self.offsets[t], self.offsets[t] + self.sizes[t])
            out[sl, 0] = codes // self.A
            out[sl, 1] = codes % self.A
        return out

    def children_block(self, t: int) -> np.ndarray:
        """Child indices for level ``t`` as an array ``(sizes[t], S, A)``."""
        base = self.offsets[t + 1] + np.arange(self.sizes[t]) * self.radix
        return base[:, None, None] + (np.arange(self.S) * self.A)[None, :, None] + np.arange(self.A)[None, None, :]


def last(h: History) -> tuple:
    return h[-1] if h else SENTINEL


def enumerate_histories(env: DynamicEnvironment, t: int) -> list:
    """All ``t``-step histories in index order; ``t = 0`` gives ``[()]``."""
    if not 0 <= t <= env.horizon - 1:
        raise ValueError(f"t={t} outside 0..{env.horizon - 1}")
    ix = env.index
    return [ix.decode(i) for i in ix.level(t)]


def iter_histories(env: DynamicEnvironment) -> Iterator:
    ix = env.index
    for i in range(len(ix)):
        yield ix.decode(i)


def _step_prob(env: DynamicEnvironment, j: int, s: int, a: int, s2: int) -> float:
    """``P_j(s, a, s2)`` with ``P_0(s, a, s2) = P0(s2)``."""
    if j == 0:
        return float(env.initial_dist[s2])
    return float(env.transition[j - 1, s, a, s2])


def _chain_positive(env, h: History, s: int, start: int) -> bool:
    # P_j(s_j, a_j, s_{j+1}) > 0 for j in start..t-1, and P_t(s_t, a_t, s) > 0
    t = len(h)
    for j in range(max(start, 1), t):
        sj, aj = h[j - 1]
        if _step_prob(env, j, sj, aj, h[j][0]) <= 0:
            return False
    sp, ap = last(h)
    # an empty history is checked against the initial draw
    if (t >= start or t == 0) and _step_prob(env, t, sp, ap, s) <= 0:
        return False
    return True


def is_feasible(env: DynamicEnvironment, h: History, s: int, i: int = 1) -> bool:
    """Whether ``(h, s)`` is ``i``-feasible.

    For ``i = 1`` the initial draw counts as the transition at step 0, so a
    history starting in a state of zero initial probability is infeasible.
    """
    if not 1 <= i <= len(h) + 1:
        raise ValueError(f"i={i} outside 1..{len(h) + 1}")
    if not 0 <= s < env.n_states:
        raise ValueError(f"state {s} out of range")
    if not _chain_positive(env, h, s, i):
        return False
    if i == 1 and h:
        return env.initial_dist[h[0][0]] > 0
    return True


def feasibly_extends(env: DynamicEnvironment, pair, other) -> bool:
    """Whether ``other = (h', s')`` feasibly extends ``pair = (h, s)``."""
    (h, s), (h2, s2) = pair, other
    h, h2 = tuple(map(tuple, h)), tuple(map(tuple, h2))
    if h == h2 and s == s2:
        return True
    t = len(h)
    if not t < len(h2):
        return False
    if h2[:t] != h:
        return False
    if h2[t][0] != s:
        return False
    return _chain_positive(env, h2, s2, t + 1)


def extended_transition(env: DynamicEnvironment, t: int, s: int, a: int, s2: int) -> float:
    """``P^E_t(s, a, s2)``: the transition probability, or 1 where it is zero."""
    if not 0 <= t <= env.horizon:
        raise ValueError(f"t={t} outside 0..{env.horizon}")
    p = _step_prob(env, t, s, a, s2)
    return p if p > 0 else 1.0


def extended_tensor(env: DynamicEnvironment) -> np.ndarray:
    """``P^E`` for t = 1..T as a ``(T, S, A, S)`` array."""
    P = env.transition
    return np.where(P > 0, P, 1.0)


def extended_initial(env: DynamicEnvironment) -> np.ndarray:
    P0 = env.initial_dist
    return np.where(P0 > 0, P0, 1.0)


def feasible_mask(env: DynamicEnvironment) -> np.ndarray:
    """Boolean ``(|H|, S)`` array of 1-feasible history-state pairs."""
    ix = env.index
    out = np.zeros((len(ix), env.n_states), dtype=bool)
    out[0] = env.initial_dist > 0
    for t in range(env.horizon - 1):
        lvl = ix.level(t)
        kids = ix.children_block(t)  # (n, S, A)
        parent = out[lvl.start : lvl.stop]  # (n, S)
        pos = env.transition[t] > 0  # (S, A, S')
        block = parent[:, :, None, None] & pos[None]
        out[kids.reshape(-1)] = block.reshape(-1, env.n_states)
    return out


def format_history(env: DynamicEnvironment, h: History) -> str:
    return "|".join(f"{env.states[s]},{env.actions[a]}" for s, a in h)


def parse_history(env: DynamicEnvironment, text: str) -> History:
    if not text:
        return EMPTY
    s_of = {n: i for i, n in enumerate(env.states)}
    a_of = {n: i for i, n in enumerate(env.actions)}
    steps = []
    for part in text.split("|"):
        sn, an = part.split(",")
        steps.append((s_of[sn], a_of[an]))
    return tuple(steps)


def make_environment(
    P0: Sequence[float],
    P,
    vP,
    vA,
    states=None,
    actions=None,
) -> DynamicEnvironment:
    """Build and validate an environment from nested sequences."""
    vP = np.asarray(vP, dtype=float)
    env = DynamicEnvironment(
        horizon=vP.shape[0],
        initial_dist=np.asarray(P0, dtype=float),
        transition=np.asarray(P, dtype=float),
        principal_value=vP,
        agent_value=np.asarray(vA, dtype=float),
        states=states,
        actions=actions,
    )
    return checked(env)
