"""Instance generators (random, MAX-SAT, memoryless gap) and small brute-force oracles."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .agents import naive_plan
from .env import DynamicEnvironment, make_environment
from .mechanism import Mechanism, check_ic, evaluate

MAXSAT_ORACLE_VARS = 20
SEQUENCE_ORACLE_BITS = 20

# draw sites for gen_random; each gets its own substream
_SITE_INITIAL, _SITE_TRANSITION, _SITE_PRINCIPAL, _SITE_NOISE = range(4)


@dataclass(frozen=True)
class GeneratorParams:
    T: int
    num_states: int
    num_actions: int
    eta: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if min(self.T, self.num_states, self.num_actions) < 1:
            raise ValueError("T, num_states and num_actions must be positive")
        if not -1.0 <= self.eta <= 1.0:
            raise ValueError(f"eta={self.eta} outside [-1, 1]")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def _stream(seed: int, site: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, site]))


def _normalized(rng: np.random.Generator, shape) -> np.ndarray:
    draw = rng.random(shape)
    sums = draw.sum(axis=-1, keepdims=True)
    if np.any(sums == 0):
        draw = rng.random(shape)
        sums = draw.sum(axis=-1, keepdims=True)
        if np.any(sums == 0):
            raise RuntimeError("degenerate all-zero draw twice in a row")
    return draw / sums


def gen_random(params: GeneratorParams) -> DynamicEnvironment:
    """Uniform random dynamics and values; ``eta`` sets how aligned the two parties are."""
    T, S, A, eta = params.T, params.num_states, params.num_actions, params.eta
    P0 = _normalized(_stream(params.seed, _SITE_INITIAL), S)
    P = _normalized(_stream(params.seed, _SITE_TRANSITION), (T, S, A, S))
    vP = _stream(params.seed, _SITE_PRINCIPAL).random((T, S, A))
    noise = _stream(params.seed, _SITE_NOISE).random((T, S, A))
    vA = eta * vP + (1.0 - abs(eta)) * noise
    return make_environment(P0, P, vP, vA)


# ---------------------------------------------------------------------------
# MAX-SAT


@dataclass(frozen=True)
class CnfFormula:
    """Clauses as tuples of nonzero ints: ``+v`` is ``x_v``, ``-v`` its negation (1-based)."""

    num_vars: int
    clauses: tuple

    def __post_init__(self):
        clauses = tuple(tuple(sorted(set(int(l) for l in c), key=abs)) for c in self.clauses)
        if self.num_vars < 1:
            raise ValueError("formula needs at least one variable")
        for c in clauses:
            if not c:
                raise ValueError("empty clause")
            for lit in c:
                if lit == 0 or abs(lit) > self.num_vars:
                    raise ValueError(f"literal {lit} out of range 1..{self.num_vars}")
                if -lit in c:
                    raise ValueError(f"clause {c} contains both polarities of x{abs(lit)}")
        object.__setattr__(self, "clauses", clauses)

    @property
    def num_clauses(self) -> int:
        return len(self.clauses)

    def satisfied(self, assignment) -> int:
        """Number of clauses satisfied by a 0/1 assignment to ``x_1..x_n``."""
        return sum(any((lit > 0) == bool(assignment[abs(lit) - 1]) for lit in c) for c in self.clauses)

    def to_dimacs(self) -> str:
        lines = [f"p cnf {self.num_vars} {self.num_clauses}"]
        lines += [" ".join(map(str, c)) + " 0" for c in self.clauses]
        return "\n".join(lines) + "\n"


def parse_dimacs(text: str) -> CnfFormula:
    """Read the ``p cnf`` subset of DIMACS: comments, a header, 0-terminated clauses."""
    n = m = None
    clauses, current = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("c") or line.startswith("%"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise ValueError(f"line {lineno}: bad header {line!r}")
            n, m = int(parts[2]), int(parts[3])
            continue
        if n is None:
            raise ValueError(f"line {lineno}: clause before 'p cnf' header")
        try:
            lits = [int(tok) for tok in line.split()]
        except ValueError:
            raise ValueError(f"line {lineno}: non-integer token in {line!r}") from None
        for lit in lits:
            if lit == 0:
                clauses.append(current)
                current = []
            else:
                current.append(lit)
    if n is None:
        raise ValueError("missing 'p cnf' header")
    if current:
        raise ValueError("last clause is not 0-terminated")
    if m is not None and len(clauses) != m:
        raise ValueError(f"header promises {m} clauses, found {len(clauses)}")
    return CnfFormula(n, tuple(clauses))


def random_formula(num_vars: int, num_clauses: int, rng: np.random.Generator, max_width: int = 3) -> CnfFormula:
    """Random formula with no clause containing both polarities of a variable."""
    clauses = []
    for _ in range(num_clauses):
        width = int(rng.integers(1, min(max_width, num_vars) + 1))
        chosen = rng.choice(num_vars, size=width, replace=False) + 1
        signs = rng.choice([-1, 1], size=width)
        clauses.append(tuple(int(v * s) for v, s in zip(chosen, signs)))
    return CnfFormula(num_vars, tuple(clauses))


F1 = CnfFormula(1, ((1,), (-1,)))
F2 = CnfFormula(2, ((1,), (-2,), (-1, 2)))

A_POS, A_NEG = 0, 1


def gen_maxsat(f: CnfFormula, myopic_variant: float | None = None) -> DynamicEnvironment:
    """Zero-sum chain where acting ``a_pos`` at step ``t`` means ``x_t = 1``.

    Clause states come first and the absorbing sink is the last state.  With
    ``myopic_variant=c`` the agent instead values ``a_pos`` at ``c`` and
    ``a_neg`` at 0 everywhere.
    """
    n, m = f.num_vars, f.num_clauses
    S, sink = m + 1, m
    T = n
    P0 = np.zeros(S)
    P0[:m] = 1.0 / m
    P = np.zeros((T, S, 2, S))
    vP = np.zeros((T, S, 2))
    P[:, sink, :, sink] = 1.0
    for t in range(T):
        for i, clause in enumerate(f.clauses):
            if t + 1 in clause:
                P[t, i, A_POS, sink] = 1.0
                P[t, i, A_NEG, i] = 1.0
                vP[t, i, A_POS] = 1.0
            elif -(t + 1) in clause:
                P[t, i, A_POS, i] = 1.0
                P[t, i, A_NEG, sink] = 1.0
                vP[t, i, A_NEG] = 1.0
            else:
                P[t, i, :, i] = 1.0
    if myopic_variant is None:
        vA = 1.0 - vP
    else:
        vA = np.zeros((T, S, 2))
        vA[:, :, A_POS] = myopic_variant
    states = [f"s{i + 1}" for i in range(m)] + ["s0"]
    return make_environment(P0, P, vP, vA, states=states, actions=["a_pos", "a_neg"])


def maxsat_oracle(f: CnfFormula) -> float:
    """Largest satisfiable fraction of clauses, by enumerating assignments."""
    if f.num_vars > MAXSAT_ORACLE_VARS:
        raise ValueError(f"refusing to enumerate 2^{f.num_vars} assignments (cap 2^{MAXSAT_ORACLE_VARS})")
    best = max(f.satisfied(bits) for bits in itertools.product((0, 1), repeat=f.num_vars))
    return best / f.num_clauses


def report_independent_oracle(env: DynamicEnvironment) -> float:
    """Best truthful principal value over fixed action sequences that ignore reports."""
    T, A = env.horizon, env.n_actions
    if T * np.log2(A) > SEQUENCE_ORACLE_BITS:
        raise ValueError(f"refusing to enumerate {A}^{T} action sequences (cap 2^{SEQUENCE_ORACLE_BITS})")
    S = np.arange(env.n_states)
    best = -np.inf
    for seq in itertools.product(range(A), repeat=T):
        V = np.zeros(env.n_states)
        for t in range(T - 1, -1, -1):
            a = seq[t]
            V = env.vP[t, S, a] + env.P[t, S, a] @ V
        best = max(best, float(env.P0 @ V))
    return best


# ---------------------------------------------------------------------------
# memoryless gap constructions


def gen_memoryless_gap(n: int, agent_kind: str = "patient") -> tuple[DynamicEnvironment, Mechanism]:
    """Two-step instance where history-dependence is worth a factor of ``n``.

    Returns the environment and a reference mechanism that uses the first
    state to pick the second action.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    eye = np.eye(n)
    P0 = np.full(n, 1.0 / n)
    names = [str(i + 1) for i in range(n)]
    if agent_kind == "patient":
        P = np.zeros((2, n, n, n))
        P[..., 0] = 1.0
        vP = np.stack([eye, np.zeros((n, n))])
        vA = np.stack([1.0 - eye, 1.0 - eye])
        pol = np.zeros((2, n, n, n, n))
        for i in range(n):
            pol[0, :, :, i, i] = 1.0
            pol[1, i, :, :, (i + 1) % n] = 1.0
    elif agent_kind == "myopic":
        P = np.broadcast_to(eye[None, :, None, :], (2, n, n, n)).copy()
        vP = np.stack([np.zeros((n, n)), eye])
        vA = np.stack([np.zeros((n, n)), 1.0 - eye])
        pol = np.zeros((2, n, n, n, n))
        pol[0, ..., 0] = 1.0
        for i in range(n):
            pol[1, i, :, :, i] = 1.0
    else:
        raise ValueError(f"unknown agent kind {agent_kind!r}")
    env = make_environment(P0, P, vP, vA, states=names, actions=names)
    return env, Mechanism.succinct(pol)


def memoryless_ic_screen(
    env: DynamicEnvironment,
    samples: int = 1000,
    seed: int = 0,
    agent_kind: str = "patient",
    tol: float = 1e-6,
) -> float:
    """Best truthful value among sampled memoryless mechanisms that pass the IC check.

    The naive plan is screened first.  Each sample draws Dirichlet-uniform
    action rows; with probability 1/2 per time step one row is shared by all
    states, so report-independent layers (which are IC at that step) are hit
    with positive probability.  Returns 0 if nothing passes.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5C4EE7]))
    T, S, A = env.horizon, env.n_states, env.n_actions
    candidates = [naive_plan(env)[0]]
    best = 0.0
    found = False
    for k in range(samples + 1):
        if k == 0:
            mech = candidates[0]
        else:
            pol = rng.dirichlet(np.ones(A), size=(T, S))
            pooled = rng.random(T) < 0.5
            pol[pooled] = pol[pooled][:, :1]
            mech = Mechanism.memoryless(pol)
        if check_ic(env, mech, agent_kind, tol=tol):
            value = evaluate(env, mech).principal_total
            best = value if not found else max(best, value)
            found = True
    return best if found else 0.0


# ---------------------------------------------------------------------------
# small named environments


def env_single() -> DynamicEnvironment:
    """One step, one state, one action."""
    return make_environment([1.0], [[[[1.0]]]], [[[0.7]]], [[[0.3]]])


def env_opposed() -> DynamicEnvironment:
    """One step, two equally likely states; the agent wants the action the principal does not."""
    eye = np.eye(2)
    P = np.full((1, 2, 2, 2), 0.5)
    return make_environment([0.5, 0.5], P, eye[None], (1.0 - eye)[None])
