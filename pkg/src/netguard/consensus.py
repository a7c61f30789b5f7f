"""Consensus matrices and trajectory simulation under misbehaving agents.

A consensus matrix is row stochastic and primitive, so the unforced
iteration ``x(t+1) = A x(t)`` drives all agents to the common value
``pi @ x(0)``.  Misbehavior of a set K is an additive unknown input at
the agents' own coordinates: ``x(t+1) = A x(t) + B_K u_K(t)`` with the
columns of ``B_K`` canonical basis vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import graph as graphmod
from .numerics import as_matrix, as_vector, left_fixed_vector


class ConsensusError(ValueError):
    """A matrix failed one of the consensus-matrix properties."""


@dataclass(frozen=True)
class ConsensusMatrix:
    """Validated row-stochastic primitive matrix with its stationary vector."""

    A: np.ndarray
    pi: np.ndarray
    graph: graphmod.DiGraph

    def __post_init__(self):
        self.A.setflags(write=False)
        self.pi.setflags(write=False)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def observed_set(self, j: int, tol: float = 1e-12) -> tuple:
        """Agents whose state observer ``j`` measures.

        These are the in-neighbors of ``j`` including ``j`` itself when
        its self-weight is nonzero: exactly the support of row ``j``.
        """
        if not 1 <= j <= self.n:
            raise ValueError(f"agent {j} outside 1..{self.n}")
        return tuple(i + 1 for i in range(self.n) if abs(self.A[j - 1, i]) > tol)

    def output_matrix(self, j: int) -> np.ndarray:
        """Rows of the identity selecting the states observed by ``j``."""
        idx = [i - 1 for i in self.observed_set(j)]
        C = np.zeros((len(idx), self.n))
        C[np.arange(len(idx)), idx] = 1.0
        return C

    def outputs(self, states: np.ndarray, j: int) -> np.ndarray:
        """Measurement sequence of observer ``j`` along a state trajectory."""
        idx = [i - 1 for i in self.observed_set(j)]
        return np.atleast_2d(states)[:, idx]


def input_matrix(n: int, agents) -> np.ndarray:
    """Canonical input matrix ``B_K`` for a set of agents (1-based)."""
    agents = list(agents)
    B = np.zeros((n, len(agents)))
    for col, a in enumerate(agents):
        if not 1 <= a <= n:
            raise ValueError(f"agent {a} outside 1..{n}")
        B[a - 1, col] = 1.0
    return B


def _wielandt_primitive(A: np.ndarray, tol: float = 1e-12) -> bool:
    """Primitivity via boolean powers up to the Wielandt exponent."""
    n = A.shape[0]
    exponent = n * n - 2 * n + 2
    M = (np.abs(A) > tol).astype(np.uint8)
    result = np.eye(n, dtype=np.uint8)
    base = M
    e = exponent
    while e:
        if e & 1:
            result = ((result.astype(np.int64) @ base) > 0).astype(np.uint8)
        base = ((base.astype(np.int64) @ base) > 0).astype(np.uint8)
        e >>= 1
    return bool(np.all(result))


def validate(A, row_tol: float = 1e-10) -> ConsensusMatrix:
    """Check the consensus-matrix properties and wrap the matrix.

    Raises
    ------
    ConsensusError
        Naming the violated property: shape, negativity, row sums,
        reducibility, or imprimitivity.
    """
    A = as_matrix(A, "consensus matrix")
    n, m = A.shape
    if n != m:
        raise ConsensusError(f"matrix is not square: {n}x{m}")
    if n == 0:
        raise ConsensusError("matrix is empty")
    neg = np.argwhere(A < 0)
    if neg.size:
        i, j = neg[0]
        raise ConsensusError(f"negative entry at row {i + 1}, column {j + 1}")
    row_err = np.abs(A.sum(axis=1) - 1.0)
    if np.max(row_err) > row_tol:
        bad = int(np.argmax(row_err)) + 1
        raise ConsensusError(
            f"row {bad} sums to {A[bad - 1].sum():.12f}, not 1")
    G = graphmod.from_matrix(A)
    if not graphmod.is_strongly_connected(G):
        raise ConsensusError("matrix is reducible: graph not strongly connected")
    if not _wielandt_primitive(A):
        raise ConsensusError("matrix is imprimitive: some boolean power "
                             "never becomes entrywise positive")
    pi = left_fixed_vector(A)
    return ConsensusMatrix(A=A.copy(), pi=pi, graph=G)


@dataclass(frozen=True)
class Attack:
    """Additive input model for one misbehaving agent.

    ``kind`` is one of ``constant``, ``exponential``, ``state_feedback``,
    ``sequence``, ``initial_offset``.
    """

    agent: int
    kind: str
    value: float = 0.0
    rate: float = 0.0
    row: np.ndarray | None = None
    offset: float = 0.0
    values: np.ndarray | None = None

    @classmethod
    def constant(cls, agent: int, c: float) -> "Attack":
        return cls(agent=agent, kind="constant", value=float(c))

    @classmethod
    def exponential(cls, agent: int, z: float, u0: float) -> "Attack":
        if not 0.0 < abs(z) < 1.0:
            raise ValueError("exponential attack requires 0 < |z| < 1")
        return cls(agent=agent, kind="exponential", rate=float(z), value=float(u0))

    @classmethod
    def state_feedback(cls, agent: int, row, offset: float = 0.0) -> "Attack":
        r = as_vector(row, "feedback row")
        r.setflags(write=False)
        return cls(agent=agent, kind="state_feedback", row=r, offset=float(offset))

    @classmethod
    def sequence(cls, agent: int, values) -> "Attack":
        v = as_vector(values, "input sequence")
        v.setflags(write=False)
        return cls(agent=agent, kind="sequence", values=v)

    @classmethod
    def initial_offset(cls, agent: int, c: float) -> "Attack":
        return cls(agent=agent, kind="initial_offset", value=float(c))

    def input_at(self, t: int, x: np.ndarray) -> float:
        if self.kind == "constant":
            return self.value
        if self.kind == "exponential":
            return self.value * self.rate ** t
        if self.kind == "state_feedback":
            return float(self.row @ x) + self.offset
        if self.kind == "sequence":
            return float(self.values[t]) if t < len(self.values) else 0.0
        if self.kind == "initial_offset":
            return 0.0
        raise ValueError(f"unknown attack kind {self.kind!r}")


@dataclass(frozen=True)
class Trajectory:
    """States, applied inputs, and input agents of one simulation run.

    ``states`` has shape (T+1, n); ``inputs`` has shape (T, m) aligned
    with ``input_agents`` so that the recursion
    ``x(t+1) = A x(t) + B_K u_K(t)`` holds exactly.
    """

    states: np.ndarray
    input_agents: tuple
    inputs: np.ndarray

    @property
    def horizon(self) -> int:
        return self.states.shape[0] - 1


def simulate(net: ConsensusMatrix, x0, attacks=(), T: int = 100) -> Trajectory:
    """Run ``x(t+1) = A x(t) + B_K u_K(t)`` for T steps.

    State-feedback attacks are evaluated on the current full network
    state; initial-offset attacks perturb ``x(0)`` only.
    """
    if T < 1:
        raise ValueError("horizon must be at least 1")
    A = net.A
    n = net.n
    x = as_vector(x0, "initial state").copy()
    if x.size != n:
        raise ValueError("initial state dimension mismatch")
    attacks = list(attacks)
    for atk in attacks:
        if not 1 <= atk.agent <= n:
            raise ValueError(f"attack agent {atk.agent} outside 1..{n}")
        if atk.kind == "initial_offset":
            x[atk.agent - 1] += atk.value
    active = [a for a in attacks if a.kind != "initial_offset"]
    agents = tuple(sorted({a.agent for a in active}))
    col = {a: k for k, a in enumerate(agents)}
    states = np.zeros((T + 1, n))
    inputs = np.zeros((T, len(agents)))
    states[0] = x
    for t in range(T):
        u = np.zeros(len(agents))
        for atk in active:
            u[col[atk.agent]] += atk.input_at(t, states[t])
        nxt = A @ states[t]
        for a, k in col.items():
            nxt[a - 1] += u[k]
        states[t + 1] = nxt
        inputs[t] = u
    states.setflags(write=False)
    inputs.setflags(write=False)
    return Trajectory(states=states, input_agents=agents, inputs=inputs)


def consensus_value(net: ConsensusMatrix, x0) -> float:
    """Limit value of the unforced iteration from ``x0``."""
    return float(net.pi @ as_vector(x0))


def principal_submatrix_spectral_radius(net: ConsensusMatrix, J) -> float:
    """Spectral radius of A restricted to a proper subset of agents.

    Always below 1 for a consensus matrix: every quasi-stochastic
    principal submatrix is Schur stable.
    """
    J = sorted(set(J))
    if not J or len(J) >= net.n:
        raise ValueError("J must be a nonempty proper subset of agents")
    idx = [j - 1 for j in J]
    sub = net.A[np.ix_(idx, idx)]
    return float(np.max(np.abs(np.linalg.eigvals(sub))))


def stubborn_agent_gain(net: ConsensusMatrix, i: int) -> np.ndarray:
    """Steady-state gain from a stubborn agent to the rest of the network.

    With agent ``i`` holding a constant value, the others settle at
    ``(I - Q)^{-1} R`` times that value; for a consensus matrix this
    gain is the all-ones vector, which is verified before returning.
    """
    if not 1 <= i <= net.n:
        raise ValueError(f"agent {i} outside 1..{net.n}")
    others = [k for k in range(net.n) if k != i - 1]
    Q = net.A[np.ix_(others, others)]
    R = net.A[np.ix_(others, [i - 1])]
    gain = np.linalg.solve(np.eye(len(others)) - Q, R).ravel()
    if np.max(np.abs(gain - 1.0)) > 1e-9:
        raise ConsensusError("stubborn-agent gain deviates from all-ones; "
                             "matrix is not a valid consensus matrix")
    return gain


def attack_effect_constant(net: ConsensusMatrix, K, c) -> np.ndarray:
    """Offset of the final consensus state caused by initial-value tampering.

    Agents ``K`` shifting their initial states by ``c`` move the limit
    by ``ones * (pi @ B_K @ c)``.
    """
    K = list(K)
    c = np.broadcast_to(np.asarray(c, dtype=float).ravel(), (len(K),))
    piK = np.array([net.pi[a - 1] for a in K])
    return np.ones(net.n) * float(piK @ c)


def exponential_input_bound(net: ConsensusMatrix, K, z: float, u0) -> np.ndarray:
    """Componentwise bound on the state offset of a decaying attack.

    For inputs dominated by ``z**t * u0`` (entrywise, ``0 < z < 1`` and
    ``u0 >= 0``) the accumulated effect on the state is bounded by
    ``ones * (pi @ B_K @ u0) / (1 - z)``.
    """
    if not 0.0 < z < 1.0:
        raise ValueError("decay factor must satisfy 0 < z < 1")
    K = list(K)
    u0 = np.broadcast_to(np.asarray(u0, dtype=float).ravel(), (len(K),))
    if np.min(u0) < 0:
        raise ValueError("u0 must be entrywise nonnegative")
    piK = np.array([net.pi[a - 1] for a in K])
    return np.ones(net.n) * float(piK @ u0) / (1.0 - z)


def unobservable_subspace(net: ConsensusMatrix, j: int):
    """Kernel of the observability map of ``(A, C_j)``."""
    from .numerics import kernel

    C = net.output_matrix(j)
    blocks = [C]
    power = np.eye(net.n)
    for _ in range(net.n - 1):
        power = power @ net.A
        blocks.append(C @ power)
    return kernel(np.vstack(blocks))


def unobservable_offset_is_neutral(net: ConsensusMatrix, j: int, v,
                                   T: int = 400, tol: float = 1e-8) -> bool:
    """Check that an unobservable initial-state offset leaves the limit alone.

    Requires ``v`` to lie in the unobservable subspace of ``(A, C_j)``;
    then ``pi @ v`` must vanish and trajectories from ``x0`` and
    ``x0 + v`` share the same consensus value.
    """
    v = as_vector(v)
    unobs = unobservable_subspace(net, j)
    if not unobs.contains(v):
        raise ValueError("offset is observable from the chosen agent")
    if abs(float(net.pi @ v)) > tol:
        return False
    rng = np.random.default_rng(0)
    x0 = rng.standard_normal(net.n)
    base = simulate(net, x0, (), T).states[-1]
    moved = simulate(net, x0 + v, (), T).states[-1]
    return bool(np.max(np.abs(moved - base)) < tol * max(1.0, np.max(np.abs(base))))


def random_consensus_matrix(n: int, rng: np.random.Generator,
                            extra_edges: int = 0,
                            min_connectivity: int | None = None,
                            max_tries: int = 200) -> ConsensusMatrix:
    """Random consensus matrix on n agents.

    Starts from a bidirectional ring plus ``extra_edges`` random
    ordered pairs, always with positive self-weights, then draws weights
    uniform on [0.1, 1] and renormalizes rows.  Optionally resamples
    until the digraph reaches ``min_connectivity``.
    """
    for _ in range(max_tries):
        mask = np.eye(n, dtype=bool)
        for i in range(n):
            mask[i, (i + 1) % n] = True
            mask[(i + 1) % n, i] = True
        for _ in range(extra_edges):
            i, j = rng.integers(0, n, size=2)
            if i != j:
                mask[i, j] = True
        A = np.where(mask, rng.uniform(0.1, 1.0, size=(n, n)), 0.0)
        A /= A.sum(axis=1, keepdims=True)
        net = validate(A)
        if (min_connectivity is None
                or graphmod.vertex_connectivity(net.graph) >= min_connectivity):
            return net
    raise RuntimeError("failed to sample a consensus matrix with the "
                       "requested connectivity")
