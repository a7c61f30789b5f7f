"""Geometric fault detection machinery.

Maximal output-nulling controlled invariants, minimal conditioned
invariants, the unobservability subspace they span, the solvability test
for isolating one input against the others, and dead-beat residual
generator synthesis.  A residual generator is a filter driven by the
measurements only,

    w(t+1) = F w(t) + E y(t),      r(t) = M w(t) + H y(t),

whose residual is identically zero after a finite horizon whenever its
target input stays zero, for every initial condition and every input of
the decoupled set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import numerics
from .numerics import (Subspace, apply_map, as_matrix, image, kernel,
                       preimage, subspace_equal, subspace_intersect,
                       subspace_sum, zero_subspace)


def max_controlled_invariant(A, B, C, tol: float | None = None) -> Subspace:
    """Largest subspace V in Ker C with ``A V <= V + Im B``.

    Fixpoint of ``V_0 = Ker C``, ``V_{k+1} = Ker C ^ A^{-1}(V_k + Im B)``;
    reached in at most n steps.
    """
    A = as_matrix(A)
    n = A.shape[0]
    B = _input_or_empty(B, n)
    C = _output_or_empty(C, n)
    kerC = kernel(C, tol) if C.shape[0] else numerics.full_subspace(n, tol)
    imB = image(B, tol)
    V = kerC
    for _ in range(n + 1):
        nxt = subspace_intersect(kerC, preimage(A, subspace_sum(V, imB, tol), tol), tol)
        if nxt.dim == V.dim and subspace_equal(nxt, V):
            return nxt
        V = nxt
    return V


def min_conditioned_invariant(A, B, C, tol: float | None = None) -> Subspace:
    """Smallest subspace S containing Im B with ``A(S ^ Ker C) <= S``.

    Fixpoint of ``S_0 = Im B``, ``S_{k+1} = Im B + A (S_k ^ Ker C)``.
    """
    A = as_matrix(A)
    n = A.shape[0]
    B = _input_or_empty(B, n)
    C = _output_or_empty(C, n)
    kerC = kernel(C, tol) if C.shape[0] else numerics.full_subspace(n, tol)
    imB = image(B, tol)
    S = imB
    for _ in range(n + 1):
        nxt = subspace_sum(imB, apply_map(A, subspace_intersect(S, kerC, tol), tol), tol)
        if nxt.dim == S.dim and subspace_equal(nxt, S):
            return nxt
        S = nxt
    return S


def unobservability_subspace(A, B_others, C, tol: float | None = None) -> Subspace:
    """Sum of the two invariant-subspace fixpoints for the decoupled inputs.

    This is the carrier of everything a residual cannot be made to see:
    a target input is isolable against ``B_others`` exactly when its
    image meets this subspace trivially.
    """
    V = max_controlled_invariant(A, B_others, C, tol)
    S = min_conditioned_invariant(A, B_others, C, tol)
    return subspace_sum(V, S, tol)


def fdi_solvable(A, B_all, C, i: int, tol: float | None = None) -> bool:
    """Can input ``i`` of the list be isolated against all the others?

    True iff ``Im(B_i)`` intersects the unobservability subspace of the
    remaining inputs trivially.
    """
    A = as_matrix(A)
    mats = [_input_or_empty(b, A.shape[0]) for b in B_all]
    if not 0 <= i < len(mats):
        raise ValueError("target index out of range")
    others = [b for k, b in enumerate(mats) if k != i]
    B_others = np.hstack(others) if others else np.zeros((A.shape[0], 0))
    S_M = unobservability_subspace(A, B_others, C, tol)
    inter = subspace_intersect(image(mats[i], tol), S_M, tol)
    return inter.dim == 0


def _input_or_empty(B, n: int) -> np.ndarray:
    B = np.asarray(B, dtype=float)
    if B.size == 0:
        return np.zeros((n, 0))
    B = as_matrix(B)
    if B.shape[0] != n:
        raise ValueError("input matrix rows do not match the state dimension")
    return B


def _output_or_empty(C, n: int) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    if C.size == 0:
        return np.zeros((0, n))
    C = as_matrix(C)
    if C.shape[1] != n:
        raise ValueError("output matrix columns do not match the state dimension")
    return C


@dataclass(frozen=True)
class ResidualGenerator:
    """Dead-beat residual filter (F, E, M, H) driven by measurements only.

    ``F`` is nilpotent, so the residual converges exactly within
    ``horizon`` steps.  ``target`` and ``decoupled`` record the input
    labels the filter must respond to and must ignore.
    """

    F: np.ndarray
    E: np.ndarray
    M: np.ndarray
    H: np.ndarray
    horizon: int
    target: tuple = ()
    decoupled: tuple = ()

    def __post_init__(self):
        for mat in (self.F, self.E, self.M, self.H):
            mat.setflags(write=False)

    @property
    def state_dim(self) -> int:
        return self.F.shape[0]

    @property
    def output_dim(self) -> int:
        return self.M.shape[0]

    def to_json(self) -> str:
        payload = {
            "F": self.F.tolist(), "E": self.E.tolist(),
            "M": self.M.tolist(), "H": self.H.tolist(),
            "horizon": self.horizon,
            "target": list(self.target), "decoupled": list(self.decoupled),
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ResidualGenerator":
        d = json.loads(text)
        return cls(F=np.array(d["F"], dtype=float),
                   E=np.array(d["E"], dtype=float),
                   M=np.array(d["M"], dtype=float),
                   H=np.array(d["H"], dtype=float),
                   horizon=int(d["horizon"]),
                   target=tuple(d["target"]), decoupled=tuple(d["decoupled"]))


@dataclass(frozen=True)
class SynthesisReport:
    """Outcome of a residual-generator synthesis.

    Carries the two invariant subspaces and their sum for the decoupled
    input set, the solvability verdict, and the filter itself (None when
    the target cannot be isolated).
    """

    V_star: Subspace
    S_star: Subspace
    S_M: Subspace
    solvable: bool
    generator: ResidualGenerator | None


def run_residual(gen: ResidualGenerator, ys) -> np.ndarray:
    """Exact filter recursion from ``w(0) = 0`` along an output sequence."""
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    T = ys.shape[0]
    w = np.zeros(gen.state_dim)
    residuals = np.zeros((T, gen.output_dim))
    for t in range(T):
        residuals[t] = gen.M @ w + gen.H @ ys[t]
        w = gen.F @ w + gen.E @ ys[t]
    return residuals


def _conditioned_closure(A, S: Subspace, kerC: Subspace,
                         tol: float | None = None) -> Subspace:
    """Smallest conditioned-invariant subspace containing ``S``."""
    n = A.shape[0]
    current = S
    for _ in range(n + 1):
        nxt = subspace_sum(current,
                           apply_map(A, subspace_intersect(current, kerC, tol), tol),
                           tol)
        if nxt.dim == current.dim:
            return nxt
        current = nxt
    return current


def _invariant_injection(A, C, S: Subspace) -> np.ndarray:
    """Output injection G with ``(A + G C) S <= S``.

    Exists because ``S`` is conditioned invariant; solved columnwise by
    least squares on the complement of ``S``.
    """
    n = A.shape[0]
    if S.dim == 0 or S.dim == n:
        return np.zeros((n, C.shape[0]))
    Vs = S.basis
    P_perp = S.perp_projector()
    Y = C @ Vs
    Z = -P_perp @ A @ Vs
    G, *_ = np.linalg.lstsq(Y.T, Z.T, rcond=None)
    return G.T


def _unobservable_subspace_pair(Cbar, Abar, tol: float | None = None) -> Subspace:
    """Kernel of the observability map of the pair (Cbar, Abar)."""
    n = Abar.shape[0]
    if Cbar.shape[0] == 0:
        return numerics.full_subspace(n, tol)
    blocks = [Cbar]
    power = np.eye(n)
    for _ in range(n - 1):
        power = power @ Abar
        blocks.append(Cbar @ power)
    return kernel(np.vstack(blocks), tol)


def _output_annihilator(C, S: Subspace, tol: float | None = None) -> np.ndarray:
    """Orthonormal rows spanning {h : h C S = 0}."""
    CS = C @ S.basis if S.dim else np.zeros((C.shape[0], 0))
    ann = kernel(CS.T, tol)
    return ann.basis.T


def _nilpotency_defect(F: np.ndarray) -> float:
    d = F.shape[0]
    defect = np.linalg.norm(np.linalg.matrix_power(F, d))
    return defect / max(1.0, np.linalg.norm(F)) ** d


def _deadbeat_injection(Abar, Cbar, seed: int = 0,
                        tries: int = 25) -> np.ndarray:
    """Gain making ``Abar + G Cbar`` nilpotent, for an observable pair.

    When the factor output has full column rank the pseudoinverse gain
    cancels the dynamics outright (one-step convergence).  Otherwise the
    pair is reduced to a single synthetic output through a random
    combination and the dead-beat variant of the classic single-output
    formula applies; among the exact draws the smallest gain is kept to
    avoid needlessly amplified transients.
    """
    d = Abar.shape[0]
    if d == 0:
        return np.zeros((0, Cbar.shape[0]))
    direct = -Abar @ np.linalg.pinv(Cbar)
    if _nilpotency_defect(Abar + direct @ Cbar) < 1e-12:
        return direct
    rng = np.random.default_rng(seed)
    best, best_gain = None, np.inf
    for _ in range(tries):
        G0 = 0.1 * rng.standard_normal((d, Cbar.shape[0]))
        A1 = Abar + G0 @ Cbar
        w = rng.standard_normal(Cbar.shape[0])
        c = w @ Cbar
        obs = np.vstack([c @ np.linalg.matrix_power(A1, k) for k in range(d)])
        if numerics.rank(obs) < d:
            continue
        rhs = np.zeros(d)
        rhs[-1] = 1.0
        q = np.linalg.solve(obs, rhs)
        g1 = -np.linalg.matrix_power(A1, d) @ q
        G = G0 + np.outer(g1, w)
        if (_nilpotency_defect(Abar + G @ Cbar) < 1e-12
                and np.linalg.norm(G) < best_gain):
            best, best_gain = G, np.linalg.norm(G)
    if best is None:
        raise RuntimeError("failed to find a dead-beat injection; "
                           "factor pair appears unobservable")
    return best


def _nilpotency_index(F: np.ndarray, tol: float = 1e-8) -> int:
    d = F.shape[0]
    power = np.eye(d)
    for h in range(d + 1):
        if np.linalg.norm(power) <= tol:
            return h
        power = power @ F
    return d


def synthesize_residual_generator(A, B_target, B_decouple, C,
                                  tol: float | None = None,
                                  seed: int = 0) -> SynthesisReport:
    """Design a dead-beat filter isolating the target inputs.

    The decoupled inputs' unobservability subspace is made invariant by
    output injection, the dynamics are factored over it, and the factor
    observer is assigned a nilpotent spectrum; the residual is the
    factor innovation.  When the target image meets the unobservability
    subspace the problem is unsolvable and the report carries no
    generator.
    """
    A = as_matrix(A)
    n = A.shape[0]
    Bt = _input_or_empty(B_target, n)
    Bd = _input_or_empty(B_decouple, n)
    C = _output_or_empty(C, n)
    V_star = max_controlled_invariant(A, Bd, C, tol)
    S_star = min_conditioned_invariant(A, Bd, C, tol)
    S_M = subspace_sum(V_star, S_star, tol)
    kerC = kernel(C, tol)

    S_hat = _conditioned_closure(A, S_M, kerC, tol)
    G = _invariant_injection(A, C, S_hat)
    # Enlarge to the unobservable subspace of the injected pair until the
    # factor observer is observable; each enlargement stays invariant.
    for _ in range(n + 1):
        H0 = _output_annihilator(C, S_hat, tol)
        N = _unobservable_subspace_pair(H0 @ C, A + G @ C, tol)
        merged = subspace_sum(S_hat, N, tol)
        if merged.dim == S_hat.dim:
            break
        S_hat = merged

    solvable = subspace_intersect(image(Bt, tol), S_hat, tol).dim == 0
    if Bt.shape[1] == 0:
        solvable = S_hat.dim < n and H0.shape[0] > 0
    report_stub = SynthesisReport(V_star=V_star, S_star=S_star, S_M=S_M,
                                  solvable=False, generator=None)
    if not solvable or H0.shape[0] == 0 or S_hat.dim == n:
        return report_stub

    P = kernel(S_hat.basis.T, tol).basis  # orthonormal basis of the complement
    Abar = P.T @ (A + G @ C) @ P
    Cbar = H0 @ C @ P
    Gbar = _deadbeat_injection(Abar, Cbar, seed=seed)
    F = Abar + Gbar @ Cbar
    E = -P.T @ G - Gbar @ H0
    M = Cbar
    H = -H0
    horizon = _nilpotency_index(F)
    gen = ResidualGenerator(F=F, E=E, M=M, H=H, horizon=horizon)
    return SynthesisReport(V_star=V_star, S_star=S_star, S_M=S_M,
                           solvable=True, generator=gen)
