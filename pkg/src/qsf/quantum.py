"""Memory states, steady-state operator, complexities and the simulator unitary.

Joint memory/symbol vectors are laid out memory-major: basis index
``j * n_symbols + x`` stands for ``|e_j>|x>``. The blank symbol register
state ``|0>`` is basis index 0 of the symbol register.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .gram import GramMatrix, solve_gram
from .machine import EpsilonMachine, StationaryDistribution, entropy_bits, stationary_distribution

__all__ = [
    "MemoryStateSet",
    "SteadyStateOperator",
    "UnitaryModel",
    "QuantumComplexityReport",
    "VerificationReport",
    "QuantumModel",
    "memory_states",
    "steady_state_operator",
    "quantum_complexity",
    "quantum_topological",
    "renyi_entropy",
    "quantum_report",
    "target_states",
    "build_unitary",
    "verify_unitary",
    "memory_channel",
    "memory_channel_fixed_point",
    "build_quantum_model",
]

RANK_TOL = 1e-10


@dataclass(frozen=True)
class MemoryStateSet:
    """Real memory vectors, one row per causal state."""

    vectors: np.ndarray

    @property
    def rank(self) -> int:
        return self.vectors.shape[1]

    @property
    def n_states(self) -> int:
        return self.vectors.shape[0]

    def gram(self) -> np.ndarray:
        return self.vectors @ self.vectors.T

    def rotated(self, R: np.ndarray) -> "MemoryStateSet":
        """Same states expressed in a rotated working basis."""
        return MemoryStateSet(vectors=self.vectors @ np.asarray(R).T)


@dataclass(frozen=True)
class SteadyStateOperator:
    phi: np.ndarray
    eigenvalues: np.ndarray

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.phi, dtype=dtype)


@dataclass(frozen=True, eq=False)
class UnitaryModel:
    U: np.ndarray
    memory_dim: int
    n_symbols: int
    machine: EpsilonMachine
    states: MemoryStateSet

    @property
    def dims(self) -> tuple:
        return (self.memory_dim, self.n_symbols)

    def kraus(self) -> np.ndarray:
        """``K[x] = (I x <x|) U (I x |0>)``, shape ``(n_symbols, r, r)``."""
        r, k = self.dims
        return self.U.reshape(r, k, r, k)[:, :, :, 0].transpose(1, 0, 2).copy()

    @cached_property
    def blank_rows(self) -> list:
        """Rows of ``U`` on blank-register inputs as nested lists, ``[x][j]``."""
        r, k = self.dims
        blank = self.U[:, ::k]
        return [[blank[j * k + x].tolist() for j in range(r)] for x in range(k)]

    def apply(self, memory: np.ndarray) -> np.ndarray:
        """``U (memory x |0>)`` reshaped to ``(r, n_symbols)``."""
        r, k = self.dims
        return (self.U[:, ::k] @ memory).reshape(r, k)


@dataclass(frozen=True)
class QuantumComplexityReport:
    c_q: float
    c_q0: float
    renyi: dict


@dataclass(frozen=True)
class VerificationReport:
    image_residual: float
    unitarity_defect: float
    gram_defect: float
    tol: float

    @property
    def passed(self) -> bool:
        return max(self.image_residual, self.unitarity_defect, self.gram_defect) < self.tol


def memory_states(g: GramMatrix | np.ndarray, rank_tol: float = RANK_TOL) -> MemoryStateSet:
    """Real vectors reproducing the overlap matrix ``g``.

    Spectral factorization ``g = V diag(w) V^T`` with eigenvalues in descending
    order; eigenvalues at or below ``rank_tol`` are dropped and each retained
    eigenvector is signed so its largest-magnitude entry is positive.
    """
    c = np.asarray(g, dtype=float)
    w, V = np.linalg.eigh(c)
    if w.min() < -1e-8:
        raise ValueError(f"overlap matrix is not positive semidefinite (eigenvalue {w.min():.3g})")
    order = np.argsort(w)[::-1]
    w, V = w[order], V[:, order]
    keep = w > rank_tol
    w, V = w[keep], V[:, keep]
    for col in range(V.shape[1]):
        if V[np.argmax(np.abs(V[:, col])), col] < 0:
            V[:, col] = -V[:, col]
    vectors = V * np.sqrt(w)[None, :]
    # exact unit norm; the truncated spectrum only perturbs it at rank_tol level
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
    return MemoryStateSet(vectors=vectors)


def steady_state_operator(s: MemoryStateSet, pi) -> SteadyStateOperator:
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (s.n_states,):
        raise ValueError("distribution length does not match the number of memory states")
    phi = (s.vectors.T * pi[None, :]) @ s.vectors
    phi = 0.5 * (phi + phi.T)
    eig = np.sort(np.linalg.eigvalsh(phi))[::-1]
    return SteadyStateOperator(phi=phi, eigenvalues=eig)


def _spectrum(phi) -> np.ndarray:
    if isinstance(phi, SteadyStateOperator):
        return phi.eigenvalues
    return np.sort(np.linalg.eigvalsh(np.asarray(phi, dtype=float)))[::-1]


def quantum_complexity(phi) -> float:
    """Von Neumann entropy of the steady-state operator, in bits."""
    return entropy_bits(np.clip(_spectrum(phi), 0.0, None))


def quantum_topological(phi, rank_tol: float = RANK_TOL) -> float:
    """``log2`` of the numerical rank of the steady-state operator."""
    rank = int(np.sum(_spectrum(phi) > rank_tol))
    return math.log2(max(rank, 1))


def renyi_entropy(phi, alpha: float, rank_tol: float = RANK_TOL) -> float:
    """Renyi entropy of order ``alpha`` in bits; orders 0, 1 and inf are the limits."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if alpha == 0:
        return quantum_topological(phi, rank_tol)
    if alpha == 1:
        return quantum_complexity(phi)
    lam = np.clip(_spectrum(phi), 0.0, None)
    lam = lam[lam > 0]
    if math.isinf(alpha):
        return float(max(0.0, -math.log2(lam.max())))
    return float(max(0.0, math.log2(np.sum(lam**alpha)) / (1.0 - alpha)))


def quantum_report(phi, alphas=(0, 0.5, 1, 2, math.inf)) -> QuantumComplexityReport:
    return QuantumComplexityReport(
        c_q=quantum_complexity(phi),
        c_q0=quantum_topological(phi),
        renyi={a: renyi_entropy(phi, a) for a in alphas},
    )


def target_states(m: EpsilonMachine, s: MemoryStateSet) -> np.ndarray:
    """Columns ``|1_i> = sum_x sqrt(P(x|i)) |sigma_{lambda(i,x)}>|x>``, flattened."""
    r, k = s.rank, m.n_symbols
    T = np.zeros((r * k, m.n_states))
    for i in range(m.n_states):
        out = np.zeros((r, k))
        for x in range(k):
            if m.succ[i, x] >= 0:
                out[:, x] = math.sqrt(m.emit[i, x]) * s.vectors[m.succ[i, x]]
        T[:, i] = out.ravel()
    return T


def _complete_orthonormal(Q: np.ndarray, fixed: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Fill the free columns of ``Q`` by modified Gram-Schmidt on canonical vectors."""
    dim = Q.shape[0]
    basis = [Q[:, j] for j in np.flatnonzero(fixed)]
    free = [j for j in range(dim) if not fixed[j]]
    slot = iter(free)
    for cand in range(dim):
        if len(basis) == dim:
            break
        v = np.zeros(dim)
        v[cand] = 1.0
        for _ in range(2):
            for b in basis:
                v -= (b @ v) * b
        norm = np.linalg.norm(v)
        if norm < tol:
            continue
        v /= norm
        basis.append(v)
        Q[:, next(slot)] = v
    return Q


def build_unitary(m: EpsilonMachine, s: MemoryStateSet) -> UnitaryModel:
    """Real orthogonal ``U`` with ``U |sigma_i>|0> = |1_i>`` for every state.

    Columns for inputs ``|e_j>|0>`` follow from the memory states by a least
    squares solve; the remaining columns are completed deterministically.
    """
    r, k = s.rank, m.n_symbols
    dim = r * k
    S = s.vectors.T  # (r, n)
    T = target_states(m, s)  # (r*k, n)
    W = T @ np.linalg.pinv(S)  # images of |e_j>|0>
    defect = max(
        float(np.max(np.abs(W.T @ W - np.eye(r)))),
        float(np.max(np.abs(W @ S - T))),
    )
    if defect > 1e-8:
        raise ValueError(
            f"determined columns are not orthonormal (defect {defect:.3g}); "
            "memory states do not match this machine"
        )
    U = np.zeros((dim, dim))
    fixed = np.zeros(dim, dtype=bool)
    blank_cols = np.arange(r) * k
    U[:, blank_cols] = W
    fixed[blank_cols] = True
    U = _complete_orthonormal(U, fixed)
    U.setflags(write=False)
    return UnitaryModel(U=U, memory_dim=r, n_symbols=k, machine=m, states=s)


def verify_unitary(
    m: EpsilonMachine, s: MemoryStateSet, u: UnitaryModel | np.ndarray, tol: float = 1e-10
) -> VerificationReport:
    """Residuals of unitarity, the one-step map and the overlap condition."""
    U = u.U if isinstance(u, UnitaryModel) else np.asarray(u, dtype=float)
    k = m.n_symbols
    T = target_states(m, s)
    images = U[:, ::k] @ s.vectors.T
    image = float(np.max(np.linalg.norm(images - T, axis=0)))
    unitarity = float(np.max(np.abs(U.T @ U - np.eye(U.shape[0]))))
    gram_defect = float(np.max(np.abs(T.T @ T - s.gram())))
    return VerificationReport(image_residual=image, unitarity_defect=unitarity, gram_defect=gram_defect, tol=tol)


def memory_channel(u: UnitaryModel, rho) -> np.ndarray:
    """Memory channel: ``tr_S[U (rho x |0><0|) U^T]``."""
    K = u.kraus()
    rho = np.asarray(rho, dtype=float)
    return np.einsum("xab,bc,xdc->ad", K, rho, K)


def memory_channel_fixed_point(u: UnitaryModel, phi) -> float:
    """``max |Lambda(phi) - phi|``."""
    phi = np.asarray(phi, dtype=float)
    return float(np.max(np.abs(memory_channel(u, phi) - phi)))


@dataclass(frozen=True, eq=False)
class QuantumModel:
    """Everything built for one machine: overlaps, states, operator and unitary."""

    machine: EpsilonMachine
    pi: StationaryDistribution
    gram: GramMatrix
    states: MemoryStateSet
    phi: SteadyStateOperator
    unitary: UnitaryModel
    complexity: QuantumComplexityReport = field(repr=False)

    @property
    def c_q(self) -> float:
        return self.complexity.c_q

    @property
    def c_q0(self) -> float:
        return self.complexity.c_q0


def build_quantum_model(m: EpsilonMachine, tol: float = 1e-12, rank_tol: float = RANK_TOL) -> QuantumModel:
    pi = stationary_distribution(m)
    gram = solve_gram(m, tol=tol)
    states = memory_states(gram, rank_tol=rank_tol)
    phi = steady_state_operator(states, pi.pi)
    return QuantumModel(
        machine=m,
        pi=pi,
        gram=gram,
        states=states,
        phi=phi,
        unitary=build_unitary(m, states),
        complexity=quantum_report(phi),
    )
