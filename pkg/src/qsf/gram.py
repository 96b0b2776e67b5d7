"""Memory-state overlaps and the pair-space transfer matrix.

The overlaps ``c_ij = <sigma_i|sigma_j>`` of a unitary simulator's memory
states are the unique solution of

    c_ij = sum_x sqrt(P(x|i) P(x|j)) c_{lambda(i,x), lambda(j,x)},   c_ii = 1.

Both sides are linear in ``c``; the coefficients live in the pair transfer
matrix ``zeta`` indexed by ordered state pairs ``(i, j) -> i * n + j``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ConvergenceError, DegenerateMachineError
from .machine import EpsilonMachine, entropy_bits

__all__ = [
    "GramMatrix",
    "PairTransitionMatrix",
    "EtaOverlapTable",
    "pair_matrix",
    "solve_gram",
    "gram_residual",
    "gram_series",
    "spectral_radius",
    "eta_overlaps",
    "eta_overlap_sequence",
    "mixture_entropy",
    "effective_cryptic_order",
]


@dataclass(frozen=True)
class GramMatrix:
    c: np.ndarray
    residual: float = 0.0

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.c, dtype=dtype)

    @property
    def n(self) -> int:
        return self.c.shape[0]


@dataclass(frozen=True)
class PairTransitionMatrix:
    zeta: np.ndarray
    n_states: int

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.zeta, dtype=dtype)

    def index(self, i: int, j: int) -> int:
        return i * self.n_states + j

    @property
    def diagonal_pairs(self) -> np.ndarray:
        n = self.n_states
        return np.arange(n) * (n + 1)

    @property
    def offdiagonal_pairs(self) -> np.ndarray:
        n = self.n_states
        return np.array([i * n + j for i in range(n) for j in range(n) if i != j], dtype=np.int64)

    def offdiagonal_block(self) -> np.ndarray:
        od = self.offdiagonal_pairs
        return self.zeta[np.ix_(od, od)]

    def power_row_sums(self, L: int) -> np.ndarray:
        """Row sums of ``zeta**L`` as a flat vector over pairs."""
        v = np.ones(self.zeta.shape[0])
        for _ in range(L):
            v = self.zeta @ v
        return v


@dataclass(frozen=True)
class EtaOverlapTable:
    L: int
    overlaps: np.ndarray
    tilde_cq: float


def pair_matrix(m: EpsilonMachine) -> PairTransitionMatrix:
    n, k = m.n_states, m.n_symbols
    zeta = np.zeros((n * n, n * n))
    for i in range(n):
        for j in range(n):
            for x in range(k):
                w = m.emit[i, x] * m.emit[j, x]
                if w > 0:
                    zeta[i * n + j, m.succ[i, x] * n + m.succ[j, x]] += np.sqrt(w)
    return PairTransitionMatrix(zeta=zeta, n_states=n)


def gram_residual(m: EpsilonMachine, c) -> float:
    """Largest violation of the overlap self-consistency equations."""
    c = np.asarray(c, dtype=float)
    z = pair_matrix(m)
    return float(np.max(np.abs(c.ravel() - z.zeta @ c.ravel())))


def solve_gram(m: EpsilonMachine, tol: float = 1e-12, max_iter: int = 1_000_000) -> GramMatrix:
    """Solve the overlap self-consistency equations.

    The diagonal is pinned to one, leaving the linear system
    ``(I - zeta_od) c_od = b`` on off-diagonal pairs, where ``b`` gathers the
    transitions that merge both states into a common successor. A direct solve
    is followed by iterative refinement; if that does not reach ``tol`` a plain
    fixed-point iteration from ``c_od = 0`` is used instead.
    """
    n = m.n_states
    if n == 1:
        return GramMatrix(c=np.ones((1, 1)))
    z = pair_matrix(m)
    od, dg = z.offdiagonal_pairs, z.diagonal_pairs
    A = np.eye(len(od)) - z.zeta[np.ix_(od, od)]
    b = z.zeta[np.ix_(od, dg)].sum(axis=1)
    if 1.0 / np.linalg.cond(A) < 1e-10:
        raise DegenerateMachineError("non-minimal or degenerate machine: overlap system is singular")

    def assemble(x):
        c = np.ones(n * n)
        c[od] = x
        c = c.reshape(n, n)
        c = 0.5 * (c + c.T)
        np.fill_diagonal(c, 1.0)
        return c

    x = np.linalg.solve(A, b)
    for _ in range(3):
        x = x + np.linalg.solve(A, b - A @ x)
    c = assemble(x)
    residual = gram_residual(m, c)
    if residual >= tol:
        x = np.zeros(len(od))
        zod = z.zeta[np.ix_(od, od)]
        for _ in range(max_iter):
            x_new = zod @ x + b
            done = np.max(np.abs(x_new - x)) < 0.1 * tol
            x = x_new
            if done:
                break
        c = assemble(x)
        residual = gram_residual(m, c)
        if residual >= tol:
            raise ConvergenceError(f"overlap equations did not converge (residual {residual:.3g})")
    off = c[~np.eye(n, dtype=bool)]
    if np.any(off >= 1.0 - tol):
        raise DegenerateMachineError("non-minimal or degenerate machine: two memory states coincide")
    c.setflags(write=False)
    return GramMatrix(c=c, residual=residual)


def gram_series(m: EpsilonMachine, L: int) -> GramMatrix:
    """Truncated overlap series ``sum_{|w| = L} sqrt(P(w|i) P(w|j))``.

    Evaluated as the row sums of ``zeta**L``; it decreases towards the solved
    overlaps as ``L`` grows. ``L = 0`` gives the all-ones matrix.
    """
    z = pair_matrix(m)
    n = m.n_states
    return GramMatrix(c=z.power_row_sums(L).reshape(n, n))


def _perron_root(B: np.ndarray, tol: float, max_iter: int) -> float:
    """Perron root of an irreducible non-negative matrix.

    Power iteration on the primitive shift ``B + I`` from the all-ones vector,
    stopped when the Collatz-Wielandt bounds ``min/max (Bv)_i / v_i`` agree to
    ``tol`` relative.
    """
    v = np.ones(B.shape[0])
    for _ in range(max_iter):
        w = B @ v
        ratio = w / v
        lo, hi = float(ratio.min()), float(ratio.max())
        if hi - lo <= tol * max(hi, 1e-300):
            return 0.5 * (lo + hi)
        v = w + v
        v /= v.max()
    raise ConvergenceError(f"power iteration did not converge in {max_iter} iterations")


def spectral_radius(
    z: PairTransitionMatrix | np.ndarray,
    restrict_offdiag: bool = False,
    tol: float = 1e-10,
    max_iter: int = 100_000,
) -> float:
    """Spectral radius of a non-negative matrix by power iteration.

    The matrix is split into strongly connected components and the largest
    Perron root among the irreducible diagonal blocks is returned; this keeps
    convergence geometric for reducible matrices.
    """
    if isinstance(z, PairTransitionMatrix):
        A = z.offdiagonal_block() if restrict_offdiag else z.zeta
    else:
        A = np.asarray(z, dtype=float)
    if A.size == 0:
        return 0.0
    n_comp, labels = connected_components(csr_matrix(A > 0), directed=True, connection="strong")
    rho = 0.0
    for comp in range(n_comp):
        idx = np.flatnonzero(labels == comp)
        B = A[np.ix_(idx, idx)]
        if np.any(B):
            rho = max(rho, _perron_root(B, tol, max_iter))
    return rho


def mixture_entropy(weights, overlaps) -> float:
    """Von Neumann entropy (bits) of ``sum_i w_i |v_i><v_i|`` from its overlaps.

    Uses the spectrum of ``W^1/2 C W^1/2``, which matches that of the mixture.
    """
    w = np.sqrt(np.asarray(weights, dtype=float))
    C = np.asarray(overlaps, dtype=float)
    eig = np.linalg.eigvalsh(w[:, None] * C * w[None, :])
    return entropy_bits(np.clip(eig, 0.0, None))


def eta_overlap_sequence(m: EpsilonMachine, pi, L_max: int) -> list:
    """``EtaOverlapTable`` for every ``L`` in ``0..L_max``."""
    z = pair_matrix(m)
    n = m.n_states
    pi = np.asarray(pi, dtype=float)
    v = np.zeros(n * n)
    v[z.diagonal_pairs] = 1.0
    out = []
    for L in range(L_max + 1):
        overlaps = v.reshape(n, n).copy()
        np.fill_diagonal(overlaps, 1.0)
        overlaps.setflags(write=False)
        out.append(EtaOverlapTable(L=L, overlaps=overlaps, tilde_cq=mixture_entropy(pi, overlaps)))
        v = z.zeta @ v
    return out


def eta_overlaps(m: EpsilonMachine, pi, L: int) -> EtaOverlapTable:
    """Overlaps of the length-``L`` block encodings and their complexity.

    ``<eta_i(L)|eta_j(L)>`` is the mass of ``zeta**L`` landing on diagonal
    pairs, i.e. the weight of words after which both states have merged.
    """
    if L < 0:
        raise ValueError("L must be non-negative")
    return eta_overlap_sequence(m, pi, L)[-1]


def effective_cryptic_order(
    m: EpsilonMachine, tol: float = 1e-6, cap: int = 1000, gram: GramMatrix | None = None
) -> int | None:
    """Smallest ``k >= 1`` with ``max |<eta_i(k)|eta_j(k)> - c_ij| < tol``.

    A plateau estimate of the cryptic order; ``None`` means no such ``k <= cap``.
    """
    c = np.asarray(gram if gram is not None else solve_gram(m))
    z = pair_matrix(m)
    n = m.n_states
    v = np.zeros(n * n)
    v[z.diagonal_pairs] = 1.0
    for k in range(1, cap + 1):
        v = z.zeta @ v
        if np.max(np.abs(v.reshape(n, n) - c)) < tol:
            return k
    return None
