"""Running the q-simulator and comparing its output to the classical process.

Between steps only the memory vector is kept: each step couples it to a blank
symbol register, applies ``U``, measures the register in the computational
basis and collapses the memory onto the observed branch.

Random draws follow one contract everywhere: a ``numpy`` PCG64 generator
seeded explicitly, consumed as one uniform for the initial state (drawn even
when the start state is fixed) and then one uniform per emitted symbol.
"""
from __future__ import annotations

import itertools
import math
from operator import mul
from dataclasses import dataclass

import numpy as np

from .errors import DimensionCapError
from .gram import mixture_entropy
from .machine import EpsilonMachine, sample_classical_words, start_distribution, stationary_distribution
from .quantum import QuantumModel, UnitaryModel

__all__ = [
    "SimulatorState",
    "JointState",
    "WordDistribution",
    "init_simulator",
    "step",
    "run",
    "joint_state",
    "joint_overlap_invariance",
    "sample_words",
    "empirical_distribution",
    "empirical_classical_distribution",
    "exact_distribution",
    "stream_distribution",
    "tv_distance",
    "conditional_memory_entropy",
]

MAX_JOINT_DIM = 1 << 22
_DRAW_BLOCK = 4096


def _unitary(model) -> UnitaryModel:
    return model.unitary if isinstance(model, QuantumModel) else model


def _stationary(model) -> np.ndarray:
    if isinstance(model, QuantumModel):
        return np.asarray(model.pi.pi)
    return stationary_distribution(model.machine).pi


def _draw_index(cdf: np.ndarray, u: float, probs: np.ndarray) -> int:
    idx = int(np.searchsorted(cdf, u, side="right"))
    if idx >= len(cdf):
        idx = int(np.flatnonzero(probs > 1e-12)[-1])
    return idx


class SimulatorState:
    """Single-owner mutable simulator: memory vector, generator and step count."""

    def __init__(self, model, start="stationary", seed: int = 0, renormalize: bool = True):
        u = _unitary(model)
        self.model = u
        self.machine: EpsilonMachine = u.machine
        self.rng = np.random.default_rng(seed)
        self.renormalize = renormalize
        self.step_count = 0
        self._buf: list = []
        self._buf_pos = 0
        draw = float(self.rng.random())
        if isinstance(start, str) and start == "stationary":
            start = _stationary(model)
        if isinstance(start, (str, int, np.integer)):
            i = self.machine.state_index(start)
        else:
            pi = start_distribution(self.machine, start)
            i = _draw_index(np.cumsum(pi), draw, pi)
        self.initial_state = i
        self._rows = u.blank_rows
        self._mem = u.states.vectors[i].tolist()

    @property
    def memory(self) -> np.ndarray:
        return np.array(self._mem)

    def symbol_probabilities(self) -> np.ndarray:
        """Born probabilities of the next symbol from the current memory."""
        probs = np.array([sum(sum(a * b for a, b in zip(row, self._mem)) ** 2 for row in rows) for rows in self._rows])
        return probs / probs.sum()

    def _uniform(self) -> float:
        # block draws give the same doubles as successive scalar draws
        if self._buf_pos == len(self._buf):
            self._buf = self.rng.random(_DRAW_BLOCK).tolist()
            self._buf_pos = 0
        u = self._buf[self._buf_pos]
        self._buf_pos += 1
        return u

    def step(self) -> int:
        """Emit one symbol index and collapse the memory."""
        mem = self._mem
        branches = []
        probs = []
        for rows in self._rows:
            amp = [sum(map(mul, row, mem)) for row in rows]
            branches.append(amp)
            probs.append(sum(map(mul, amp, amp)))
        total = sum(probs)
        if total < 1e-12:
            raise FloatingPointError("symbol marginals vanish; the model is corrupted")
        u = self._uniform() * total
        acc = 0.0
        x = -1
        for idx, p in enumerate(probs):
            acc += p
            if u < acc:
                x = idx
                break
        if x < 0 or probs[x] < 1e-12 * total:
            x = max(idx for idx, p in enumerate(probs) if p >= 1e-12 * total)
        # without renormalization the branch is scaled by the Born probability alone,
        # so rounding errors in the memory norm accumulate
        norm = math.sqrt(probs[x]) if self.renormalize else math.sqrt(probs[x] / total)
        self._mem = [a / norm for a in branches[x]]
        self.step_count += 1
        return x

    def run(self, L: int) -> str:
        if L < 0:
            raise ValueError("L must be non-negative")
        return self.machine.format_word([self.step() for _ in range(L)])


def init_simulator(model, start="stationary", seed: int = 0, renormalize: bool = True) -> SimulatorState:
    """Start a simulator in ``|sigma_i>`` (label/index) or drawn from a distribution."""
    return SimulatorState(model, start=start, seed=seed, renormalize=renormalize)


def step(sim: SimulatorState) -> str:
    return sim.machine.alphabet[sim.step()]


def run(sim: SimulatorState, L: int) -> str:
    return sim.run(L)


# -- exact joint states ------------------------------------------------------------


@dataclass(frozen=True)
class JointState:
    """``U^L |sigma_i>|0>^L`` with amplitudes indexed ``memory * k**L + word``.

    Words are numbered with the first emitted symbol most significant.
    """

    L: int
    amplitudes: np.ndarray
    memory_dim: int
    n_symbols: int

    def as_matrix(self) -> np.ndarray:
        return self.amplitudes.reshape(self.memory_dim, self.n_symbols**self.L)

    def word_probabilities(self) -> np.ndarray:
        a = self.as_matrix()
        return np.einsum("jw,jw->w", a, a)


def joint_state(model, i, L: int, max_dim: int = MAX_JOINT_DIM) -> JointState:
    u = _unitary(model)
    r, k = u.dims
    if r * k**L > max_dim:
        raise DimensionCapError(f"joint state of dimension {r * k**L} exceeds the cap {max_dim}")
    K = u.kraus()
    state = u.states.vectors[u.machine.state_index(i)].reshape(r, 1)
    for _ in range(L):
        state = np.einsum("xab,bw->awx", K, state).reshape(r, -1)
    return JointState(L=L, amplitudes=state.ravel(), memory_dim=r, n_symbols=k)


def joint_overlap_invariance(model, gram, L: int) -> float:
    """``max_ij |<L_i|L_j> - c_ij|``."""
    u = _unitary(model)
    c = np.asarray(gram, dtype=float)
    vecs = np.stack([joint_state(u, i, L).amplitudes for i in range(u.machine.n_states)])
    return float(np.max(np.abs(vecs @ vecs.T - c)))


# -- word distributions ------------------------------------------------------------


@dataclass(frozen=True)
class WordDistribution:
    length: int
    probs: dict

    def __getitem__(self, word):
        return self.probs.get(word, 0.0)


def _all_words(m: EpsilonMachine, L: int):
    return [m.format_word(w) for w in itertools.product(range(m.n_symbols), repeat=L)]


def _counts_to_distribution(m: EpsilonMachine, words: np.ndarray, L: int) -> WordDistribution:
    k = m.n_symbols
    code = np.zeros(len(words), dtype=np.int64)
    for t in range(L):
        code = code * k + words[:, t]
    counts = np.bincount(code, minlength=k**L)
    total = counts.sum()
    labels = _all_words(m, L)
    return WordDistribution(length=L, probs={labels[w]: counts[w] / total for w in range(k**L)})


def sample_words(model, word_len: int, n_samples: int, seed: int) -> np.ndarray:
    """Independent q-simulator words, each started from a fresh stationary draw.

    Vectorized over samples; row ``s`` of the uniform stream is consumed as
    (initial state, one per symbol), as in ``SimulatorState``.
    """
    u = _unitary(model)
    r, k = u.dims
    pi = _stationary(model)
    rng = np.random.default_rng(seed)
    draws = rng.random((n_samples, word_len + 1))
    cdf = np.cumsum(pi)
    init = np.minimum(np.searchsorted(cdf, draws[:, 0], side="right"), np.flatnonzero(pi > 0)[-1])
    mem = u.states.vectors[init]
    apply = u.U[:, ::k]
    words = np.empty((n_samples, word_len), dtype=np.int64)
    rows = np.arange(n_samples)
    for t in range(word_len):
        amp = (mem @ apply.T).reshape(n_samples, r, k)
        probs = np.einsum("sjx,sjx->sx", amp, amp)
        probs /= probs.sum(axis=1, keepdims=True)
        x = (np.cumsum(probs, axis=1) <= draws[:, t + 1, None]).sum(axis=1)
        last = k - 1 - np.argmax((probs > 1e-12)[:, ::-1], axis=1)
        x = np.minimum(x, last)
        words[:, t] = x
        mem = amp[rows, :, x]
        mem /= np.linalg.norm(mem, axis=1, keepdims=True)
    return words


def empirical_distribution(model, word_len: int, n_samples: int, seed: int) -> WordDistribution:
    u = _unitary(model)
    return _counts_to_distribution(u.machine, sample_words(model, word_len, n_samples, seed), word_len)


def empirical_classical_distribution(m: EpsilonMachine, word_len: int, n_samples: int, seed: int, pi=None) -> WordDistribution:
    words = sample_classical_words(m, word_len, n_samples, seed, start=pi)
    return _counts_to_distribution(m, words, word_len)


def exact_distribution(m: EpsilonMachine, pi, word_len: int) -> WordDistribution:
    """Stationary word probabilities ``P_pi(w)`` for every word of ``word_len``."""
    if word_len > 8:
        raise DimensionCapError("exact word distributions are limited to length 8")
    T = m.transition_matrices()
    table = np.asarray(pi, dtype=float)[None, :]  # rows: words, cols: end state
    for _ in range(word_len):
        table = np.concatenate([table @ T[x] for x in range(m.n_symbols)], axis=1)
        table = table.reshape(-1, m.n_states)
    # table rows ordered with the last symbol fastest
    probs = table.sum(axis=1)
    labels = _all_words(m, word_len)
    return WordDistribution(length=word_len, probs=dict(zip(labels, probs.tolist())))


def stream_distribution(m: EpsilonMachine, stream: str, word_len: int) -> WordDistribution:
    """Overlapping-window word frequencies of one long output string."""
    xs = np.asarray(m.parse_word(stream), dtype=np.int64)
    n = len(xs) - word_len + 1
    windows = np.stack([xs[t : t + n] for t in range(word_len)], axis=1) if n > 0 else np.zeros((0, word_len), int)
    return _counts_to_distribution(m, windows, word_len)


def tv_distance(a: WordDistribution, b: WordDistribution) -> float:
    keys = set(a.probs) | set(b.probs)
    return 0.5 * sum(abs(a[w] - b[w]) for w in keys)


def conditional_memory_entropy(model, L: int, prior=None) -> float:
    """Average entropy of the memory after observing ``L`` output symbols.

    ``prior`` is the initial distribution over causal states (stationary by
    default). For each word ``w`` the memory is the mixture
    ``sum_i P(i|w) |sigma_{lambda(i,w)}><...|``; its entropy is averaged with
    weights ``P(w)``.
    """
    if isinstance(model, QuantumModel):
        m, c = model.machine, np.asarray(model.gram)
    else:
        m, c = model.machine, model.states.gram()
    weights = _stationary(model) if prior is None else start_distribution(m, prior)
    T = m.transition_matrices()
    total = 0.0
    for word in itertools.product(range(m.n_symbols), repeat=L):
        joint = weights.copy()
        for x in word:
            joint = joint @ T[x]
        pw = joint.sum()
        if pw <= 0:
            continue
        total += pw * mixture_entropy(joint / pw, c)
    return float(total)
