"""Classical epsilon-machines: representation, validation and analysis.

A machine is stored as two dense arrays indexed ``(state, symbol)``: the
emission probabilities ``emit[i, x] = P(x|i)`` and the unifilar successor map
``succ[i, x] = lambda(i, x)``, which is ``-1`` wherever ``P(x|i) == 0``.
"""
from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import ConvergenceError, DegenerateMachineError, MachineSpecError

__all__ = [
    "EpsilonMachine",
    "StationaryDistribution",
    "ValidationReport",
    "ClassicalComplexityReport",
    "parse_machine",
    "dump_machine",
    "validate",
    "stationary_distribution",
    "classical_complexity",
    "topological_complexity",
    "classical_report",
    "entropy_bits",
    "word_probability",
    "advance",
    "sample_classical",
    "sample_classical_words",
    "markov_order_bound",
    "upset_gambler",
    "biased_coin",
    "alternating_process",
    "random_machine",
]

# Probabilities below this are treated as structural zeros.
SUPPORT_FLOOR = 1e-15
NORMALIZATION_TOL = 1e-9
MINIMALITY_TOL = 1e-9
# Largest word table built by the minimality probe (columns).
_MAX_PROBE_WORDS = 1 << 20


@dataclass(frozen=True, eq=False)
class EpsilonMachine:
    """Unifilar hidden Markov model with labelled states and symbols."""

    alphabet: tuple
    states: tuple
    emit: np.ndarray
    succ: np.ndarray
    name: str = ""

    def __post_init__(self):
        alphabet = tuple(str(a) for a in self.alphabet)
        states = tuple(str(s) for s in self.states)
        emit = np.array(self.emit, dtype=float)
        succ = np.array(self.succ, dtype=np.int64)
        if len(set(alphabet)) != len(alphabet):
            raise MachineSpecError("duplicate symbol labels")
        if len(set(states)) != len(states):
            raise MachineSpecError("duplicate state labels")
        shape = (len(states), len(alphabet))
        if emit.shape != shape or succ.shape != shape:
            raise MachineSpecError(
                f"emit/succ must have shape {shape}, got {emit.shape} and {succ.shape}"
            )
        if np.any(~np.isfinite(emit)) or np.any(emit < 0):
            raise MachineSpecError("emission probabilities must be finite and non-negative")
        if np.any((succ < -1) | (succ >= len(states))):
            raise MachineSpecError("successor index out of range")
        emit.setflags(write=False)
        succ.setflags(write=False)
        object.__setattr__(self, "alphabet", alphabet)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "emit", emit)
        object.__setattr__(self, "succ", succ)

    def __eq__(self, other):
        if not isinstance(other, EpsilonMachine):
            return NotImplemented
        return (
            self.alphabet == other.alphabet
            and self.states == other.states
            and np.array_equal(self.emit, other.emit)
            and np.array_equal(self.succ, other.succ)
        )

    __hash__ = None

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<EpsilonMachine{label}: {self.n_states} states, {self.n_symbols} symbols>"

    @classmethod
    def from_transitions(
        cls,
        alphabet: Sequence[str],
        states: Sequence[str],
        transitions: Iterable[tuple],
        name: str = "",
    ) -> "EpsilonMachine":
        """Build a machine from ``(from, symbol, to, prob)`` records."""
        alphabet = tuple(str(a) for a in alphabet)
        states = tuple(str(s) for s in states)
        if len(set(alphabet)) != len(alphabet):
            raise MachineSpecError("duplicate symbol labels")
        if len(set(states)) != len(states):
            raise MachineSpecError("duplicate state labels")
        sidx = {s: i for i, s in enumerate(states)}
        xidx = {a: i for i, a in enumerate(alphabet)}
        emit = np.zeros((len(states), len(alphabet)))
        succ = np.full((len(states), len(alphabet)), -1, dtype=np.int64)
        seen = {}
        for n, (src, sym, dst, prob) in enumerate(transitions):
            src, sym, dst = str(src), str(sym), str(dst)
            where = f"transition {n} ({src} --{sym}--> {dst})"
            for label, table, kind in ((src, sidx, "state"), (dst, sidx, "state"), (sym, xidx, "symbol")):
                if label not in table:
                    raise MachineSpecError(f"{where}: unknown {kind} {label!r}")
            if (src, sym) in seen:
                raise MachineSpecError(
                    f"{where}: unifilarity violation, ({src}, {sym}) already leads to {seen[src, sym]}"
                )
            seen[src, sym] = dst
            prob = float(prob)
            if not math.isfinite(prob) or prob < 0 or prob > 1:
                raise MachineSpecError(f"{where}: probability {prob!r} outside [0, 1]")
            if prob < SUPPORT_FLOOR:
                continue
            i, x = sidx[src], xidx[sym]
            emit[i, x] = prob
            succ[i, x] = sidx[dst]
        return cls(alphabet, states, emit, succ, name=name)

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_symbols(self) -> int:
        return len(self.alphabet)

    def state_index(self, state) -> int:
        if isinstance(state, (int, np.integer)):
            if not 0 <= state < self.n_states:
                raise IndexError(f"state index {state} out of range for {self.n_states} states")
            return int(state)
        try:
            return self.states.index(str(state))
        except ValueError:
            raise KeyError(f"unknown state {state!r}") from None

    def symbol_index(self, symbol) -> int:
        if isinstance(symbol, (int, np.integer)):
            if not 0 <= symbol < self.n_symbols:
                raise IndexError(f"symbol index {symbol} out of range")
            return int(symbol)
        try:
            return self.alphabet.index(str(symbol))
        except ValueError:
            raise KeyError(f"unknown symbol {symbol!r}") from None

    @property
    def _single_char(self) -> bool:
        return all(len(a) == 1 for a in self.alphabet)

    def parse_word(self, word) -> list:
        """Symbol indices of ``word``; strings split per character or on whitespace."""
        if isinstance(word, str):
            word = list(word) if self._single_char else word.split()
        return [self.symbol_index(x) for x in word]

    def format_word(self, indices) -> str:
        labels = [self.alphabet[int(x)] for x in indices]
        return ("" if self._single_char else " ").join(labels)

    def transition_matrices(self) -> np.ndarray:
        """Array ``T[x, i, j] = P(x|i) [j = lambda(i, x)]``."""
        n, k = self.emit.shape
        T = np.zeros((k, n, n))
        for i in range(n):
            for x in range(k):
                if self.succ[i, x] >= 0:
                    T[x, i, self.succ[i, x]] = self.emit[i, x]
        return T

    def transition_matrix(self) -> np.ndarray:
        """Symbol-marginal state transition matrix ``M[i, j]``."""
        return self.transition_matrices().sum(axis=0)


@dataclass(frozen=True)
class StationaryDistribution:
    pi: np.ndarray
    residual: float

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.pi, dtype=dtype)


@dataclass(frozen=True)
class ValidationReport:
    normalized: bool
    worst_row_deviation: float
    connected: bool
    minimal: bool
    duplicate_pair: tuple | None
    support_consistent: bool
    probe_depth: int

    @property
    def ok(self) -> bool:
        return self.normalized and self.connected and self.minimal and self.support_consistent

    def problems(self) -> list:
        out = []
        if not self.normalized:
            out.append(f"rows not normalized (worst deviation {self.worst_row_deviation:.3g})")
        if not self.connected:
            out.append("state graph is not strongly connected")
        if not self.minimal:
            a, b = self.duplicate_pair
            out.append(f"non-minimal: states {a!r} and {b!r} agree on all words up to length {self.probe_depth}")
        if not self.support_consistent:
            out.append("successor map does not match emission support")
        return out


@dataclass(frozen=True)
class ClassicalComplexityReport:
    c_mu: float
    c_mu0: float
    markov_order_bound: int | None
    markov_cap: int

    @property
    def markov_order_text(self) -> str:
        if self.markov_order_bound is None:
            return f"exceeds {self.markov_cap}"
        return str(self.markov_order_bound)


# -- document format ---------------------------------------------------------


def _parse_prob(value, where):
    if isinstance(value, bool) or not isinstance(value, (str, int, float)):
        raise MachineSpecError(f"{where}: probability must be a decimal string")
    try:
        prob = float(value)
    except ValueError:
        raise MachineSpecError(f"{where}: cannot parse probability {value!r}") from None
    if not math.isfinite(prob) or not 0 < prob <= 1:
        raise MachineSpecError(f"{where}: probability {value!r} not in (0, 1]")
    return prob


def parse_machine(spec_text: str) -> EpsilonMachine:
    """Parse a JSON machine document.

    The document carries ``name``, ``alphabet``, ``states`` and a list of
    ``transitions`` records ``{"from", "symbol", "to", "prob"}`` where ``prob``
    is a decimal string.
    """
    try:
        doc = json.loads(spec_text)
    except json.JSONDecodeError as exc:
        raise MachineSpecError(f"not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise MachineSpecError("document must be a JSON object")
    missing = [key for key in ("alphabet", "states", "transitions") if key not in doc]
    if missing:
        raise MachineSpecError(f"missing field(s): {', '.join(missing)}")
    name = doc.get("name", "")
    if not isinstance(name, str):
        raise MachineSpecError("name must be a string")
    for key in ("alphabet", "states"):
        if not isinstance(doc[key], list) or not doc[key]:
            raise MachineSpecError(f"{key} must be a non-empty list")
        if not all(isinstance(v, str) for v in doc[key]):
            raise MachineSpecError(f"{key} entries must be strings")
    if not isinstance(doc["transitions"], list):
        raise MachineSpecError("transitions must be a list")
    records = []
    for n, rec in enumerate(doc["transitions"]):
        if not isinstance(rec, dict):
            raise MachineSpecError(f"transition {n}: must be an object")
        absent = [key for key in ("from", "symbol", "to", "prob") if key not in rec]
        if absent:
            raise MachineSpecError(f"transition {n}: missing {', '.join(absent)}")
        for key in ("from", "symbol", "to"):
            if not isinstance(rec[key], str):
                raise MachineSpecError(f"transition {n}: {key} must be a string")
        where = f"transition {n} ({rec['from']} --{rec['symbol']}--> {rec['to']})"
        records.append((rec["from"], rec["symbol"], rec["to"], _parse_prob(rec["prob"], where)))
    return EpsilonMachine.from_transitions(doc["alphabet"], doc["states"], records, name=name)


def dump_machine(m: EpsilonMachine) -> str:
    """Serialize to the JSON document format; ``parse_machine`` inverts it exactly."""
    transitions = []
    for i, s in enumerate(m.states):
        for x, a in enumerate(m.alphabet):
            if m.succ[i, x] >= 0:
                transitions.append(
                    {"from": s, "symbol": a, "to": m.states[m.succ[i, x]], "prob": repr(float(m.emit[i, x]))}
                )
    doc = {"name": m.name, "alphabet": list(m.alphabet), "states": list(m.states), "transitions": transitions}
    return json.dumps(doc, indent=2) + "\n"


# -- validation ----------------------------------------------------------------


def _strongly_connected(m: EpsilonMachine) -> bool:
    n = m.n_states
    adj = [set(int(j) for j in m.succ[i] if j >= 0) for i in range(n)]
    radj = [set() for _ in range(n)]
    for i, out in enumerate(adj):
        for j in out:
            radj[j].add(i)

    def reach(graph):
        seen, stack = {0}, [0]
        while stack:
            for j in graph[stack.pop()]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return len(seen) == n

    return reach(adj) and reach(radj)


def _find_duplicate_states(m: EpsilonMachine, depth: int):
    T = m.transition_matrices()
    n = m.n_states
    # table[:, w] = P(w|i) for every word w of the current length
    table = np.ones((n, 1))
    undistinguished = ~np.eye(n, dtype=bool)
    for _ in range(depth):
        table = np.concatenate([T[x] @ table for x in range(m.n_symbols)], axis=1)
        diff = np.abs(table[:, None, :] - table[None, :, :]).max(axis=2)
        undistinguished &= diff < MINIMALITY_TOL
        if not undistinguished.any():
            return None
    pairs = np.argwhere(np.triu(undistinguished, 1))
    if len(pairs):
        return int(pairs[0][0]), int(pairs[0][1])
    return None


def validate(m: EpsilonMachine, probe_depth: int | None = None) -> ValidationReport:
    """Check normalization, connectivity, minimality and support consistency.

    Two states are flagged as duplicates when their word distributions agree
    within 1e-9 for every word length up to ``probe_depth`` (default
    ``2 * n_states``). The probe depth is clamped so that the word table stays
    below about a million columns.
    """
    if probe_depth is None:
        probe_depth = 2 * m.n_states
    if m.n_symbols > 1:
        probe_depth = min(probe_depth, int(math.log(_MAX_PROBE_WORDS) / math.log(m.n_symbols)))
    worst = float(np.max(np.abs(m.emit.sum(axis=1) - 1.0)))
    support_ok = bool(np.array_equal(m.emit > 0, m.succ >= 0))
    dup = _find_duplicate_states(m, probe_depth) if m.n_states > 1 else None
    return ValidationReport(
        normalized=worst < NORMALIZATION_TOL,
        worst_row_deviation=worst,
        connected=_strongly_connected(m),
        minimal=dup is None,
        duplicate_pair=None if dup is None else (m.states[dup[0]], m.states[dup[1]]),
        support_consistent=support_ok,
        probe_depth=probe_depth,
    )


# -- stationary statistics -----------------------------------------------------


def stationary_distribution(m: EpsilonMachine, tol: float = 1e-12) -> StationaryDistribution:
    """Left fixed point of the state transition matrix.

    Solves ``(M^T - I) pi = 0`` together with ``sum(pi) = 1`` directly and falls
    back to power iteration on the lazy chain ``(M + I) / 2`` if the direct
    residual is too large.
    """
    M = m.transition_matrix()
    n = m.n_states
    A = np.vstack([M.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    if rank < n:
        raise ConvergenceError("stationary system is singular; machine is not strongly connected")

    def clean(v):
        v = np.where(v < 0, 0.0, v)
        return v / v.sum()

    pi = clean(pi)
    residual = float(np.max(np.abs(pi @ M - pi)))
    if residual >= tol:
        lazy = 0.5 * (M + np.eye(n))
        for _ in range(100_000):
            pi = clean(pi @ lazy)
            residual = float(np.max(np.abs(pi @ M - pi)))
            if residual < tol:
                break
        else:
            raise ConvergenceError(f"stationary distribution did not converge (residual {residual:.3g})")
    pi.setflags(write=False)
    return StationaryDistribution(pi=pi, residual=residual)


def entropy_bits(probs) -> float:
    """Shannon entropy in bits, with ``0 log 0 = 0``."""
    p = np.asarray(probs, dtype=float)
    p = p[p > 0]
    return float(max(0.0, -np.sum(p * np.log2(p))))


def classical_complexity(m: EpsilonMachine, pi) -> float:
    """Statistical complexity: Shannon entropy of the causal-state distribution."""
    return entropy_bits(np.asarray(pi))


def topological_complexity(m: EpsilonMachine) -> float:
    return math.log2(m.n_states)


def classical_report(m: EpsilonMachine, pi=None, markov_cap: int = 12) -> ClassicalComplexityReport:
    if pi is None:
        pi = stationary_distribution(m)
    return ClassicalComplexityReport(
        c_mu=classical_complexity(m, pi),
        c_mu0=topological_complexity(m),
        markov_order_bound=markov_order_bound(m, markov_cap),
        markov_cap=markov_cap,
    )


StartSpec = Union[str, int, StationaryDistribution, np.ndarray, Sequence[float]]


def start_distribution(m: EpsilonMachine, start: StartSpec) -> np.ndarray:
    """Probability vector over states for a label, index or distribution."""
    if isinstance(start, (str, int, np.integer)):
        v = np.zeros(m.n_states)
        v[m.state_index(start)] = 1.0
        return v
    v = np.asarray(start, dtype=float)
    if v.shape != (m.n_states,):
        raise ValueError(f"start distribution must have length {m.n_states}")
    return v


def word_probability(m: EpsilonMachine, word, start: StartSpec) -> float:
    """``P(word | start)`` along the unique unifilar path(s)."""
    xs = m.parse_word(word)
    weights = start_distribution(m, start)
    total = 0.0
    for i0, w in enumerate(weights):
        if w == 0:
            continue
        prob, i = 1.0, i0
        for x in xs:
            prob *= m.emit[i, x]
            if prob == 0.0:
                break
            i = m.succ[i, x]
        total += w * prob
    return float(total)


def advance(m: EpsilonMachine, state, symbol) -> str:
    """Successor state label ``lambda(state, symbol)``."""
    i, x = m.state_index(state), m.symbol_index(symbol)
    if m.emit[i, x] <= 0:
        raise ValueError(f"state {m.states[i]!r} cannot emit {m.alphabet[x]!r}")
    return m.states[m.succ[i, x]]


# -- sampling ------------------------------------------------------------------


def _inverse_cdf(cdf: np.ndarray, u):
    """Index of the first cumulative entry strictly above ``u``."""
    return (cdf <= np.asarray(u)[..., None]).sum(axis=-1)


def _last_positive(rows: np.ndarray) -> np.ndarray:
    k = rows.shape[1]
    return k - 1 - np.argmax((rows > 0)[:, ::-1], axis=1)


def _initial_state(m: EpsilonMachine, start, u: float) -> int:
    if isinstance(start, (str, int, np.integer)):
        return m.state_index(start)
    pi = start_distribution(m, start)
    cdf = np.cumsum(pi)
    return int(min(np.searchsorted(cdf, u, side="right"), int(_last_positive(pi[None, :])[0])))


def sample_classical(m: EpsilonMachine, start: StartSpec, length: int, seed: int) -> str:
    """Seeded classical run of ``length`` symbols.

    Draws one uniform for the initial state (consumed even for a fixed start
    state) and one per emitted symbol; symbols are picked by inverse CDF over
    the declared alphabet order.
    """
    if length < 0:
        raise ValueError("length must be non-negative")
    rng = np.random.default_rng(seed)
    draws = rng.random(length + 1)
    state = _initial_state(m, start, draws[0])
    cdfs = [list(np.cumsum(row)) for row in m.emit]
    last = [int(v) for v in _last_positive(m.emit)]
    succ = m.succ.tolist()
    out = []
    for u in draws[1:].tolist():
        x = min(bisect.bisect_right(cdfs[state], u), last[state])
        out.append(x)
        state = succ[state][x]
    return m.format_word(out)


def sample_classical_words(
    m: EpsilonMachine, word_len: int, n_samples: int, seed: int, start: StartSpec | None = None
) -> np.ndarray:
    """``n_samples`` independent words, each from a fresh initial-state draw.

    Returns an integer array of shape ``(n_samples, word_len)``. Row ``k`` of
    the uniform stream is consumed as (initial state, one per symbol).
    """
    rng = np.random.default_rng(seed)
    u = rng.random((n_samples, word_len + 1))
    if start is None:
        start = stationary_distribution(m).pi
    if isinstance(start, (str, int, np.integer)):
        state = np.full(n_samples, m.state_index(start))
    else:
        pi = start_distribution(m, start)
        state = np.minimum(_inverse_cdf(np.cumsum(pi), u[:, 0]), _last_positive(pi[None, :])[0])
    cdf = np.cumsum(m.emit, axis=1)
    last = _last_positive(m.emit)
    words = np.empty((n_samples, word_len), dtype=np.int64)
    for t in range(word_len):
        x = np.minimum(_inverse_cdf(cdf[state], u[:, t + 1]), last[state])
        words[:, t] = x
        state = m.succ[state, x]
    return words


# -- Markov order -------------------------------------------------------------


def markov_order_bound(m: EpsilonMachine, K: int) -> int | None:
    """Smallest ``R <= K`` at which every word of length ``R`` synchronizes.

    A word synchronizes when all states able to emit it end in one common
    successor. Returns ``None`` when no ``R <= K`` works.
    """
    if K < 0:
        raise ValueError("K must be non-negative")
    n = m.n_states
    succ = m.succ.tolist()
    # configuration: successor reached from each start state, -1 if the word dies
    frontier = {tuple(range(n))}
    for R in range(K + 1):
        if all(len({s for s in cfg if s >= 0}) <= 1 for cfg in frontier):
            return R
        nxt = set()
        for cfg in frontier:
            for x in range(m.n_symbols):
                new = tuple(succ[s][x] if s >= 0 else -1 for s in cfg)
                if any(s >= 0 for s in new):
                    nxt.add(new)
        frontier = nxt
    return None


# -- built-in machines ---------------------------------------------------------


def upset_gambler(p: float, q: float) -> EpsilonMachine:
    """Two-state upset-gambler machine.

    From ``A``: emit 0 with probability ``p`` and move to ``B``, else emit 1 and
    stay. From ``B``: emit 0 with probability ``q`` or 1 otherwise, both back to
    ``A``.
    """
    for label, v in (("p", p), ("q", q)):
        if not 0 < v < 1:
            raise ValueError(f"{label} must lie strictly between 0 and 1, got {v}")
    if p == q:
        raise DegenerateMachineError("non-minimal: p == q reduces the upset gambler to a biased coin")
    return EpsilonMachine.from_transitions(
        ["0", "1"],
        ["A", "B"],
        [("A", "0", "B", p), ("A", "1", "A", 1 - p), ("B", "0", "A", q), ("B", "1", "A", 1 - q)],
        name=f"upset-gambler(p={p!r}, q={q!r})",
    )


def biased_coin(b: float = 0.5) -> EpsilonMachine:
    """Single-state i.i.d. process emitting 0 with probability ``b``."""
    if not 0 <= b <= 1:
        raise ValueError("b must lie in [0, 1]")
    return EpsilonMachine.from_transitions(
        ["0", "1"], ["S"], [("S", "0", "S", b), ("S", "1", "S", 1 - b)], name=f"biased-coin(b={b!r})"
    )


def alternating_process() -> EpsilonMachine:
    """Period-2 process ``...1010...``; state ``A`` emits 1, state ``B`` emits 0."""
    return EpsilonMachine.from_transitions(
        ["0", "1"], ["A", "B"], [("A", "1", "B", 1.0), ("B", "0", "A", 1.0)], name="alternating"
    )


def random_machine(
    n_states: int, n_symbols: int, rng: np.random.Generator, max_tries: int = 10_000
) -> EpsilonMachine:
    """Random validated (normalized, connected, minimal) machine.

    Each state emits a random non-empty subset of the alphabet with Dirichlet
    probabilities and uniformly random successors.
    """
    states = [f"s{i}" for i in range(n_states)]
    alphabet = [str(x) for x in range(n_symbols)]
    for _ in range(max_tries):
        records = []
        for s in states:
            k = int(rng.integers(1, n_symbols + 1))
            symbols = sorted(rng.choice(n_symbols, size=k, replace=False).tolist())
            probs = rng.dirichlet(np.ones(k))
            for x, pr in zip(symbols, probs):
                records.append((s, alphabet[x], states[int(rng.integers(n_states))], float(pr)))
        try:
            m = EpsilonMachine.from_transitions(alphabet, states, records)
        except MachineSpecError:
            continue
        # Dirichlet draws can land below the support floor
        if np.min(m.emit[m.emit > 0]) < 1e-6:
            continue
        if validate(m).ok:
            return m
    raise RuntimeError(f"no valid {n_states}-state machine found in {max_tries} tries")
