"""End-to-end analyses and plot-ready tables behind the command line."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import MachineSpecError
from .gram import eta_overlap_sequence, solve_gram
from .machine import (
    EpsilonMachine,
    classical_complexity,
    markov_order_bound,
    stationary_distribution,
    topological_complexity,
    upset_gambler,
    validate,
)
from .quantum import build_quantum_model, memory_channel_fixed_point, verify_unitary
from .simulate import exact_distribution, init_simulator, joint_overlap_invariance, stream_distribution, tv_distance

__all__ = [
    "VERIFY_TOL",
    "SweepGrid",
    "parse_grid",
    "analyze",
    "format_analysis",
    "convergence_rows",
    "surface_rows",
    "simulate_stream",
    "to_csv",
]

VERIFY_TOL = 1e-10
# Exact joint states checked by analyze are kept below this many amplitudes.
_OVERLAP_CHECK_DIM = 1 << 18


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "%.17g" % value
    return str(value)


def to_csv(rows: list, columns: list) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def _require_valid(m: EpsilonMachine) -> None:
    report = validate(m)
    if not report.ok:
        raise MachineSpecError("; ".join(report.problems()))


def analyze(m: EpsilonMachine, markov_cap: int = 12, tol: float = VERIFY_TOL) -> dict:
    """Classical and quantum complexities plus every verification residual."""
    _require_valid(m)
    model = build_quantum_model(m)
    pi = model.pi.pi
    check = verify_unitary(m, model.states, model.unitary, tol=tol)
    r, k = model.unitary.dims
    overlap_L = 0
    while overlap_L < 8 and m.n_states * r * k ** (overlap_L + 1) <= _OVERLAP_CHECK_DIM:
        overlap_L += 1
    overlap = max(
        (joint_overlap_invariance(model, model.gram, L) for L in range(1, overlap_L + 1)), default=0.0
    )
    residuals = {
        "image": check.image_residual,
        "unitarity": check.unitarity_defect,
        "gram": check.gram_defect,
        "channel_fixed_point": memory_channel_fixed_point(model.unitary, model.phi),
        "overlap_invariance": overlap,
        "overlap_invariance_max_L": overlap_L,
        "gram_self_consistency": model.gram.residual,
    }
    passed = all(
        residuals[key] < tol for key in ("image", "unitarity", "gram", "channel_fixed_point", "overlap_invariance")
    )
    mk = markov_order_bound(m, markov_cap)
    return {
        "name": m.name,
        "states": list(m.states),
        "alphabet": list(m.alphabet),
        "pi": dict(zip(m.states, pi.tolist())),
        "c_mu": classical_complexity(m, pi),
        "c_mu0": topological_complexity(m),
        "markov_order": mk if mk is not None else f"exceeds {markov_cap}",
        "gram": np.asarray(model.gram).tolist(),
        "memory_dim": r,
        "c_q": model.c_q,
        "c_q0": model.c_q0,
        "renyi": {str(a): v for a, v in model.complexity.renyi.items()},
        "residuals": residuals,
        "tolerance": tol,
        "passed": passed,
    }


def format_analysis(result: dict) -> str:
    lines = [f"machine: {result['name'] or '(unnamed)'}"]
    lines.append(f"  states: {', '.join(result['states'])}; alphabet: {', '.join(result['alphabet'])}")
    lines.append("  stationary distribution: " + ", ".join(f"{s}={p:.6f}" for s, p in result["pi"].items()))
    lines.append(f"  C_mu  = {result['c_mu']:.6f} bits    C_mu0 = {result['c_mu0']:.6f} bits")
    lines.append(f"  C_q   = {result['c_q']:.6f} bits    C_q0  = {result['c_q0']:.6f} bits")
    lines.append(f"  memory dimension: {result['memory_dim']}")
    lines.append(f"  Markov order: {result['markov_order']}")
    lines.append("  overlaps c_ij:")
    for s, row in zip(result["states"], result["gram"]):
        lines.append(f"    {s:>8}: " + " ".join(f"{v:.6f}" for v in row))
    lines.append("  verification residuals:")
    for key, value in result["residuals"].items():
        lines.append(f"    {key:<26}{value:.3e}" if isinstance(value, float) else f"    {key:<26}{value}")
    lines.append(f"  status: {'PASS' if result['passed'] else 'FAIL'} (tolerance {result['tolerance']:g})")
    return "\n".join(lines) + "\n"


def convergence_rows(p: float, q: float, L_max: int) -> list:
    """``tilde C_q(L)`` for ``L = 0..L_max`` against constant ``C_mu`` and ``C_q``."""
    if L_max < 0:
        raise ValueError("L_max must be non-negative")
    m = upset_gambler(p, q)
    model = build_quantum_model(m)
    c_mu = classical_complexity(m, model.pi.pi)
    return [
        {"L": t.L, "tilde_cq": t.tilde_cq, "c_mu": c_mu, "c_q": model.c_q}
        for t in eta_overlap_sequence(m, model.pi.pi, L_max)
    ]


CONVERGENCE_COLUMNS = ["L", "tilde_cq", "c_mu", "c_q"]
SURFACE_COLUMNS = ["p", "q", "c_mu", "c_q", "ratio"]


@dataclass(frozen=True)
class SweepGrid:
    p: tuple
    q: tuple
    exclusion: float = 1e-3

    @property
    def p_values(self) -> np.ndarray:
        return _axis(*self.p)

    @property
    def q_values(self) -> np.ndarray:
        return _axis(*self.q)

    def excluded(self, p: float, q: float) -> bool:
        return abs(p - q) < self.exclusion or not (0 < p < 1 and 0 < q < 1)


def _axis(lo: float, hi: float, count: int) -> np.ndarray:
    return np.linspace(lo, hi, count)


def parse_grid(text: str, exclusion: float = 1e-3) -> SweepGrid:
    """Parse ``"pmin:pmax:n,qmin:qmax:n"``.

    Each axis needs at least two points unless it is pinned (``min == max``).
    """
    try:
        axes = []
        for part in text.split(","):
            lo, hi, count = part.split(":")
            axes.append((float(lo), float(hi), int(count)))
        (p, q) = axes
    except ValueError:
        raise ValueError(f"grid must look like 'pmin:pmax:n,qmin:qmax:n', got {text!r}") from None
    for lo, hi, count in axes:
        if count < 1 or (count < 2 and lo != hi):
            raise ValueError("each grid axis needs count >= 2 (or min == max with count 1)")
        if not all(math.isfinite(v) for v in (lo, hi)):
            raise ValueError("grid bounds must be finite")
    return SweepGrid(p=p, q=q, exclusion=exclusion)


def _surface_cell(p: float, q: float) -> dict:
    m = upset_gambler(p, q)
    pi = stationary_distribution(m).pi
    model = build_quantum_model(m)
    c_mu = classical_complexity(m, pi)
    return {"p": p, "q": q, "c_mu": c_mu, "c_q": model.c_q, "ratio": model.c_q / c_mu}


def surface_rows(grid: SweepGrid) -> list:
    """Row-major ``(p, q)`` sweep; excluded cells keep ``p, q`` with empty metrics."""
    rows = []
    for p in grid.p_values.tolist():
        for q in grid.q_values.tolist():
            if grid.excluded(p, q):
                rows.append({"p": p, "q": q})
            else:
                rows.append(_surface_cell(p, q))
    return rows


def simulate_stream(m: EpsilonMachine, length: int, seed: int, start="stationary") -> dict:
    """Seeded q-simulator run with symbol frequencies and, for long runs, a TV check."""
    _require_valid(m)
    model = build_quantum_model(m)
    sim = init_simulator(model, start=start, seed=seed)
    xs = [sim.step() for _ in range(length)]
    stream = m.format_word(xs)
    counts = np.bincount(np.asarray(xs, dtype=np.int64), minlength=m.n_symbols)
    freqs = {a: (counts[x] / length if length else 0.0) for x, a in enumerate(m.alphabet)}
    out = {"stream": stream, "length": length, "seed": seed, "frequencies": freqs, "tv_length3": None}
    if length >= 10_000:
        exact = exact_distribution(m, model.pi.pi, 3)
        out["tv_length3"] = tv_distance(stream_distribution(m, stream, 3), exact)
    return out
