"""Unitary quantum simulators (q-simulators) for stationary stochastic processes.

Given an epsilon-machine, qsf solves for the overlaps of the simulator's
memory states, builds the memory vectors and a real orthogonal interaction
``U``, computes classical and quantum complexities, and runs the simulator.
"""
from .errors import ConvergenceError, DegenerateMachineError, DimensionCapError, MachineSpecError
from .gram import (
    EtaOverlapTable,
    GramMatrix,
    PairTransitionMatrix,
    effective_cryptic_order,
    eta_overlap_sequence,
    eta_overlaps,
    gram_residual,
    gram_series,
    pair_matrix,
    solve_gram,
    spectral_radius,
)
from .machine import (
    EpsilonMachine,
    StationaryDistribution,
    ValidationReport,
    advance,
    alternating_process,
    biased_coin,
    classical_complexity,
    dump_machine,
    markov_order_bound,
    parse_machine,
    random_machine,
    sample_classical,
    stationary_distribution,
    topological_complexity,
    upset_gambler,
    validate,
    word_probability,
)
from .quantum import (
    MemoryStateSet,
    QuantumModel,
    SteadyStateOperator,
    UnitaryModel,
    build_quantum_model,
    build_unitary,
    memory_channel_fixed_point,
    memory_states,
    quantum_complexity,
    quantum_topological,
    renyi_entropy,
    steady_state_operator,
    verify_unitary,
)
from .simulate import (
    SimulatorState,
    conditional_memory_entropy,
    empirical_distribution,
    exact_distribution,
    init_simulator,
    joint_overlap_invariance,
    joint_state,
    run,
    step,
    tv_distance,
)

__version__ = "0.1.0"
