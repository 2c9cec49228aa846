"""Dynamical maps for hybrid generators: semi-Markov population transfer
driven by a memory kernel, Markovian pure decoherence on top, and the
positivity bookkeeping (witness matrices, Choi spectra, minimal dephasing
repair) that the combination requires."""

from .cp_restore import (
    DephasingSchedule,
    RestorationResult,
    max_coherence_schedule,
    minimal_uniform_dephasing,
)
from .hybrid_map import (
    CPWitness,
    DecoherenceModel,
    HybridGeneratorSpec,
    MapTrajectory,
    assemble_and_apply,
    build_trajectory,
    coherence_trajectory,
    cp_witness,
    decoherence_factors,
    population_trajectory,
)
from .numkit import TimeGrid, grid_convolve, hermitian_min_eig, semigroup_exp
from .qubit_ref import Fig1Data, QubitCurves, QubitParams, closed_forms, fig1_dataset
from .sampler import NoiseAverage, TrajectoryBatch, average_dephasing_noise, sample_semi_markov
from .semi_markov import (
    JumpKernel,
    KernelViolation,
    RateKernel,
    ValidityReport,
    build_T_series,
    ensure_valid,
    rates_from_jump_kernel,
    survival_and_waiting,
    validate_jump_kernel,
)
from .volterra import VolterraProblem, solve_expsum_embedding, solve_quadrature

__version__ = "0.1.0"

__all__ = [
    "CPWitness",
    "DecoherenceModel",
    "DephasingSchedule",
    "Fig1Data",
    "HybridGeneratorSpec",
    "JumpKernel",
    "KernelViolation",
    "MapTrajectory",
    "NoiseAverage",
    "QubitCurves",
    "QubitParams",
    "RateKernel",
    "RestorationResult",
    "TimeGrid",
    "TrajectoryBatch",
    "ValidityReport",
    "VolterraProblem",
    "assemble_and_apply",
    "average_dephasing_noise",
    "build_T_series",
    "build_trajectory",
    "closed_forms",
    "coherence_trajectory",
    "cp_witness",
    "decoherence_factors",
    "ensure_valid",
    "fig1_dataset",
    "grid_convolve",
    "hermitian_min_eig",
    "max_coherence_schedule",
    "minimal_uniform_dephasing",
    "population_trajectory",
    "rates_from_jump_kernel",
    "sample_semi_markov",
    "semigroup_exp",
    "solve_expsum_embedding",
    "solve_quadrature",
    "survival_and_waiting",
    "validate_jump_kernel",
]
