"""Simulator for a cavity-enhanced colour-centre single-photon source.

The package models a multi-level emitter (one excited state over a ladder
of vibrational ground sublevels) coupled to a lossy single-mode cavity
whose output feeds a waveguide.  It provides a Lindblad master-equation
solver, a Monte-Carlo wavefunction trajectory engine with photodetection
bookkeeping, closed-form pulse statistics, spectral analysis and an HBT
coincidence simulator, together with a config-driven CLI that emits
figure-ready CSV data.
"""

__version__ = "0.1.0"

from .analysis import (
    PhotonStats,
    SpectrumResult,
    closed_form_stats,
    emission_spectrum,
    overall_damping_rate,
    pulse_param_sweep,
)
from .hbt import CorrelationHistogram, HBTConfig, HBTResult, photon_number_per_trigger, simulate_hbt
from .mcsolve import EnsembleResult, TrajectoryRecord, ensemble_average, run_trajectory
from .mesolve import (
    EmissionResult,
    IntegratorConfig,
    StiffnessError,
    channel_resolved_sweep,
    integrate,
    liouvillian_apply,
)
from .model import (
    CavityConfig,
    CouplingSpec,
    NVLevelScheme,
    PumpPulse,
    SystemModel,
    Truncation,
    build_channels,
    build_hamiltonian,
    coupling_from_dipole,
    full_model,
    kappa_from_q,
    purcell_factor,
    reduced_phonon_model,
    spontaneous_coupling_beta,
    two_level_model,
)
from .quantum import (
    DensityMatrix,
    HilbertSpace,
    Operator,
    StateVector,
    basis_state,
    expectation,
    kron_embed,
)

__all__ = [
    "__version__",
    "PhotonStats",
    "SpectrumResult",
    "closed_form_stats",
    "emission_spectrum",
    "overall_damping_rate",
    "pulse_param_sweep",
    "CorrelationHistogram",
    "HBTConfig",
    "HBTResult",
    "photon_number_per_trigger",
    "simulate_hbt",
    "EnsembleResult",
    "TrajectoryRecord",
    "ensemble_average",
    "run_trajectory",
    "EmissionResult",
    "IntegratorConfig",
    "StiffnessError",
    "channel_resolved_sweep",
    "integrate",
    "liouvillian_apply",
    "CavityConfig",
    "CouplingSpec",
    "NVLevelScheme",
    "PumpPulse",
    "SystemModel",
    "Truncation",
    "build_channels",
    "build_hamiltonian",
    "coupling_from_dipole",
    "full_model",
    "kappa_from_q",
    "purcell_factor",
    "reduced_phonon_model",
    "spontaneous_coupling_beta",
    "two_level_model",
    "DensityMatrix",
    "HilbertSpace",
    "Operator",
    "StateVector",
    "basis_state",
    "expectation",
    "kron_embed",
]
