"""Time-domain emulation of the parametric-modulation experiment."""

from .experiment import (
    Drive,
    PipelineResult,
    PreparedState,
    PulseSequence,
    ResonanceSpectrum,
    SimulatedGamma,
    TransitionElement,
    degenerate_sq_couplings,
    degenerate_sq_reference,
    direct_gamma_set,
    emulate_experiment,
    gamma_direct,
    gamma_simulated,
    prepare_state,
    preparation_unitary,
    pulse_sequence,
    pulse_unitary,
    reconstruct_qgt,
    resonance_scan,
    resonant_spec,
    simulated_gamma_set,
    transition_frequency,
)
from .fitting import RabiFit, fit_rabi
from .modulation import ModulationSpec, RabiTrace, evolve, modulated_hamiltonian, modulated_hamiltonians
from .readout import ReadoutError, ReadoutModel, three_readout_solve

__all__ = [
    "Drive", "ModulationSpec", "PipelineResult", "PreparedState", "PulseSequence", "RabiFit",
    "RabiTrace", "ReadoutError", "ReadoutModel", "ResonanceSpectrum", "SimulatedGamma",
    "TransitionElement", "degenerate_sq_couplings", "degenerate_sq_reference",
    "direct_gamma_set", "emulate_experiment", "evolve", "fit_rabi", "gamma_direct",
    "gamma_simulated", "modulated_hamiltonian", "modulated_hamiltonians", "prepare_state",
    "preparation_unitary", "pulse_sequence", "pulse_unitary", "reconstruct_qgt",
    "resonance_scan", "resonant_spec", "simulated_gamma_set", "three_readout_solve",
    "transition_frequency",
]
