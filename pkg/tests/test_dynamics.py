import math

import numpy as np
import pytest

from tensorpole.errors import FitError, IncompleteDataError, UnsupportedRegimeError
from tensorpole.dynamics import (
    Drive,
    ModulationSpec,
    degenerate_sq_couplings,
    degenerate_sq_reference,
    direct_gamma_set,
    evolve,
    fit_rabi,
    gamma_direct,
    gamma_simulated,
    modulated_hamiltonian,
    prepare_state,
    preparation_unitary,
    pulse_sequence,
    reconstruct_qgt,
    resonance_scan,
    resonant_spec,
    transition_frequency,
)
from tensorpole.geometry import qgt_analytic, qgt_perturbative
from tensorpole.model import ParamPoint, build_hamiltonian, param_derivative

H0 = 2 * math.pi * 2


def _rel(sim, direct):
    return abs(sim - direct) / direct


# modulation spec and Hamiltonian -------------------------------------------

def test_spec_validation():
    p = ParamPoint(H0, 0.5)
    with pytest.raises(ValueError):
        ModulationSpec(p, H0, {"gamma": 0.01})
    with pytest.raises(ValueError):
        ModulationSpec(p, H0, {"alpha": 0.0})
    with pytest.raises(ValueError):
        ModulationSpec(p, H0, {"alpha": 0.5})
    with pytest.raises(ValueError):
        ModulationSpec(p, H0, {"alpha": 0.01}, pattern="elliptical")
    with pytest.raises(ValueError):
        ModulationSpec(p, -1.0, {"alpha": 0.01})
    with pytest.raises(ValueError):
        ModulationSpec(p, H0, {"alpha": 0.01}, signs={"alpha": 2})


def test_modulated_hamiltonian_at_time_zero():
    p = ParamPoint(H0, 0.5, 0.2, 0.3)
    lin = ModulationSpec(p, H0, {"alpha": 0.03, "beta": 0.03})
    np.testing.assert_allclose(modulated_hamiltonian(lin, 0.0), build_hamiltonian(p), atol=1e-13)
    ell = ModulationSpec(p, H0, {"alpha": 0.03, "beta": 0.03}, pattern="elliptical")
    expected = build_hamiltonian(ParamPoint(H0, 0.53, 0.2, 0.3))
    np.testing.assert_allclose(modulated_hamiltonian(ell, 0.0), expected, atol=1e-13)


def test_taylor_remainder_is_second_order():
    p = ParamPoint(H0, 0.7, 0.4, 1.1, 3.0)
    t = 0.37
    remainders = []
    for m in (0.02, 0.01, 0.005):
        spec = ModulationSpec(p, H0, {"alpha": m, "phi": m}, pattern="elliptical")
        off = spec.offsets(t)
        linear = build_hamiltonian(p) + sum(off[ax] * param_derivative(p, ax) for ax in off)
        remainders.append(np.max(np.abs(modulated_hamiltonian(spec, t) - linear)))
    ratios = [remainders[k] / remainders[k + 1] for k in range(2)]
    assert all(3.5 < r < 4.5 for r in ratios)
    assert remainders[0] <= H0 * 0.02**2


# evolution -----------------------------------------------------------------

def test_static_evolution_example():
    H = build_hamiltonian(ParamPoint(H0, math.pi / 4))
    trace = evolve(H, np.array([0, 1, 0], dtype=complex), 1.0, basis="ms")
    s2 = np.sin(H0 * trace.times) ** 2
    np.testing.assert_allclose(trace.populations[:, 1], 1 - s2, atol=1e-10)
    np.testing.assert_allclose(trace.populations[:, 0], s2 / 2, atol=1e-10)
    np.testing.assert_allclose(trace.populations[:, 2], s2 / 2, atol=1e-10)


def test_zero_hamiltonian_keeps_state():
    psi = np.array([0.6, 0.8j, 0.0])
    trace = evolve(np.zeros((3, 3)), psi, 2.0, dt=0.01, basis="ms")
    np.testing.assert_allclose(trace.states, np.tile(psi, (len(trace.times), 1)), atol=1e-15)


def test_evolution_errors():
    H = build_hamiltonian(ParamPoint(H0, 0.5))
    with pytest.raises(ValueError, match="unit norm"):
        evolve(H, np.array([1.0, 1.0, 0.0]), 1.0)
    with pytest.raises(ValueError, match="step too large"):
        evolve(H, np.array([1.0, 0, 0]), 1.0, dt=0.1)


def test_unitarity_and_closure_over_long_drive():
    spec = resonant_spec(ParamPoint(H0, 0.9, 0.3, 1.0, 2.0), "alpha.phi_ell", "DQ")
    psi0 = preparation_unitary("u-", spec.base)[0][:, 1]
    trace = evolve(spec, psi0, 300 * spec.period, basis="eigen")
    assert len(trace.times) > 10_000
    assert np.max(np.abs(np.linalg.norm(trace.states, axis=1) - 1)) <= 1e-10
    assert np.max(np.abs(trace.populations.sum(axis=1) - 1)) <= 1e-9


def test_callable_source_matches_periodic_spec():
    spec = ModulationSpec(ParamPoint(H0, 0.5), 2 * H0, {"beta": 0.05})
    psi0 = np.array([0, 1, 0], dtype=complex)
    periodic = evolve(spec, psi0, 5 * spec.period, basis="ms")
    dt = periodic.times[1]
    generic = evolve(lambda t: modulated_hamiltonian(spec, t), psi0, 5 * spec.period, dt=dt, basis="ms")
    np.testing.assert_allclose(generic.states[-1], periodic.states[-1], atol=1e-9)


# preparation ---------------------------------------------------------------

def test_ground_state_recipe_example():
    seq = pulse_sequence("u-", ParamPoint(H0, math.pi / 4), 2.0)
    assert seq.t_minus == pytest.approx(math.pi / 12)


def test_middle_state_recipe():
    seq = pulse_sequence("u0", ParamPoint(H0, math.pi / 2, 0.4, 1.3), 3.0)
    assert seq.t_plus == pytest.approx(math.pi / 6)
    assert seq.delta_minus == pytest.approx(1.3 + math.pi) and seq.delta_plus == pytest.approx(0.4)


def test_preparation_at_pole():
    state = prepare_state("u-", ParamPoint(H0, 0.0, 0.5, 0.3), 1.0).state
    expected = np.array([-np.exp(-0.5j), 1, 0]) / math.sqrt(2)
    assert abs(np.vdot(expected, state)) ** 2 == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("target", ["u-", "u0"])
def test_preparation_fidelity(target):
    rng = np.random.default_rng(5)
    for a, b, c in rng.uniform(0, 1, (20, 3)) * [math.pi / 2, 2 * math.pi, 2 * math.pi]:
        assert prepare_state(target, ParamPoint(H0, a, b, c), 2.0).fidelity >= 1 - 1e-9


def test_preparation_with_field():
    p = ParamPoint(H0, 0.6, bz=3.0)
    with pytest.raises(UnsupportedRegimeError):
        pulse_sequence("u-", p, 1.0)
    W, recipe = preparation_unitary("u-", p)
    assert not recipe
    np.testing.assert_allclose(W.conj().T @ W, np.eye(3), atol=1e-12)


# transition elements -------------------------------------------------------

def test_gamma_direct_examples():
    p = ParamPoint(H0, math.pi / 4)
    assert gamma_direct(p, "alpha", "SQ").value == pytest.approx(H0 / math.sqrt(2))
    assert gamma_direct(p, "alpha", "DQ").value == pytest.approx(0.0, abs=1e-12)
    e = np.linalg.eigvalsh(build_hamiltonian(p))
    g_aa = sum(gamma_direct(p, "alpha", tr).value ** 2 / (e[n] - e[0]) ** 2
               for tr, n in (("SQ", 1), ("DQ", 2)))
    assert g_aa == pytest.approx(0.5)


def test_gamma_constant_under_beta_rotation():
    for label in ("alpha", "beta.phi", "beta.phi_bar"):
        values = [gamma_direct(ParamPoint(H0, math.pi / 8, b, 0.0), label, "DQ").value
                  for b in np.linspace(0, 2 * math.pi, 9)]
        assert np.ptp(values) <= 1e-10 * H0


def test_reconstruction_from_direct_elements():
    p = ParamPoint(H0, 5 * math.pi / 16)
    q = reconstruct_qgt(direct_gamma_set(p), np.linalg.eigvalsh(build_hamiltonian(p)))
    ref = qgt_analytic(p.alpha)
    assert np.max(np.abs(q.g - ref.g)) <= 1e-10
    assert np.max(np.abs(q.f - ref.f)) <= 1e-10


def test_reconstruction_with_field():
    p = ParamPoint(H0, 0.7, 0.2, 0.9, 0.4 * H0)
    q = reconstruct_qgt(direct_gamma_set(p), np.linalg.eigvalsh(build_hamiltonian(p)))
    ref = qgt_perturbative(p)
    assert np.max(np.abs(q.g - ref.g)) <= 1e-10
    assert np.max(np.abs(q.f - ref.f)) <= 1e-10


def test_reconstruction_needs_complete_set():
    p = ParamPoint(H0, 0.5)
    gammas = direct_gamma_set(p)
    gammas.pop(("alpha.beta_bar", "DQ"))
    with pytest.raises(IncompleteDataError, match="alpha.beta_bar"):
        reconstruct_qgt(gammas, np.linalg.eigvalsh(build_hamiltonian(p)))


def test_drive_labels_round_trip():
    for label in ("alpha", "alpha.beta", "beta.phi_bar", "alpha.phi_ell", "alpha.beta_bar_ell"):
        assert Drive.parse(label).label == label
    with pytest.raises(ValueError):
        Drive("alpha", "alpha")


# simulated spectroscopy ----------------------------------------------------

def test_simulated_dq_elliptical_example():
    p = ParamPoint(H0, math.pi / 4)
    sim = gamma_simulated(resonant_spec(p, "beta.phi_ell", "DQ"), "DQ")
    direct = gamma_direct(p, "beta.phi_ell", "DQ").value
    assert _rel(sim.element.value, direct) <= 0.02
    assert sim.pulse_recipe and len(sim.cycle_values) == 2


def test_simulated_sq_single_axis_uses_ladder_frequency():
    p = ParamPoint(H0, 1.0)
    spec = resonant_spec(p, "alpha", "SQ")
    sim = gamma_simulated(spec, "SQ")
    b1, b2 = degenerate_sq_couplings(spec)
    assert sim.fit.frequency == pytest.approx(2 * math.hypot(b1, b2), rel=0.02)
    assert _rel(sim.element.value, gamma_direct(p, "alpha", "SQ").value) <= 0.02


def test_forbidden_element_reads_zero():
    p = ParamPoint(H0, math.pi / 4)
    sim = gamma_simulated(resonant_spec(p, "alpha", "DQ"), "DQ")
    assert sim.element.value <= 0.02 * H0


@pytest.mark.parametrize("bz", [0.0, 0.4 * H0], ids=["zero-field", "field"])
def test_rwa_consistency(bz):
    worst = {1 / 30: 0.0, 1 / 10: 0.0}
    for m in worst:
        for label in ("alpha", "beta", "phi", "alpha.beta", "alpha.phi_bar_ell", "beta.phi_ell"):
            for tr in ("SQ", "DQ"):
                for alpha in (0.4, 1.0):
                    p = ParamPoint(H0, alpha, bz=bz)
                    direct = gamma_direct(p, label, tr).value
                    if direct < 0.1 * H0:
                        continue
                    sim = gamma_simulated(resonant_spec(p, label, tr, m), tr).element.value
                    worst[m] = max(worst[m], _rel(sim, direct))
    assert worst[1 / 30] <= 0.02
    assert worst[1 / 10] <= 0.08
    assert worst[1 / 30] < worst[1 / 10]


def test_sign_pattern_contract():
    # flipping the second axis swaps the elliptical patterns in both channels
    p = ParamPoint(H0, 0.6, bz=0.4 * H0)
    for tr in ("SQ", "DQ"):
        plus = gamma_direct(p, "alpha.beta_ell", tr).value
        minus = gamma_direct(p, "alpha.beta_bar_ell", tr).value
        assert abs(plus - minus) > 0.2 * plus
        spec = resonant_spec(p, "alpha.beta_ell", tr)
        flipped = ModulationSpec(spec.base, spec.omega, spec.amplitudes, spec.pattern, {"beta": -1})
        assert _rel(gamma_simulated(flipped, tr).element.value, minus) <= 0.02


@pytest.mark.parametrize("label", ["alpha.beta", "alpha.beta_ell", "beta.phi_bar"])
def test_pair_drive_follows_degenerate_ladder(label):
    # two axes at m/sqrt(2) each keep the combined amplitude at m = 1/30
    for alpha in (0.3, math.pi / 5, 1.2):
        p = ParamPoint(H0, alpha)
        spec = resonant_spec(p, label, "SQ", m=1 / 30 / math.sqrt(2))
        b1, b2 = degenerate_sq_couplings(spec)
        W, _ = preparation_unitary("u0", p)
        trace = evolve(spec, W[:, 1], 5 * math.pi / math.hypot(b1, b2), basis="eigen")
        assert np.max(np.abs(trace.populations - degenerate_sq_reference(b1, b2, trace.times))) <= 2e-2


def test_degenerate_reference_examples():
    np.testing.assert_allclose(degenerate_sq_reference(1.0, 1.0, math.pi / (2 * math.sqrt(2))),
                               [0.5, 0.0, 0.5], atol=1e-15)
    np.testing.assert_allclose(degenerate_sq_reference(2.0, 1.0, 0.0), [0, 1, 0])
    with pytest.raises(ValueError):
        degenerate_sq_reference(0.0, 0.0, 1.0)


def test_resonance_scan_peak():
    template = Drive("beta", "phi").spec(ParamPoint(H0, math.pi / 4), 2 * H0, 1 / 30)
    omegas = np.linspace(1.95 * H0, 2.05 * H0, 41)
    spec = resonance_scan(template, omegas, math.pi / (H0 / 30))
    assert abs(spec.peak_omega - 2 * H0) <= spec.step
    with pytest.raises(ValueError):
        resonance_scan(template, omegas, 0.0)


def test_resonance_flat_at_tiny_amplitude():
    template = Drive("beta", "phi").spec(ParamPoint(H0, math.pi / 4), 2 * H0, 1e-6)
    spec = resonance_scan(template, np.linspace(1.9 * H0, 2.1 * H0, 11), 7.5)
    assert np.max(spec.transfer) <= 1e-8


def test_sq_resonances_split_in_field():
    p = ParamPoint(H0, 0.6, bz=0.4 * H0)
    e = np.linalg.eigvalsh(build_hamiltonian(p))
    lower, upper = e[1] - e[0], e[2] - e[1]
    assert abs(lower - upper) > 0.1 * H0
    assert transition_frequency(p, "SQ") == pytest.approx(lower)
    template = ModulationSpec(p, lower, {"alpha": 1 / 30})
    omegas = np.linspace(lower - 0.05 * H0, lower + 0.05 * H0, 31)
    spec = resonance_scan(template, omegas, math.pi / (H0 / 30))
    assert abs(spec.peak_omega - lower) <= spec.step


# fitting -------------------------------------------------------------------

def test_fit_recovers_sinusoid():
    t = np.linspace(0, 10, 400)
    y = 0.4 + 0.3 * np.cos(2.7 * t + 0.5)
    fit = fit_rabi(t, y)
    assert fit.frequency == pytest.approx(2.7, rel=1e-9)
    assert fit.amplitude == pytest.approx(0.3, rel=1e-9)
    assert fit.offset == pytest.approx(0.4, abs=1e-9)
    assert fit.residual_rms <= 1e-10
    np.testing.assert_allclose(fit.evaluate(t), y, atol=1e-9)


def test_fit_flat_and_invalid():
    fit = fit_rabi(np.linspace(0, 1, 20), np.full(20, 0.3))
    assert fit.amplitude == 0.0 and fit.offset == pytest.approx(0.3)
    with pytest.raises(ValueError):
        fit_rabi([0, 1, 2], [0, 1, 0])


def test_fit_failure_is_reported():
    p = ParamPoint(H0, math.pi / 4)
    spec = resonant_spec(p, "alpha", "SQ", m=0.2)
    with pytest.raises(FitError):
        gamma_simulated(spec, "SQ", residual_limit=1e-6, phase_cycle=False)
