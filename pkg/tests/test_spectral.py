import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tensorpole.model import CartesianPoint, ParamPoint, build_hamiltonian, cartesian_hamiltonian, perturbation_term
from tensorpole.spectral import (
    analytic_eigenvalues_planar,
    band_gap,
    cardano_eigenvalues,
    eigensystem,
    nodal_scan,
)

H0 = 2 * math.pi * 2
BZ = 2 * math.pi


def test_ground_state_example():
    es = eigensystem(build_hamiltonian(ParamPoint(H0, math.pi / 4)))
    expected = np.array([-1 / math.sqrt(2), 1, -1 / math.sqrt(2)]) / math.sqrt(2)
    np.testing.assert_allclose(es.ground, expected, atol=1e-12)
    # the middle state has no m_s = 0 weight here, so it takes the fallback rule
    assert es.gauge == "v2-real;fallback=1"


def test_field_only_eigenvectors_are_canonical():
    es = eigensystem(build_hamiltonian(ParamPoint(0.0, bz=BZ)))
    np.testing.assert_allclose(np.abs(es.states), np.eye(3)[:, ::-1], atol=1e-14)
    assert "fallback" in es.gauge


def test_triple_degeneracy_labelled():
    es = eigensystem(np.zeros((3, 3)))
    assert "degenerate" in es.gauge
    np.testing.assert_allclose(es.states.conj().T @ es.states, np.eye(3), atol=1e-14)


def test_non_hermitian_rejected():
    with pytest.raises(ValueError, match="Hermitian"):
        eigensystem(np.array([[0, 1, 0], [0, 0, 0], [0, 0, 0]], dtype=complex))
    with pytest.raises(ValueError):
        eigensystem(np.eye(3), gauge="weird")


@given(st.lists(st.floats(-10, 10), min_size=9, max_size=9))
def test_random_hermitian_residuals(values):
    a = np.array(values)
    M = np.zeros((3, 3), dtype=complex)
    M[np.triu_indices(3)] = a[:6]
    M[0, 1] += 1j * a[6]
    M[0, 2] += 1j * a[7]
    M[1, 2] += 1j * a[8]
    H = M + np.triu(M, 1).conj().T
    H[np.diag_indices(3)] = np.real(np.diag(H))
    es = eigensystem(H)
    scale = max(1.0, np.max(np.abs(H)))
    assert np.max(np.abs(H @ es.states - es.states * es.energies)) <= 1e-10 * scale
    assert np.max(np.abs(es.states.conj().T @ es.states - np.eye(3))) <= 1e-10
    assert np.all(np.diff(es.energies) >= 0)


def test_bit_identical_repeats():
    H = build_hamiltonian(ParamPoint(H0, 0.3, 1.2, 2.4, 3.0))
    a, b = eigensystem(H), eigensystem(H.copy())
    assert a.energies.tobytes() == b.energies.tobytes()
    assert a.states.tobytes() == b.states.tobytes()


def test_gauge_pins_middle_component_real():
    es = eigensystem(build_hamiltonian(ParamPoint(H0, 0.7, 2.0, 4.0, 5.0)))
    for i in range(3):
        assert abs(es.states[1, i].imag) <= 1e-15 and es.states[1, i].real > 0


def test_cardano_matches_lapack():
    rng = np.random.default_rng(7)
    for _ in range(50):
        p = ParamPoint(H0, *rng.uniform(0, 2 * math.pi, 3), rng.uniform(-20, 20))
        H = build_hamiltonian(p)
        np.testing.assert_allclose(cardano_eigenvalues(H), np.linalg.eigvalsh(H), atol=1e-10 * H0)


def test_planar_examples():
    e = analytic_eigenvalues_planar(BZ, 0.0, BZ)
    assert e[0] == pytest.approx(-BZ / math.sqrt(2)) and e[1] == pytest.approx(-BZ / math.sqrt(2))
    np.testing.assert_allclose(analytic_eigenvalues_planar(0, 0, BZ),
                               [-BZ / math.sqrt(2), 0, BZ / math.sqrt(2)], atol=1e-14)


def test_planar_matches_diagonalization_1000_draws():
    rng = np.random.default_rng(11)
    worst = 0.0
    for qx, qy, bz in rng.uniform(-30, 30, (1000, 3)):
        H = cartesian_hamiltonian(CartesianPoint(qx, qy, 0.0, 0.0), bz)
        diff = np.max(np.abs(analytic_eigenvalues_planar(qx, qy, bz) - eigensystem(H).energies))
        worst = max(worst, diff / max(1.0, np.max(np.abs(H))))
    assert worst <= 1e-12


def test_chiral_spectrum_at_zero_field():
    rng = np.random.default_rng(3)
    for q in rng.normal(size=(20, 4)) * 10:
        E = np.linalg.norm(q)
        e = eigensystem(cartesian_hamiltonian(CartesianPoint(*q))).energies
        np.testing.assert_allclose(e, [-E, 0, E], atol=1e-12 * E)


def test_band_gap_examples():
    assert band_gap(np.zeros((3, 3)), "lower") == 0 and band_gap(np.zeros((3, 3)), "upper") == 0
    assert band_gap(build_hamiltonian(ParamPoint(H0, 0.0, bz=H0)), "lower") <= 1e-12 * H0
    H = build_hamiltonian(ParamPoint(H0, math.pi / 4))
    assert band_gap(H, "lower") == pytest.approx(H0) and band_gap(H, "upper") == pytest.approx(H0)
    with pytest.raises(ValueError):
        band_gap(H, "middle")


def test_nodal_ring_radius():
    r = nodal_scan(BZ, "qx-qy", 2 * math.pi * 2, 256, threshold=1e-3 * H0)
    assert abs(r.ring_radius_estimate - BZ) <= r.spacing
    assert len(r.nodal_points) > 0


def test_nodal_weyl_point_at_zero_field():
    r = nodal_scan(0.0, "qx-qy", H0, 257)
    assert r.ring_radius_estimate <= r.spacing
    assert r.min_gap == 0.0


def test_lambda5_gaps_the_ring():
    r = nodal_scan(BZ, "qx-qy", H0, 256, perturbation=perturbation_term("lambda5", 2 * math.pi * 0.3))
    assert r.min_gap > 1e-3 * H0
    assert len(r.nodal_points) == 0


def test_nodal_errors_and_csv(tmp_path):
    with pytest.raises(ValueError):
        nodal_scan(BZ, "qx-qy", H0, 1)
    with pytest.raises(ValueError):
        nodal_scan(BZ, "qy-qw", H0, 16)
    r = nodal_scan(BZ, "qz-qw", H0, 4)
    path = tmp_path / "gap.csv"
    r.to_csv(path, header_lines=["hello"], scale=0.5)
    lines = path.read_text().splitlines()
    assert lines[0] == "# hello"
    assert lines[1].startswith("# plane=qz-qw n=4")
    assert lines[2] == "qz,qw,gap"
    assert len(lines) == 3 + 16
