"""Quantum geometric tensor, Berry curvature, tensor connection and 3-form.

Conventions
-----------
``QGTensor.f`` is the curvature entering ``chi = g + i f / 2``, i.e.
``f = 2 Im chi``. The curl of the Berry connection ``A = i<u|du>`` is
``-f``; :func:`berry_curvature` returns that form. Parameter order is
(alpha, beta, phi).
"""

from __future__ import annotations

import cmath
import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSpectrumError, GaugeError, SingularityError
from .model import AXES, ParamPoint, raw_hamiltonian, raw_param_derivative
from .spectral import eigensystem

GAP_GUARD = 1e-9
RICHARDSON_STEP = 1e-5
ALPHA, BETA, PHI = 0, 1, 2


@dataclass(frozen=True)
class QGTensor:
    g: np.ndarray
    f: np.ndarray
    band: int = 0

    @property
    def chi(self) -> np.ndarray:
        return self.g + 0.5j * self.f


@dataclass(frozen=True)
class ConnectionSample:
    """Dressing ``phi_dressing`` and tensor connection ``b = Phi * F``."""

    phi_dressing: complex
    b: np.ndarray
    gauge: str


@dataclass(frozen=True)
class ThreeFormSample:
    value: float
    route: str
    gauge: str = ""
    check: float | None = None
    imag: float = 0.0


def _gap_scale(h0: float, H: np.ndarray) -> float:
    return h0 if h0 > 0 else float(np.max(np.abs(H)))


def _raw_args(p: ParamPoint):
    return p.h0, p.alpha, p.beta, p.phi, p.bz, p.delta_x


def _derivatives(h0, alpha, beta, phi) -> np.ndarray:
    return np.stack([raw_param_derivative(h0, alpha, beta, phi, ax) for ax in AXES])


def chi_from_eigensystem(energies: np.ndarray, states: np.ndarray,
                         derivs: np.ndarray, band: int) -> np.ndarray:
    """Sum-over-states QGT of ``band``; arrays may carry leading batch axes."""
    # matrix elements <n|dH_mu|m> for every mu
    elems = np.einsum("...in,...kij,...jm->...knm", states.conj(), derivs, states)
    others = [m for m in range(3) if m != band]
    chi = np.zeros(energies.shape[:-1] + (3, 3), dtype=complex)
    for m in others:
        de2 = (energies[..., band] - energies[..., m]) ** 2
        left = elems[..., :, band, m]
        right = elems[..., :, m, band]
        chi += np.einsum("...k,...l->...kl", left, right) / de2[..., None, None]
    return chi


def _check_gaps(energies: np.ndarray, scale: float, where: str) -> None:
    gaps = np.diff(energies)
    k = int(np.argmin(gaps))
    if gaps[k] <= GAP_GUARD * scale:
        name = ("lower (e0 - e_minus)", "upper (e_plus - e0)")[k]
        raise DegenerateSpectrumError(
            f"{name} gap {gaps[k]:.3e} closes {where}", gap=float(gaps[k]), pair=k
        )


def qgt_perturbative(p: ParamPoint, band: int = 0) -> QGTensor:
    """QGT by the sum over the other eigenstates of the analytic derivatives."""
    H = raw_hamiltonian(*_raw_args(p))
    energies, states = np.linalg.eigh(H)
    _check_gaps(energies, _gap_scale(p.h0, H), f"at {p}")
    chi = chi_from_eigensystem(energies, states, _derivatives(p.h0, p.alpha, p.beta, p.phi), band)
    return _tensor_from_chi(chi, band)


def _tensor_from_chi(chi: np.ndarray, band: int) -> QGTensor:
    g = np.real(chi)
    f = 2.0 * np.imag(chi)
    return QGTensor(0.5 * (g + g.T), 0.5 * (f - f.T), band)


def qgt_fd(p: ParamPoint, step: float = 1e-3, band: int = 0) -> QGTensor:
    """Finite-difference oracle built only from eigenvector overlaps.

    The metric comes from the fidelity ``1 - |<u(q-h e)|u(q+h e)>|^2`` along
    each axis and each axis-pair diagonal; the curvature from the phase of
    the Wilson loop around a centred square plaquette of side ``step``.
    """
    if not 0 < step <= 0.1:
        raise ValueError("step must lie in (0, 0.1]")
    base = np.array([p.alpha, p.beta, p.phi])

    def state(offset):
        a, b, c = base + offset
        H = raw_hamiltonian(p.h0, a, b, c, p.bz, p.delta_x)
        e, v = np.linalg.eigh(H)
        _check_gaps(e, _gap_scale(p.h0, H), f"inside the stencil at offset {offset}")
        return v[:, band]

    def fidelity_metric(direction):
        d = step * np.asarray(direction, dtype=float)
        ov = np.vdot(state(-d), state(d))
        return (1.0 - abs(ov) ** 2) / (4.0 * step**2)

    eye = np.eye(3)
    g = np.zeros((3, 3))
    f = np.zeros((3, 3))
    for mu in range(3):
        g[mu, mu] = fidelity_metric(eye[mu])
    for mu in range(3):
        for nu in range(mu + 1, 3):
            diag = fidelity_metric(eye[mu] + eye[nu])
            g[mu, nu] = g[nu, mu] = 0.5 * (diag - g[mu, mu] - g[nu, nu])
            h = 0.5 * step
            corners = [state(h * (sm * eye[mu] + sn * eye[nu]))
                       for sm, sn in ((-1, -1), (1, -1), (1, 1), (-1, 1))]
            loop = 1.0 + 0j
            for k in range(4):
                loop *= np.vdot(corners[k], corners[(k + 1) % 4])
            f[mu, nu] = cmath.phase(loop) / step**2
            f[nu, mu] = -f[mu, nu]
    return QGTensor(g, f, band)


def qgt_analytic(alpha: float) -> QGTensor:
    """Closed-form ground-state QGT at bz = delta_x = 0."""
    c, s = math.cos(alpha), math.sin(alpha)
    g = np.zeros((3, 3))
    g[ALPHA, ALPHA] = 0.5
    g[BETA, BETA] = c * c * (2.0 - c * c) / 4.0
    g[PHI, PHI] = s * s * (2.0 - s * s) / 4.0
    g[BETA, PHI] = g[PHI, BETA] = -math.sin(2 * alpha) ** 2 / 16.0
    f = np.zeros((3, 3))
    f[ALPHA, BETA] = math.sin(2 * alpha) / 2.0
    f[ALPHA, PHI] = -math.sin(2 * alpha) / 2.0
    f[BETA, ALPHA], f[PHI, ALPHA] = -f[ALPHA, BETA], -f[ALPHA, PHI]
    return QGTensor(g, f, 0)


def berry_curvature(qgt: QGTensor) -> np.ndarray:
    """Curl of the Berry connection ``A = i<u|du>`` (equals ``-qgt.f``)."""
    return -qgt.f


def three_form_from_metric(qgt: QGTensor) -> ThreeFormSample:
    """``4 sqrt(det g)`` over (alpha, beta, phi)."""
    det = float(np.linalg.det(qgt.g))
    if det < -1e-12:
        raise ValueError(f"metric determinant {det:.3e} is negative")
    return ThreeFormSample(4.0 * math.sqrt(max(det, 0.0)), "metric")


def phi_dressing(u: np.ndarray, gauge: str = "") -> complex:
    """``-(i/2) log(u1 u2 u3)`` on the principal branch."""
    u = np.asarray(u, dtype=complex)
    if np.min(np.abs(u)) <= 1e-9:
        raise GaugeError("a component of the state vanishes; the dressing log is singular")
    return -0.5j * cmath.log(complex(u[0] * u[1] * u[2]))


def unwrap_dressing(values) -> np.ndarray:
    """Remove 2 pi branch jumps of ``log`` along a sweep of dressings.

    ``Phi = -(i/2) log(...)`` so a log jump of ``2 pi i`` shifts Phi by pi.
    """
    values = np.asarray(values, dtype=complex)
    unwrapped_log_phase = np.unwrap(-2.0 * np.real(values))
    return -0.5 * unwrapped_log_phase + 1j * np.imag(values)


def ground_state(p_or_args, gauge: str = "v2-real"):
    args = _raw_args(p_or_args) if isinstance(p_or_args, ParamPoint) else p_or_args
    return eigensystem(raw_hamiltonian(*args), gauge=gauge)


def connection_sample(p: ParamPoint) -> ConnectionSample:
    es = ground_state(p)
    phase = phi_dressing(es.ground, es.gauge)
    curv = berry_curvature(qgt_perturbative(p))
    return ConnectionSample(phase, phase * curv, es.gauge)


def _pinned_ground(args) -> np.ndarray:
    es = ground_state(args)
    if abs(es.ground[1]) <= 1e-9 or es.energies[1] - es.energies[0] <= 0.0:
        raise GaugeError(f"v2-real gauge not applicable to the ground state ({es.gauge})")
    return es.ground


def _populations_difference(p: ParamPoint, alpha: float) -> float:
    u = _pinned_ground((p.h0, alpha, p.beta, p.phi, p.bz, p.delta_x))
    return abs(u[0]) ** 2 - abs(u[2]) ** 2


def richardson_derivative(func, x: float, step: float = RICHARDSON_STEP) -> float:
    """Central difference extrapolated from steps ``h`` and ``h/2``."""
    d1 = (func(x + step) - func(x - step)) / (2 * step)
    h = step / 2
    d2 = (func(x + h) - func(x - h)) / (2 * h)
    return (4.0 * d2 - d1) / 3.0


def three_form_from_connection(p: ParamPoint) -> ThreeFormSample:
    """``-(F_ab + F_pa)/2`` with F the curl of the Berry connection.

    The same value follows from ``-(1/2) d/dalpha (v1^2 - v3^2)`` on
    v2-real gauge-fixed eigenvectors; that derivative is stored in
    ``check``. The pinned gauge label travels with the value because this
    route is not gauge invariant once bz != 0.
    """
    es = ground_state(p)
    if abs(es.ground[1]) <= 1e-9:
        raise GaugeError("v2-real gauge needs a nonzero middle component")
    curv = berry_curvature(qgt_perturbative(p))
    value = -0.5 * (curv[ALPHA, BETA] + curv[PHI, ALPHA])
    check = -0.5 * richardson_derivative(lambda a: _populations_difference(p, a), p.alpha)
    return ThreeFormSample(float(value), "connection", es.gauge, float(check))


def _real_amplitudes(p: ParamPoint, alpha: float) -> tuple[float, float]:
    """(v1, v3) with the beta and phi phases stripped from the pinned state."""
    u = _pinned_ground((p.h0, alpha, p.beta, p.phi, p.bz, p.delta_x))
    v1 = u[0] * cmath.exp(1j * p.beta)
    v3 = u[2] * cmath.exp(1j * p.phi)
    return float(v1.real), float(v3.real)


def three_form_psi(p: ParamPoint) -> ThreeFormSample:
    """Alternative 3-form from the pseudoreal/complex scalar triple.

    Evaluates ``-(1/w)[e^{-i phi} v3 (v1^2)' - e^{-i beta} v1 (v3^2)']`` with
    ``w = e^{-i beta} v1 + e^{-i phi} v3``; the derivatives are along alpha.
    Non-real values (beta != phi away from bz = 0) keep their imaginary part
    in ``imag``.
    """
    v1, v3 = _real_amplitudes(p, p.alpha)
    w = cmath.exp(-1j * p.beta) * v1 + cmath.exp(-1j * p.phi) * v3
    if abs(w) <= 1e-9:
        raise SingularityError("u1 + u3 vanishes; the log field has a branch point here")
    d_v1sq = richardson_derivative(lambda a: _real_amplitudes(p, a)[0] ** 2, p.alpha)
    d_v3sq = richardson_derivative(lambda a: _real_amplitudes(p, a)[1] ** 2, p.alpha)
    bracket = cmath.exp(-1j * p.phi) * v3 * d_v1sq - cmath.exp(-1j * p.beta) * v1 * d_v3sq
    value = -bracket / w
    es = ground_state(p)
    return ThreeFormSample(float(value.real), "psi", es.gauge, imag=float(value.imag))


def displaced_three_form_analytic(h0: float, alpha: float, beta: float, delta_x: float) -> ThreeFormSample:
    """Closed-form 3-form on the unit-h0 sphere displaced by ``delta_x``."""
    ca, sa, cb = math.cos(alpha), math.sin(alpha), math.cos(beta)
    denom = delta_x**2 + h0**2 + 2.0 * h0 * delta_x * ca * cb
    if denom <= 1e-14 * max(h0, abs(delta_x), 1e-300) ** 2:
        raise SingularityError("the monopole lies on the integration sphere")
    value = h0**3 * ca * sa * (h0 + delta_x * ca * cb) / denom**2
    return ThreeFormSample(value, "displaced-analytic")


def displaced_three_form_grid(h0: float, alpha: np.ndarray, beta: np.ndarray, delta_x: float) -> np.ndarray:
    """Vectorized :func:`displaced_three_form_analytic` over broadcast grids."""
    ca, sa, cb = np.cos(alpha), np.sin(alpha), np.cos(beta)
    denom = delta_x**2 + h0**2 + 2.0 * h0 * delta_x * ca * cb
    if np.min(denom) <= 1e-14 * max(h0, abs(delta_x), 1e-300) ** 2:
        raise SingularityError("the monopole lies on the integration sphere")
    return h0**3 * ca * sa * (h0 + delta_x * ca * cb) / denom**2


def ground_chi_batch(h0: float, alphas: np.ndarray, bz: float, beta: float = 0.0,
                     phi: float = 0.0, delta_x: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Ground-state chi and spectra along a sweep of alpha.

    Returns ``(chi, energies)`` with shapes (N, 3, 3) and (N, 3).
    """
    alphas = np.asarray(alphas, dtype=float)
    H = np.stack([raw_hamiltonian(h0, a, beta, phi, bz, delta_x) for a in alphas])
    dH = np.stack([_derivatives(h0, a, beta, phi) for a in alphas])
    energies, states = np.linalg.eigh(H)
    # degenerate nodes give inf/nan here; callers guard them by the gaps
    with np.errstate(divide="ignore", invalid="ignore"):
        chi = chi_from_eigensystem(energies, states, dH, 0)
    return chi, energies


def geometry_table(h0: float, alphas, bz: float = 0.0) -> list[dict]:
    """Per-alpha metric, curvature and 3-form by each applicable route."""
    rows = []
    for a in alphas:
        p = ParamPoint(h0, float(a), 0.0, 0.0, bz)
        q = qgt_perturbative(p)
        row = {"alpha": float(a)}
        for (i, j), name in zip(
            [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)],
            ["g_aa", "g_ab", "g_ap", "g_bb", "g_bp", "g_pp"],
        ):
            row[name] = float(q.g[i, j])
        row["F_ab"], row["F_ap"], row["F_bp"] = float(q.f[0, 1]), float(q.f[0, 2]), float(q.f[1, 2])
        row["H_metric"] = three_form_from_metric(q).value
        try:
            row["H_connection"] = three_form_from_connection(p).value
        except GaugeError:
            row["H_connection"] = float("nan")
        row["H_analytic"] = math.sin(a) * math.cos(a) if bz == 0 else float("nan")
        rows.append(row)
    return rows


def write_rows_csv(path, rows: list[dict], header_lines=()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        if not rows:
            return
        w = csv.writer(fh, lineterminator="\n")
        keys = list(rows[0])
        w.writerow(keys)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in keys])


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isnan(v) else f"{v:.12g}"
    return str(v)
