"""Emulated modulation experiments: preparation, Rabi spectroscopy, QGT.

Transition labels: ``SQ`` couples the ground state to the middle band,
``DQ`` the ground state to the top band. Drive labels name the axes and the
sign pattern, e.g. ``alpha``, ``alpha.beta``, ``alpha.beta_bar``,
``alpha.beta_ell`` and ``alpha.beta_bar_ell``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping

import numpy as np
from scipy.integrate import simpson

from ..errors import DegenerateSpectrumError, FitError, IncompleteDataError, UnsupportedRegimeError
from ..geometry import QGTensor, GAP_GUARD
from ..model import AXES, ParamPoint, build_hamiltonian, param_derivative
from ..spectral import eigensystem
from .fitting import RabiFit, fit_rabi
from .modulation import ModulationSpec, RabiTrace, evolve
from .readout import ReadoutModel, three_readout_solve

TRANSITIONS = {"SQ": 1, "DQ": 2}
DEFAULT_M = 1.0 / 30.0
PAIRS = tuple(combinations(AXES, 2))
MS_ZERO = 1


@dataclass(frozen=True)
class Drive:
    """Which derivative combination a modulation addresses.

    Linear drives probe ``dmu H +/- dnu H``; elliptical drives probe
    ``dmu H +/- i dnu H`` (``bar`` selects the minus sign).
    """

    mu: str
    nu: str | None = None
    bar: bool = False
    elliptical: bool = False

    def __post_init__(self):
        if self.mu not in AXES or (self.nu is not None and self.nu not in AXES):
            raise ValueError(f"axes must be among {AXES}")
        if self.nu is None and (self.bar or self.elliptical):
            raise ValueError("sign patterns need two axes")
        if self.nu == self.mu:
            raise ValueError("the two axes must differ")

    @property
    def label(self) -> str:
        if self.nu is None:
            return self.mu
        return f"{self.mu}.{self.nu}" + ("_bar" if self.bar else "") + ("_ell" if self.elliptical else "")

    @classmethod
    def parse(cls, label: str) -> "Drive":
        if "." not in label:
            return cls(label)
        mu, rest = label.split(".", 1)
        parts = rest.split("_")
        return cls(mu, parts[0], bar="bar" in parts[1:], elliptical="ell" in parts[1:])

    def operator(self, p: ParamPoint) -> np.ndarray:
        op = param_derivative(p, self.mu)
        if self.nu is None:
            return op
        sign = -1.0 if self.bar else 1.0
        factor = 1j * sign if self.elliptical else sign
        return op + factor * param_derivative(p, self.nu)

    def spec(self, p: ParamPoint, omega: float, m: float = DEFAULT_M) -> ModulationSpec:
        if self.nu is None:
            return ModulationSpec(p, omega, {self.mu: m})
        return ModulationSpec(
            p, omega, {self.mu: m, self.nu: m},
            pattern="elliptical" if self.elliptical else "linear",
            signs={self.nu: -1 if self.bar else 1},
        )


def drive_of_spec(spec: ModulationSpec) -> Drive:
    axes = spec.axes
    if len(axes) == 1:
        return Drive(axes[0])
    if len(axes) != 2:
        raise ValueError("a drive label needs one or two modulated axes")
    if abs(spec.amplitudes[axes[0]]) != abs(spec.amplitudes[axes[1]]):
        raise ValueError("paired drives need equal amplitudes")
    bar = spec.signs[axes[0]] != spec.signs[axes[1]]
    return Drive(axes[0], axes[1], bar=bar, elliptical=spec.pattern == "elliptical")


@dataclass(frozen=True)
class TransitionElement:
    value: float
    transition: str
    drive: str
    source: str = "direct"

    @property
    def key(self) -> tuple[str, str]:
        return self.drive, self.transition


def _check_transition(transition: str) -> int:
    if transition not in TRANSITIONS:
        raise ValueError(f"unknown transition {transition!r}; expected SQ or DQ")
    return TRANSITIONS[transition]


def _gapped_eigensystem(p: ParamPoint):
    es = eigensystem(build_hamiltonian(p))
    scale = p.h0 if p.h0 > 0 else max(abs(p.bz), 1e-300)
    lower, upper = es.gaps
    if min(lower, upper) <= GAP_GUARD * scale:
        raise DegenerateSpectrumError(f"degenerate spectrum at {p}", gap=min(lower, upper))
    return es


def gamma_direct(p: ParamPoint, drive: Drive | str, transition: str) -> TransitionElement:
    """``|<u_minus| O |u_n>|`` with O the drive's derivative combination."""
    drive = Drive.parse(drive) if isinstance(drive, str) else drive
    n = _check_transition(transition)
    es = _gapped_eigensystem(p)
    value = abs(np.vdot(es.states[:, 0], drive.operator(p) @ es.states[:, n]))
    return TransitionElement(float(value), transition, drive.label, "direct")


def transition_frequency(p: ParamPoint, transition: str) -> float:
    n = _check_transition(transition)
    e = np.linalg.eigvalsh(build_hamiltonian(p))
    return float(e[n] - e[0])


def resonant_spec(p: ParamPoint, drive: Drive | str, transition: str, m: float = DEFAULT_M,
                  omega: float | None = None) -> ModulationSpec:
    drive = Drive.parse(drive) if isinstance(drive, str) else drive
    if omega is None:
        omega = transition_frequency(p, transition)
    return drive.spec(p, omega, m)


# state preparation ---------------------------------------------------------

LEVEL_INDEX = {"+1": 0, "-1": 2}


@dataclass(frozen=True)
class PulseSequence:
    """Two resonant pulses from m_s = 0: first on the -1 line, then on +1.

    A pulse of duration t and phase d maps ``|0> -> cos(w t)|0> -
    i e^{-i d} sin(w t)|k>``.
    """

    t_minus: float
    delta_minus: float
    t_plus: float
    delta_plus: float
    omega_init: float

    def unitary(self) -> np.ndarray:
        first = pulse_unitary("-1", self.omega_init * self.t_minus, self.delta_minus)
        second = pulse_unitary("+1", self.omega_init * self.t_plus, self.delta_plus)
        return second @ first


@dataclass(frozen=True)
class PreparedState:
    state: np.ndarray
    pulses: PulseSequence | None
    fidelity: float
    pulse_recipe: bool


def pulse_unitary(level: str, angle: float, phase: float) -> np.ndarray:
    """Resonant rotation between m_s = 0 and ``level`` by ``angle``."""
    k = LEVEL_INDEX[level]
    U = np.eye(3, dtype=complex)
    c, s = math.cos(angle), math.sin(angle)
    U[MS_ZERO, MS_ZERO] = U[k, k] = c
    U[k, MS_ZERO] = -1j * np.exp(-1j * phase) * s
    U[MS_ZERO, k] = -1j * np.exp(1j * phase) * s
    return U


def pulse_sequence(target: str, p: ParamPoint, omega_init: float) -> PulseSequence:
    """Pulse durations and phases preparing ``u-`` or ``u0`` at bz = 0.

    For ``u0`` the -1 pulse rotates by ``pi/2 - alpha``; at alpha = pi/2 this
    is equivalent (up to a global sign) to a full ``pi`` rotation.
    """
    if omega_init <= 0:
        raise ValueError("omega_init must be positive")
    if p.bz != 0.0 or p.delta_x != 0.0:
        raise UnsupportedRegimeError("pulse recipes exist only for bz = 0, delta_x = 0")
    a, w = p.alpha, omega_init
    if target == "u-":
        return PulseSequence(
            math.asin(math.sin(a) / math.sqrt(2.0)) / w, p.phi + math.pi / 2,
            math.asin(math.cos(a) / math.sqrt(2.0 - math.sin(a) ** 2)) / w, p.beta + math.pi / 2,
            w,
        )
    if target == "u0":
        return PulseSequence((math.pi / 2 - a) / w, p.phi + math.pi, math.pi / (2 * w), p.beta, w)
    raise ValueError("target must be 'u-' or 'u0'")


def _target_vector(target: str, p: ParamPoint) -> np.ndarray:
    es = eigensystem(build_hamiltonian(p))
    return es.states[:, {"u-": 0, "u0": 1}[target]]


def prepare_state(target: str, p: ParamPoint, omega_init: float) -> PreparedState:
    seq = pulse_sequence(target, p, omega_init)
    state = seq.unitary()[:, MS_ZERO]
    fid = float(abs(np.vdot(_target_vector(target, p), state)) ** 2)
    return PreparedState(state, seq, fid, True)


def preparation_unitary(target: str, p: ParamPoint, omega_init: float = 1.0) -> tuple[np.ndarray, bool]:
    """Unitary taking m_s = 0 to ``target``; second item flags the pulse recipe.

    Away from bz = 0 the map is built directly from the eigenvectors (not a
    pulse recipe).
    """
    try:
        return pulse_sequence(target, p, omega_init).unitary(), True
    except UnsupportedRegimeError:
        es = eigensystem(build_hamiltonian(p))
        k = {"u-": 0, "u0": 1}[target]
        others = [i for i in range(3) if i != k]
        W = np.empty((3, 3), dtype=complex)
        W[:, MS_ZERO] = es.states[:, k]
        W[:, 0], W[:, 2] = es.states[:, others[0]], es.states[:, others[1]]
        return W, False


# simulated spectroscopy -----------------------------------------------------

@dataclass
class SimulatedGamma:
    element: TransitionElement
    fit: RabiFit
    trace: RabiTrace
    predicted_omega: float
    pulse_recipe: bool
    cycle_values: tuple[float, ...] = ()


def predicted_rabi(spec: ModulationSpec, transition: str) -> float:
    """First-order population Rabi frequency of the target transition.

    When the two single-quantum gaps coincide within the coupling (bz = 0)
    the ladder frequency ``2 sqrt(|g1|^2 + |g2|^2)`` is returned.
    """
    n = _check_transition(transition)
    es = eigensystem(build_hamiltonian(spec.base))
    X = spec.resonant_operator()
    v = es.states
    g_main = abs(np.vdot(v[:, 0], X @ v[:, n]))
    if transition == "SQ":
        g_up = abs(np.vdot(v[:, 1], X @ v[:, 2]))
        lower, upper = es.gaps
        if abs(upper - lower) <= 2.0 * max(g_main, g_up, 1e-300):
            return 2.0 * math.hypot(g_main, g_up)
    return 2.0 * g_main


def _readout_signal(states: np.ndarray, W_meas: np.ndarray, readout: ReadoutModel | None,
                    rng: np.random.Generator | None) -> np.ndarray:
    mapped = states @ W_meas.conj()
    pops = np.abs(mapped) ** 2
    if readout is None:
        return pops[:, MS_ZERO]
    signals = readout.forward(pops, rng)
    return three_readout_solve(signals[:, 0], signals[:, 1], signals[:, 2], readout)[:, MS_ZERO]


def reversed_drive(spec: ModulationSpec) -> ModulationSpec:
    """The same modulation shifted by half a drive period (all signs flipped)."""
    return ModulationSpec(spec.base, spec.omega, spec.amplitudes, spec.pattern,
                          {k: -v for k, v in spec.signs.items()})


def _single_run(spec, transition, readout, n_rabi_periods, dt, rng, max_samples, residual_limit):
    p = spec.base
    m = abs(spec.amplitudes[spec.axes[0]])
    W_prep, recipe = preparation_unitary("u-", p)
    W_meas = W_prep if transition == "DQ" else preparation_unitary("u0", p)[0]
    psi0 = W_prep[:, MS_ZERO]

    scale = max(p.h0, abs(p.bz))
    omega_pred = max(predicted_rabi(spec, transition), 0.3 * m * scale)
    omega_max = max(4.0 * m * scale, 3.0 * omega_pred)
    duration = n_rabi_periods * 2.0 * math.pi / omega_pred
    period = spec.period
    n_periods = int(duration / period) + 1
    # stride keeps the sample count bounded and Nyquist above omega_max
    stride = max(1, min(n_periods // max_samples + 1, int(math.pi / (1.5 * omega_max * period))))
    trace = evolve(spec, psi0, n_periods * period, dt=dt, basis="ms",
                   record_every=stride, stroboscopic=True)
    signal = _readout_signal(trace.states, W_meas, readout, rng)
    fit = fit_rabi(trace.times, signal, omega_max=omega_max)
    if fit.residual_rms > residual_limit + 3.0 * (readout.sigma if readout else 0.0):
        raise FitError(f"Rabi fit residual {fit.residual_rms:.3g} above threshold", trace, fit)
    # significance test on the amplitude; the frequency search over ~N/2
    # trial values raises the noise maximum to about sqrt(2 ln N) errors
    n = len(signal)
    if fit.amplitude <= fit.residual_rms * math.sqrt(2.0 / n) * math.sqrt(2.0 * math.log(n) + 9.0):
        return 0.0, fit, trace, omega_pred, recipe
    gamma = fit.frequency / m * math.sqrt(2.0 * min(fit.amplitude, 0.5))
    return gamma, fit, trace, omega_pred, recipe


def gamma_simulated(
    spec: ModulationSpec,
    transition: str,
    readout: ReadoutModel | None = None,
    n_rabi_periods: float = 10.0,
    dt: float | None = None,
    seed=None,
    max_samples: int = 2000,
    residual_limit: float = 0.02,
    phase_cycle: bool = True,
) -> SimulatedGamma:
    """Measure a transition element by simulating the Rabi experiment.

    The ground state is prepared, the modulation is applied, the target
    population (u0 for SQ, u- for DQ) is read out after the inverse mapping
    at whole drive periods, and a sinusoid is fitted. The estimate
    ``Gamma = (Omega / m) sqrt(2 A)`` uses the fitted cosine amplitude A,
    which removes the first-order effect of residual detuning and reduces
    to the single-transition element for the degenerate SQ ladder.

    With ``phase_cycle`` the experiment is repeated with the drive shifted
    by half a period and both estimates are averaged. Terms of second order
    in the amplitude (a 2 omega coupling closing the degenerate ladder)
    bias a single run by O(m); the bias flips sign with the drive polarity.
    """
    drive = drive_of_spec(spec)
    _check_transition(transition)
    rng = np.random.default_rng(seed) if readout is not None and readout.sigma > 0 else None
    runs = [spec, reversed_drive(spec)] if phase_cycle else [spec]
    results = [_single_run(s, transition, readout, n_rabi_periods, dt, rng, max_samples,
                           residual_limit) for s in runs]
    values = tuple(r[0] for r in results)
    gamma, fit, trace, omega_pred, recipe = results[0]
    element = TransitionElement(float(np.mean(values)), transition, drive.label, "simulated")
    return SimulatedGamma(element, fit, trace, omega_pred, recipe, values)


@dataclass
class ResonanceSpectrum:
    omegas: np.ndarray
    transfer: np.ndarray
    peak_omega: float
    step: float


def resonance_scan(template: ModulationSpec, omegas, duration: float,
                   dt: float | None = None) -> ResonanceSpectrum:
    """Population leaving u- after ``duration`` for each drive frequency.

    The peak is refined by a parabola through the maximum and its
    neighbours.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    omegas = np.asarray(omegas, dtype=float)
    W, _ = preparation_unitary("u-", template.base)
    psi0 = W[:, MS_ZERO]
    transfer = np.empty(len(omegas))
    for i, w in enumerate(omegas):
        final = evolve(template.with_omega(w), psi0, duration, dt=dt, basis="ms").states[-1]
        transfer[i] = 1.0 - abs(np.vdot(psi0, final)) ** 2
    k = int(np.argmax(transfer))
    peak = float(omegas[k])
    step = float(np.median(np.diff(omegas))) if len(omegas) > 1 else 0.0
    if 0 < k < len(omegas) - 1:
        y0, y1, y2 = transfer[k - 1:k + 2]
        denom = y0 - 2 * y1 + y2
        if denom < 0:
            peak += 0.5 * (y0 - y2) / denom * (omegas[k + 1] - omegas[k])
    return ResonanceSpectrum(omegas, transfer, peak, step)


# reconstruction ------------------------------------------------------------

GammaSet = Mapping[tuple[str, str], float]


def required_labels(curvature: bool = True) -> list[tuple[str, str]]:
    labels = []
    for tr in TRANSITIONS:
        labels += [(ax, tr) for ax in AXES]
        for mu, nu in PAIRS:
            labels += [(Drive(mu, nu).label, tr), (Drive(mu, nu, bar=True).label, tr)]
            if curvature:
                labels += [(Drive(mu, nu, elliptical=True).label, tr),
                           (Drive(mu, nu, bar=True, elliptical=True).label, tr)]
    return labels


def reconstruct_qgt(gammas: GammaSet, energies, curvature: bool = True) -> QGTensor:
    """Metric and curvature of the ground state from transition magnitudes.

    ``g_mm = sum_n G_m^2 / d_n^2``, ``g_mn = sum_n (G_mn^2 - G_mnbar^2) /
    (4 d_n^2)`` and ``f_mn = sum_n (G_mn,ell^2 - G_mnbar,ell^2) / (2 d_n^2)``
    with ``d_n`` the gap to band n.
    """
    missing = [key for key in required_labels(curvature) if key not in gammas]
    if missing:
        raise IncompleteDataError(f"missing transition elements: {missing}")
    e = np.asarray(energies, dtype=float)
    inv_gap2 = {tr: 1.0 / (e[n] - e[0]) ** 2 for tr, n in TRANSITIONS.items()}
    g = np.zeros((3, 3))
    f = np.zeros((3, 3))
    for i, ax in enumerate(AXES):
        g[i, i] = sum(gammas[(ax, tr)] ** 2 * w for tr, w in inv_gap2.items())
    for mu, nu in PAIRS:
        i, j = AXES.index(mu), AXES.index(nu)
        plus, minus = Drive(mu, nu).label, Drive(mu, nu, bar=True).label
        g[i, j] = g[j, i] = sum(
            (gammas[(plus, tr)] ** 2 - gammas[(minus, tr)] ** 2) * w / 4.0
            for tr, w in inv_gap2.items()
        )
        if curvature:
            ep = Drive(mu, nu, elliptical=True).label
            em = Drive(mu, nu, bar=True, elliptical=True).label
            f[i, j] = sum((gammas[(ep, tr)] ** 2 - gammas[(em, tr)] ** 2) * w / 2.0
                          for tr, w in inv_gap2.items())
            f[j, i] = -f[i, j]
    return QGTensor(g, f, 0)


def all_drives(curvature: bool = True) -> list[Drive]:
    drives = [Drive(ax) for ax in AXES]
    for mu, nu in PAIRS:
        drives += [Drive(mu, nu), Drive(mu, nu, bar=True)]
        if curvature:
            drives += [Drive(mu, nu, elliptical=True), Drive(mu, nu, bar=True, elliptical=True)]
    return drives


def direct_gamma_set(p: ParamPoint, curvature: bool = True) -> dict[tuple[str, str], float]:
    return {(d.label, tr): gamma_direct(p, d, tr).value
            for d in all_drives(curvature) for tr in TRANSITIONS}


def simulated_gamma_set(p: ParamPoint, m: float = DEFAULT_M, curvature: bool = True,
                        omegas: Mapping[str, float] | None = None,
                        readout: ReadoutModel | None = None, seed: int | None = None,
                        n_rabi_periods: float = 10.0) -> dict[tuple[str, str], float]:
    """Every element needed by :func:`reconstruct_qgt`, from simulations.

    ``omegas`` may override the drive frequency per transition (for example
    with the value located by a resonance scan). Noise streams are seeded by
    ``(seed, experiment index)``.
    """
    out = {}
    for k, (d, tr) in enumerate((d, tr) for d in all_drives(curvature) for tr in TRANSITIONS):
        omega = None if omegas is None else omegas.get(tr)
        spec = resonant_spec(p, d, tr, m, omega)
        exp_seed = None if seed is None else [seed, k]
        out[(d.label, tr)] = gamma_simulated(spec, tr, readout, n_rabi_periods,
                                             seed=exp_seed).element.value
    return out


# degenerate single-quantum dynamics ---------------------------------------

def degenerate_sq_reference(b1: float, b2: float, t) -> np.ndarray:
    """Populations (n_plus, n_zero, n_minus) of the degenerate SQ ladder from u0.

    ``b1`` couples u0 to u+ and ``b2`` couples u- to u0 (rad/us).
    """
    if b1 == 0 and b2 == 0:
        raise ValueError("at least one coupling must be nonzero")
    w = math.hypot(b1, b2)
    s2 = np.sin(w * np.asarray(t, dtype=float)) ** 2
    return np.stack([b1**2 / w**2 * s2, 1.0 - s2, b2**2 / w**2 * s2], axis=-1)


def degenerate_sq_couplings(spec: ModulationSpec) -> tuple[float, float]:
    """Rotating-wave couplings ``(b1, b2)`` = (|<u0|X|u+>|, |<u-|X|u0>|)."""
    es = eigensystem(build_hamiltonian(spec.base))
    X = spec.resonant_operator()
    v = es.states
    return float(abs(np.vdot(v[:, 1], X @ v[:, 2]))), float(abs(np.vdot(v[:, 0], X @ v[:, 1])))


# end-to-end pipeline -------------------------------------------------------

@dataclass
class PipelineResult:
    alphas: np.ndarray
    resonance: ResonanceSpectrum
    gamma_simulated: list[dict]
    gamma_direct: list[dict]
    qgt_simulated: list[QGTensor]
    qgt_direct: list[QGTensor]
    dd_metric: float
    dd_connection: float
    energies: list[np.ndarray] = field(default_factory=list)


def emulate_experiment(h0: float, alphas, m: float = DEFAULT_M,
                       readout: ReadoutModel | None = None, seed: int | None = None,
                       scan_points: int = 81, scan_halfwidth: float | None = None) -> PipelineResult:
    """Full bz = 0 measurement: resonance scan, spectroscopy, reconstruction, DD.

    The resonance is located with a (beta, phi) linear drive at
    alpha = pi/4 for a pi-pulse duration ``pi / (m h0)``. The scanned
    double-quantum frequency sets both drive frequencies (SQ at half of it).
    The alpha grid must be odd-sized and uniform on [0, pi/2].
    """
    alphas = np.asarray(alphas, dtype=float)
    if len(alphas) < 3 or len(alphas) % 2 == 0:
        raise ValueError("need an odd number (>= 3) of alpha points")
    centre = 2.0 * h0
    half = scan_halfwidth if scan_halfwidth is not None else 0.05 * h0
    template = Drive("beta", "phi").spec(ParamPoint(h0, math.pi / 4), centre, m)
    omegas = np.linspace(centre - half, centre + half, scan_points)
    spectrum = resonance_scan(template, omegas, math.pi / (m * h0))
    drive_freqs = {"DQ": spectrum.peak_omega, "SQ": 0.5 * spectrum.peak_omega}

    sims, directs, q_sim, q_dir, energies = [], [], [], [], []
    for k, a in enumerate(alphas):
        p = ParamPoint(h0, float(a))
        e = np.linalg.eigvalsh(build_hamiltonian(p))
        sim = simulated_gamma_set(p, m, True, drive_freqs, readout,
                                  None if seed is None else seed + k)
        direct = direct_gamma_set(p, True)
        sims.append(sim)
        directs.append(direct)
        energies.append(e)
        q_sim.append(reconstruct_qgt(sim, e))
        q_dir.append(reconstruct_qgt(direct, e))
    det = np.array([max(np.linalg.det(q.g), 0.0) for q in q_sim])
    dd_metric = float(8.0 * simpson(np.sqrt(det), x=alphas))
    curv = np.array([q.f[0, 1] + q.f[2, 0] for q in q_sim])
    dd_conn = float(simpson(curv, x=alphas))
    return PipelineResult(alphas, spectrum, sims, directs, q_sim, q_dir, dd_metric, dd_conn, energies)
