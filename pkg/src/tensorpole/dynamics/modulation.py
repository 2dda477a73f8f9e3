"""Parametric modulation and time evolution of the three-level system."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from ..model import AXES, ParamPoint, SQRT2, build_hamiltonian, param_derivative

MAX_AMPLITUDE = 0.2
STEP_NORM_LIMIT = 0.05
PATTERNS = ("linear", "elliptical")


@dataclass(frozen=True)
class ModulationSpec:
    """Weak periodic modulation of (alpha, beta, phi) around ``base``.

    ``amplitudes`` keeps insertion order: for the elliptical pattern the
    first axis is driven with ``cos`` and the second with ``-sin``. Each axis
    carries a sign (+1 or -1) multiplying its waveform.
    """

    base: ParamPoint
    omega: float
    amplitudes: Mapping[str, float]
    pattern: str = "linear"
    signs: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        amps = {k: float(v) for k, v in dict(self.amplitudes).items() if float(v) != 0.0}
        signs = {k: int(v) for k, v in dict(self.signs).items()}
        for axis in list(amps) + list(signs):
            if axis not in AXES:
                raise ValueError(f"unknown axis {axis!r}; expected one of {AXES}")
        if not amps:
            raise ValueError("at least one modulation amplitude must be nonzero")
        if max(abs(v) for v in amps.values()) > MAX_AMPLITUDE:
            raise ValueError(f"amplitudes above {MAX_AMPLITUDE} leave the weak-modulation regime")
        if self.pattern not in PATTERNS:
            raise ValueError(f"unknown pattern {self.pattern!r}; expected one of {PATTERNS}")
        if self.pattern == "elliptical" and len(amps) != 2:
            raise ValueError("the elliptical pattern needs exactly two nonzero amplitudes")
        if any(s not in (1, -1) for s in signs.values()):
            raise ValueError("signs must be +1 or -1")
        if not self.omega > 0:
            raise ValueError("drive frequency must be positive")
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "signs", {k: signs.get(k, 1) for k in amps})
        object.__setattr__(self, "omega", float(self.omega))

    @property
    def axes(self) -> tuple[str, ...]:
        return tuple(self.amplitudes)

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.omega

    def with_omega(self, omega: float) -> "ModulationSpec":
        return ModulationSpec(self.base, omega, self.amplitudes, self.pattern, self.signs)

    def offsets(self, t) -> dict[str, np.ndarray]:
        """Parameter offsets per axis at time(s) ``t``."""
        t = np.asarray(t, dtype=float)
        phase = self.omega * t
        out = {}
        for k, axis in enumerate(self.axes):
            amp = self.signs[axis] * self.amplitudes[axis]
            if self.pattern == "linear":
                out[axis] = amp * np.sin(phase)
            elif k == 0:
                out[axis] = amp * np.cos(phase)
            else:
                out[axis] = -amp * np.sin(phase)
        return out

    def resonant_operator(self) -> np.ndarray:
        """Coefficient of ``e^{+i omega t}`` in the first-order drive.

        A lower state ``a`` and upper state ``b`` split by ``omega`` couple
        with ``<a|X|b>``; the population Rabi frequency is twice its modulus.
        """
        X = np.zeros((3, 3), dtype=complex)
        for k, axis in enumerate(self.axes):
            amp = self.signs[axis] * self.amplitudes[axis]
            dH = param_derivative(self.base, axis)
            if self.pattern == "linear":
                X += amp * dH / 2j
            elif k == 0:
                X += amp * dH / 2.0
            else:
                X += 1j * amp * dH / 2.0
        return X


def modulated_hamiltonians(spec: ModulationSpec, times) -> np.ndarray:
    """Exact (non-linearized) Hamiltonians at an array of times."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    off = spec.offsets(times)
    p = spec.base
    alpha = p.alpha + off.get("alpha", 0.0)
    beta = p.beta + off.get("beta", 0.0)
    phi = p.phi + off.get("phi", 0.0)
    alpha, beta, phi = np.broadcast_arrays(alpha, beta, phi)
    H = np.zeros(times.shape + (3, 3), dtype=complex)
    c12 = p.h0 * np.cos(alpha) * np.exp(-1j * beta) + p.delta_x
    c23 = p.h0 * np.sin(alpha) * np.exp(1j * phi)
    b = p.bz / SQRT2
    H[..., 0, 0], H[..., 2, 2] = b, -b
    H[..., 0, 1], H[..., 1, 0] = c12, np.conj(c12)
    H[..., 1, 2], H[..., 2, 1] = c23, np.conj(c23)
    return H


def modulated_hamiltonian(spec: ModulationSpec, t: float) -> np.ndarray:
    return modulated_hamiltonians(spec, [t])[0]


@dataclass
class RabiTrace:
    """Populations ``(n_plus, n_zero, n_minus)`` per recorded time."""

    times: np.ndarray
    populations: np.ndarray
    basis: str
    states: np.ndarray | None = None

    def to_csv(self, path, header_lines=()) -> None:
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "n_plus", "n_zero", "n_minus", "basis"])
            for t, (a, b, c) in zip(self.times, self.populations):
                w.writerow([f"{t:.12g}", f"{a:.12g}", f"{b:.12g}", f"{c:.12g}", self.basis])


def _step_unitaries(H: np.ndarray, dt: float) -> np.ndarray:
    e, v = np.linalg.eigh(H)
    return np.einsum("...ij,...j,...kj->...ik", v, np.exp(-1j * e * dt), v.conj())


def _basis_matrix(basis: str, H_ref: np.ndarray) -> np.ndarray:
    """Columns ordered (plus, zero, minus) for population readout."""
    if basis == "ms":
        return np.eye(3, dtype=complex)
    if basis == "eigen":
        _, v = np.linalg.eigh(H_ref)
        return v[:, ::-1]
    raise ValueError("basis must be 'eigen' or 'ms'")


def _norm_bound(H: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvalsh(H))))


def evolve(
    source,
    psi0,
    duration: float,
    dt: float | None = None,
    basis: str = "eigen",
    record_every: int = 1,
    stroboscopic: bool = False,
    keep_states: bool = True,
) -> RabiTrace:
    """Propagate ``psi0`` under a modulation spec, static matrix or callable.

    Each step uses the exact exponential of the midpoint Hamiltonian. For a
    :class:`ModulationSpec` the step count per drive period is an integer,
    the one-period propagator is built once and reused, and
    ``stroboscopic=True`` records only at whole periods.
    """
    psi0 = np.asarray(psi0, dtype=complex)
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-10:
        raise ValueError("initial state must have unit norm")
    if duration <= 0:
        raise ValueError("duration must be positive")

    if isinstance(source, ModulationSpec):
        return _evolve_periodic(source, psi0, duration, dt, basis, record_every,
                                stroboscopic, keep_states)
    if callable(source):
        return _evolve_callable(source, psi0, duration, dt, basis, record_every, keep_states)
    H = np.asarray(source, dtype=complex)
    norm = _norm_bound(H)
    if dt is None:
        dt = 0.8 * STEP_NORM_LIMIT / norm if norm > 0 else duration / 100.0
    if dt * norm > STEP_NORM_LIMIT * (1 + 1e-12):
        raise ValueError(f"step too large: dt*||H|| = {dt * norm:.3g} > {STEP_NORM_LIMIT}")
    n_steps = max(1, int(math.ceil(duration / dt - 1e-9)))
    dt = duration / n_steps
    idx = np.arange(0, n_steps + 1, record_every)
    times = idx * dt
    e, v = np.linalg.eigh(H)
    coeff = v.conj().T @ psi0
    states = np.einsum("ij,tj->ti", v, np.exp(-1j * np.outer(times, e)) * coeff)
    return _trace(times, states, basis, H, keep_states)


def _trace(times, states, basis, H_ref, keep_states) -> RabiTrace:
    B = _basis_matrix(basis, H_ref)
    amps = states @ B.conj()
    pops = np.abs(amps) ** 2
    return RabiTrace(np.asarray(times), pops, basis, states if keep_states else None)


def _evolve_periodic(spec, psi0, duration, dt, basis, record_every, stroboscopic, keep_states):
    period = spec.period
    probe = modulated_hamiltonians(spec, np.linspace(0.0, period, 33))
    norm = max(_norm_bound(h) for h in probe)
    if dt is None:
        dt = 0.8 * STEP_NORM_LIMIT / norm
    if dt * norm > STEP_NORM_LIMIT * (1 + 1e-12):
        raise ValueError(f"step too large: dt*||H|| = {dt * norm:.3g} > {STEP_NORM_LIMIT}")
    n_sub = max(1, int(math.ceil(period / dt - 1e-9)))
    dt = period / n_sub
    mids = (np.arange(n_sub) + 0.5) * dt
    steps = _step_unitaries(modulated_hamiltonians(spec, mids), dt)
    cumulative = np.empty((n_sub + 1, 3, 3), dtype=complex)
    cumulative[0] = np.eye(3)
    for r in range(n_sub):
        cumulative[r + 1] = steps[r] @ cumulative[r]
    one_period = cumulative[n_sub]

    n_steps = max(1, int(round(duration / dt)))
    if stroboscopic:
        stride = n_sub * max(1, record_every)
        idx = np.arange(0, n_steps + 1, stride)
    else:
        idx = np.arange(0, n_steps + 1, record_every)
    n_periods = int(idx[-1] // n_sub)
    at_period = np.empty((n_periods + 1, 3), dtype=complex)
    at_period[0] = psi0
    for k in range(n_periods):
        at_period[k + 1] = one_period @ at_period[k]
    k_idx, r_idx = idx // n_sub, idx % n_sub
    states = np.einsum("tij,tj->ti", cumulative[r_idx], at_period[k_idx])
    return _trace(idx * dt, states, basis, build_hamiltonian(spec.base), keep_states)


def _evolve_callable(func: Callable[[float], np.ndarray], psi0, duration, dt, basis,
                     record_every, keep_states):
    H0 = np.asarray(func(0.0), dtype=complex)
    norm = _norm_bound(H0)
    if dt is None:
        raise ValueError("dt is required for a callable Hamiltonian")
    n_steps = max(1, int(round(duration / dt)))
    dt = duration / n_steps
    psi = psi0.copy()
    times, states = [0.0], [psi.copy()]
    for s in range(n_steps):
        H = np.asarray(func((s + 0.5) * dt), dtype=complex)
        norm = _norm_bound(H)
        if dt * norm > STEP_NORM_LIMIT * (1 + 1e-12):
            raise ValueError(f"step too large: dt*||H|| = {dt * norm:.3g} > {STEP_NORM_LIMIT}")
        psi = _step_unitaries(H, dt) @ psi
        if (s + 1) % record_every == 0:
            times.append((s + 1) * dt)
            states.append(psi.copy())
    return _trace(np.array(times), np.array(states), basis, H0, keep_states)
