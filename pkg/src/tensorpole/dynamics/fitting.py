"""Deterministic sinusoid fitting of Rabi traces."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares


@dataclass(frozen=True)
class RabiFit:
    """Model ``offset + amplitude * cos(frequency * t + phase)``."""

    frequency: float
    amplitude: float
    offset: float
    phase: float
    residual_rms: float

    def evaluate(self, t) -> np.ndarray:
        return self.offset + self.amplitude * np.cos(self.frequency * np.asarray(t) + self.phase)

    def as_dict(self) -> dict:
        return {"omega": self.frequency, "amplitude": self.amplitude, "offset": self.offset,
                "phase": self.phase, "residual_rms": self.residual_rms}


def _linear_fit(t, y, omega):
    M = np.column_stack([np.ones_like(t), np.cos(omega * t), np.sin(omega * t)])
    coef, *_ = np.linalg.lstsq(M, y, rcond=None)
    return coef, float(np.sqrt(np.mean((M @ coef - y) ** 2)))


def _grid_scores(t, y, omegas, chunk=256):
    """Residual sum of squares of the best (c, a, b) for every grid frequency."""
    yc = y - y.mean()
    scores = np.empty(len(omegas))
    for start in range(0, len(omegas), chunk):
        w = omegas[start:start + chunk, None] * t[None, :]
        C, S = np.cos(w), np.sin(w)
        C -= C.mean(axis=1, keepdims=True)
        S -= S.mean(axis=1, keepdims=True)
        cc, ss, cs = (C * C).sum(1), (S * S).sum(1), (C * S).sum(1)
        yc_c, yc_s = C @ yc, S @ yc
        det = cc * ss - cs * cs
        det = np.where(np.abs(det) < 1e-300, np.inf, det)
        a = (ss * yc_c - cs * yc_s) / det
        b = (cc * yc_s - cs * yc_c) / det
        scores[start:start + chunk] = (yc @ yc) - (a * yc_c + b * yc_s)
    return scores


def fit_rabi(times, signal, omega_min: float | None = None, omega_max: float | None = None,
             oversample: int = 8) -> RabiFit:
    """Grid search over frequency followed by Levenberg-Marquardt refinement.

    The grid spacing is ``2 pi / (oversample * T)`` with T the trace length;
    ``omega_max`` defaults to the Nyquist frequency of the sampling.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(signal, dtype=float)
    if t.shape != y.shape or t.size < 5:
        raise ValueError("need at least 5 matched samples")
    span = float(t[-1] - t[0])
    if span <= 0:
        raise ValueError("times must span a positive interval")
    if np.ptp(y) < 1e-12:
        return RabiFit(0.0, 0.0, float(y.mean()), 0.0, float(np.std(y)))
    step = 2.0 * math.pi / (oversample * span)
    if omega_min is None:
        omega_min = 0.5 * 2.0 * math.pi / span
    if omega_max is None:
        omega_max = math.pi / float(np.median(np.diff(t)))
    omegas = np.arange(max(omega_min, step), omega_max + step, step)
    best = float(omegas[int(np.argmin(_grid_scores(t, y, omegas)))])
    (c, a, b), _ = _linear_fit(t, y, best)

    def resid(x):
        return x[0] + x[1] * np.cos(x[3] * t) + x[2] * np.sin(x[3] * t) - y

    sol = least_squares(resid, [c, a, b, best], method="lm", x_scale="jac")
    c, a, b, omega = sol.x
    amp = math.hypot(a, b)
    phase = math.atan2(-b, a)
    if omega < 0:
        omega, phase = -omega, -phase
    rms = float(np.sqrt(np.mean(resid(sol.x) ** 2)))
    return RabiFit(float(omega), amp, float(c), phase, rms)
