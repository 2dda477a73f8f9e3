"""Population recovery from three fluorescence readouts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import TensorpoleError

MAX_CONDITION = 1e8


class ReadoutError(TensorpoleError):
    """The reference matrix is singular or too ill-conditioned."""


@dataclass(frozen=True)
class ReadoutModel:
    """Reference levels for m_s = +1, 0, -1 and optional Gaussian noise."""

    r_plus: float
    r_zero: float
    r_minus: float
    sigma: float = 0.0
    seed: int | None = None

    def matrix(self) -> np.ndarray:
        """Rows of the three permuted-reference experiments."""
        p, z, m = self.r_plus, self.r_zero, self.r_minus
        return np.array([[p, z, m], [p, m, z], [z, p, m]], dtype=float)

    def condition(self) -> float:
        return float(np.linalg.cond(self.matrix()))

    def forward(self, populations, rng: np.random.Generator | None = None) -> np.ndarray:
        """Readout signals for population triples ``(n_plus, n_zero, n_minus)``.

        Works on a single triple or an (N, 3) array; noise is added when
        ``sigma > 0`` using ``rng`` (or a generator seeded from ``seed``).
        """
        n = np.asarray(populations, dtype=float)
        signal = n @ self.matrix().T
        if self.sigma > 0:
            if rng is None:
                rng = np.random.default_rng(self.seed)
            signal = signal + rng.normal(0.0, self.sigma, size=signal.shape)
        return signal


def three_readout_solve(s1, s2, s3, model: ReadoutModel) -> np.ndarray:
    """Invert the three-readout system; arguments may be scalars or arrays."""
    R = model.matrix()
    cond = np.linalg.cond(R)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise ReadoutError(f"reference matrix ill-conditioned (condition number {cond:.3e})")
    S = np.stack(np.broadcast_arrays(*(np.asarray(s, dtype=float) for s in (s1, s2, s3))), axis=-1)
    return np.linalg.solve(R, S[..., None])[..., 0] if S.ndim > 1 else np.linalg.solve(R, S)
