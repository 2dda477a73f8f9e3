"""Eigendecomposition with pinned gauges, band formulas and nodal scans."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .model import SQRT2

PLANES = ("qx-qy", "qz-qw", "qx-qz")
GAUGES = ("v2-real", "max-real", "none")
_COMPONENT_TOL = 1e-9


@dataclass(frozen=True)
class EigenSystem:
    """Ascending energies; ``states[:, i]`` pairs with ``energies[i]``."""

    energies: np.ndarray
    states: np.ndarray
    gauge: str

    @property
    def ground(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def gaps(self) -> tuple[float, float]:
        e = self.energies
        return float(e[1] - e[0]), float(e[2] - e[1])


def _check_hermitian(H: np.ndarray) -> np.ndarray:
    H = np.asarray(H, dtype=complex)
    if H.shape[-2:] != (3, 3):
        raise ValueError(f"expected 3x3 matrices, got shape {H.shape}")
    scale = float(np.max(np.abs(H))) if H.size else 0.0
    dev = float(np.max(np.abs(H - np.swapaxes(H.conj(), -1, -2))))
    if dev > 1e-12 * max(scale, 1e-300) and dev > 1e-300:
        raise ValueError(f"matrix is not Hermitian (max deviation {dev:.3e})")
    return 0.5 * (H + np.swapaxes(H.conj(), -1, -2))


def _phase_fix(v: np.ndarray, gauge: str) -> tuple[np.ndarray, bool]:
    """Return the rephased vector and whether the fallback rule was used."""
    if gauge == "none":
        return v, False
    if gauge == "v2-real" and abs(v[1]) > _COMPONENT_TOL:
        return v * (abs(v[1]) / v[1]), False
    mags = np.abs(v)
    # first index among near-ties keeps the choice deterministic
    k = int(np.flatnonzero(mags >= mags.max() - 1e-12)[0])
    return v * (mags[k] / v[k]), gauge == "v2-real"


def _degenerate_basis(states: np.ndarray, idx: list[int]) -> np.ndarray:
    """Orthonormal basis of a degenerate block seeded from canonical vectors."""
    block = states[:, idx]
    proj = block @ block.conj().T
    basis: list[np.ndarray] = []
    for k in range(3):
        v = proj[:, k].copy()
        for b in basis:
            v -= (b.conj() @ v) * b
        n = np.linalg.norm(v)
        if n > 1e-6:
            basis.append(v / n)
        if len(basis) == len(idx):
            break
    return np.column_stack(basis)


def eigensystem(H: np.ndarray, gauge: str = "v2-real") -> EigenSystem:
    """Diagonalize a 3x3 Hermitian matrix and fix the eigenvector phases.

    ``v2-real`` makes the middle (m_s = 0) component real and non-negative;
    when it is below 1e-9 the largest component is made real positive and
    the fallback is recorded in the label. Degenerate blocks are rebuilt by
    Gram-Schmidt from the canonical basis and labelled ``degenerate``.
    """
    if gauge not in GAUGES:
        raise ValueError(f"unknown gauge {gauge!r}; expected one of {GAUGES}")
    H = _check_hermitian(H)
    energies, states = np.linalg.eigh(H)
    scale = float(np.max(np.abs(H)))
    tol = 1e-11 * scale if scale > 0 else 0.0
    labels = [gauge]

    # group (near-)degenerate energies
    groups: list[list[int]] = [[0]]
    for i in (1, 2):
        if energies[i] - energies[groups[-1][-1]] <= tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    states = states.copy()
    for grp in groups:
        if len(grp) > 1:
            mean = float(np.mean(energies[grp]))
            energies[grp] = mean
            states[:, grp] = _degenerate_basis(states, grp)
            labels.append("degenerate")

    fallback = []
    for i in range(3):
        states[:, i], used = _phase_fix(states[:, i], gauge)
        if used:
            fallback.append(i)
    if fallback:
        labels.append("fallback=" + ",".join(str(i) for i in fallback))
    return EigenSystem(energies, states, ";".join(dict.fromkeys(labels)))


def cardano_eigenvalues(H: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of a 3x3 Hermitian matrix by the trigonometric
    solution of its characteristic polynomial (independent of LAPACK)."""
    H = np.asarray(H, dtype=complex)
    m = np.real(np.trace(H)) / 3.0
    K = H - m * np.eye(3)
    q = np.real(np.linalg.det(K)) / 2.0
    p = np.real(np.sum(np.abs(K) ** 2)) / 6.0
    if p <= 1e-300:
        return np.full(3, m)
    r = max(-1.0, min(1.0, q / p**1.5))
    theta = math.acos(r) / 3.0
    sp = 2.0 * math.sqrt(p)
    e = [m + sp * math.cos(theta + 2 * math.pi * k / 3) for k in range(3)]
    return np.sort(np.array(e))


def analytic_eigenvalues_planar(qx: float, qy: float, bz: float) -> np.ndarray:
    """Closed-form spectrum on the qz = qw = 0 slice, sorted ascending."""
    b = bz / SQRT2
    root = math.sqrt(bz * bz / 2.0 + 4.0 * (qx * qx + qy * qy))
    return np.sort(np.array([0.5 * (b - root), -b, 0.5 * (b + root)]))


def band_gap(H: np.ndarray, pair: str) -> float:
    """``lower``: e0 - e_minus, ``upper``: e_plus - e0."""
    e = np.linalg.eigvalsh(_check_hermitian(H))
    if pair == "lower":
        return max(0.0, float(e[1] - e[0]))
    if pair == "upper":
        return max(0.0, float(e[2] - e[1]))
    raise ValueError(f"unknown band pair {pair!r}; expected lower or upper")


@dataclass
class NodalReport:
    plane: str
    ring_radius_estimate: float
    min_gap: float
    gap_map: np.ndarray
    axis: np.ndarray
    threshold: float
    nodal_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    @property
    def spacing(self) -> float:
        return float(self.axis[1] - self.axis[0])

    def to_csv(self, path, header_lines=(), scale: float = 1.0) -> None:
        """Row-major gap map; ``scale`` converts energies for output."""
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            fh.write(f"# plane={self.plane} n={len(self.axis)} "
                     f"extent={self.axis[-1] * scale:.12g} spacing={self.spacing * scale:.12g}\n")
            w = csv.writer(fh, lineterminator="\n")
            a, b = self.plane.split("-")
            w.writerow([a, b, "gap"])
            for i, x in enumerate(self.axis):
                for j, y in enumerate(self.axis):
                    w.writerow([f"{x * scale:.12g}", f"{y * scale:.12g}",
                                f"{self.gap_map[i, j] * scale:.12g}"])


def _plane_hamiltonians(plane: str, xs: np.ndarray, bz: float) -> np.ndarray:
    n = len(xs)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    q = np.zeros((n, n, 4))
    first, second = {"qx-qy": (0, 1), "qz-qw": (2, 3), "qx-qz": (0, 2)}[plane]
    q[..., first], q[..., second] = X, Y
    H = np.zeros((n, n, 3, 3), dtype=complex)
    b = bz / SQRT2
    H[..., 0, 0], H[..., 2, 2] = b, -b
    H[..., 0, 1] = q[..., 0] - 1j * q[..., 1]
    H[..., 1, 2] = q[..., 2] + 1j * q[..., 3]
    H[..., 1, 0] = np.conj(H[..., 0, 1])
    H[..., 2, 1] = np.conj(H[..., 1, 2])
    return H


def nodal_scan(
    bz: float,
    plane: str,
    extent: float,
    n: int,
    perturbation: np.ndarray | None = None,
    threshold: float | None = None,
) -> NodalReport:
    """Adjacent-band gap over a square grid ``[-extent, extent]^2`` in a plane.

    qx-qy tracks the lower pair, qz-qw the upper pair and qx-qz the smaller
    of both. Grid points whose gap is below ``threshold`` (default 1e-3 of
    the extent) count as nodal; the ring radius is their mean distance from
    the origin, or the radius of the global minimum if none qualifies.
    """
    if plane not in PLANES:
        raise ValueError(f"unknown plane {plane!r}; expected one of {PLANES}")
    if n < 2:
        raise ValueError("degenerate grid: need at least 2 points per axis")
    if extent <= 0:
        raise ValueError("extent must be positive")
    xs = np.linspace(-extent, extent, n)
    H = _plane_hamiltonians(plane, xs, bz)
    if perturbation is not None:
        H = H + _check_hermitian(perturbation)
    e = np.linalg.eigvalsh(H)
    lower, upper = e[..., 1] - e[..., 0], e[..., 2] - e[..., 1]
    gap = {"qx-qy": lower, "qz-qw": upper, "qx-qz": np.minimum(lower, upper)}[plane]
    gap = np.maximum(gap, 0.0)
    if threshold is None:
        threshold = 1e-3 * extent

    X, Y = np.meshgrid(xs, xs, indexing="ij")
    sel = gap <= threshold
    if not sel.any():
        k = np.unravel_index(int(np.argmin(gap)), gap.shape)
        sel = np.zeros_like(gap, dtype=bool)
        sel[k] = True
        points = np.zeros((0, 2))
    else:
        points = np.column_stack([X[sel], Y[sel]])
    radius = float(np.mean(np.hypot(X[sel], Y[sel])))
    return NodalReport(plane, radius, float(gap.min()), gap, xs, float(threshold), points)
