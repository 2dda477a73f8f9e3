"""Parameterized three-level Hamiltonian, its derivatives and symmetry algebra.

All energies are angular frequencies in rad/us. The basis order is
m_s = (+1, 0, -1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.stats import qmc

TWO_PI = 2.0 * math.pi
SQRT2 = math.sqrt(2.0)
AXES = ("alpha", "beta", "phi")
DEFAULT_SYMMETRY_SEED = 20201


def mhz_to_angular(value):
    """Convert a linear frequency in MHz to rad/us."""
    return TWO_PI * np.asarray(value, dtype=float) if np.ndim(value) else TWO_PI * float(value)


def angular_to_mhz(value):
    """Convert rad/us to a linear frequency in MHz."""
    return np.asarray(value, dtype=float) / TWO_PI if np.ndim(value) else float(value) / TWO_PI


@dataclass(frozen=True)
class ParamPoint:
    """A point of the synthetic parameter space.

    Normalization happens here: a negative ``h0`` is folded into the angles
    (``-h0 e^{-i beta} = h0 e^{-i(beta+pi)}``), alpha is clamped to
    ``[0, pi/2]`` and beta, phi are reduced modulo 2 pi.
    """

    h0: float
    alpha: float = 0.0
    beta: float = 0.0
    phi: float = 0.0
    bz: float = 0.0
    delta_x: float = 0.0

    def __post_init__(self):
        vals = [self.h0, self.alpha, self.beta, self.phi, self.bz, self.delta_x]
        if not all(math.isfinite(float(v)) for v in vals):
            raise ValueError(f"non-finite parameter in {vals}")
        h0, beta, phi = float(self.h0), float(self.beta), float(self.phi)
        if h0 < 0:
            h0, beta, phi = -h0, beta + math.pi, phi + math.pi
        object.__setattr__(self, "h0", h0)
        object.__setattr__(self, "alpha", min(max(float(self.alpha), 0.0), math.pi / 2))
        object.__setattr__(self, "beta", _wrap(beta))
        object.__setattr__(self, "phi", _wrap(phi))
        object.__setattr__(self, "bz", float(self.bz))
        object.__setattr__(self, "delta_x", float(self.delta_x))

    def to_cartesian(self) -> "CartesianPoint":
        ca, sa = math.cos(self.alpha), math.sin(self.alpha)
        return CartesianPoint(
            self.h0 * ca * math.cos(self.beta),
            self.h0 * ca * math.sin(self.beta),
            self.h0 * sa * math.cos(self.phi),
            self.h0 * sa * math.sin(self.phi),
        )

    def replace(self, **changes) -> "ParamPoint":
        fields = dict(h0=self.h0, alpha=self.alpha, beta=self.beta, phi=self.phi,
                      bz=self.bz, delta_x=self.delta_x)
        fields.update(changes)
        return ParamPoint(**fields)


def _wrap(angle: float) -> float:
    out = math.fmod(angle, TWO_PI)
    if out < 0:
        out += TWO_PI
    # fmod of a value just below 2 pi can round up to exactly 2 pi
    return 0.0 if out >= TWO_PI else out


@dataclass(frozen=True)
class CartesianPoint:
    """Generalized momenta (qx, qy, qz, qw) in rad/us."""

    qx: float
    qy: float
    qz: float
    qw: float

    @property
    def norm(self) -> float:
        return math.sqrt(self.qx**2 + self.qy**2 + self.qz**2 + self.qw**2)

    def to_param(self, bz: float = 0.0, delta_x: float = 0.0) -> ParamPoint:
        rho_xy = math.hypot(self.qx, self.qy)
        rho_zw = math.hypot(self.qz, self.qw)
        return ParamPoint(
            h0=self.norm,
            alpha=math.atan2(rho_zw, rho_xy),
            beta=math.atan2(self.qy, self.qx),
            phi=math.atan2(self.qw, self.qz),
            bz=bz,
            delta_x=delta_x,
        )

    def as_array(self) -> np.ndarray:
        return np.array([self.qx, self.qy, self.qz, self.qw])


def raw_hamiltonian(h0, alpha, beta, phi, bz=0.0, delta_x=0.0) -> np.ndarray:
    """Hamiltonian from unnormalized parameters.

    Used by stencils and modulated drives that may step alpha slightly
    outside ``[0, pi/2]``; the matrix is analytic in every argument.
    """
    c12 = h0 * math.cos(alpha) * complex(math.cos(beta), -math.sin(beta)) + delta_x
    c23 = h0 * math.sin(alpha) * complex(math.cos(phi), math.sin(phi))
    b = bz / SQRT2
    return np.array(
        [[b, c12, 0.0], [c12.conjugate(), 0.0, c23], [0.0, c23.conjugate(), -b]],
        dtype=complex,
    )


def build_hamiltonian(p: ParamPoint) -> np.ndarray:
    """Rotating-frame Hamiltonian at ``p`` (3x3 complex, rad/us)."""
    return raw_hamiltonian(p.h0, p.alpha, p.beta, p.phi, p.bz, p.delta_x)


def cartesian_hamiltonian(q: CartesianPoint, bz: float = 0.0) -> np.ndarray:
    """Minimal four-momentum form: couplings qx - i qy and qz + i qw."""
    c12 = complex(q.qx, -q.qy)
    c23 = complex(q.qz, q.qw)
    b = bz / SQRT2
    return np.array(
        [[b, c12, 0.0], [c12.conjugate(), 0.0, c23], [0.0, c23.conjugate(), -b]],
        dtype=complex,
    )


def raw_param_derivative(h0, alpha, beta, phi, axis: str) -> np.ndarray:
    ca, sa = math.cos(alpha), math.sin(alpha)
    eb = complex(math.cos(beta), -math.sin(beta))
    ep = complex(math.cos(phi), math.sin(phi))
    if axis == "alpha":
        c12, c23 = -h0 * sa * eb, h0 * ca * ep
    elif axis == "beta":
        c12, c23 = -1j * h0 * ca * eb, 0.0j
    elif axis == "phi":
        c12, c23 = 0.0j, 1j * h0 * sa * ep
    else:
        raise ValueError(f"unknown axis {axis!r}; expected one of {AXES}")
    return np.array(
        [[0.0, c12, 0.0], [np.conj(c12), 0.0, c23], [0.0, np.conj(c23), 0.0]],
        dtype=complex,
    )


def param_derivative(p: ParamPoint, axis: str) -> np.ndarray:
    """Analytic derivative of the Hamiltonian along alpha, beta or phi."""
    return raw_param_derivative(p.h0, p.alpha, p.beta, p.phi, axis)


def gellmann_matrices() -> np.ndarray:
    """The eight Gell-Mann matrices stacked as an (8, 3, 3) array."""
    lam = np.zeros((8, 3, 3), dtype=complex)
    lam[0][0, 1] = lam[0][1, 0] = 1
    lam[1][0, 1], lam[1][1, 0] = -1j, 1j
    lam[2][0, 0], lam[2][1, 1] = 1, -1
    lam[3][0, 2] = lam[3][2, 0] = 1
    lam[4][0, 2], lam[4][2, 0] = -1j, 1j
    lam[5][1, 2] = lam[5][2, 1] = 1
    lam[6][1, 2], lam[6][2, 1] = -1j, 1j
    lam[7] = np.diag([1.0, 1.0, -2.0]) / math.sqrt(3.0)
    return lam


_GELLMANN = gellmann_matrices()


@dataclass(frozen=True)
class GellMannCoeffs:
    """Real coefficients c1..c8 (stored as ``c[0]..c[7]``)."""

    c: np.ndarray

    def reassemble(self) -> np.ndarray:
        return np.einsum("k,kij->ij", self.c, _GELLMANN)


def gellmann_decompose(H: np.ndarray) -> GellMannCoeffs:
    H = np.asarray(H, dtype=complex)
    scale = max(1.0, float(np.max(np.abs(H))))
    tr = np.trace(H)
    if abs(tr) > 1e-12 * scale:
        raise ValueError(f"matrix is not traceless: trace = {tr}")
    if np.max(np.abs(H - H.conj().T)) > 1e-12 * scale:
        raise ValueError("matrix is not Hermitian")
    c = np.real(np.einsum("kji,ij->k", _GELLMANN, H)) / 2.0
    return GellMannCoeffs(c)


def perturbation_term(kind: str, strength: float) -> np.ndarray:
    """``strength`` times lambda4 (mirror breaking) or lambda5 (PT breaking)."""
    key = kind.lower().replace("λ", "lambda")
    if key in ("lambda4", "4"):
        return float(strength) * _GELLMANN[3].copy()
    if key in ("lambda5", "5"):
        return float(strength) * _GELLMANN[4].copy()
    raise ValueError(f"unknown perturbation kind {kind!r}; expected lambda4 or lambda5")


CHIRAL = np.diag([1.0, -1.0, 1.0]).astype(complex)
MIRROR1 = np.diag([-1.0, 1.0, 1.0]).astype(complex)
MIRROR2 = np.diag([1.0, 1.0, -1.0]).astype(complex)
INVERSION = MIRROR1 @ MIRROR2


@dataclass(frozen=True)
class SymmetryReport:
    chiral_residual: float
    mirror1_residual: float
    mirror2_residual: float
    inversion_residual: float
    pt_applicable: bool
    pt_residual: float
    n_samples: int
    seed: int | None
    scale: float

    def holds(self, name: str, rtol: float = 1e-12) -> bool:
        """True when the named residual is below ``rtol`` times the largest |H|."""
        return getattr(self, f"{name}_residual") <= rtol * max(self.scale, 1e-300)


def ball_samples(radius: float, n: int = 32, seed: int = DEFAULT_SYMMETRY_SEED) -> list[CartesianPoint]:
    """Quasi-random points in the 4-ball of ``radius``.

    A scrambled Halton sequence fills the enclosing cube; points outside
    the ball are skipped, so the output is deterministic for a given seed.
    """
    if n <= 0:
        raise ValueError("need at least one sample")
    engine = qmc.Halton(d=4, scramble=True, seed=seed)
    kept: list[np.ndarray] = []
    while len(kept) < n:
        cube = 2.0 * engine.random(4 * n) - 1.0
        kept.extend(cube[np.sum(cube**2, axis=1) <= 1.0])
    return [CartesianPoint(*(radius * x)) for x in kept[:n]]


def symmetry_report(
    builder: Callable[[CartesianPoint], np.ndarray],
    samples: Sequence[CartesianPoint] | None = None,
    radius: float = 1.0,
    n_samples: int = 32,
    seed: int = DEFAULT_SYMMETRY_SEED,
) -> SymmetryReport:
    """Residuals of the chiral, mirror, inversion and PT relations.

    Norms are spectral norms, so the chiral residual of the field term
    alone is ``sqrt(2)|bz|``.
    """
    used_seed = None
    if samples is None:
        samples = ball_samples(radius, n_samples, seed)
        used_seed = seed
    samples = list(samples)
    if not samples:
        raise ValueError("empty sample set")

    def spec_norm(m):
        return float(np.linalg.norm(m, 2))

    chiral = m1 = m2 = inv = pt = scale = 0.0
    pt_applicable = True
    for q in samples:
        H = builder(q)
        scale = max(scale, float(np.max(np.abs(H))))
        chiral = max(chiral, spec_norm(H @ CHIRAL + CHIRAL @ H))
        flip_xy = CartesianPoint(-q.qx, -q.qy, q.qz, q.qw)
        flip_zw = CartesianPoint(q.qx, q.qy, -q.qz, -q.qw)
        flip_all = CartesianPoint(-q.qx, -q.qy, -q.qz, -q.qw)
        m1 = max(m1, spec_norm(MIRROR1 @ H @ MIRROR1 - builder(flip_xy)))
        m2 = max(m2, spec_norm(MIRROR2 @ H @ MIRROR2 - builder(flip_zw)))
        inv = max(inv, spec_norm(INVERSION @ H @ INVERSION - builder(flip_all)))
        # PT acts as complex conjugation on the real slice qy = qw = 0
        if q.qy != 0.0 or q.qw != 0.0:
            pt_applicable = False
        real_slice = builder(CartesianPoint(q.qx, 0.0, q.qz, 0.0))
        pt = max(pt, spec_norm(real_slice.conj() - real_slice))
    return SymmetryReport(chiral, m1, m2, inv, pt_applicable, pt, len(samples), used_seed, scale)


def sg220_hamiltonian(kx: float, ky: float, kz: float) -> np.ndarray:
    """Linearized three-band k.p Hamiltonian of space group 220."""
    return np.array([[0.0, ky, kx], [ky, 0.0, -kz], [kx, -kz, 0.0]], dtype=complex)


def sg220_momentum(p: ParamPoint) -> tuple[float, float, float]:
    return (
        p.h0 * math.sin(p.alpha - math.pi / 4),
        p.h0 * math.cos(p.alpha - math.pi / 4),
        p.bz / SQRT2,
    )


def sg220_slice_check(p: ParamPoint) -> float:
    """Largest difference between the sorted spectra of both models."""
    if p.delta_x != 0.0:
        raise ValueError("the slice equivalence needs delta_x = 0")
    e_model = np.linalg.eigvalsh(build_hamiltonian(p))
    e_sg = np.linalg.eigvalsh(sg220_hamiltonian(*sg220_momentum(p)))
    return float(np.max(np.abs(e_model - e_sg)))
