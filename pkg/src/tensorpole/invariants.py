"""Dixmier-Douady integrals, the G and B observables and phase sweeps.

The beta and phi integrals of the undisplaced model are done analytically
(rotation symmetry), leaving composite Simpson quadrature over alpha.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import simpson

from .errors import DegenerateSpectrumError, SingularityError, TensorpoleError
from .geometry import GAP_GUARD, displaced_three_form_grid, ground_chi_batch
from .model import SQRT2, raw_hamiltonian

HALF_PI = 0.5 * math.pi


def _check_grid(n: int, name: str = "n_alpha") -> None:
    if n < 11 or n % 2 == 0:
        raise ValueError(f"{name} must be odd and >= 11 (got {n})")


def _alpha_nodes(n: int) -> np.ndarray:
    return np.linspace(0.0, HALF_PI, n)


def _guard_nodes(energies: np.ndarray, alphas: np.ndarray, h0: float, bz: float) -> None:
    scale = h0 if h0 > 0 else abs(bz) / SQRT2
    gaps = np.diff(energies, axis=1)
    bad = np.flatnonzero(np.min(gaps, axis=1) <= GAP_GUARD * scale)
    if bad.size:
        k = int(bad[0])
        raise DegenerateSpectrumError(
            f"spectrum degenerate at quadrature node {k} (alpha={alphas[k]:.12g})",
            gap=float(np.min(gaps[k])),
        )


def metric_integrand(h0: float, bz: float, alphas: np.ndarray) -> np.ndarray:
    """``sqrt(det g)`` of the ground state along alpha."""
    chi, energies = ground_chi_batch(h0, alphas, bz)
    _guard_nodes(energies, alphas, h0, bz)
    det = np.linalg.det(np.real(chi))
    return np.sqrt(np.clip(det, 0.0, None))


def dd_metric(h0: float, bz: float, n_alpha: int = 201) -> float:
    """``G = 8 int_0^{pi/2} sqrt(det g) dalpha``; equals 1 at bz = 0."""
    _check_grid(n_alpha)
    alphas = _alpha_nodes(n_alpha)
    return float(8.0 * simpson(metric_integrand(h0, bz, alphas), x=alphas))


def connection_integrand(h0: float, bz: float, alphas: np.ndarray) -> np.ndarray:
    """``f_ab + f_pa`` (the 3-form times two) along alpha."""
    chi, energies = ground_chi_batch(h0, alphas, bz)
    _guard_nodes(energies, alphas, h0, bz)
    f = 2.0 * np.imag(chi)
    return f[:, 0, 1] + f[:, 2, 0]


def _boundary_ground(h0: float, alpha: float, bz: float) -> np.ndarray:
    """Ground state at a boundary point, resolving a degenerate ground level.

    At bz = h0 the alpha = 0 ground level is doubly degenerate; the state is
    taken as the limit from bz above h0, i.e. the member of the degenerate
    block with the lowest expectation of dH/dbz = diag(1, 0, -1)/sqrt(2).
    """
    H = raw_hamiltonian(h0, alpha, 0.0, 0.0, bz)
    e, v = np.linalg.eigh(H)
    scale = max(h0, abs(bz), 1e-300)
    block = [k for k in range(3) if e[k] - e[0] <= 1e-11 * scale]
    if len(block) == 1:
        return v[:, 0]
    sub = v[:, block]
    dh_dbz = np.diag([1.0, 0.0, -1.0]) / SQRT2
    w, c = np.linalg.eigh(sub.conj().T @ dh_dbz @ sub)
    return sub @ c[:, 0]


def boundary_difference(h0: float, bz: float) -> float:
    """``[v1^2 - v3^2](0) - [v1^2 - v3^2](pi/2)`` for the ground state."""
    def diff(alpha):
        u = _boundary_ground(h0, alpha, bz)
        return abs(u[0]) ** 2 - abs(u[2]) ** 2
    return float(diff(0.0) - diff(HALF_PI))


@dataclass(frozen=True)
class ConnectionRoutes:
    boundary: float
    quadrature: float | None
    n_alpha: int


def connection_routes(h0: float, bz: float, n_alpha: int = 201, tol: float = 1e-11,
                      max_nodes: int = 2**16 + 1) -> ConnectionRoutes:
    """Both evaluations of B; Simpson nodes double until the change < tol.

    The quadrature is ``None`` when a node hits a degeneracy (bz = h0).
    """
    _check_grid(n_alpha)
    boundary = boundary_difference(h0, bz)
    n, previous = n_alpha, None
    try:
        while True:
            alphas = _alpha_nodes(n)
            value = float(simpson(connection_integrand(h0, bz, alphas), x=alphas))
            if previous is not None and abs(value - previous) < tol:
                break
            if 2 * n - 1 > max_nodes:
                break
            previous, n = value, 2 * n - 1
    except DegenerateSpectrumError:
        return ConnectionRoutes(boundary, None, n)
    return ConnectionRoutes(boundary, value, n)


def dd_connection(h0: float, bz: float, n_alpha: int = 201) -> float:
    """B from the boundary form; the quadrature route is in :func:`connection_routes`."""
    _check_grid(n_alpha)
    return boundary_difference(h0, bz)


def b_analytic(h: float) -> float:
    """Piecewise closed form of B in ``h = bz / h0``."""
    if h < 0:
        raise ValueError("h must be non-negative")
    if h < 1.0:
        return 1.0
    return -0.5 * (1.0 - h / math.sqrt(h * h + 8.0))


def dd_displacement(h0: float, delta_x: float, n_alpha: int = 201, n_beta: int = 201) -> float:
    """DD of the sphere displaced by ``delta_x`` (2D Simpson over alpha, beta)."""
    _check_grid(n_alpha, "n_alpha")
    _check_grid(n_beta, "n_beta")
    if h0 <= 0:
        raise ValueError("h0 must be positive")
    if abs(abs(delta_x) / h0 - 1.0) <= 0.02:
        raise SingularityError("delta_x within 2% of h0: the monopole touches the sphere")
    alphas = _alpha_nodes(n_alpha)
    betas = np.linspace(0.0, 2.0 * math.pi, n_beta)
    grid = displaced_three_form_grid(h0, alphas[:, None], betas[None, :], delta_x)
    inner = simpson(grid, x=betas, axis=1)
    # (1 / 2 pi^2) * 2 pi (phi) * double integral
    return float(simpson(inner, x=alphas) / math.pi)


@dataclass
class Observables:
    axis: str
    value: float
    h0: float
    bz: float
    delta_x: float
    dd_metric: float | None = None
    dd_connection: float | None = None
    b_analytic: float | None = None
    dd_displacement: float | None = None
    grid_alpha: int = 0
    grid_beta: int | None = None
    errors: list[str] = field(default_factory=list)


@dataclass
class PhaseDiagram:
    axis: str
    points: list[Observables]

    CSV_COLUMNS = ("axis", "value", "G", "B_numeric", "B_analytic", "DD_displacement",
                   "grid_alpha", "grid_beta")

    def rows(self, value_scale: float = 1.0) -> list[list[str]]:
        out = []
        for o in self.points:
            out.append([o.axis, _num(o.value * value_scale), _num(o.dd_metric),
                        _num(o.dd_connection), _num(o.b_analytic), _num(o.dd_displacement),
                        str(o.grid_alpha), "" if o.grid_beta is None else str(o.grid_beta)])
        return out

    def to_csv(self, path, header_lines=(), value_scale: float = 1.0) -> None:
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.CSV_COLUMNS)
            w.writerows(self.rows(value_scale))

    def to_json(self, path, header: dict | None = None, value_scale: float = 1.0) -> None:
        records = []
        for o in self.points:
            rec = asdict(o)
            rec["value"] = o.value * value_scale
            records.append(rec)
        with open(path, "w") as fh:
            json.dump({"header": header or {}, "points": records}, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _num(v) -> str:
    return "" if v is None else f"{v:.12g}"


METHODS = ("metric", "connection", "analytic", "displacement")


def sweep(axis: str, values, methods=None, h0: float = 1.0, bz: float = 0.0,
          delta_x: float = 0.0, n_alpha: int = 201, n_beta: int = 201) -> PhaseDiagram:
    """Observables along ``bz`` or ``dx``; failing points are left empty.

    Each point's failure message is kept in ``Observables.errors`` instead
    of aborting the sweep.
    """
    if axis not in ("bz", "dx"):
        raise ValueError("axis must be 'bz' or 'dx'")
    values = [float(v) for v in values]
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError("sweep values must be strictly increasing")
    if methods is None:
        methods = ("metric", "connection", "analytic") if axis == "bz" else ("displacement",)
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown methods {sorted(unknown)}")
    points = []
    for v in values:
        point_bz, point_dx = (v, delta_x) if axis == "bz" else (bz, v)
        obs = Observables(axis, v, h0, point_bz, point_dx, grid_alpha=n_alpha)
        for method in methods:
            try:
                if method == "metric":
                    obs.dd_metric = dd_metric(h0, point_bz, n_alpha)
                elif method == "connection":
                    obs.dd_connection = dd_connection(h0, point_bz, n_alpha)
                elif method == "analytic":
                    obs.b_analytic = b_analytic(point_bz / h0)
                elif method == "displacement":
                    obs.grid_beta = n_beta
                    obs.dd_displacement = dd_displacement(h0, point_dx, n_alpha, n_beta)
            except (TensorpoleError, ValueError) as exc:
                obs.errors.append(f"{method}: {exc}")
        points.append(obs)
    return PhaseDiagram(axis, points)
