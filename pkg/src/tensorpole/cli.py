"""Command-line entry point.

Every frequency on the command line and in output files is a linear
frequency in MHz; angles are radians and times microseconds. Values are
converted to rad/us once, when the run configuration is resolved.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import (
    Drive,
    ReadoutModel,
    emulate_experiment,
    gamma_direct,
    gamma_simulated,
    resonance_scan,
    resonant_spec,
)
from .dynamics.experiment import DEFAULT_M, TRANSITIONS, transition_frequency
from .errors import TensorpoleError
from .geometry import (
    geometry_table,
    qgt_analytic,
    qgt_fd,
    qgt_perturbative,
    three_form_from_connection,
    three_form_from_metric,
    three_form_psi,
    write_rows_csv,
)
from .invariants import b_analytic, connection_routes, dd_displacement, dd_metric, sweep
from .model import (
    AXES,
    ParamPoint,
    angular_to_mhz,
    build_hamiltonian,
    mhz_to_angular,
    perturbation_term,
)
from .spectral import PLANES, eigensystem, nodal_scan

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
UNITS = "frequency=MHz angle=rad time=us"
FIGURES = ("fig2", "fig3", "fig4", "figS1", "figS2")

COMMON_DEFAULTS = {
    "h0": 2.0, "alpha": 0.0, "beta": 0.0, "phi": 0.0, "bz": 0.0, "dx": 0.0,
    "grid": None, "seed": 0, "out": None, "format": "csv",
}
COMMAND_DEFAULTS = {
    "spectrum": {"gauge": "v2-real"},
    "qgt": {"method": "all", "step": 1e-3},
    "dd": {"method": "all", "grid_beta": None},
    "sweep": {"axis": "bz", "start": 0.0, "stop": 4.0, "steps": 17, "methods": None,
              "grid_beta": None},
    "nodal": {"plane": "qx-qy", "extent": None, "perturbation": None, "strength": None,
              "threshold": None},
    "modulate": {"drive": "alpha", "transition": "SQ", "m": DEFAULT_M, "omega": None,
                 "periods": 10.0, "noise": 0.0, "readout": "0.7,1.0,0.75",
                 "no_phase_cycle": False},
    "resonance": {"drive": "beta.phi", "transition": "DQ", "m": DEFAULT_M, "halfwidth": None,
                  "points": 81, "duration": None},
    "figure": {"name": "fig4", "map_size": 128, "alpha_points": 9},
}
DEFAULT_GRID = {"dd": 201, "sweep": 201, "nodal": 256, "figure": 201}


class ConfigError(Exception):
    """Invalid command line or configuration file (exit code 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


@dataclass
class RunConfig:
    """Resolved settings: raw values as given (MHz) plus the command name."""

    command: str
    values: dict

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name) from None

    def digest(self) -> str:
        """SHA-256 of the canonical settings, excluding the output location."""
        payload = {k: v for k, v in self.values.items() if k not in ("out", "config")}
        payload["command"] = self.command
        text = json.dumps(payload, sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()

    def header(self) -> list[str]:
        return [f"tensorpole {__version__}", f"command={self.command}",
                f"config_sha256={self.digest()}", f"units: {UNITS}"]

    def header_dict(self) -> dict:
        return {"version": __version__, "command": self.command,
                "config_sha256": self.digest(), "units": UNITS,
                "config": {k: v for k, v in self.values.items() if k not in ("out", "config")}}

    def point(self) -> ParamPoint:
        return ParamPoint(mhz_to_angular(self.h0), self.alpha, self.beta, self.phi,
                          mhz_to_angular(self.bz), mhz_to_angular(self.dx))


# parser ---------------------------------------------------------------------

def _common_parser() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    g = p.add_argument_group("model and output")
    g.add_argument("--config", help="key = value file with [common] and per-command sections")
    g.add_argument("--h0", type=float, help="sphere radius H0 in MHz (default 2)")
    g.add_argument("--alpha", type=float, help="polar angle alpha in rad")
    g.add_argument("--beta", type=float, help="phase beta in rad")
    g.add_argument("--phi", type=float, help="phase phi in rad")
    g.add_argument("--bz", type=float, help="chiral-breaking field Bz in MHz")
    g.add_argument("--dx", type=float, help="displacement delta_x in MHz")
    g.add_argument("--grid", type=int, help="quadrature nodes per axis or scan size")
    g.add_argument("--seed", type=int, help="seed for noise streams")
    g.add_argument("--out", help="output file (directory for 'figure')")
    g.add_argument("--format", choices=("csv", "json"), help="output format")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = _Parser(prog="tensorpole", description="Tensor-monopole simulation toolkit.")
    parser.add_argument("--version", action="version", version=f"tensorpole {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("spectrum", parents=[common], help="energies and eigenvectors")
    s.add_argument("--gauge", choices=("v2-real", "max-real", "none"))

    s = sub.add_parser("qgt", parents=[common], help="quantum geometric tensor and 3-form")
    s.add_argument("--method", choices=("perturbative", "fd", "analytic", "all"))
    s.add_argument("--step", type=float, help="finite-difference step in rad")

    s = sub.add_parser("dd", parents=[common], help="Dixmier-Douady integrals")
    s.add_argument("--method", choices=("metric", "connection", "displacement", "all"))
    s.add_argument("--grid-beta", type=int, help="beta nodes for the displacement route")

    s = sub.add_parser("sweep", parents=[common], help="observables along bz or dx")
    s.add_argument("--axis", choices=("bz", "dx"))
    s.add_argument("--from", dest="start", type=float, help="first value in MHz")
    s.add_argument("--to", dest="stop", type=float, help="last value in MHz")
    s.add_argument("--steps", type=int, help="number of points")
    s.add_argument("--methods", help="comma list of metric,connection,analytic,displacement")
    s.add_argument("--grid-beta", type=int, help="beta nodes for the displacement route")

    s = sub.add_parser("nodal", parents=[common], help="band-gap map over a momentum plane")
    s.add_argument("--plane", choices=PLANES)
    s.add_argument("--extent", type=float, help="half-width of the scan in MHz")
    s.add_argument("--perturbation", choices=("lambda4", "lambda5"))
    s.add_argument("--strength", type=float, help="perturbation strength in MHz (default 0.3 H0)")
    s.add_argument("--threshold", type=float, help="nodal gap threshold in MHz (default 1e-3 H0)")

    for name, text in (("modulate", "Rabi experiment under a parametric modulation"),
                       ("resonance", "transfer versus modulation frequency")):
        s = sub.add_parser(name, parents=[common], help=text)
        s.add_argument("--drive", help="alpha, alpha.beta, alpha.beta_bar, alpha.beta_ell, ...")
        s.add_argument("--transition", choices=tuple(TRANSITIONS))
        s.add_argument("--m", type=float, help="modulation amplitude in rad")
    s = sub.choices["modulate"]
    s.add_argument("--omega", type=float, help="drive frequency in MHz (default: resonant)")
    s.add_argument("--periods", type=float, help="trace length in predicted Rabi periods")
    s.add_argument("--noise", type=float, help="Gaussian readout noise (0 disables the readout model)")
    s.add_argument("--readout", help="reference levels r_plus,r_zero,r_minus")
    s.add_argument("--no-phase-cycle", action="store_true", default=None,
                   help="use a single drive polarity")
    s = sub.choices["resonance"]
    s.add_argument("--halfwidth", type=float, help="scan half-width in MHz (default 0.05 H0)")
    s.add_argument("--points", type=int, help="number of scanned frequencies")
    s.add_argument("--duration", type=float, help="drive duration in us (default a pi pulse)")

    s = sub.add_parser("figure", parents=[common], help="data bundle for one figure")
    s.add_argument("name", nargs="?", choices=FIGURES)
    s.add_argument("--map-size", type=int, help="gap-map size for figS2")
    s.add_argument("--alpha-points", type=int, help="alpha grid of the emulated experiment")
    return parser


# configuration --------------------------------------------------------------

def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    return action.choices[name]


def _coerce(action: argparse.Action, key: str, raw: str):
    if isinstance(action, argparse._StoreTrueAction):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"config key {key!r}: expected a boolean, got {raw!r}")
    value = raw.strip()
    if action.type is not None:
        try:
            value = action.type(value)
        except ValueError:
            raise ConfigError(f"config key {key!r}: cannot parse {raw!r}") from None
    if action.choices is not None and value not in action.choices:
        raise ConfigError(f"config key {key!r}: {value!r} not in {list(action.choices)}")
    return value


def _read_config(path: str, command: str, sub: argparse.ArgumentParser) -> dict:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path!r}: {exc}") from None
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    known = set(FIGURES) | set(COMMAND_DEFAULTS) | {"common"}
    unknown = [s for s in cp.sections() if s not in known]
    if unknown:
        raise ConfigError(f"unknown config sections {unknown}")
    out = {}
    for section in ("common", command):
        if not cp.has_section(section):
            continue
        for key, raw in cp.items(section):
            dest = key.replace("-", "_")
            dest = {"from": "start", "to": "stop"}.get(dest, dest)
            if dest not in actions:
                raise ConfigError(f"unknown config key {key!r} in section [{section}]")
            out[dest] = _coerce(actions[dest], key, raw)
    return out


def resolve(argv) -> RunConfig:
    """Parse ``argv``; precedence is defaults < config file < flags."""
    parser = build_parser()
    args = parser.parse_args(argv)
    command = args.command
    given = {k: v for k, v in vars(args).items() if k not in ("command", "config") and v is not None}
    values = dict(COMMON_DEFAULTS)
    values.update(COMMAND_DEFAULTS[command])
    if args.config:
        values.update(_read_config(args.config, command, _subparser(parser, command)))
    values.update(given)
    if values.get("grid") is None:
        values["grid"] = DEFAULT_GRID.get(command)
    cfg = RunConfig(command, values)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    try:
        cfg.point()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.h0 <= 0:
        raise ConfigError("--h0 must be positive")
    grid = cfg.grid
    if cfg.command in ("dd", "sweep", "figure") and (grid < 11 or grid % 2 == 0):
        raise ConfigError("--grid must be odd and >= 11 for Simpson quadrature")
    if cfg.command == "nodal" and grid < 2:
        raise ConfigError("--grid must be at least 2 for a nodal scan")
    if cfg.values.get("grid_beta") is not None and (cfg.grid_beta < 11 or cfg.grid_beta % 2 == 0):
        raise ConfigError("--grid-beta must be odd and >= 11")
    if cfg.command == "sweep":
        if cfg.steps < 2 or not cfg.stop > cfg.start:
            raise ConfigError("sweep needs --steps >= 2 and --to > --from")
        if cfg.methods:
            bad = set(cfg.methods.split(",")) - {"metric", "connection", "analytic", "displacement"}
            if bad:
                raise ConfigError(f"unknown sweep methods {sorted(bad)}")
    if cfg.command in ("modulate", "resonance"):
        try:
            Drive.parse(cfg.drive)
        except ValueError as exc:
            raise ConfigError(f"bad --drive {cfg.drive!r}: {exc}") from None
        if not 0 < cfg.m <= 0.2:
            raise ConfigError("--m must lie in (0, 0.2]")
    if cfg.command == "modulate":
        levels = cfg.readout.split(",")
        try:
            if len(levels) != 3:
                raise ValueError
            [float(v) for v in levels]
        except ValueError:
            raise ConfigError("--readout needs three comma-separated numbers") from None
        if cfg.noise < 0:
            raise ConfigError("--noise must be non-negative")
    if cfg.command == "figure" and cfg.name is None:
        raise ConfigError(f"figure name required, one of {list(FIGURES)}")
    if cfg.out is not None:
        target = Path(cfg.out)
        parent = target if cfg.command == "figure" else target.parent
        probe = parent
        while not probe.exists() and probe != probe.parent:
            probe = probe.parent
        if not os.access(probe, os.W_OK):
            raise ConfigError(f"output location {str(parent)!r} is not writable")


# output helpers -------------------------------------------------------------

def _f(v) -> str:
    if v is None:
        return ""
    v = float(v)
    return "" if math.isnan(v) else f"{v:.12g}"


def _write_table(path, header: list[str], columns: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write(",".join(columns) + "\n")
        for r in rows:
            fh.write(",".join(x if isinstance(x, str) else _f(x) for x in r) + "\n")


def _write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not serializable: {type(obj).__name__}")


def _emit(cfg: RunConfig, columns: list[str], rows, extra: dict | None = None) -> None:
    if cfg.out is None:
        return
    if cfg.format == "json":
        records = [dict(zip(columns, (r if isinstance(r, str) else _num(r) for r in row)))
                   for row in rows]
        payload = {"header": cfg.header_dict(), "rows": records}
        if extra:
            payload.update(extra)
        _write_json(cfg.out, payload)
    else:
        _write_table(cfg.out, cfg.header(), columns, rows)


def _num(v):
    if v is None:
        return None
    v = float(v)
    return None if math.isnan(v) else v


# commands -------------------------------------------------------------------

def cmd_spectrum(cfg: RunConfig) -> str:
    es = eigensystem(build_hamiltonian(cfg.point()), cfg.gauge)
    rows = []
    for k, name in enumerate(("minus", "zero", "plus")):
        v = es.states[:, k]
        rows.append([name, angular_to_mhz(es.energies[k])]
                    + [x for c in v for x in (c.real, c.imag)])
    cols = ["band", "energy"] + [f"{part}_{ms}" for ms in ("p1", "0", "m1") for part in ("re", "im")]
    _emit(cfg, cols, rows, {"gauge": es.gauge})
    # rounding first keeps roundoff from printing as -0.000000
    e = np.round(angular_to_mhz(es.energies), 6) + 0.0
    return f"E=[{e[0]:.6f}, {e[1]:.6f}, {e[2]:.6f}] MHz gauge={es.gauge}"


def cmd_qgt(cfg: RunConfig) -> str:
    p = cfg.point()
    routes = {"perturbative": lambda: qgt_perturbative(p),
              "fd": lambda: qgt_fd(p, cfg.step)}
    if p.bz == 0 and p.delta_x == 0:
        routes["analytic"] = lambda: qgt_analytic(p.alpha)
    names = list(routes) if cfg.method == "all" else [cfg.method]
    if cfg.method == "analytic" and "analytic" not in routes:
        raise TensorpoleError("the analytic QGT needs bz = 0 and dx = 0")
    rows = []
    for name in names:
        q = routes[name]()
        for i, a in enumerate(AXES):
            for j, b in enumerate(AXES):
                if j >= i:
                    rows.append([name, f"g_{a}_{b}", q.g[i, j]])
                if j > i:
                    rows.append([name, f"F_{a}_{b}", q.f[i, j]])
        rows.append([name, "H_metric", three_form_from_metric(q).value])
    forms = {}
    for label, func in (("H_connection", three_form_from_connection), ("H_psi", three_form_psi)):
        try:
            forms[label] = func(p).value
        except TensorpoleError as exc:
            forms[label] = None
            forms[label + "_error"] = str(exc)
    for label in ("H_connection", "H_psi"):
        rows.append(["three-form", label, forms[label]])
    _emit(cfg, ["route", "component", "value"], rows)
    q = qgt_perturbative(p)
    return (f"g_aa={q.g[0, 0]:.6f} g_bb={q.g[1, 1]:.6f} g_pp={q.g[2, 2]:.6f} "
            f"H_metric={three_form_from_metric(q).value:.6f}")


def cmd_dd(cfg: RunConfig) -> str:
    h0, bz, dx = mhz_to_angular(cfg.h0), mhz_to_angular(cfg.bz), mhz_to_angular(cfg.dx)
    methods = ("metric", "connection", "displacement") if cfg.method == "all" else (cfg.method,)
    results, parts = {}, []
    for m in methods:
        if m == "metric":
            results["G"] = dd_metric(h0, bz, cfg.grid)
            parts.append(f"G={results['G']:.6f}")
        elif m == "connection":
            routes = connection_routes(h0, bz, cfg.grid)
            results["B"] = routes.boundary
            results["B_quadrature"] = routes.quadrature
            results["B_analytic"] = b_analytic(bz / h0)
            parts.append(f"B={routes.boundary:.6f}")
        else:
            results["DD_displacement"] = dd_displacement(h0, dx, cfg.grid, cfg.grid_beta or cfg.grid)
            parts.append(f"DD_displacement={results['DD_displacement']:.6f}")
    _emit(cfg, ["quantity", "value"], [[k, v] for k, v in results.items()])
    return " ".join(parts)


def cmd_sweep(cfg: RunConfig) -> str:
    values = np.linspace(cfg.start, cfg.stop, cfg.steps)
    methods = tuple(cfg.methods.split(",")) if cfg.methods else None
    diagram = sweep(cfg.axis, mhz_to_angular(values), methods, mhz_to_angular(cfg.h0),
                    mhz_to_angular(cfg.bz), mhz_to_angular(cfg.dx), cfg.grid,
                    cfg.grid_beta or cfg.grid)
    scale = 1.0 / (2.0 * math.pi)
    if cfg.out is not None:
        if cfg.format == "json":
            diagram.to_json(cfg.out, cfg.header_dict(), scale)
        else:
            diagram.to_csv(cfg.out, cfg.header(), scale)
    failed = sum(bool(o.errors) for o in diagram.points)
    return f"sweep {cfg.axis}: {len(diagram.points)} points, {failed} with missing values"


def _perturbation(cfg: RunConfig):
    if cfg.perturbation is None:
        return None
    strength = cfg.strength if cfg.strength is not None else 0.3 * cfg.h0
    return perturbation_term(cfg.perturbation, mhz_to_angular(strength))


def cmd_nodal(cfg: RunConfig) -> str:
    extent = cfg.extent if cfg.extent is not None else 2.0 * max(abs(cfg.bz), cfg.h0)
    if extent <= 0:
        raise ConfigError("--extent must be positive")
    threshold = mhz_to_angular(cfg.threshold if cfg.threshold is not None else 1e-3 * cfg.h0)
    report = nodal_scan(mhz_to_angular(cfg.bz), cfg.plane, mhz_to_angular(extent), cfg.grid,
                        _perturbation(cfg), threshold)
    to_mhz = 1.0 / (2.0 * math.pi)
    summary = {"ring_radius": report.ring_radius_estimate * to_mhz,
               "min_gap": report.min_gap * to_mhz, "spacing": report.spacing * to_mhz,
               "threshold": report.threshold * to_mhz, "nodal_points": len(report.nodal_points)}
    if cfg.out is not None:
        if cfg.format == "json":
            _write_json(cfg.out, {"header": cfg.header_dict(), "summary": summary,
                                  "axis": report.axis * to_mhz, "gap": report.gap_map * to_mhz})
        else:
            report.to_csv(cfg.out, cfg.header(), to_mhz)
    return (f"ring_radius={summary['ring_radius']:.6f} MHz min_gap={summary['min_gap']:.6g} MHz "
            f"spacing={summary['spacing']:.6g} MHz")


def _eigen_populations(p: ParamPoint, states: np.ndarray) -> np.ndarray:
    v = eigensystem(build_hamiltonian(p)).states[:, ::-1]
    return np.abs(states @ v.conj()) ** 2


def cmd_modulate(cfg: RunConfig) -> str:
    p = cfg.point()
    omega = None if cfg.omega is None else mhz_to_angular(cfg.omega)
    spec = resonant_spec(p, cfg.drive, cfg.transition, cfg.m, omega)
    readout = None
    if cfg.noise > 0:
        r = [float(v) for v in cfg.readout.split(",")]
        readout = ReadoutModel(*r, sigma=cfg.noise)
    sim = gamma_simulated(spec, cfg.transition, readout, cfg.periods, seed=cfg.seed,
                          phase_cycle=not cfg.no_phase_cycle)
    direct = gamma_direct(p, cfg.drive, cfg.transition).value
    fit = sim.fit.as_dict()
    fit_mhz = {"omega_mhz": angular_to_mhz(fit["omega"]), "amplitude": fit["amplitude"],
               "offset": fit["offset"], "phase": fit["phase"], "residual_rms": fit["residual_rms"]}
    gammas = {"gamma_simulated_mhz": angular_to_mhz(sim.element.value),
              "gamma_direct_mhz": angular_to_mhz(direct),
              "gamma_cycle_mhz": [angular_to_mhz(v) for v in sim.cycle_values],
              "drive_omega_mhz": angular_to_mhz(spec.omega),
              "prep_recipe": "pulses" if sim.pulse_recipe else "exact-unitary"}
    if cfg.out is not None:
        pops = _eigen_populations(p, sim.trace.states)
        times = sim.trace.times
        if cfg.format == "json":
            _write_json(cfg.out, {"header": cfg.header_dict(), "fit": fit_mhz, **gammas,
                                  "trace": {"t": times, "n_plus": pops[:, 0],
                                            "n_zero": pops[:, 1], "n_minus": pops[:, 2],
                                            "basis": "eigen"}})
        else:
            rows = [[t, a, b, c, "eigen"] for t, (a, b, c) in zip(times, pops)]
            _write_table(cfg.out, cfg.header(), ["t", "n_plus", "n_zero", "n_minus", "basis"], rows)
            _write_json(_sidecar(cfg.out), {"header": cfg.header_dict(), "fit": fit_mhz, **gammas})
    return (f"Gamma={gammas['gamma_simulated_mhz']:.6f} MHz "
            f"direct={gammas['gamma_direct_mhz']:.6f} MHz Omega={fit_mhz['omega_mhz']:.6f} MHz")


def _sidecar(path) -> str:
    root, _ = os.path.splitext(str(path))
    return root + ".fit.json"


def cmd_resonance(cfg: RunConfig) -> str:
    p = cfg.point()
    template = resonant_spec(p, cfg.drive, cfg.transition, cfg.m)
    centre = transition_frequency(p, cfg.transition)
    h0 = mhz_to_angular(cfg.h0)
    half = mhz_to_angular(cfg.halfwidth) if cfg.halfwidth is not None else 0.05 * h0
    duration = cfg.duration if cfg.duration is not None else math.pi / (cfg.m * h0)
    if cfg.points < 3 or half <= 0 or duration <= 0:
        raise ConfigError("resonance needs --points >= 3 and positive --halfwidth, --duration")
    omegas = np.linspace(centre - half, centre + half, cfg.points)
    spectrum = resonance_scan(template, omegas, duration)
    rows = [[angular_to_mhz(w), t] for w, t in zip(spectrum.omegas, spectrum.transfer)]
    _emit(cfg, ["omega", "transfer"], rows,
          {"peak_omega_mhz": angular_to_mhz(spectrum.peak_omega),
           "expected_mhz": angular_to_mhz(centre), "step_mhz": angular_to_mhz(spectrum.step)})
    return (f"peak={angular_to_mhz(spectrum.peak_omega):.6f} MHz "
            f"expected={angular_to_mhz(centre):.6f} MHz step={angular_to_mhz(spectrum.step):.3g} MHz")


# figure bundles -------------------------------------------------------------

GAMMA_COLUMNS = ["alpha", "drive", "transition", "gamma_direct", "gamma_simulated"]
G_NAMES = [("g_aa", 0, 0), ("g_ab", 0, 1), ("g_ap", 0, 2), ("g_bb", 1, 1), ("g_bp", 1, 2),
           ("g_pp", 2, 2)]
F_NAMES = [("F_ab", 0, 1), ("F_ap", 0, 2), ("F_bp", 1, 2)]


def _figure_pipeline(cfg: RunConfig):
    n = cfg.alpha_points
    if n < 3 or n % 2 == 0:
        raise ConfigError("--alpha-points must be odd and >= 3")
    return emulate_experiment(mhz_to_angular(cfg.h0), np.linspace(0.0, math.pi / 2, n))


def _fig2(cfg: RunConfig, outdir: Path) -> str:
    h0 = mhz_to_angular(cfg.h0)
    res = _figure_pipeline(cfg)
    header = cfg.header()
    spec = res.resonance
    _write_table(outdir / "fig2_resonance.csv", header, ["omega", "transfer"],
                 [[angular_to_mhz(w), t] for w, t in zip(spec.omegas, spec.transfer)])
    rows = []
    for a, sim, direct in zip(res.alphas, res.gamma_simulated, res.gamma_direct):
        for (label, tr), value in direct.items():
            rows.append([a, label, tr, angular_to_mhz(value), angular_to_mhz(sim[(label, tr)])])
    _write_table(outdir / "fig2_gamma.csv", header, GAMMA_COLUMNS, rows)
    p = ParamPoint(h0, 5 * math.pi / 16)
    for tr in TRANSITIONS:
        sim = gamma_simulated(resonant_spec(p, "alpha", tr), tr, phase_cycle=False)
        pops = _eigen_populations(p, sim.trace.states)
        fitted = sim.fit.evaluate(sim.trace.times)
        _write_table(outdir / f"fig2_rabi_{tr}.csv", header,
                     ["t", "n_plus", "n_zero", "n_minus", "basis", "fit"],
                     [[t, x, y, z, "eigen", f] for t, (x, y, z), f
                      in zip(sim.trace.times, pops, fitted)])
    return f"fig2: resonance peak {angular_to_mhz(spec.peak_omega):.6f} MHz"


def _fig3(cfg: RunConfig, outdir: Path) -> str:
    h0 = mhz_to_angular(cfg.h0)
    res = _figure_pipeline(cfg)
    header = cfg.header()
    cols = ["alpha"] + [f"{n}_{src}" for n, _, _ in G_NAMES + F_NAMES for src in ("sim", "direct")]
    rows = []
    for a, qs, qd in zip(res.alphas, res.qgt_simulated, res.qgt_direct):
        row = [a]
        for _, i, j in G_NAMES:
            row += [qs.g[i, j], qd.g[i, j]]
        for _, i, j in F_NAMES:
            row += [qs.f[i, j], qd.f[i, j]]
        rows.append(row)
    _write_table(outdir / "fig3_qgt.csv", header, cols, rows)

    alphas = np.linspace(0.0, math.pi / 2, 65)
    table = geometry_table(h0, alphas)
    for row, a in zip(table, alphas):
        try:
            row["H_psi"] = three_form_psi(ParamPoint(h0, float(a))).value
        except TensorpoleError:
            row["H_psi"] = float("nan")
    write_rows_csv(outdir / "fig3_three_form.csv", table, header)

    exact_g = dd_metric(h0, 0.0, cfg.grid)
    exact_b = connection_routes(h0, 0.0, cfg.grid).boundary
    _write_table(outdir / "fig3_summary.csv", header, ["quantity", "value"],
                 [["DD_metric_simulated", res.dd_metric],
                  ["DD_connection_simulated", res.dd_connection],
                  ["DD_metric_exact", exact_g], ["DD_connection_exact", exact_b]])
    return f"fig3: DD metric {res.dd_metric:.6f} connection {res.dd_connection:.6f} (simulated)"


def _fig4(cfg: RunConfig, outdir: Path) -> str:
    h0 = mhz_to_angular(cfg.h0)
    ratios = np.round(np.linspace(0.0, 3.0, 61), 12)
    diagram = sweep("bz", ratios * h0, None, h0, 0.0, 0.0, cfg.grid)
    diagram.to_csv(outdir / "fig4_sweep.csv", cfg.header(), 1.0 / (2.0 * math.pi))
    return f"fig4: {len(ratios)} bz points up to 3 H0"


def _figS1(cfg: RunConfig, outdir: Path) -> str:
    h0 = mhz_to_angular(cfg.h0)
    ratios = np.round(np.linspace(0.0, 2.0, 41), 12)
    rows = []
    for r in ratios:
        try:
            value = dd_displacement(h0, r * h0, cfg.grid, cfg.grid)
        except TensorpoleError:
            value = None
        rows.append([r, value])
    _write_table(outdir / "figS1_displacement.csv", cfg.header(), ["dx_over_h0", "DD"], rows)
    return f"figS1: {len(ratios)} displacement points"


def _figS2(cfg: RunConfig, outdir: Path) -> str:
    bz_mhz = cfg.bz if cfg.bz != 0 else 0.5 * cfg.h0
    bz = mhz_to_angular(bz_mhz)
    extent = 2.0 * max(abs(bz), mhz_to_angular(cfg.h0))
    n = cfg.map_size
    if n < 2:
        raise ConfigError("--map-size must be at least 2")
    header = cfg.header() + [f"bz={bz_mhz:.12g}"]
    to_mhz = 1.0 / (2.0 * math.pi)
    ring = nodal_scan(bz, "qx-qy", extent, n)
    ring.to_csv(outdir / "figS2_ring.csv", header, to_mhz)
    nodes = nodal_scan(bz, "qx-qz", extent, n)
    nodes.to_csv(outdir / "figS2_points.csv", header, to_mhz)
    strength = mhz_to_angular(0.3 * cfg.h0)
    xs = np.linspace(-extent, extent, n)
    for kind in ("lambda4", "lambda5"):
        report = nodal_scan(bz, "qx-qz", extent, n, perturbation_term(kind, strength))
        H = _slice_hamiltonians(xs, bz) + perturbation_term(kind, strength)
        e = np.linalg.eigvalsh(H)
        rows = [[x] + [v for k in range(3) for v in (e[i, :, k].min(), e[i, :, k].max())]
                for i, x in enumerate(xs)]
        cols = ["qx", "lower_min", "lower_max", "middle_min", "middle_max", "upper_min",
                "upper_max"]
        _write_table(outdir / f"figS2_envelope_{kind}.csv",
                     header + [f"{kind} strength={0.3 * cfg.h0:.12g} "
                               f"min_gap={report.min_gap * to_mhz:.12g}"],
                     cols, [[r[0] * to_mhz] + [v * to_mhz for v in r[1:]] for r in rows])
    return f"figS2: ring radius {ring.ring_radius_estimate * to_mhz:.6f} MHz"


def _slice_hamiltonians(xs: np.ndarray, bz: float) -> np.ndarray:
    """Hamiltonians on the qy = qw = 0 slice, indexed [qx, qz]."""
    X, Z = np.meshgrid(xs, xs, indexing="ij")
    H = np.zeros(X.shape + (3, 3), dtype=complex)
    b = bz / math.sqrt(2.0)
    H[..., 0, 0], H[..., 2, 2] = b, -b
    H[..., 0, 1] = H[..., 1, 0] = X
    H[..., 1, 2] = H[..., 2, 1] = Z
    return H


def cmd_figure(cfg: RunConfig) -> str:
    if cfg.out is None:
        raise ConfigError("figure needs --out DIRECTORY")
    if cfg.format != "csv":
        raise ConfigError("figure bundles are written as CSV")
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    builders = {"fig2": _fig2, "fig3": _fig3, "fig4": _fig4, "figS1": _figS1, "figS2": _figS2}
    return builders[cfg.name](cfg, outdir)


COMMANDS = {"spectrum": cmd_spectrum, "qgt": cmd_qgt, "dd": cmd_dd, "sweep": cmd_sweep,
            "nodal": cmd_nodal, "modulate": cmd_modulate, "resonance": cmd_resonance,
            "figure": cmd_figure}


def _fail(code: int, kind: str, message: str, command=None) -> int:
    payload = {"error": kind, "message": message, "exit_code": code}
    if command:
        payload["command"] = command
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    """Run one subcommand; returns the process exit status."""
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = resolve(argv)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc))
    except SystemExit as exc:
        # --help and --version
        return int(exc.code or 0)
    try:
        summary = COMMANDS[cfg.command](cfg)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc), cfg.command)
    except OSError as exc:
        return _fail(EXIT_CONFIG, "io", str(exc), cfg.command)
    except (TensorpoleError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return _fail(EXIT_NUMERIC, type(exc).__name__, str(exc), cfg.command)
    print(summary)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
