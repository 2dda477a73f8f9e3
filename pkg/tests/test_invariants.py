import json
import math

import numpy as np
import pytest
from scipy.integrate import quad

from tensorpole.errors import DegenerateSpectrumError, SingularityError
from tensorpole.geometry import qgt_fd
from tensorpole.invariants import (
    b_analytic,
    connection_routes,
    dd_connection,
    dd_displacement,
    dd_metric,
    sweep,
)
from tensorpole.model import ParamPoint

H0 = 2 * math.pi * 2

# G(h) frozen from an independent oracle: adaptive quadrature of
# 4 sqrt(det g) with g from the finite-difference overlap metric.
FROZEN_G = {0.5: 1.016575, 0.9: 1.069680, 2.0: 0.0733721, 3.0: 0.0219253}


def _oracle_g(h):
    def integrand(a):
        g = qgt_fd(ParamPoint(1.0, a, 0.0, 0.0, h), step=1e-4).g
        return math.sqrt(max(np.linalg.det(g), 0.0))
    return 8.0 * quad(integrand, 0.0, math.pi / 2, limit=200, epsabs=1e-7)[0]


def test_metric_dd_at_zero_field():
    assert dd_metric(H0, 0.0, 201) == pytest.approx(1.0, abs=1e-6)


def test_metric_dd_converges():
    assert abs(dd_metric(H0, 0.0, 401) - dd_metric(H0, 0.0, 201)) < 1e-8


@pytest.mark.parametrize("h", [0.5, 2.0, 3.0])
def test_metric_dd_frozen_values(h):
    assert dd_metric(H0, h * H0, 201) == pytest.approx(FROZEN_G[h], abs=2e-6)


def test_metric_dd_near_transition_needs_finer_grid():
    # the integrand sharpens as h approaches 1; 201 nodes only reach ~2e-5
    assert dd_metric(H0, 0.9 * H0, 201) == pytest.approx(FROZEN_G[0.9], abs=5e-5)
    assert dd_metric(H0, 0.9 * H0, 3201) == pytest.approx(FROZEN_G[0.9], abs=2e-6)


def test_frozen_values_reproduce_from_oracle():
    assert _oracle_g(2.0) == pytest.approx(FROZEN_G[2.0], abs=2e-6)


def test_metric_dd_refuses_degenerate_node():
    with pytest.raises(DegenerateSpectrumError, match="node 0"):
        dd_metric(H0, H0, 201)
    with pytest.raises(ValueError):
        dd_metric(H0, 0.0, 200)


def test_metric_dd_is_scale_free():
    assert dd_metric(1.0, 2.0) == pytest.approx(dd_metric(H0, 2.0 * H0), rel=1e-10)


def test_connection_examples():
    assert dd_connection(H0, 0.0) == pytest.approx(1.0, abs=1e-12)
    assert dd_connection(H0, H0) == pytest.approx(-1 / 3, abs=1e-9)
    assert dd_connection(H0, 3 * H0) == pytest.approx(-0.5 * (1 - 3 / math.sqrt(17)), abs=1e-9)


@pytest.mark.parametrize("h", [0.0, 0.3, 0.8, 0.99, 1.01, 1.5, 3.0, 6.0])
def test_connection_route_identity(h):
    routes = connection_routes(H0, h * H0)
    assert abs(routes.quadrature - routes.boundary) <= 1e-9
    assert routes.boundary == pytest.approx(b_analytic(h), abs=1e-6)


def test_connection_quadrature_missing_at_transition():
    routes = connection_routes(H0, H0)
    assert routes.quadrature is None
    assert routes.boundary == pytest.approx(-1 / 3, abs=1e-9)


def test_b_analytic_examples_and_monotonicity():
    assert b_analytic(0.5) == 1.0 and b_analytic(0.0) == 1.0
    assert b_analytic(1.0) == pytest.approx(-1 / 3)
    hs = np.linspace(1.0, 200.0, 400)
    values = [b_analytic(h) for h in hs]
    assert np.all(np.diff(values) > 0)
    assert -1e-4 < values[-1] < 0
    with pytest.raises(ValueError):
        b_analytic(-0.1)


def test_displacement_examples():
    assert dd_displacement(H0, 0.0) == pytest.approx(1.0, abs=1e-6)
    assert dd_displacement(H0, 0.5 * H0) == pytest.approx(1.0, abs=1e-2)
    assert dd_displacement(H0, 1.5 * H0) == pytest.approx(0.0, abs=1e-2)
    with pytest.raises(SingularityError):
        dd_displacement(H0, H0)


@pytest.mark.parametrize("ratio", [0.3, 0.7, 1.3, 2.5])
def test_displacement_symmetric(ratio):
    assert dd_displacement(H0, ratio * H0) == pytest.approx(dd_displacement(H0, -ratio * H0), abs=1e-12)


def test_sweep_in_field():
    hs = [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0]
    diagram = sweep("bz", [h * H0 for h in hs], h0=H0)
    for h, obs in zip(hs, diagram.points):
        assert obs.dd_connection == pytest.approx(b_analytic(h), abs=1e-6)
        assert obs.b_analytic == pytest.approx(b_analytic(h), abs=1e-12)
    at_one = diagram.points[4]
    assert at_one.dd_connection == pytest.approx(-1 / 3, abs=1e-9)
    assert at_one.dd_metric is None and at_one.errors


def test_sweep_single_point_and_displacement():
    one = sweep("bz", [0.0], h0=H0)
    assert len(one.points) == 1
    assert one.points[0].dd_metric == pytest.approx(1.0, abs=1e-6)
    disp = sweep("dx", [r * H0 for r in (0.5, 0.9, 1.1, 1.5)], h0=H0)
    expected = [1, 1, 0, 0]
    for obs, target in zip(disp.points, expected):
        assert obs.dd_displacement == pytest.approx(target, abs=2e-2)


def test_sweep_records_failures_as_missing(tmp_path):
    disp = sweep("dx", [0.5 * H0, H0], h0=H0)
    assert disp.points[1].dd_displacement is None
    assert "displacement" in disp.points[1].errors[0]
    path = tmp_path / "s.csv"
    disp.to_csv(path, header_lines=["x=1"])
    lines = path.read_text().splitlines()
    assert lines[0] == "# x=1"
    assert lines[1].startswith("axis,value,G,B_numeric")
    assert lines[3].split(",")[5] == ""
    jpath = tmp_path / "s.json"
    disp.to_json(jpath, header={"k": 1})
    data = json.loads(jpath.read_text())
    assert data["header"] == {"k": 1} and len(data["points"]) == 2


def test_sweep_validation():
    with pytest.raises(ValueError):
        sweep("bz", [1.0, 0.5])
    with pytest.raises(ValueError):
        sweep("alpha", [0.0])
    with pytest.raises(ValueError):
        sweep("bz", [0.0], methods=["magic"])
