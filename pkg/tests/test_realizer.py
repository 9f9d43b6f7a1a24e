import json

import numpy as np
import pytest

from isorealize import catalog
from isorealize.errors import EvalDomain
from isorealize.flows import TripleCoordinates
from isorealize.realizer import (ReconstructedW, compute_w, conductivity_at, gradient_of,
                                 sigma_grid_csv, verify_residuals, w_all_solutions,
                                 w_at_point)

SINH = catalog.get("sinh")
X0 = SINH.anchor
SMALL_BOX = (0.2, 2.0, -1.0, 1.0, -1.0, 1.0)


def test_w_equals_t3_on_sinh():
    for t in [(0.5, 0.2, -1.0), (-1.0, 1.0, 0.7), (0.0, -0.3, 1.5)]:
        s = compute_w(SINH.field, TripleCoordinates(X0, *t))
        assert s.w == pytest.approx(t[2], abs=1e-9)


def test_w_at_point_matches_closed_form():
    p = (1.2, 2.0, 0.3)
    s = w_at_point(SINH.field, X0, p)
    assert s.w == pytest.approx(float(catalog.sinh_closed_form_w(np.array([p]))[0]), abs=1e-8)
    assert s.sigma == pytest.approx(SINH.closed_form_sigma(np.array(p)), rel=1e-8)


def test_sigma_on_axis():
    for y in (-0.5, 0.0, 2.0):
        assert conductivity_at(SINH.field, X0, (0.0, y, 0.4)) == pytest.approx(
            np.exp(1.0 - y), rel=1e-6)


def test_tilde_normalization_same_w():
    p = (0.9, -0.4, 0.2)
    a = w_at_point(SINH.field, X0, p)
    b = w_at_point(SINH.field, X0, p, normalization="tilde")
    assert a.w == pytest.approx(b.w, abs=1e-8)


def test_w_all_solutions_unique_on_sinh():
    sols = w_all_solutions(SINH.field, X0, (1.0, 0.0, 0.0))
    assert len(sols) == 1


def test_closed_form_residual_sinh():
    rep = verify_residuals(SINH.field, catalog.sinh_closed_form_w, SINH.region)
    assert rep.max_residual < 5e-6
    assert rep.n_failed == 0


def test_reconstructed_residual_small_grid():
    w = ReconstructedW(SINH.field, X0)
    rep = verify_residuals(SINH.field, w, SMALL_BOX, grid_n=5)
    assert rep.n_failed == 0
    assert rep.max_residual < 5e-6
    assert rep.max_curl_dot < 1e-4
    assert rep.max_transport_defect < 1e-4


def test_reconstructed_tilde_small_grid():
    w = ReconstructedW(SINH.field, X0, normalization="tilde")
    rep = verify_residuals(SINH.field, w, SMALL_BOX, grid_n=4)
    assert rep.max_residual < 5e-6


def test_wrong_sigma_is_rejected():
    rep = verify_residuals(SINH.field, lambda p: np.zeros(len(p)), SMALL_BOX, grid_n=5)
    assert rep.max_residual > 0.1


def test_nan_points_are_counted():
    def w(p):
        out = catalog.sinh_closed_form_w(p)
        out[p[:, 0] > 1.5] = np.nan
        return out
    rep = verify_residuals(SINH.field, w, SMALL_BOX, grid_n=5)
    assert 0 < rep.n_failed < rep.n_points
    assert rep.max_residual < 5e-6


def test_errors_name_the_grid_point():
    def w(p):
        p = np.asarray(p)
        if p.ndim == 2:
            raise EvalDomain("batch")
        if p[0] > 1.9:
            raise EvalDomain("bad sigma")
        return 0.0
    with pytest.raises(EvalDomain, match="grid point"):
        verify_residuals(SINH.field, w, SMALL_BOX, grid_n=3)


def test_chunking_and_threads_do_not_change_output():
    w = ReconstructedW(SINH.field, X0)
    a = verify_residuals(SINH.field, w, SMALL_BOX, grid_n=3, threads=1, chunk=10)
    b = verify_residuals(SINH.field, w, SMALL_BOX, grid_n=3, threads=3, chunk=10)
    assert a.to_json() == b.to_json()


def test_gradient_of_closed_form():
    pts = np.array([[1.0, 0.3, 0.0], [0.5, -0.5, 0.2]])
    g = gradient_of(catalog.sinh_closed_form_w, pts, 1e-3)
    assert np.allclose(g[:, 2], 0.0, atol=1e-12)
    j = SINH.field.evaluator(pts)
    c = SINH.field.analytic_curl(pts)
    assert np.allclose(np.cross(g, j), c, atol=1e-8)


def test_report_json_schema():
    rep = verify_residuals(SINH.field, catalog.sinh_closed_form_w, SMALL_BOX, grid_n=3)
    data = json.loads(rep.to_json())
    assert data["schema"] == "1"
    assert data["grid"]["n"] == 3


def test_bad_step_rejected():
    with pytest.raises(ValueError):
        verify_residuals(SINH.field, catalog.sinh_closed_form_w, SMALL_BOX, h=0.0)


def test_sigma_csv():
    text = sigma_grid_csv(np.array([[0.0, 1.0, 0.0]]), np.array([0.0]))
    assert text.splitlines() == ["x,y,z,w,sigma", "0,1,0,0,1"]
