import dataclasses
import json

import numpy as np
import pytest

from isorealize import catalog
from isorealize.errors import PreconditionFailed
from isorealize.fields import Box, VectorField, check_conditions
from isorealize.periodic import (BOUNDED, DIVERGING, INCONCLUSIVE, boundedness_scan,
                                 classify, default_starts, periodic_certificate,
                                 periodize_w, torus_verdict)

CELL = Box((0, 0, 0), (1, 1, 1))
H = [2.0 ** k for k in range(9)]


def test_default_starts():
    s = default_starts()
    assert s.shape == (27, 3)
    assert np.allclose(s[0], [0.137, 0.271, 0.533])


def test_classify_constant_is_bounded():
    assert classify(H, [1.0] * 9)[0] == BOUNDED
    assert classify(H, [0.0] * 9)[0] == BOUNDED


def test_classify_log_growth_diverges():
    verdict, model, slope, _ = classify(H, [5 + 3 * np.log(t) for t in H])
    assert verdict == DIVERGING
    assert model == "log" and slope == pytest.approx(3.0)


def test_classify_cap():
    assert classify(H[:2], [10.0, 60.0])[0] == DIVERGING
    assert classify(H[:1], [1.0], capped=True)[0] == DIVERGING


def test_classify_slow_growth_is_inconclusive():
    vals = [1.0 + 0.5 * np.log(t) for t in H]
    assert classify(H, vals)[0] == INCONCLUSIVE


def test_bounded_fgh_matches_oracle(oracles):
    e = catalog.get("fgh", f="sin(2*pi*x) + 2")
    scan = boundedness_scan(e.field, starts=[oracles["fgh_I_bounded"]["start"]])
    assert scan.verdict == BOUNDED
    rec = scan.records[0]
    assert rec.I[H.index(64.0)] == pytest.approx(oracles["fgh_I_bounded"]["I"], abs=1e-8)
    assert rec.I[-1] == pytest.approx(oracles["fgh_I_limit"], abs=1e-8)


def test_diverging_fgh_grows_linearly():
    e = catalog.get("fgh", f="sin(2*pi*x)")
    scan = boundedness_scan(e.field, starts=[[0.2, 0.0, 0.0]], horizons=(8, 16), cap=np.inf)
    rec = scan.records[0]
    assert rec.I[1] - rec.I[0] == pytest.approx(8 * 8 * np.pi ** 2, rel=1e-6)


def test_diverging_fgh_is_capped():
    e = catalog.get("fgh", f="sin(2*pi*x)")
    scan = boundedness_scan(e.field, starts=[[0.2, 0.0, 0.0], [0.7, 0.5, 0.5]])
    assert scan.verdict == DIVERGING
    assert len(scan.witnesses) == 2
    assert scan.records[0].capped_at is not None


def test_singular_start_is_recorded():
    fld = VectorField(lambda p: np.stack([np.sin(2 * np.pi * p[..., 0]),
                                          np.zeros(p.shape[:-1]), np.zeros(p.shape[:-1])], -1),
                      periodic=(True, True, True), name="sin")
    scan = boundedness_scan(fld, starts=[[0.0, 0.3, 0.3], [0.25, 0.3, 0.3]], horizons=(1, 2))
    assert scan.records[0].error is not None
    assert scan.records[0].verdict == INCONCLUSIVE
    assert scan.records[1].verdict == BOUNDED
    assert scan.verdict == INCONCLUSIVE


def test_scan_exports():
    e = catalog.get("fgh")
    scan = boundedness_scan(e.field, starts=[[0.1, 0.2, 0.3]], horizons=(1, 2, 4))
    data = json.loads(scan.to_json())
    assert data["schema"] == "1"
    assert set(data["starts"][0]) >= {"start", "horizons", "I", "verdict"}
    lines = scan.to_csv().splitlines()
    assert lines[0] == "start_index,x,y,z,T,I"
    assert len(lines) == 4


def test_periodize_periodic_w_is_exact():
    f = lambda x: np.sin(2 * np.pi * x) + 2  # noqa: E731
    w = lambda p: np.log(f(np.atleast_2d(p)[:, 0]))  # noqa: E731
    p = (0.3, 0.1, -0.2)
    a, b = periodize_w(w, 1, p), periodize_w(w, 2, p)
    assert a == pytest.approx(np.log(f(0.3)), abs=1e-14)
    assert abs(a - b) < 1e-14


def test_periodize_averages_linear_drift():
    assert periodize_w(lambda p: np.atleast_2d(p)[:, 0], 3, (0.4, 0, 0)) == pytest.approx(0.4)


def test_torus_verdicts():
    good = catalog.get("fgh", f="sin(2*pi*x) + 2")
    cond = check_conditions(good.field, CELL)
    scan = boundedness_scan(good.field, starts=[[0.137, 0.271, 0.533]])
    cert = periodic_certificate(good.field, good.log_sigma)
    assert cert[0]
    rep = torus_verdict(good.field, scan, cond, cert)
    assert rep.verdict == "RealizableInTorus" and rep.direction == "certificate"
    assert torus_verdict(good.field, scan, cond).verdict == "Inconclusive"

    bad = catalog.get("fgh", f="sin(2*pi*x)")
    scan = boundedness_scan(bad.field, starts=[[0.2, 0.0, 0.0]])
    rep = torus_verdict(bad.field, scan, check_conditions(bad.field, CELL))
    assert rep.verdict == "NotRealizable" and rep.witnesses


def test_certificate_rejects_non_periodic_sigma():
    e = catalog.get("fgh-zero")
    ok, detail = periodic_certificate(e.field, e.log_sigma)
    assert not ok and detail["periodicity_gap"] > 1


def test_torus_verdict_needs_periodic_field():
    e = catalog.get("sinh")
    scan = boundedness_scan(e.field, starts=[[1.0, 0.0, 0.0]], horizons=(1,))
    with pytest.raises(PreconditionFailed):
        torus_verdict(e.field, scan, check_conditions(e.field, e.region))


def test_sufficient_direction_with_basis():
    e = catalog.get("fgh")
    scan = boundedness_scan(e.field, starts=[[0.137, 0.271, 0.533]])
    cond = dataclasses.replace(check_conditions(e.field, CELL), basis_ok=True)
    rep = torus_verdict(e.field, scan, cond)
    assert rep.verdict == "RealizableInTorus" and rep.direction == "sufficient"


def test_frobenius_failure_short_circuits():
    e = catalog.get("fgh")
    scan = boundedness_scan(e.field, starts=[[0.137, 0.271, 0.533]], horizons=(1,))
    cond = dataclasses.replace(check_conditions(e.field, CELL), frobenius_ok=False)
    assert torus_verdict(e.field, scan, cond).verdict == "NotRealizable"
