"""Realizability in the torus for Y-periodic fields.

The test quantity is

    I(T) = integral over [-T, T] of |curl j|^2 / |j|^2 along X3

from a set of start points.  A uniform bound in ``T`` is necessary for a
periodic conductivity and, when the orthogonal-basis condition holds, also
sufficient.
"""

import itertools
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit

from . import _dopri, _io
from .errors import PreconditionFailed
from .flows import ATOL, RTOL, FlowDirection, _system

DEFAULT_HORIZONS = tuple(2.0 ** k for k in range(9))  # 1 .. 256
DEFAULT_CAP = 50.0
START_OFFSET = (0.137, 0.271, 0.533)

BOUNDED = "Bounded"
DIVERGING = "Diverging"
INCONCLUSIVE = "Inconclusive"


def default_starts(n=3, offset=START_OFFSET):
    """``n^3`` lattice in the unit cell shifted off the symmetry planes."""
    ticks = np.arange(n) / n
    return np.array([[offset[0] + a, offset[1] + b, offset[2] + c]
                     for a, b, c in itertools.product(ticks, ticks, ticks)])


@dataclass
class StartRecord:
    start: tuple
    horizons: list
    I: list  # None past the cap
    verdict: str
    capped_at: float = None
    error: str = None
    log_slope: float = None
    power_exponent: float = None
    best_model: str = None

    def to_dict(self):
        return {"start": list(self.start), "horizons": self.horizons, "I": self.I,
                "verdict": self.verdict, "capped_at": self.capped_at,
                "error": self.error, "best_model": self.best_model,
                "log_slope": self.log_slope, "power_exponent": self.power_exponent}


@dataclass
class BoundednessScan:
    records: list
    verdict: str
    cap: float
    horizons: list = dc_field(default_factory=list)

    @property
    def witnesses(self):
        return [r.start for r in self.records if r.verdict == DIVERGING]

    def to_dict(self):
        return {"verdict": self.verdict, "cap": self.cap, "horizons": self.horizons,
                "starts": [r.to_dict() for r in self.records]}

    def to_json(self):
        return _io.dumps(self.to_dict())

    def to_csv(self):
        rows = []
        for i, r in enumerate(self.records):
            for T, v in zip(r.horizons, r.I):
                rows.append((i, float(r.start[0]), float(r.start[1]), float(r.start[2]),
                             float(T), float("nan") if v is None else float(v)))
        return _io.csv_text(["start_index", "x", "y", "z", "T", "I"], rows)


def _aic(rss, n, k):
    return n * np.log(rss / n) + 2 * k


def classify(horizons, values, cap=DEFAULT_CAP, capped=False, min_growth=10.0,
             decade_tol=0.01, zero_tol=1e-12):
    """Verdict for one ``I(T)`` series.

    Values below ``zero_tol`` count as zero (finite-difference noise).

    Returns ``(verdict, best_model, log_slope, power_exponent)``.
    """
    T = np.asarray(horizons, dtype=float)
    I = np.asarray(values, dtype=float)
    if capped or (I.size and I[-1] > cap):
        return DIVERGING, None, None, None
    if I.size == 0:
        return INCONCLUSIVE, None, None, None
    n = I.size
    floor = n * (1e-12 * max(1.0, float(np.max(np.abs(I))))) ** 2
    fits = {}
    fits["const"] = (max(float(np.sum((I - I.mean()) ** 2)), floor), 1, None)
    A = np.stack([np.ones(n), np.log(T)], axis=1)
    coef, *_ = np.linalg.lstsq(A, I, rcond=None)
    fits["log"] = (max(float(np.sum((A @ coef - I) ** 2)), floor), 2, float(coef[1]))
    alpha = None
    if n >= 3 and I[-1] > 0:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", OptimizeWarning)
                p, _ = curve_fit(lambda t, a, al: a * t ** al, T, I,
                                 p0=(max(I[0], 1e-12), 0.5), maxfev=2000)
            alpha = float(p[1])
            fits["power"] = (max(float(np.sum((p[0] * T ** p[1] - I) ** 2)), floor), 2, alpha)
        except (RuntimeError, ValueError):
            pass
    aics = {k: _aic(v[0], n, v[1]) for k, v in fits.items()}
    best = min(aics, key=aics.get)
    slope = fits["log"][2]
    growing = best != "const" and ((best == "log" and slope > 0)
                                   or (best == "power" and alpha is not None and alpha > 0))
    if growing and I[-1] > min_growth:
        return DIVERGING, best, slope, alpha
    ref = T[-1] / 10.0
    earlier = np.flatnonzero(T <= ref)
    i0 = earlier[-1] if earlier.size else 0
    increment = I[-1] - I[i0]
    if I[-1] <= zero_tol or increment < decade_tol * I[-1]:
        return BOUNDED, best, slope, alpha
    return INCONCLUSIVE, best, slope, alpha


def boundedness_scan(field, starts=None, horizons=DEFAULT_HORIZONS, cap=DEFAULT_CAP,
                     rtol=RTOL, atol=ATOL):
    """Accumulate ``I(T)`` at each horizon from every start, both time directions."""
    starts = default_starts() if starts is None else np.atleast_2d(
        np.asarray(starts, dtype=float))
    horizons = sorted(float(h) for h in horizons)
    if not horizons or horizons[0] <= 0:
        raise ValueError("horizons must be positive")
    n = len(starts)
    rhs, guard, _ = _system(field, FlowDirection.D3, 1e-9, 1e-9)
    state = np.concatenate([np.vstack([starts, starts]), np.zeros((2 * n, 1))], axis=1)
    sign = np.concatenate([np.ones(n), -np.ones(n)])
    alive = np.ones(2 * n, dtype=bool)
    errors = [None] * n
    series = np.full((n, len(horizons)), np.nan)
    capped_at = [None] * n
    done = np.zeros(n, dtype=bool)
    prev = 0.0
    for k, H in enumerate(horizons):
        live = np.flatnonzero(alive)
        if live.size:
            res = _dopri.integrate_batch(rhs, state[live], sign[live] * (H - prev),
                                         rtol=rtol, atol=atol, guard=guard)
            state[live] = res.y
            for loc, i in enumerate(live):
                if res.status[loc] != _dopri.OK:
                    alive[i] = False
                    s = i % n
                    if errors[s] is None:
                        errors[s] = (f"{_dopri.STATUS_NAMES[int(res.status[loc])]} "
                                     f"at t={sign[i] * (prev + res.s_stop[loc] * (H - prev)):.6g}")
        prev = H
        I = state[:n, 3] - state[n:, 3]
        for s in range(n):
            if done[s]:
                continue
            if errors[s] is not None:
                done[s] = True
                continue
            series[s, k] = I[s]
            if I[s] > cap:
                capped_at[s] = H
                done[s] = True
                alive[s] = alive[s + n] = False
    records = []
    for s in range(n):
        vals = series[s]
        finite = np.isfinite(vals)
        hs = [h for h, f in zip(horizons, finite) if f]
        vs = vals[finite]
        if errors[s] is not None:
            verdict, best, slope, alpha = INCONCLUSIVE, None, None, None
        else:
            verdict, best, slope, alpha = classify(hs, vs, cap, capped_at[s] is not None)
        records.append(StartRecord(tuple(float(v) for v in starts[s]), list(horizons),
                                   [None if not np.isfinite(v) else float(v) for v in vals],
                                   verdict, capped_at[s], errors[s], slope, alpha, best))
    verdicts = {r.verdict for r in records}
    if DIVERGING in verdicts:
        overall = DIVERGING
    elif verdicts == {BOUNDED}:
        overall = BOUNDED
    else:
        overall = INCONCLUSIVE
    return BoundednessScan(records, overall, cap, list(horizons))


def periodize_w(w_source, n, p):
    """Lattice average ``(2n+1)^-3 sum_{|k|_inf <= n} w(p + k)``."""
    p = np.asarray(p, dtype=float).reshape(3)
    ks = np.array(list(itertools.product(range(-n, n + 1), repeat=3)), dtype=float)
    vals = np.asarray(w_source(p[None, :] + ks), dtype=float)
    return float(np.mean(vals))


@dataclass
class TorusReport:
    verdict: str
    direction: str
    reasons: list
    witnesses: list
    scan_verdict: str
    basis_ok: bool
    frobenius_ok: bool

    def to_dict(self):
        return {"verdict": self.verdict, "direction": self.direction,
                "reasons": self.reasons, "witnesses": [list(w) for w in self.witnesses],
                "scan_verdict": self.scan_verdict, "basis_ok": self.basis_ok,
                "frobenius_ok": self.frobenius_ok}

    def to_json(self):
        return _io.dumps(self.to_dict())


def periodic_certificate(field, w_source, n_samples=64, tol=5e-6, grid_n=7, h=1e-3):
    """Check that ``w_source`` is Y-periodic and solves ``curl(e^-w j) = 0``.

    Returns ``(ok, detail)``.
    """
    from .fields import Box, sample_points
    from .realizer import verify_residuals
    cell = Box((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
    pts = sample_points(cell, n_samples)
    w0 = np.asarray(w_source(pts), dtype=float)
    gap = 0.0
    for e in np.eye(3):
        gap = max(gap, float(np.max(np.abs(np.asarray(w_source(pts + e)) - w0))))
    rep = verify_residuals(field, w_source, cell, grid_n, h)
    ok = bool(gap <= 1e-9 and rep.max_residual < tol and rep.n_failed == 0)
    return ok, {"periodicity_gap": gap, "max_residual": rep.max_residual}


def torus_verdict(field, scan, conditions, certificate=None):
    """Combine the condition report, the boundedness scan and an optional certificate.

    ``certificate`` is the ``(ok, detail)`` pair of :func:`periodic_certificate`.
    The report names which direction of the criterion was used.
    """
    if not field.is_periodic:
        raise PreconditionFailed(f"field {field.name!r} is not declared periodic")
    reasons = []
    if not conditions.frobenius_ok:
        return TorusReport("NotRealizable", "Frobenius condition",
                           ["Frobenius condition fails: not even locally realizable"],
                           [], scan.verdict, conditions.basis_ok, False)
    if scan.verdict == DIVERGING:
        reasons.append("the X3 weight integral is unbounded along the witnesses; "
                       "a bound is necessary for a periodic conductivity")
        return TorusReport("NotRealizable", "necessary", reasons, scan.witnesses,
                           scan.verdict, conditions.basis_ok, True)
    if certificate is not None and certificate[0]:
        reasons.append("an explicit Y-periodic conductivity passes the residual check")
        return TorusReport("RealizableInTorus", "certificate", reasons, [], scan.verdict,
                           conditions.basis_ok, True)
    if scan.verdict == BOUNDED and conditions.basis_ok:
        reasons.append("bounded weight integral with the orthogonal-basis condition")
        return TorusReport("RealizableInTorus", "sufficient", reasons, [], scan.verdict,
                           True, True)
    if scan.verdict == BOUNDED:
        reasons.append("bounded weight integral, but the orthogonal-basis condition "
                       "fails so only the necessary direction applies")
    else:
        reasons.append("boundedness scan inconclusive")
    return TorusReport("Inconclusive", "necessary", reasons, [], scan.verdict,
                       conditions.basis_ok, True)
