"""Vector fields on R^3, finite-difference operators and condition checks."""

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.optimize import least_squares
from scipy.stats import qmc

from .errors import NonFiniteField

DEFAULT_TOL = 1e-6
NORM_FLOOR = 1e-9

# 4th-order central difference: offsets and weights (divide by h)
_OFFSETS = np.array([-2.0, -1.0, 1.0, 2.0])
_WEIGHTS = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0


@dataclass(frozen=True)
class VectorField:
    """A current field ``j`` on R^3.

    ``evaluator`` (and the optional ``analytic_curl``) map arrays of shape
    ``(..., 3)`` to ``(..., 3)``; ``analytic_div`` maps to ``(...)``.
    ``periodic`` flags Y-periodicity (unit period) per axis.
    """

    evaluator: object
    analytic_curl: object = None
    analytic_div: object = None
    periodic: tuple = (False, False, False)
    regularity_hint: str = "C2"
    name: str = "field"

    def __call__(self, p):
        return self.evaluator(np.asarray(p, dtype=float))

    @property
    def is_periodic(self):
        return all(self.periodic)


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    @classmethod
    def from_bounds(cls, bounds):
        """``bounds`` is ``(x0, x1, y0, y1, z0, z1)``."""
        b = [float(v) for v in bounds]
        if len(b) != 6:
            raise ValueError("box needs six numbers x0,x1,y0,y1,z0,z1")
        lo, hi = tuple(b[0::2]), tuple(b[1::2])
        if any(h < l for l, h in zip(lo, hi)):
            raise ValueError(f"empty box {b}")
        return cls(lo, hi)

    @property
    def bounds(self):
        return tuple(v for pair in zip(self.lo, self.hi) for v in pair)

    @property
    def center(self):
        return tuple(0.5 * (l + h) for l, h in zip(self.lo, self.hi))

    def grid(self, n):
        """``n`` points per axis, flattened in x-major (C) order."""
        axes = [np.linspace(l, h, n) if n > 1 else np.array([0.5 * (l + h)])
                for l, h in zip(self.lo, self.hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def clip(self, p):
        return np.clip(p, self.lo, self.hi)


def _as_points(p):
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != 3:
        raise ValueError(f"points must have a trailing axis of length 3, got {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("non-finite point")
    return p


def _checked(values, what):
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise NonFiniteField(f"{what} produced a non-finite value")
    return values


def default_step(p):
    p = np.asarray(p, dtype=float)
    return 1e-3 * np.maximum(1.0, np.max(np.abs(p), axis=-1))


def evaluate(field, p):
    """Evaluate ``j`` at one point or an array of points."""
    p = _as_points(p)
    return _checked(field(p), field.name)


def _partials(func, p, h):
    """Partial derivatives of ``func`` at ``p`` along each axis.

    Returns an array of shape ``(3,) + func(p).shape``.
    """
    p = np.asarray(p, dtype=float)
    h = np.broadcast_to(np.asarray(h, dtype=float), p.shape[:-1])
    out = []
    for axis in range(3):
        acc = 0.0
        for off, wgt in zip(_OFFSETS, _WEIGHTS):
            q = p.copy()
            q[..., axis] += off * h
            acc = acc + wgt * np.asarray(func(q), dtype=float)
        hh = h.reshape(h.shape + (1,) * (np.ndim(acc) - h.ndim))
        out.append(acc / hh)
    return np.stack(out)


def gradient(func, p, h=None):
    """4th-order central-difference gradient of a scalar function on R^3."""
    p = _as_points(p)
    h = default_step(p) if h is None else h
    d = _checked(_partials(func, p, h), "scalar function")
    return np.moveaxis(d, 0, -1)


def curl(field, p, h=None):
    """``curl j`` at ``p``: analytic when available, else finite differences."""
    p = _as_points(p)
    if field.analytic_curl is not None:
        return _checked(field.analytic_curl(p), f"curl of {field.name}")
    if h is None:
        h = default_step(p)
    if np.any(np.asarray(h) <= 0):
        raise ValueError("finite-difference step must be positive")
    d = _checked(_partials(field, p, h), f"stencil of {field.name}")
    # d[k, ..., i] = d j_i / d x_k
    return np.stack([d[1, ..., 2] - d[2, ..., 1],
                     d[2, ..., 0] - d[0, ..., 2],
                     d[0, ..., 1] - d[1, ..., 0]], axis=-1)


def divergence(field, p, h=None):
    p = _as_points(p)
    if field.analytic_div is not None:
        return _checked(field.analytic_div(p), f"divergence of {field.name}")
    if h is None:
        h = default_step(p)
    if np.any(np.asarray(h) <= 0):
        raise ValueError("finite-difference step must be positive")
    d = _checked(_partials(field, p, h), f"stencil of {field.name}")
    return d[0, ..., 0] + d[1, ..., 1] + d[2, ..., 2]


def frobenius_residual(j, c):
    """``|j . c| / (|j| |c|)`` with value 0 wherever ``c`` vanishes."""
    nj = np.linalg.norm(j, axis=-1)
    nc = np.linalg.norm(c, axis=-1)
    dot = np.abs(np.sum(j * c, axis=-1))
    denom = nj * nc
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(denom > 0, dot / np.where(denom > 0, denom, 1.0), 0.0)
    return r


@dataclass
class ConditionReport:
    div_residual: float
    frobenius_residual: float
    min_j_norm: float
    min_curl_norm: float
    basis_ok: bool
    frobenius_ok: bool
    n_samples: int
    box: tuple
    tol: float
    norm_floor: float
    min_j_location: tuple = None
    min_curl_location: tuple = None
    curl_zeros: list = dc_field(default_factory=list)
    j_zeros: list = dc_field(default_factory=list)

    @property
    def orthogonal_basis_ok(self):
        return self.basis_ok

    def to_dict(self):
        return {
            "div_residual": self.div_residual,
            "frobenius_residual": self.frobenius_residual,
            "frobenius_ok": self.frobenius_ok,
            "min_j_norm": self.min_j_norm,
            "min_curl_norm": self.min_curl_norm,
            "basis_ok": self.basis_ok,
            "min_j_location": list(self.min_j_location) if self.min_j_location else None,
            "min_curl_location": (list(self.min_curl_location)
                                  if self.min_curl_location else None),
            "curl_zeros": [list(z) for z in self.curl_zeros],
            "j_zeros": [list(z) for z in self.j_zeros],
            "samples": {"count": self.n_samples, "box": list(self.box)},
            "tol": self.tol,
            "norm_floor": self.norm_floor,
        }


def sample_points(box, n_samples):
    """Deterministic Halton points in ``box`` (no scrambling)."""
    sampler = qmc.Halton(d=3, scramble=False)
    u = sampler.random(n_samples + 1)[1:]
    lo = np.array(box.lo)
    return lo + u * (np.array(box.hi) - lo)


def _refine_minimum(func, starts, box):
    """Polish candidate zeros of a vector function inside ``box``.

    Returns ``(|func|, location)`` pairs.  Bounded least squares converges
    quadratically onto simple zeros, which sampling alone cannot resolve.
    """
    lo, hi = np.array(box.lo), np.array(box.hi)
    flat = hi <= lo
    found = []
    for x0 in starts:
        free = ~flat

        def resid(q_free, x0=x0, free=free):
            q = np.array(x0, dtype=float)
            q[free] = q_free
            return func(q[None, :])[0]

        if free.any():
            res = least_squares(resid, np.asarray(x0)[free], bounds=(lo[free], hi[free]),
                                xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=200)
            q = np.array(x0, dtype=float)
            q[free] = res.x
        else:
            q = np.array(x0, dtype=float)
        found.append((float(np.linalg.norm(func(q[None, :])[0])),
                      tuple(float(v) for v in q)))
    return found


def check_conditions(field, box, n_samples=512, tol=DEFAULT_TOL,
                     norm_floor=NORM_FLOOR, refine=5):
    """Test the divergence, Frobenius and orthogonal-basis conditions on a box.

    ``basis_ok`` holds when ``|j|`` and ``|curl j|`` stay above ``norm_floor``
    and the normalized Frobenius residual stays below ``tol`` at every sample.
    The ``refine`` smallest samples of ``|j|`` and ``|curl j|`` are polished by
    local minimisation so that zeros between samples are not missed.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if not isinstance(box, Box):
        box = Box.from_bounds(box)
    pts = sample_points(box, n_samples)
    j = evaluate(field, pts)
    c = curl(field, pts)
    div = divergence(field, pts)
    nj = np.linalg.norm(j, axis=1)
    nc = np.linalg.norm(c, axis=1)
    frob = frobenius_residual(j, c)

    report = ConditionReport(
        div_residual=float(np.max(np.abs(div))),
        frobenius_residual=float(np.max(frob)),
        min_j_norm=float(np.min(nj)),
        min_curl_norm=float(np.min(nc)),
        basis_ok=False, frobenius_ok=False,
        n_samples=n_samples, box=box.bounds, tol=tol, norm_floor=norm_floor,
        min_j_location=tuple(float(v) for v in pts[np.argmin(nj)]),
        min_curl_location=tuple(float(v) for v in pts[np.argmin(nc)]),
    )
    if refine:
        for norms, func, zeros, attr in (
                (nj, lambda q: evaluate(field, q), report.j_zeros, "j"),
                (nc, lambda q: curl(field, q), report.curl_zeros, "curl")):
            if np.min(norms) == 0.0:
                candidates = [(0.0, tuple(float(v) for v in pts[np.argmin(norms)]))]
            else:
                order = np.argsort(norms)[:refine]
                candidates = _refine_minimum(func, pts[order], box)
            for val, loc in candidates:
                if val <= norm_floor and all(
                        max(abs(a - b) for a, b in zip(loc, z)) > 1e-6 for z in zeros):
                    zeros.append(loc)
                if val < getattr(report, f"min_{attr}_norm"):
                    setattr(report, f"min_{attr}_norm", val)
                    setattr(report, f"min_{attr}_location", loc)
    report.frobenius_ok = report.frobenius_residual <= tol
    report.basis_ok = bool(report.frobenius_ok and report.min_j_norm > norm_floor
                           and report.min_curl_norm > norm_floor)
    return report
