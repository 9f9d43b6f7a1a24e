"""Built-in example fields with closed-form conductivities and flows.

Entries:

* ``sinh``: ``j = (1, sinh x, 0)``, realizable on all of R^3.
* ``sinh-family``: the same field with conductivities ``sigma_f`` built from
  any admissible profile ``f``.
* ``frobenius-cex``: ``j = (f, f', -z f')`` with ``f = 8x^3 - 6x^4 - 1``; the
  Frobenius condition holds but ``curl j`` vanishes on ``{x = 2/3}``.
* ``planar``: ``j = alpha(z) rot grad v(x, y)``.
* ``fgh``: ``j = (g(y) h(z), f(x) h(z), f(x) g(y))`` with 1-periodic profiles.
* ``fgh-zero``: ``fgh`` with ``f = sin(2 pi x)``, ``g = h = 1`` and its explicit
  conductivity.
"""

import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import brentq

from .dsl import differentiate, eval_expr, parse_expr, to_text
from .fields import Box, VectorField
from .planar import PlanarPotential, planar_field

LN2 = np.log(2.0)


@dataclass(frozen=True)
class CatalogEntry:
    """An example field with its known answers.

    ``closed_form_sigma`` maps ``(n, 3)`` points to conductivities;
    ``closed_form_w`` maps ``(n, 3)`` coordinate triples to w.
    """

    name: str
    field: VectorField
    closed_form_sigma: object = None
    closed_form_w: object = None
    expected: dict = dc_field(default_factory=dict)
    anchor: tuple = (0.0, 0.0, 0.0)
    region: Box = None
    description: str = ""
    verified: bool = True
    extras: dict = dc_field(default_factory=dict)

    def log_sigma(self, pts):
        return np.log(self.closed_form_sigma(pts))


# ---------------------------------------------------------------- sinh field

def _sinh_j(p):
    p = np.asarray(p, dtype=float)
    x = p[..., 0]
    return np.stack([np.ones_like(x), np.sinh(x), np.zeros_like(x)], axis=-1)


def _sinh_curl(p):
    p = np.asarray(p, dtype=float)
    x = p[..., 0]
    z = np.zeros_like(x)
    return np.stack([z, z, np.cosh(x)], axis=-1)


def _sinh_div(p):
    return np.zeros(np.asarray(p).shape[:-1])


SINH_FIELD = VectorField(_sinh_j, _sinh_curl, _sinh_div, name="sinh")


def sinh_profile(t):
    """``f(t) = sqrt(1+t^2) - atanh(1/sqrt(1+t^2))``, written without cancellation."""
    a = np.abs(np.asarray(t, dtype=float))
    s = np.hypot(1.0, a)
    return np.log(a) + s - np.log1p(s)


def sinh_profile_prime(t):
    t = np.asarray(t, dtype=float)
    return np.hypot(1.0, t) / t


def _rhs_level(x, y):
    """``y - atanh(1/cosh x)`` for ``x != 0``; equals ``y + ln tanh(|x|/2)``."""
    return y + np.log(np.tanh(np.abs(x) / 2.0))


def _solve_log_t(r, iters=80):
    """``u = ln t`` with ``sinh_profile(e^u) = r``, vectorised safeguarded Newton.

    ``sinh_profile(e^u) = u + g(sqrt(1 + e^{2u}))`` with ``g(s) = s - ln(1+s)``
    increasing and ``g >= 1 - ln 2``, which gives the bracket below.
    """
    r = np.asarray(r, dtype=float)
    g = lambda s: s - np.log1p(s)  # noqa: E731
    hi = r - (1.0 - LN2)
    lo = r - g(np.hypot(1.0, np.exp(hi)))
    u = 0.5 * (lo + hi)
    for _ in range(iters):
        t = np.exp(u)
        s = np.hypot(1.0, t)
        phi = u + g(s) - r
        lo = np.where(phi < 0, u, lo)
        hi = np.where(phi > 0, u, hi)
        step = phi / (1.0 + t * t / (1.0 + s))
        un = u - step
        bad = (un <= lo) | (un >= hi) | ~np.isfinite(un)
        un = np.where(bad, 0.5 * (lo + hi), un)
        if np.all(np.abs(un - u) <= 1e-16 * np.maximum(1.0, np.abs(u))):
            u = un
            break
        u = un
    return u


def sinh_closed_form_w(p):
    """``ln sigma`` for the sinh field: ``1 - y`` at ``x = 0``, else ``ln(sinh x / t)``."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    x, y = p[:, 0], p[:, 1]
    out = 1.0 - y
    nz = x != 0
    if nz.any():
        ax = np.abs(x[nz])
        u = _solve_log_t(_rhs_level(ax, y[nz]))
        out[nz] = np.log(np.sinh(ax)) - u
    return out


def sinh_closed_form_sigma(p):
    """Conductivity of the sinh field at one point or an ``(n, 3)`` array."""
    arr = np.asarray(p, dtype=float)
    out = np.exp(sinh_closed_form_w(arr))
    return float(out[0]) if arr.ndim == 1 else out


def sinh_triple_flow(times):
    """Closed-form ``X32`` of the sinh field anchored at ``(0, 1, 0)``."""
    t = np.atleast_2d(np.asarray(times, dtype=float))
    t1, t2, t3 = t[:, 0], t[:, 1], t[:, 2]
    x = np.arcsinh(t1 * np.exp(t3))
    y = np.empty_like(t1)
    zero = t1 == 0
    y[zero] = 1.0 - t3[zero]
    a = t1[~zero]
    y[~zero] = (np.arcsinh(1.0 / np.abs(a * np.exp(t3[~zero]))) + sinh_profile(a))
    return np.stack([x, y, t2], axis=1)


def sinh_entry():
    return CatalogEntry(
        name="sinh", field=SINH_FIELD, closed_form_sigma=sinh_closed_form_sigma,
        closed_form_w=lambda t: np.atleast_2d(np.asarray(t, dtype=float))[:, 2],
        expected={"frobenius": True, "basis": True, "torus": None},
        anchor=(0.0, 1.0, 0.0), region=Box((0.2, -1.0, -1.0), (2.0, 1.0, 1.0)),
        description="j = (1, sinh x, 0); sigma = sinh x / t with f(t) = y - atanh(1/cosh x)",
        extras={"profile": sinh_profile, "triple_flow": sinh_triple_flow})


# ------------------------------------------------------------ sinh family

def _solve_profile(f, r, positive, lo=-700.0, hi=700.0, iters=64):
    """``t = +-e^u`` with ``f(t) = r`` by vectorised bisection on ``u``."""
    r = np.asarray(r, dtype=float)
    sgn = 1.0 if positive else -1.0
    a = np.full(r.shape, lo)
    b = np.full(r.shape, hi)
    for _ in range(iters):
        m = 0.5 * (a + b)
        below = f(sgn * np.exp(m)) < r
        a = np.where(below, m, a)
        b = np.where(below, b, m)
    return sgn * np.exp(0.5 * (a + b))


def sinh_family_sigma(f, c):
    """``sigma_f``: ``2 e^{c-y}`` at ``x = 0``, else ``sinh x / t`` with ``f(t)`` matched."""

    def sigma(p):
        p = np.atleast_2d(np.asarray(p, dtype=float))
        x, y = p[:, 0], p[:, 1]
        out = 2.0 * np.exp(c - y)
        for positive, mask in ((True, x > 0), (False, x < 0)):
            if mask.any():
                t = _solve_profile(f, _rhs_level(x[mask], y[mask]), positive)
                out[mask] = np.sinh(x[mask]) / t
        return out

    return sigma


def atan_profile(t):
    t = np.asarray(t, dtype=float)
    return np.log(np.abs(t)) + np.arctan(t)


def check_profile(f, fprime, c, cprime, ts=(1e-6, 1e-5, 1e-4), tol=1e-2):
    """Spot-check the expansions ``f(t) = ln|t| + c + o(1)``, ``f' = 1/t + c' + o(1)``."""
    for t in ts:
        for s in (t, -t):
            if abs(f(s) - np.log(abs(s)) - c) > tol:
                return False
            if abs(fprime(s) - 1.0 / s - cprime) > tol:
                return False
    grid = np.concatenate([-np.logspace(-3, 3, 60), np.logspace(-3, 3, 60)])
    d = fprime(grid)
    return bool(np.all(d[grid > 0] > 0) and np.all(d[grid < 0] < 0))


def sinh_family_entry(f=None, fprime=None, c=None, cprime=None, name=None):
    """The sinh field with ``sigma_f``; defaults to ``f(t) = ln|t| + atan t``."""
    if f is None:
        f, fprime, c, cprime = atan_profile, (lambda t: 1.0 / t + 1.0 / (1.0 + t * t)), 0.0, 1.0
        name = name or "sinh-family[atan]"
    verified = (fprime is not None and cprime is not None
                and check_profile(f, fprime, c, cprime))
    return CatalogEntry(
        name=name or "sinh-family", field=SINH_FIELD,
        closed_form_sigma=sinh_family_sigma(f, c),
        expected={"frobenius": True, "basis": True, "torus": None},
        anchor=(0.0, 1.0, 0.0), region=Box((0.2, -1.0, -1.0), (2.0, 1.0, 1.0)),
        description="sinh field with an alternative admissible profile f",
        verified=verified, extras={"profile": f, "c": c})


# ------------------------------------------------------- Frobenius counter-example

def cex_f(x):
    return 8 * x ** 3 - 6 * x ** 4 - 1


def cex_fp(x):
    return 24 * x ** 2 - 24 * x ** 3


def cex_fpp(x):
    return 48 * x - 72 * x ** 2


def _cex_j(p):
    p = np.asarray(p, dtype=float)
    x, z = p[..., 0], p[..., 2]
    fp = cex_fp(x)
    return np.stack([cex_f(x), fp, -z * fp], axis=-1)


def _cex_curl(p):
    p = np.asarray(p, dtype=float)
    x, z = p[..., 0], p[..., 2]
    fpp = cex_fpp(x)
    return np.stack([np.zeros_like(x), z * fpp, fpp], axis=-1)


CEX_FIELD = VectorField(_cex_j, _cex_curl, lambda p: np.zeros(np.asarray(p).shape[:-1]),
                        name="frobenius-cex")


def cex_F(x):
    """Primitive of ``f/f'`` on ``(0, 1)``."""
    x = np.asarray(x, dtype=float)
    return x ** 2 / 8 - x / 12 - np.log1p(-x) / 24 - np.log(x) / 24 + 1 / (24 * x)


def cex_local_w(x, y, z=0.0):
    """A local log-conductivity on ``(0, 1) x R^2``.

    ``s = y + F(x) - z^2/2`` has ``grad s = j / f'``, so ``u = atan(s)`` gives
    ``j = sigma grad u`` with ``sigma = f'(x) (1 + s^2)``.
    """
    x = np.asarray(x, dtype=float)
    s = y + cex_F(x) - 0.5 * z * z
    return np.log(cex_fp(x)) + np.log1p(s * s)


def cex_local_sigma_growth(x_values, y=0.0, z=0.0):
    """w of the local construction along the strip; its range is unbounded as x -> 1."""
    xs = np.asarray(list(x_values), dtype=float)
    if np.any((xs <= 0) | (xs >= 1)):
        raise ValueError("x values must lie in (0, 1)")
    return [float(v) for v in cex_local_w(xs, y, z)]


def cex_entry():
    return CatalogEntry(
        name="frobenius-cex", field=CEX_FIELD,
        closed_form_sigma=lambda p: np.exp(cex_local_w(np.atleast_2d(p)[:, 0],
                                                       np.atleast_2d(p)[:, 1],
                                                       np.atleast_2d(p)[:, 2])),
        expected={"frobenius": True, "basis": False, "torus": None,
                  "curl_zero_x": 2.0 / 3.0},
        anchor=(0.5, 0.0, 0.0), region=Box((0.0, -1.0, -1.0), (1.0, 1.0, 1.0)),
        description="j = (f, f', -z f'), f = 8x^3 - 6x^4 - 1; curl j = 0 on x = 2/3",
        extras={"F": cex_F})


# --------------------------------------------------------------- planar

def planar_entry(v="x + 0.05*sin(2*pi*(x + y))", alpha="2 + cos(2*pi*z)", name=None):
    """``j = alpha(z) rot grad v``; both given as expressions."""
    pot = PlanarPotential.from_expression(v, periodic=True)
    a = parse_expr(alpha)
    da = differentiate(a, "z")

    def lift(e):
        def fn(z):
            z = np.asarray(z, dtype=float)
            pts = np.stack([np.zeros_like(z), np.zeros_like(z), z], axis=-1)
            return np.broadcast_to(eval_expr(e, pts), z.shape).copy()
        return fn

    alpha_fn, dalpha_fn = lift(a), lift(da)
    fld = planar_field(pot, alpha_fn, dalpha_fn, name=name or "planar")

    def sigma(p):
        from .planar import planar_conductivity
        return planar_conductivity(pot, alpha_fn, p)

    return CatalogEntry(
        name=name or "planar", field=fld, closed_form_sigma=sigma,
        expected={"frobenius": True, "basis": False, "torus": "Inconclusive"},
        anchor=(0.5, 0.5, 0.5), region=Box((0.0, 0.0, 0.0), (1.0, 1.0, 1.0)),
        description=f"j = alpha(z) rot grad v, v = {v}, alpha = {alpha}",
        extras={"potential": pot, "alpha": alpha_fn, "dalpha": dalpha_fn})


# --------------------------------------------------------------- f g h fields

@dataclass(frozen=True)
class Profile:
    """A 1-periodic scalar profile given as an expression in one variable."""

    src: str
    var: str

    def _expr(self):
        return parse_expr(self.src)

    def fn(self):
        e = self._expr()
        return self._lift(e)

    def deriv(self):
        return self._lift(differentiate(self._expr(), self.var))

    def _lift(self, e):
        axis = "xyz".index(self.var)

        def f(s):
            s = np.asarray(s, dtype=float)
            pts = np.zeros(s.shape + (3,))
            pts[..., axis] = s
            return np.broadcast_to(eval_expr(e, pts), s.shape).copy()
        return f


def fgh_field(f="sin(2*pi*x) + 2", g="1", h="1"):
    """``j = (g(y) h(z), f(x) h(z), f(x) g(y))`` and its analytic curl."""
    F, G, H = Profile(f, "x"), Profile(_rename(g, "y"), "y"), Profile(_rename(h, "z"), "z")
    f0, g0, h0 = F.fn(), G.fn(), H.fn()
    f1, g1, h1 = F.deriv(), G.deriv(), H.deriv()

    def j(p):
        p = np.asarray(p, dtype=float)
        fx, gy, hz = f0(p[..., 0]), g0(p[..., 1]), h0(p[..., 2])
        return np.stack([gy * hz, fx * hz, fx * gy], axis=-1)

    def c(p):
        p = np.asarray(p, dtype=float)
        x, y, z = p[..., 0], p[..., 1], p[..., 2]
        fx, gy, hz = f0(x), g0(y), h0(z)
        fp, gp, hp = f1(x), g1(y), h1(z)
        return np.stack([fx * (gp - hp), gy * (hp - fp), hz * (fp - gp)], axis=-1)

    name = f"fgh[f={f}, g={g}, h={h}]"
    return VectorField(j, c, lambda p: np.zeros(np.asarray(p).shape[:-1]),
                       periodic=(True, True, True), name=name), (f0, g0, h0, f1)


def _rename(src, var):
    """Profiles for g and h may be written in x; rename to their own variable."""
    e = parse_expr(src)
    used = {n for n in ("x", "y", "z") if n in _names(e)}
    if used and used != {var}:
        if used == {"x"}:
            return to_text(_subst(e, "x", var))
        raise ValueError(f"profile {src!r} must depend on {var} only")
    return src


def _names(e):
    from .dsl import BinOp, Call, Neg, Var
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Neg):
        return _names(e.operand)
    if isinstance(e, Call):
        return _names(e.arg)
    if isinstance(e, BinOp):
        return _names(e.left) | _names(e.right)
    return set()


def _subst(e, old, new):
    from .dsl import BinOp, Call, Neg, Var
    if isinstance(e, Var):
        return Var(new) if e.name == old else e
    if isinstance(e, Neg):
        return Neg(_subst(e.operand, old, new))
    if isinstance(e, Call):
        return Call(e.func, _subst(e.arg, old, new))
    if isinstance(e, BinOp):
        return BinOp(e.op, _subst(e.left, old, new), _subst(e.right, old, new))
    return e


def _vanishes(fn, n=4096):
    xs = np.linspace(0.0, 1.0, n + 1)
    v = fn(xs)
    return bool(np.any(v == 0) or np.any(np.sign(v[1:]) != np.sign(v[:-1])))


def fgh_entry(f="sin(2*pi*x) + 2", g="1", h="1"):
    """The f.g.h field; ``sigma = |f g h|`` when ``f`` has no zero."""
    fld, (f0, g0, h0, f1) = fgh_field(f, g, h)
    f_zero = _vanishes(f0)
    sigma = None
    if not f_zero:
        def sigma(p):
            p = np.atleast_2d(np.asarray(p, dtype=float))
            return np.abs(f0(p[:, 0]) * g0(p[:, 1]) * h0(p[:, 2]))
    elif _is_one(g) and _is_one(h):
        sigma = interval_sigma(f0, f1)
    return CatalogEntry(
        name="fgh", field=fld, closed_form_sigma=sigma,
        expected={"frobenius": True, "basis": None,
                  "torus": "NotRealizable" if f_zero else "RealizableInTorus",
                  "sigma_periodic": not f_zero},
        anchor=(0.25, 0.0, 0.0), region=Box((0.0, 0.0, 0.0), (1.0, 1.0, 1.0)),
        description=fld.name, extras={"f": f0, "fprime": f1, "g": g0, "h": h0,
                                       "f_vanishes": f_zero})


def _is_one(src):
    try:
        return eval_expr(parse_expr(src), np.zeros(3)) == 1.0 and not _names(parse_expr(src))
    except Exception:
        return False


def fgh_potential(f0, g0, h0):
    """``u = int dx/f + int dy/g + int dz/h`` from 0, by quadrature (f without zeros)."""

    def u(p):
        p = np.asarray(p, dtype=float)
        out = 0.0
        for k, fn in enumerate((f0, g0, h0)):
            out += quad(lambda s: 1.0 / float(fn(np.array(s))), 0.0, float(p[k]),
                        epsabs=1e-13, epsrel=1e-13)[0]
        return out

    return u


def interval_sigma(f0, f1, n_grid=4096):
    """Conductivity for ``j = (1, f, f)`` when ``f`` has simple zeros.

    On each interval ``(a, b)`` between consecutive zeros ``F = int ds / f``
    maps onto R; with ``s = y + z`` and ``t = F^{-1}(s + F(x))``,
    ``sigma = f(x) / f(t)``; at a zero ``a``, ``sigma = exp(-f'(a) s)``.
    Evaluated pointwise by quadrature and root finding (slow, reference path).
    """
    xs = np.linspace(0.0, 1.0, n_grid + 1)
    v = f0(xs)
    zeros = []
    for i in range(n_grid):
        if v[i] == 0:
            zeros.append(xs[i])
        elif v[i] * v[i + 1] < 0:
            zeros.append(brentq(lambda s: float(f0(np.array(s))), xs[i], xs[i + 1],
                                xtol=1e-15))
    zeros = sorted(set(round(z, 14) for z in zeros))
    if not zeros:
        raise ValueError("f has no zeros; use sigma = |f|")
    period_zeros = np.array(zeros + [zeros[0] + 1.0])

    def one(x, s):
        xr = x - np.floor(x)
        k = np.searchsorted(period_zeros, xr, side="right") - 1
        k = int(np.clip(k, 0, len(period_zeros) - 2))
        a, b = period_zeros[k], period_zeros[k + 1]
        if abs(xr - a) < 1e-13:
            return float(np.exp(-float(f1(np.array(a))) * s))
        if abs(xr - b) < 1e-13:
            return float(np.exp(-float(f1(np.array(b))) * s))
        m = 0.5 * (a + b)
        fs = lambda q: float(f0(np.array(q)))  # noqa: E731

        def F(q):
            # near a zero the integrand has a log singularity; quad still converges
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", IntegrationWarning)
                return quad(lambda r: 1.0 / fs(r), m, q, epsabs=1e-13, epsrel=1e-12,
                            limit=200)[0]

        target = s + F(xr)
        eps = 1e-15
        lo, hi = a + eps * max(1, abs(a)), b - eps * max(1, abs(b))
        g = lambda q: F(q) - target  # noqa: E731
        glo, ghi = g(lo), g(hi)
        if glo * ghi > 0:
            t = lo if abs(glo) < abs(ghi) else hi
        else:
            t = brentq(g, lo, hi, xtol=1e-15, rtol=1e-14)
        return fs(xr) / fs(t)

    def sigma(p):
        p = np.atleast_2d(np.asarray(p, dtype=float))
        return np.array([one(q[0], q[1] + q[2]) for q in p])

    return sigma


def remark_f_sigma(p):
    """Closed form of the interval construction for ``f = sin(2 pi x)``.

    With ``s = y + z``: ``sigma = e^{-2 pi s} cos^2(pi x) + e^{2 pi s} sin^2(pi x)``.
    """
    p = np.atleast_2d(np.asarray(p, dtype=float))
    x, s = p[:, 0], p[:, 1] + p[:, 2]
    return (np.exp(-2 * np.pi * s) * np.cos(np.pi * x) ** 2
            + np.exp(2 * np.pi * s) * np.sin(np.pi * x) ** 2)


def remark_f_entry():
    fld, (f0, g0, h0, f1) = fgh_field("sin(2*pi*x)", "1", "1")
    return CatalogEntry(
        name="fgh-zero", field=fld, closed_form_sigma=remark_f_sigma,
        expected={"frobenius": True, "basis": False, "torus": "NotRealizable"},
        anchor=(0.25, 0.0, 0.0), region=Box((0.1, -1.0, -1.0), (0.9, 1.0, 1.0)),
        description="j = (1, sin 2 pi x, sin 2 pi x); realizable in R^3, not in the torus",
        extras={"f": f0, "fprime": f1, "reference_sigma": interval_sigma(f0, f1)})


# --------------------------------------------------------------- registry

_BUILDERS = {
    "sinh": sinh_entry,
    "sinh-family": sinh_family_entry,
    "frobenius-cex": cex_entry,
    "planar": planar_entry,
    "fgh": fgh_entry,
    "fgh-zero": remark_f_entry,
}


def names():
    return list(_BUILDERS)


def get(name, **params):
    """Catalog entry by name; ``params`` go to the builder (e.g. ``f=`` for fgh)."""
    key = name.strip().lower().replace("_", "-")
    if key not in _BUILDERS:
        raise KeyError(f"unknown example {name!r}; choose from {', '.join(_BUILDERS)}")
    return _BUILDERS[key](**params)


def catalog():
    return [builder() for builder in _BUILDERS.values()]
