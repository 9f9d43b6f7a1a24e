"""Fields lying in a fixed plane: ``j = alpha(z) * rot grad v(x, y)``.

Here ``rot grad v = (-v_y, v_x, 0)``.  The conductivity comes from the 2-D
gradient flow ``Z' = grad v``: with ``tau_v`` the time at which ``Z`` reaches
the level set ``{v = level}`` and

    w_v(x, y) = - integral over [0, tau_v] of (Laplacian v)(Z(s)) ds,

``exp(-w_v) grad v`` is divergence free and ``sigma = alpha(z) exp(w_v)``
satisfies ``curl(j / sigma) = 0``.
"""

from dataclasses import dataclass

import numpy as np

from . import _dopri, _io
from .dsl import _add, differentiate, eval_expr, parse_expr
from .errors import FlowBlowup, NoCrossing, StepUnderflow
from .fields import VectorField

RTOL = 1e-10
ATOL = 1e-12
LEVEL_TOL = 1e-10
HORIZON = 1e3
_W4 = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0
_O4 = np.array([-2.0, -1.0, 1.0, 2.0])


def _pad3(pts):
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    return np.concatenate([pts[:, :2], np.zeros((len(pts), 1))], axis=1)


@dataclass(frozen=True)
class PlanarPotential:
    """A potential ``v(x, y)`` with its gradient and (optionally) Laplacian.

    All callables take ``(n, 2)`` arrays.  ``periodic`` states that ``grad v``
    is periodic on the unit square.
    """

    v: object
    grad: object
    lap: object = None
    periodic: bool = False
    name: str = "v"

    def laplacian(self, pts, h=1e-4):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.lap is not None:
            return np.asarray(self.lap(pts), dtype=float)
        out = np.zeros(len(pts))
        for axis in range(2):
            for o, wgt in zip(_O4, _W4):
                q = pts.copy()
                q[:, axis] += o * h
                out += wgt * self.grad(q)[:, axis] / h
        return out

    @classmethod
    def from_expression(cls, src, periodic=False, name=None):
        """Build from a DSL expression in ``x`` and ``y``; derivatives are symbolic."""
        e = parse_expr(src)
        ex, ey = differentiate(e, "x"), differentiate(e, "y")
        lap = _add(differentiate(ex, "x"), differentiate(ey, "y"))

        def grad(p):
            q = _pad3(p)
            return np.stack([np.broadcast_to(eval_expr(ex, q), len(q)),
                             np.broadcast_to(eval_expr(ey, q), len(q))], axis=1)

        return cls(lambda p: np.broadcast_to(eval_expr(e, _pad3(p)), len(p)).copy(),
                   grad,
                   lambda p: np.broadcast_to(eval_expr(lap, _pad3(p)), len(p)).copy(),
                   periodic, name or src)


def planar_field(pot, alpha, dalpha, name=None):
    """``j = alpha(z) * (-v_y, v_x, 0)`` with its analytic curl."""

    def j(p):
        p = np.asarray(p, dtype=float)
        flat = p.reshape(-1, 3)
        g = pot.grad(flat[:, :2])
        a = alpha(flat[:, 2])
        out = np.stack([-a * g[:, 1], a * g[:, 0], np.zeros(len(flat))], axis=1)
        return out.reshape(p.shape)

    def c(p):
        p = np.asarray(p, dtype=float)
        flat = p.reshape(-1, 3)
        g = pot.grad(flat[:, :2])
        a, da = alpha(flat[:, 2]), dalpha(flat[:, 2])
        out = np.stack([-da * g[:, 0], -da * g[:, 1], a * pot.laplacian(flat[:, :2])],
                       axis=1)
        return out.reshape(p.shape)

    return VectorField(j, c, periodic=(pot.periodic,) * 3,
                       name=name or f"planar[{pot.name}]")


def _flow_rhs(pot):
    def rhs(state):
        g = pot.grad(state[:, :2])
        return np.concatenate([g, -pot.laplacian(state[:, :2])[:, None]], axis=1)
    return rhs


def _raise_flow(status, t, point):
    if status == _dopri.BLOWUP:
        raise FlowBlowup(f"gradient flow blew up near t={t:.17g}", t, point)
    if status == _dopri.UNDERFLOW:
        raise StepUnderflow(f"step size underflow in gradient flow at t={t:.17g}", t, point)


def gradient_flow(pot, start, t, rtol=RTOL, atol=ATOL):
    """``Z(t)`` from ``start``; raises :class:`FlowBlowup` on finite-time blow-up."""
    start = np.asarray(start, dtype=float).reshape(2)
    g = pot.grad
    res = _dopri.integrate_batch(lambda s: g(s), start[None], [float(t)], rtol=rtol,
                                 atol=atol)
    status = int(res.status[0])
    if status != _dopri.OK:
        _raise_flow(status, float(res.s_stop[0] * t), res.y[0])
    return res.y[0].copy()


@dataclass(frozen=True)
class HittingRecord:
    start: tuple
    tau: float
    endpoint: tuple
    w_v: float


@dataclass
class HittingBatch:
    tau: np.ndarray
    endpoint: np.ndarray
    w_v: np.ndarray
    status: np.ndarray  # dopri status codes; EVENT means success

    @property
    def ok(self):
        return self.status == _dopri.EVENT


def _dense_eval(y0, k, h, theta):
    """Vectorised continuous extension: ``y0 (m, d)``, ``k (m, 7, d)``."""
    q = np.einsum("ip,mid->mpd", _dopri.P, k)
    powers = np.stack([theta ** (i + 1) for i in range(4)], axis=1)
    return y0 + h[:, None] * np.einsum("mp,mpd->md", powers, q)


def hitting_batch(pot, starts, level=0.0, horizon=HORIZON, rtol=RTOL, atol=ATOL,
                  level_tol=LEVEL_TOL):
    """Hitting times of ``{v = level}`` for many starts (never raises)."""
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    n = len(starts)
    v0 = pot.v(starts) - level
    tau = np.zeros(n)
    end = starts.copy()
    w = np.zeros(n)
    status = np.full(n, _dopri.EVENT)
    todo = np.abs(v0) > level_tol
    if todo.any():
        idx = np.flatnonzero(todo)
        T = np.where(v0[idx] < 0, horizon, -horizon)
        y0 = np.concatenate([starts[idx], np.zeros((idx.size, 1))], axis=1)
        res = _dopri.integrate_batch(_flow_rhs(pot), y0, T, rtol=rtol, atol=atol,
                                     event=lambda s: pot.v(s[:, :2]) - level)
        hit = [i for i in range(idx.size) if res.status[i] == _dopri.EVENT]
        for i in range(idx.size):
            if res.status[i] == _dopri.OK:
                status[idx[i]] = -1  # horizon exhausted
            elif res.status[i] != _dopri.EVENT:
                status[idx[i]] = res.status[i]
        if hit:
            hit = np.array(hit)
            steps = [res.event_steps[int(i)] for i in hit]
            y0s = np.array([s.y0 for s in steps])
            ks = np.array([s.k for s in steps])
            hs = np.array([s.h for s in steps])
            s0 = np.array([s.s0 for s in steps])
            sign0 = np.sign(pot.v(y0s[:, :2]) - level)
            lo, hi = np.zeros(hit.size), np.ones(hit.size)
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                val = pot.v(_dense_eval(y0s, ks, hs, mid)[:, :2]) - level
                same = np.sign(val) == sign0
                lo = np.where(same, mid, lo)
                hi = np.where(same, hi, mid)
            theta = 0.5 * (lo + hi)
            state = _dense_eval(y0s, ks, hs, theta)
            t_hit = T[hit] * (s0 + theta * hs)
            state, t_hit = _polish(pot, state, t_hit, level, level_tol, rtol, atol)
            tau[idx[hit]] = t_hit
            end[idx[hit]] = state[:, :2]
            w[idx[hit]] = state[:, 2]
    bad = status != _dopri.EVENT
    tau[bad] = np.nan
    end[bad] = np.nan
    w[bad] = np.nan
    return HittingBatch(tau, end, w, status)


def _polish(pot, state, t_hit, level, level_tol, rtol, atol):
    """Newton steps in time along the true flow until ``|v - level|`` is tiny."""
    for _ in range(8):
        val = pot.v(state[:, :2]) - level
        if np.all(np.abs(val) <= 0.01 * level_tol):
            break
        g = pot.grad(state[:, :2])
        dt = -val / np.sum(g * g, axis=1)
        res = _dopri.integrate_batch(_flow_rhs(pot), state, dt, rtol=rtol, atol=atol)
        state = res.y
        t_hit = t_hit + dt
    return state, t_hit


def hitting_time(pot, start, level=0.0, horizon=HORIZON, rtol=RTOL, atol=ATOL):
    """Time, endpoint and ``w_v`` of the first crossing of ``{v = level}``.

    Integrates forward when ``v(start) < level`` (``v`` increases along the
    flow) and backward otherwise.  Raises :class:`NoCrossing` when the horizon
    is exhausted and :class:`FlowBlowup` on blow-up.
    """
    start = np.asarray(start, dtype=float).reshape(2)
    hb = hitting_batch(pot, start[None], level, horizon, rtol, atol)
    st = int(hb.status[0])
    if st == -1:
        raise NoCrossing(f"no crossing of v={level} within |t| <= {horizon}", horizon,
                         start)
    if st != _dopri.EVENT:
        _raise_flow(st, float("nan"), start)
    return HittingRecord(tuple(start), float(hb.tau[0]), tuple(hb.endpoint[0]),
                         float(hb.w_v[0]))


def w_v(pot, pts, level=0.0, **kwargs):
    """``w_v`` at ``(n, 2)`` points; NaN where no crossing is found."""
    return hitting_batch(pot, pts, level, **kwargs).w_v


def planar_conductivity(pot, alpha, p, level=0.0, **kwargs):
    """``sigma(x, y, z) = alpha(z) * exp(w_v(x, y))`` at ``(n, 3)`` points."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    wv = w_v(pot, p[:, :2], level, **kwargs)
    return np.asarray(alpha(p[:, 2]), dtype=float) * np.exp(wv)


@dataclass
class PlanarResidual:
    max_residual: float
    mean_residual: float
    box: tuple
    grid_n: int
    h: float
    n_points: int
    n_failed: int

    def to_dict(self):
        return {"max_div_residual": self.max_residual,
                "mean_div_residual": self.mean_residual,
                "grid": {"box": list(self.box), "n": self.grid_n}, "h": self.h,
                "n_points": self.n_points, "n_failed": self.n_failed}

    def to_json(self):
        return _io.dumps(self.to_dict())


def planar_residual(pot, box, grid_n=11, h=1e-3, w_source=None, level=0.0):
    """``|div(exp(-w) grad v)| = exp(-w) |Lap v - grad w . grad v|`` on a 2-D grid.

    ``box`` is ``(x0, x1, y0, y1)``.  ``w_source`` defaults to ``w_v``.
    """
    x0, x1, y0, y1 = [float(b) for b in box]
    xs, ys = np.linspace(x0, x1, grid_n), np.linspace(y0, y1, grid_n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    src = w_source or (lambda q: w_v(pot, q, level))
    offs = [np.zeros(2)]
    for axis in range(2):
        for o in _O4:
            e = np.zeros(2)
            e[axis] = o * h
            offs.append(e)
    offs = np.array(offs)
    allp = (pts[:, None, :] + offs[None]).reshape(-1, 2)
    vals = np.asarray(src(allp), dtype=float).reshape(len(pts), len(offs))
    w = vals[:, 0]
    grad = vals[:, 1:].reshape(len(pts), 2, 4) @ _W4 / h
    ok = np.isfinite(w) & np.all(np.isfinite(grad), axis=1)
    g = pot.grad(pts[ok])
    r = np.exp(-w[ok]) * np.abs(pot.laplacian(pts[ok]) - np.sum(grad[ok] * g, axis=1))
    if r.size == 0:
        r = np.array([np.nan])
    return PlanarResidual(float(np.max(r)), float(np.mean(r)), (x0, x1, y0, y1), grid_n,
                          h, len(pts), int(np.count_nonzero(~ok)))


@dataclass
class PlanarVerdict:
    verdict: str
    reason: str
    max_abs_w: list
    rings: list

    def to_dict(self):
        return {"verdict": self.verdict, "reason": self.reason,
                "rings": self.rings, "max_abs_w": self.max_abs_w}


def planar_periodic_verdict(pot, n_samples=16, rings=3, level=0.0, probe_time=5.0,
                            threshold=10.0, stable=0.05):
    """Is ``w_v`` bounded over translated unit cells?

    Samples ``n_samples`` points in each cell ``[0,1]^2 + k`` with
    ``|k|_inf <= K`` for ``K = 0..rings``.  Bounded when the running maximum
    of ``|w_v|`` changes by less than ``stable`` (relative) over the last ring,
    Diverging when it grows at every ring and ends above ``threshold``.
    """
    if not pot.periodic:
        return PlanarVerdict("Inconclusive", "grad v is not declared periodic", [], [])
    from scipy.stats import qmc
    base = qmc.Halton(d=2, scramble=False).random(n_samples + 1)[1:]
    probe = base[: min(4, n_samples)]
    for t in (probe_time, -probe_time):
        for p in probe:
            try:
                gradient_flow(pot, p, t)
            except StepUnderflow as exc:
                return PlanarVerdict("Inconclusive",
                                     f"gradient flow is not global ({exc})", [], [])
    maxima = []
    running = 0.0
    for K in range(rings + 1):
        ring = [(a, b) for a in range(-K, K + 1) for b in range(-K, K + 1)
                if max(abs(a), abs(b)) == K]
        pts = np.concatenate([base + np.array(k, dtype=float) for k in ring])
        hb = hitting_batch(pot, pts, level)
        if not hb.ok.all():
            return PlanarVerdict("Inconclusive", "some starts never cross the level set",
                                 maxima, list(range(K)))
        running = max(running, float(np.max(np.abs(hb.w_v))))
        maxima.append(running)
    ks = list(range(rings + 1))
    last = maxima[-1]
    prev = maxima[-2] if len(maxima) > 1 else last
    if last == 0.0 or (last - prev) <= stable * last:
        return PlanarVerdict("Bounded", "max |w_v| stabilises across rings", maxima, ks)
    if all(b > a for a, b in zip(maxima, maxima[1:])) and last > threshold:
        return PlanarVerdict("Diverging", "max |w_v| grows at every ring", maxima, ks)
    return PlanarVerdict("Inconclusive", "max |w_v| neither stable nor clearly growing",
                         maxima, ks)
