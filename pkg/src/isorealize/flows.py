"""The three orthogonal flows of a current field and their composition.

Directions (``j`` the field, ``c = curl j``)::

    D1       j / |j|
    D2       c / |c|
    D3       (j x c) / |j|^2
    D3Tilde  (j x c) / (|j| |c|)

Starting from an anchor ``x0`` the triple flow
``X32(t3, t2, t1) = X3(t3, X2(t2, X1(t1, x0)))`` defines coordinates
``(t1, t2, t3)``.  Along the third leg the log-conductivity integrand
(``|c|^2/|j|^2`` for D3, ``|c|/|j|`` for D3Tilde) is carried as a fourth
state component so that the quadrature shares the integrator's error control.
"""

import csv
import enum
import io
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.optimize import least_squares

from . import _dopri
from .errors import (FlowBlowup, NoConvergence, PreconditionFailed,
                     SingularDirection, StepUnderflow)
from .fields import Box, check_conditions, curl, evaluate

RTOL = 1e-9
ATOL = 1e-11
ENDPOINT_TOL = 1e-8  # documented endpoint accuracy per unit flow time at RTOL, ATOL
EPS_J = 1e-9
EPS_CURL = 1e-9
JAC_STEP = 1e-6
NEWTON_TOL = 1e-8


class FlowDirection(enum.Enum):
    D1 = "D1"
    D2 = "D2"
    D3 = "D3"
    D3_TILDE = "D3Tilde"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "")
        for member in cls:
            if member.value.lower() == key:
                return member
        raise ValueError(f"unknown flow direction {value!r}")

    @property
    def needs_curl(self):
        return self in (FlowDirection.D2, FlowDirection.D3_TILDE)

    @property
    def carries_weight(self):
        return self in (FlowDirection.D3, FlowDirection.D3_TILDE)


class Normalization(enum.Enum):
    STANDARD = "standard"
    TILDE = "tilde"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        return cls(str(value).strip().lower())

    @property
    def third_leg(self):
        return FlowDirection.D3 if self is Normalization.STANDARD else FlowDirection.D3_TILDE


def _velocity_parts(field, direction, pts):
    j = field(pts)
    c = curl(field, pts) if direction is not FlowDirection.D1 else None
    nj = np.linalg.norm(j, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        if direction is FlowDirection.D1:
            return j / nj[:, None], None
        nc = np.linalg.norm(c, axis=-1)
        if direction is FlowDirection.D2:
            return c / nc[:, None], None
        jxc = np.cross(j, c)
        if direction is FlowDirection.D3:
            return jxc / (nj ** 2)[:, None], (nc / nj) ** 2
        return jxc / (nj * nc)[:, None], nc / nj


def velocity(field, direction, pts):
    """Velocity of ``direction`` at an ``(n, 3)`` array of points."""
    direction = FlowDirection.parse(direction)
    return _velocity_parts(field, direction, np.atleast_2d(pts))[0]


def weight(field, pts, normalization=Normalization.STANDARD):
    """The log-conductivity integrand at ``pts``."""
    leg = Normalization.parse(normalization).third_leg
    return _velocity_parts(field, leg, np.atleast_2d(pts))[1]


def _system(field, direction, eps_j, eps_curl):
    with_q = direction.carries_weight

    def rhs(state):
        v, q = _velocity_parts(field, direction, state[:, :3])
        if with_q:
            return np.concatenate([v, q[:, None]], axis=1)
        return v

    def guard(state):
        pts = state[:, :3]
        with np.errstate(all="ignore"):
            bad = np.linalg.norm(field(pts), axis=-1) < eps_j
            if direction.needs_curl:
                bad |= np.linalg.norm(curl(field, pts), axis=-1) < eps_curl
        return bad | ~np.all(np.isfinite(pts), axis=1)

    return rhs, guard, with_q


@dataclass
class FlowBatch:
    """Endpoints of a batch of trajectories of one direction."""

    points: np.ndarray
    q: np.ndarray
    status: np.ndarray
    stop_time: np.ndarray
    n_steps: int
    n_rejected: int
    max_error: float

    @property
    def ok(self):
        return self.status == _dopri.OK


def flow_batch(field, direction, starts, times, rtol=RTOL, atol=ATOL,
               eps_j=EPS_J, eps_curl=EPS_CURL, q0=None):
    """Integrate many trajectories of one direction; never raises on failure."""
    direction = FlowDirection.parse(direction)
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    times = np.broadcast_to(np.asarray(times, dtype=float), starts.shape[:1])
    rhs, guard, with_q = _system(field, direction, eps_j, eps_curl)
    y0 = starts
    if with_q:
        q_init = np.zeros(len(starts)) if q0 is None else np.asarray(q0, dtype=float)
        y0 = np.concatenate([starts, q_init[:, None]], axis=1)
    res = _dopri.integrate_batch(rhs, y0, times, rtol=rtol, atol=atol, guard=guard)
    q = res.y[:, 3] if with_q else np.zeros(len(starts))
    return FlowBatch(res.y[:, :3].copy(), q.copy(), res.status.copy(),
                     res.s_stop * times, res.n_steps, res.n_rejected, res.max_error)


def _raise_for(status, stop_time, point, direction, leg=None):
    if status == _dopri.SINGULAR:
        what = "|curl j|" if direction.needs_curl else "|j|"
        raise SingularDirection(f"{what} fell below the guard along {direction.value} "
                                f"at t={stop_time:.17g}", stop_time, point, leg)
    if status == _dopri.BLOWUP:
        raise FlowBlowup(f"{direction.value} trajectory blew up near t={stop_time:.17g}",
                         stop_time, point, leg)
    if status == _dopri.UNDERFLOW:
        raise StepUnderflow(f"step size underflow along {direction.value} at "
                            f"t={stop_time:.17g}", stop_time, point, leg)


@dataclass
class Trajectory:
    t: np.ndarray
    points: np.ndarray
    q: np.ndarray
    direction: FlowDirection
    n_steps: int = 0
    n_rejected: int = 0
    max_error: float = 0.0

    @property
    def endpoint(self):
        return self.points[-1]

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "x", "y", "z", "q"])
        for t, p, q in zip(self.t, self.points, self.q):
            writer.writerow([f"{v:.17g}" for v in (t, p[0], p[1], p[2], q)])
        return buf.getvalue()


def integrate_flow(field, direction, start, t_end, tol=None, rtol=RTOL, atol=ATOL,
                   eps_j=EPS_J, eps_curl=EPS_CURL):
    """Integrate one trajectory from ``start`` over signed time ``t_end``.

    ``tol`` (if given) sets both the relative and absolute tolerance.
    Raises :class:`SingularDirection` or :class:`StepUnderflow` on failure.
    """
    direction = FlowDirection.parse(direction)
    if tol is not None:
        rtol = atol = tol
    start = np.asarray(start, dtype=float).reshape(3)
    rhs, guard, with_q = _system(field, direction, eps_j, eps_curl)
    y0 = np.append(start, 0.0) if with_q else start
    res = _dopri.integrate_batch(rhs, y0[None, :], [float(t_end)], rtol=rtol,
                                 atol=atol, guard=guard, record=True)
    s = np.array([h[0] for h in res.history])
    ys = np.array([h[1][0] for h in res.history])
    status = int(res.status[0])
    if status != _dopri.OK:
        _raise_for(status, float(res.s_stop[0] * t_end), ys[-1, :3], direction)
    q = ys[:, 3] if with_q else np.zeros(len(s))
    return Trajectory(s * float(t_end), ys[:, :3], q, direction, res.n_steps,
                      res.n_rejected, res.max_error)


@dataclass(frozen=True)
class TripleCoordinates:
    x0: tuple
    t1: float
    t2: float
    t3: float
    residual: float = 0.0
    condition: float = float("nan")

    @property
    def times(self):
        return np.array([self.t1, self.t2, self.t3])


@dataclass
class MapBatch:
    points: np.ndarray
    q: np.ndarray
    status: np.ndarray
    leg: np.ndarray  # 0 when fine, else 1/2/3 for the failing leg

    @property
    def ok(self):
        return self.leg == 0


def forward_map_batch(field, x0, times, normalization=Normalization.STANDARD,
                      rtol=RTOL, atol=ATOL, eps_j=EPS_J, eps_curl=EPS_CURL):
    """``X32`` for an ``(N, 3)`` array of ``(t1, t2, t3)``; q is the weight integral."""
    norm = Normalization.parse(normalization)
    times = np.atleast_2d(np.asarray(times, dtype=float))
    n = len(times)
    pts = np.tile(np.asarray(x0, dtype=float), (n, 1))
    leg = np.zeros(n, dtype=int)
    status = np.zeros(n, dtype=int)
    q = np.zeros(n)
    for k, direction in enumerate((FlowDirection.D1, FlowDirection.D2, norm.third_leg)):
        alive = leg == 0
        if not alive.any():
            break
        fb = flow_batch(field, direction, pts[alive], times[alive, k], rtol, atol,
                        eps_j, eps_curl)
        pts[alive] = fb.points
        if direction.carries_weight:
            q[alive] = fb.q
        failed = np.flatnonzero(alive)[~fb.ok]
        leg[failed] = k + 1
        status[failed] = fb.status[~fb.ok]
    pts[leg != 0] = np.nan
    q[leg != 0] = np.nan
    return MapBatch(pts, q, status, leg)


_LEG_DIRECTIONS = {1: FlowDirection.D1, 2: FlowDirection.D2, 3: FlowDirection.D3}


def forward_map(field, coords, normalization=Normalization.STANDARD, rtol=RTOL,
                atol=ATOL):
    """``X32(t3, t2, t1)`` from ``coords.x0``; errors name the failing leg."""
    mb = forward_map_batch(field, coords.x0, [[coords.t1, coords.t2, coords.t3]],
                           normalization, rtol, atol)
    if not mb.ok[0]:
        leg = int(mb.leg[0])
        direction = _LEG_DIRECTIONS[leg]
        if leg == 3:
            direction = Normalization.parse(normalization).third_leg
        _raise_for(int(mb.status[0]), float("nan"), None, direction, leg=f"X{leg}")
    return mb.points[0]


@dataclass
class InversionBatch:
    times: np.ndarray
    residual: np.ndarray
    converged: np.ndarray
    condition: np.ndarray
    q: np.ndarray
    jacobian: np.ndarray = dc_field(repr=False, default=None)


def _fd_jacobian(fmap, t, base, step=JAC_STEP):
    n = len(t)
    shifted = np.concatenate([t + step * np.eye(3)[k] for k in range(3)])
    out = fmap(shifted).points.reshape(3, n, 3)
    return np.stack([(out[k] - base) / step for k in range(3)], axis=2)  # (n, 3, 3)


def _solve(J, r):
    step = np.empty_like(r)
    for i in range(len(r)):
        try:
            step[i] = np.linalg.solve(J[i], r[i])
        except np.linalg.LinAlgError:
            step[i] = np.linalg.lstsq(J[i], r[i], rcond=None)[0]
    return step


def _newton(fmap, targets, t, tol, max_iter, jacobian=None, final_jacobian=False):
    """Damped Newton on ``fmap(t) = targets`` for every row.

    With ``jacobian`` given the Jacobian is frozen (chord iteration).
    ``final_jacobian`` re-evaluates it at the returned iterate.
    """
    n = len(t)
    t = t.copy()
    mb = fmap(t)
    r = mb.points - targets
    res = np.where(mb.ok, np.max(np.abs(r), axis=1), np.inf)
    q = mb.q.copy()
    J = np.full((n, 3, 3), np.nan) if jacobian is None else jacobian.copy()
    active = np.isfinite(res) & (res > tol)
    stall = np.zeros(n, dtype=int)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        if jacobian is None:
            J[idx] = _fd_jacobian(fmap, t[idx], r[idx] + targets[idx])
        with np.errstate(all="ignore"):
            delta = -_solve(J[idx], r[idx])
        delta[~np.all(np.isfinite(delta), axis=1)] = 0.0
        lam = np.ones(idx.size)
        f0 = np.sum(r[idx] ** 2, axis=1)
        pending = np.ones(idx.size, dtype=bool)
        new_t = t[idx].copy()
        new_r = r[idx].copy()
        new_q = q[idx].copy()
        for _ in range(30):
            p = np.flatnonzero(pending)
            if p.size == 0:
                break
            trial = t[idx[p]] + lam[p, None] * delta[p]
            tb = fmap(trial)
            tr = tb.points - targets[idx[p]]
            f1 = np.where(tb.ok, np.sum(tr ** 2, axis=1), np.inf)
            good = f1 <= (1 - 1e-4 * lam[p]) * f0[p]
            # accept anything at round-off level to avoid false stalls
            good |= f1 <= (tol * 1e-3) ** 2
            acc = p[good]
            new_t[acc] = trial[good]
            new_r[acc] = tr[good]
            new_q[acc] = tb.q[good]
            pending[acc] = False
            lam[p[~good]] *= 0.5
        moved = ~pending
        t[idx[moved]] = new_t[moved]
        r[idx[moved]] = new_r[moved]
        q[idx[moved]] = new_q[moved]
        res[idx] = np.max(np.abs(r[idx]), axis=1)
        stall[idx[~moved]] += 1
        active = (res > tol) & (stall < 2) & np.isfinite(res)
    if final_jacobian:
        ok = np.flatnonzero(np.isfinite(res))
        if ok.size:
            J[ok] = _fd_jacobian(fmap, t[ok], r[ok] + targets[ok])
    with np.errstate(all="ignore"):
        cond = np.array([np.linalg.cond(Ji) if np.all(np.isfinite(Ji)) else np.nan
                         for Ji in J])
    return InversionBatch(t, res, res <= tol, cond, q, J)


def _start_grid(box, n=5):
    axes = [np.linspace(lo, hi, n) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def invert_batch(field, x0, targets, guesses=None, tol=NEWTON_TOL,
                 normalization=Normalization.STANDARD, box=((-3, 3),) * 3,
                 rtol=RTOL, atol=ATOL, max_iter=40, multistart=True, jacobian=None,
                 final_jacobian=False):
    """Find ``(t1, t2, t3)`` with ``X32 = target`` for every row of ``targets``.

    Damped Newton from ``guesses`` (default zeros); rows that fail are retried
    from every node of a 5x5x5 grid over ``box`` and the best result kept.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    n = len(targets)
    t0 = np.zeros((n, 3)) if guesses is None else np.array(guesses, dtype=float).reshape(n, 3)

    def fmap(tt):
        return forward_map_batch(field, x0, tt, normalization, rtol, atol)

    out = _newton(fmap, targets, t0, tol, max_iter, jacobian, final_jacobian)
    if jacobian is not None and not out.converged.all():
        bad = np.flatnonzero(~out.converged)
        redo = _newton(fmap, targets[bad], out.times[bad], tol, max_iter,
                       final_jacobian=final_jacobian)
        _merge(out, redo, bad)
    if multistart and not out.converged.all():
        bad = np.flatnonzero(~out.converged)
        grid = _start_grid(box)
        starts = np.concatenate([grid] * bad.size)
        tg = np.repeat(targets[bad], len(grid), axis=0)
        ms = _newton(fmap, tg, starts, tol, max_iter, final_jacobian=final_jacobian)
        res = ms.residual.reshape(bad.size, len(grid))
        best = np.argmin(res, axis=1)
        pick = np.arange(bad.size) * len(grid) + best
        better = ms.residual[pick] < out.residual[bad]
        sel = InversionBatch(ms.times[pick], ms.residual[pick], ms.converged[pick],
                             ms.condition[pick], ms.q[pick], ms.jacobian[pick])
        _merge(out, sel, bad, mask=better)
    return out


def _merge(out, new, rows, mask=None):
    if mask is None:
        mask = np.ones(len(rows), dtype=bool)
    r = rows[mask]
    out.times[r] = new.times[mask]
    out.residual[r] = new.residual[mask]
    out.converged[r] = new.converged[mask]
    out.condition[r] = new.condition[mask]
    out.q[r] = new.q[mask]
    out.jacobian[r] = new.jacobian[mask]


def invert_coordinates(field, x0, target, guess=None, tol=NEWTON_TOL,
                       normalization=Normalization.STANDARD, box=((-3, 3),) * 3,
                       rtol=RTOL, atol=ATOL, max_iter=40):
    """Coordinates ``(t1, t2, t3)`` of ``target`` with respect to anchor ``x0``.

    Raises :class:`NoConvergence` carrying the best iterate when the residual
    stays above ``tol``: evidence that the triple flow may fail to be a
    diffeomorphism near ``target``.
    """
    g = None if guess is None else [[guess.t1, guess.t2, guess.t3]]
    out = invert_batch(field, x0, [target], g, tol, normalization, box, rtol, atol,
                       max_iter=max_iter, final_jacobian=True)
    coords = TripleCoordinates(tuple(float(v) for v in x0), *map(float, out.times[0]),
                               residual=float(out.residual[0]),
                               condition=float(out.condition[0]))
    if not out.converged[0]:
        raise NoConvergence(f"coordinate inversion stalled at residual "
                            f"{out.residual[0]:.3g}", best=coords,
                            residual=float(out.residual[0]))
    return coords


def invert_all(field, x0, target, tol=NEWTON_TOL, normalization=Normalization.STANDARD,
               box=((-3, 3),) * 3, rtol=RTOL, atol=ATOL, separation=1e-5):
    """Every distinct converged multi-start solution for ``target``."""
    grid = _start_grid(box)
    tg = np.tile(np.asarray(target, dtype=float), (len(grid), 1))

    def fmap(tt):
        return forward_map_batch(field, x0, tt, normalization, rtol, atol)

    ms = _newton(fmap, tg, grid, tol, 40, final_jacobian=True)
    found = []
    for i in np.flatnonzero(ms.converged):
        t = ms.times[i]
        if all(np.max(np.abs(t - f.times)) > separation for f in found):
            found.append(TripleCoordinates(tuple(float(v) for v in x0), *map(float, t),
                                           residual=float(ms.residual[i]),
                                           condition=float(ms.condition[i])))
    return found


def commutation_defect(field, x0, t2, t3, rtol=RTOL, atol=ATOL, check_radius=None):
    """Distance by which the X2/X3 loop through ``x0`` fails to close.

    ``X3(t3, X2(t2, x0))`` is compared with ``X2(s2, X3(s3, x0))`` minimised
    over ``(s2, s3)``.
    """
    x0 = np.asarray(x0, dtype=float)
    if t2 == 0 and t3 == 0:
        return 0.0
    r = check_radius if check_radius is not None else abs(t2) + abs(t3) + 0.1
    box = Box(tuple(x0 - r), tuple(x0 + r))
    report = check_conditions(field, box, n_samples=64)
    if not report.basis_ok:
        raise PreconditionFailed("orthogonal-basis condition fails near x0; "
                                 "the X2/X3 flows are not both defined")
    a = flow_batch(field, FlowDirection.D2, x0[None], [t2], rtol, atol)
    b = flow_batch(field, FlowDirection.D3, a.points, [t3], rtol, atol)
    for fb, d in ((a, FlowDirection.D2), (b, FlowDirection.D3)):
        if not fb.ok[0]:
            _raise_for(int(fb.status[0]), float(fb.stop_time[0]), None, d)
    target = b.points[0]

    def other(s):
        c = flow_batch(field, FlowDirection.D3, x0[None], [s[1]], rtol, atol)
        d = flow_batch(field, FlowDirection.D2, c.points, [s[0]], rtol, atol)
        if not d.ok[0]:
            return np.full(3, 1e6)
        return d.points[0] - target

    sol = least_squares(other, [t2, t3], xtol=1e-14, ftol=1e-14, gtol=1e-14)
    return float(np.linalg.norm(other(sol.x)))
