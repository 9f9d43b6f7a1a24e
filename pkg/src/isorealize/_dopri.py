"""Batched Dormand--Prince 5(4) integrator.

All trajectories of a batch are integrated over the unit interval ``s in [0, 1]``
with their own duration ``T_i`` folded into the right-hand side
(``dy/ds = T_i * v(y)``).  The whole batch therefore shares one step sequence,
which makes finite differences taken across a batch smooth in the initial data.
"""

from dataclasses import dataclass, field

import numpy as np

OK = 0
SINGULAR = 1
UNDERFLOW = 2
BLOWUP = 3
EVENT = 4

STATUS_NAMES = {OK: "ok", SINGULAR: "singular", UNDERFLOW: "underflow",
                BLOWUP: "blowup", EVENT: "event"}

C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200,
              22 / 525, -1 / 40])
# 4th-order continuous extension (Shampine); row k multiplies stage k
P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608,
     -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933,
     87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304,
     -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408,
     701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883,
     -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

SAFETY = 0.9
BETA = 0.04
EXPO1 = 0.2 - 0.75 * BETA
FAC_MIN = 0.2
FAC_MAX = 10.0


@dataclass
class DenseStep:
    """One accepted step, enough to evaluate the continuous extension."""

    s0: float
    h: float
    y0: np.ndarray
    k: np.ndarray  # (7, ...) stage derivatives

    def __call__(self, theta):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        powers = np.stack([theta ** (i + 1) for i in range(4)], axis=1)
        q = np.tensordot(P, self.k, axes=([0], [0]))  # (4, ...)
        return self.y0[None] + self.h * np.tensordot(powers, q, axes=1)


@dataclass
class BatchResult:
    y: np.ndarray
    status: np.ndarray
    s_stop: np.ndarray
    n_steps: int = 0
    n_rejected: int = 0
    max_error: float = 0.0
    history: list = field(default_factory=list)  # [(s, Y)] when requested
    dense: list = field(default_factory=list)  # DenseStep per accepted step
    event_steps: dict = field(default_factory=dict)  # i -> DenseStep


def _error_norm(err, y0, y1, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return np.sqrt(np.mean((err / scale) ** 2, axis=1))


def integrate_batch(velocity, y0, durations, rtol=1e-9, atol=1e-11,
                    guard=None, event=None, blowup=1e12, record=False,
                    max_steps=200000):
    """Integrate ``dy/dt = velocity(y)`` for every row of ``y0``.

    Parameters
    ----------
    velocity : callable
        Maps an ``(n, d)`` array of states to an ``(n, d)`` array.
    y0 : array_like, shape (N, d)
    durations : array_like, shape (N,)
        Signed integration time of each trajectory.
    guard : callable, optional
        Maps ``(n, d)`` states to a boolean mask of states at which the
        velocity is not admissible.  Checked at every accepted point.
    event : callable, optional
        Maps states to ``(n,)`` reals; a trajectory stops (status EVENT) at
        the first accepted step across which the value changes sign.  The
        bracketing step is kept in ``event_steps``.
    record : bool
        Keep every accepted point (``history``) and dense step (``dense``).
    """
    y = np.array(y0, dtype=float, copy=True)
    if y.ndim == 1:
        y = y[None, :]
    n, _ = y.shape
    T = np.broadcast_to(np.asarray(durations, dtype=float), (n,)).copy()
    status = np.zeros(n, dtype=int)
    s_stop = np.ones(n)
    result = BatchResult(y=y, status=status, s_stop=s_stop)

    live = T != 0.0
    s_stop[~live] = 0.0
    if guard is not None and live.any():
        bad = np.asarray(guard(y[live]), dtype=bool)
        idx = np.flatnonzero(live)[bad]
        status[idx] = SINGULAR
        s_stop[idx] = 0.0
        live[idx] = False
    if record:
        result.history.append((0.0, y.copy()))
    if not live.any():
        return result

    ev_prev = None
    if event is not None:
        ev_prev = np.full(n, np.nan)
        ev_prev[live] = event(y[live])

    def rhs(yy, tt):
        return tt[:, None] * velocity(yy)

    # initial step (Hairer & Wanner II.4)
    idx = np.flatnonzero(live)
    f0 = rhs(y[idx], T[idx])
    scale = atol + rtol * np.abs(y[idx])
    d0 = np.sqrt(np.mean((y[idx] / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h = min(h, 1.0)
    y1 = y[idx] + h * f0
    f1 = rhs(y1, T[idx])
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    h = min(100 * h, h1, 1.0)

    s = 0.0
    fac_old = 1e-4
    rejected_last = False
    k_first = np.zeros_like(y)
    k_first[idx] = f0

    while s < 1.0:
        idx = np.flatnonzero(live)
        if idx.size == 0:
            break
        if result.n_steps + result.n_rejected > max_steps:
            status[idx] = UNDERFLOW
            s_stop[idx] = s
            live[idx] = False
            break
        h_floor = 16 * np.finfo(float).eps * max(1.0, abs(s))
        if h < h_floor:
            # a velocity that would carry the state far past its own size over
            # the rest of the interval means finite-time blow-up
            speed = np.max(np.abs(k_first[idx]), axis=1) * (1.0 - s)
            size = 1.0 + np.max(np.abs(y[idx]), axis=1)
            runaway = ~np.isfinite(speed) | (speed > 1e6 * size)
            status[idx] = np.where(runaway, BLOWUP, UNDERFLOW)
            s_stop[idx] = s
            live[idx] = False
            break
        last = s + h >= 1.0
        if last:
            h = 1.0 - s
        yi = y[idx]
        ti = T[idx]
        k = np.empty((7,) + yi.shape)
        k[0] = k_first[idx]
        with np.errstate(all="ignore"):
            for st in range(1, 7):
                acc = yi.copy()
                for m, a in enumerate(A[st]):
                    if a != 0.0:
                        acc += h * a * k[m]
                k[st] = rhs(acc, ti)
            y_new = yi + h * np.tensordot(B[:6], k[:6], axes=1)
            err = h * np.tensordot(E, k, axes=1)
            en = _error_norm(err, yi, y_new, rtol, atol)
        finite = np.isfinite(en) & np.all(np.isfinite(y_new), axis=1)
        if not finite.all():
            en = np.where(finite, en, np.inf)
        err_max = float(np.max(en))

        if err_max <= 1.0:
            fac11 = max(err_max, 1e-300) ** EXPO1
            fac = fac11 / fac_old ** BETA
            fac = min(1 / FAC_MIN, max(1 / FAC_MAX, fac / SAFETY))
            h_new = h / fac
            if rejected_last:
                h_new = min(h_new, h)
            fac_old = max(err_max, 1e-4)
            rejected_last = False
            result.n_steps += 1
            result.max_error = max(result.max_error, err_max)
            s_old = s
            s = 1.0 if last else s + h
            y[idx] = y_new
            k_first[idx] = k[6]
            if record:
                result.dense.append(DenseStep(s_old, h, yi.copy(), k.copy()))
                result.history.append((s, y.copy()))

            stop = np.zeros(idx.size, dtype=bool)
            code = np.zeros(idx.size, dtype=int)
            big = np.max(np.abs(y_new), axis=1) > blowup
            stop |= big
            code[big] = BLOWUP
            if guard is not None:
                g = np.asarray(guard(y_new), dtype=bool) & ~stop
                stop |= g
                code[g] = SINGULAR
            if event is not None:
                ev = np.asarray(event(y_new), dtype=float)
                prev = ev_prev[idx]
                cross = (np.sign(ev) != np.sign(prev)) | (ev == 0.0)
                cross &= ~stop
                for loc in np.flatnonzero(cross):
                    result.event_steps[int(idx[loc])] = DenseStep(
                        s_old, h, yi[loc].copy(), k[:, loc, :].copy())
                stop |= cross
                code[cross] = EVENT
                ev_prev[idx] = ev
            if stop.any():
                sidx = idx[stop]
                status[sidx] = code[stop]
                s_stop[sidx] = s
                live[sidx] = False
            h = h_new
        else:
            fac11 = err_max ** EXPO1 if np.isfinite(err_max) else 1 / FAC_MIN
            h = h / min(1 / FAC_MIN, fac11 / SAFETY)
            result.n_rejected += 1
            rejected_last = True
            if not np.isfinite(err_max) and h < 1e3 * h_floor:
                # a trajectory cannot be advanced at all: drop it
                badloc = idx[~finite]
                status[badloc] = BLOWUP
                s_stop[badloc] = s
                live[badloc] = False
                h = max(h, 1e3 * h_floor)
    return result
