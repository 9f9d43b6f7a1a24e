"""Log-conductivity reconstruction along the third flow and residual checks.

With coordinates ``(t1, t2, t3)`` of a point ``p`` relative to the anchor,

    w(p) = integral over [0, t3] of |curl j|^2 / |j|^2 along X3

(``|curl j| / |j|`` along the renormalised third flow for the tilde variant),
and ``sigma = exp(w)`` is a candidate conductivity with ``j = sigma grad u``.
The certificate is ``curl(exp(-w) j) = exp(-w) (curl j - grad w x j) = 0``.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _io
from .errors import RealizabilityError
from .fields import Box, _OFFSETS, _WEIGHTS, curl, evaluate
from .flows import (NEWTON_TOL, RTOL, ATOL, Normalization, TripleCoordinates, forward_map,
                    forward_map_batch, invert_all, invert_batch, invert_coordinates)

VERIFY_TOL = 1e-10
CHUNK = 512


@dataclass(frozen=True)
class LogConductivitySample:
    point: tuple
    coords: TripleCoordinates
    w: float
    normalization: Normalization = Normalization.STANDARD

    @property
    def sigma(self):
        return float(np.exp(self.w))


def compute_w(field, coords, normalization=Normalization.STANDARD, rtol=RTOL, atol=ATOL):
    """w at ``X32(coords)`` by integrating the weight jointly with the third leg."""
    norm = Normalization.parse(normalization)
    mb = forward_map_batch(field, coords.x0, [[coords.t1, coords.t2, coords.t3]], norm,
                           rtol, atol)
    if not mb.ok[0]:
        forward_map(field, coords, norm, rtol, atol)  # raises with the leg
    return LogConductivitySample(tuple(float(v) for v in mb.points[0]), coords,
                                 float(mb.q[0]), norm)


def w_at_point(field, x0, p, normalization=Normalization.STANDARD, guess=None,
               tol=NEWTON_TOL, box=((-3, 3),) * 3, rtol=RTOL, atol=ATOL):
    """w at ``p``: invert the triple flow, then integrate along the third leg."""
    coords = invert_coordinates(field, x0, p, guess, tol, normalization, box, rtol, atol)
    sample = compute_w(field, coords, normalization, rtol, atol)
    return LogConductivitySample(tuple(float(v) for v in p), coords, sample.w,
                                 sample.normalization)


def w_all_solutions(field, x0, p, normalization=Normalization.STANDARD, tol=NEWTON_TOL,
                    box=((-3, 3),) * 3, rtol=RTOL, atol=ATOL):
    """One sample per distinct coordinate solution of ``p`` (none chosen)."""
    return [LogConductivitySample(tuple(float(v) for v in p), c,
                                  compute_w(field, c, normalization, rtol, atol).w,
                                  Normalization.parse(normalization))
            for c in invert_all(field, x0, p, tol, normalization, box, rtol, atol)]


def conductivity_at(field, x0, p, normalization=Normalization.STANDARD, **kwargs):
    return float(np.exp(w_at_point(field, x0, p, normalization, **kwargs).w))


class ReconstructedW:
    """Batched ``w`` as a callable on ``(n, 3)`` arrays (NaN where inversion fails).

    Parameters
    ----------
    field : VectorField
    x0 : point
        Anchor of the triple flow.
    normalization : Normalization or str
    tol : float
        Target-space residual for the coordinate inversion.
    box : sequence of (lo, hi)
        Multi-start box in coordinate space.
    """

    def __init__(self, field, x0, normalization=Normalization.STANDARD, tol=VERIFY_TOL,
                 box=((-3, 3),) * 3, rtol=RTOL, atol=ATOL):
        self.field = field
        self.x0 = tuple(float(v) for v in x0)
        self.normalization = Normalization.parse(normalization)
        self.tol = tol
        self.box = box
        self.rtol = rtol
        self.atol = atol
        self.last = None

    def _map(self, times):
        return forward_map_batch(self.field, self.x0, times, self.normalization,
                                 self.rtol, self.atol)

    def solve(self, pts, guesses=None, jacobian=None, multistart=True):
        return invert_batch(self.field, self.x0, pts, guesses, self.tol,
                            self.normalization, self.box, self.rtol, self.atol,
                            multistart=multistart, jacobian=jacobian)

    def __call__(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        inv = self.solve(pts)
        self.last = inv
        w = self._map(inv.times).q
        w[~inv.converged] = np.nan
        return w

    def stencil_values(self, centers, offsets):
        """w at ``centers[i] + offsets[k]`` as an ``(n, k)`` array.

        Centers are solved first; each stencil point starts from the linear
        prediction ``t_c + J_c^{-1} offset`` and runs chord iterations with the
        center Jacobian.  The last forward map covers every point in one batch
        so that w varies smoothly across a stencil.
        """
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        offsets = np.atleast_2d(np.asarray(offsets, dtype=float))
        n, k = len(centers), len(offsets)
        c_inv = self.solve(centers)
        Jc = c_inv.jacobian
        good_J = np.all(np.isfinite(Jc), axis=(1, 2))
        pts = (centers[:, None, :] + offsets[None, :, :]).reshape(-1, 3)
        with np.errstate(all="ignore"):
            pred = np.einsum("nij,kj->nki", np.linalg.pinv(np.where(
                good_J[:, None, None], Jc, 0.0)), offsets)
        guesses = (c_inv.times[:, None, :] + pred).reshape(-1, 3)
        J_rep = np.repeat(np.where(good_J[:, None, None], Jc, np.eye(3)), k, axis=0)
        s_inv = self.solve(pts, guesses, jacobian=J_rep)
        ok = s_inv.converged.reshape(n, k) & c_inv.converged[:, None]
        w = self._map(s_inv.times).q.reshape(n, k)
        w[~ok] = np.nan
        self.last = (c_inv, s_inv)
        return w


def _stencil_offsets(h):
    offs = []
    for axis in range(3):
        for o in _OFFSETS:
            e = np.zeros(3)
            e[axis] = o * h
            offs.append(e)
    return np.array(offs)  # (12, 3), axis-major


def _eval_w_source(w_source, pts):
    if hasattr(w_source, "stencil_values"):
        return w_source(pts)
    try:
        out = np.asarray(w_source(pts), dtype=float)
        if out.shape == (len(pts),):
            return out
    except RealizabilityError:
        pass
    except (TypeError, ValueError, IndexError):
        pass
    out = np.empty(len(pts))
    for i, p in enumerate(pts):
        try:
            out[i] = float(w_source(p))
        except RealizabilityError as exc:
            raise type(exc)(f"{exc} at grid point {tuple(float(v) for v in p)}") from exc
    return out


def gradient_of(w_source, centers, h):
    """4th-order central-difference gradient of ``w_source`` at ``centers``."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    offs = _stencil_offsets(h)
    if hasattr(w_source, "stencil_values"):
        vals = w_source.stencil_values(centers, offs)
    else:
        pts = (centers[:, None, :] + offs[None]).reshape(-1, 3)
        vals = _eval_w_source(w_source, pts).reshape(len(centers), len(offs))
    vals = vals.reshape(len(centers), 3, len(_OFFSETS))
    return vals @ _WEIGHTS / h


@dataclass
class ResidualReport:
    max_residual: float
    mean_residual: float
    max_curl_dot: float
    max_transport_defect: float
    box: tuple
    grid_n: int
    h: float
    n_points: int
    n_failed: int = 0

    def to_dict(self):
        return {
            "max_curl_residual": self.max_residual,
            "mean_curl_residual": self.mean_residual,
            "max_grad_w_dot_curl": self.max_curl_dot,
            "max_transport_defect": self.max_transport_defect,
            "grid": {"box": list(self.box), "n": self.grid_n},
            "h": self.h,
            "n_points": self.n_points,
            "n_failed": self.n_failed,
        }

    def to_json(self):
        return _io.dumps(self.to_dict())


def residual_terms(field, points, w, grad_w):
    """Pointwise ``|curl(e^-w j)|``, ``|grad w . curl j|`` and transport defect."""
    j = evaluate(field, points)
    c = curl(field, points)
    nj2 = np.sum(j * j, axis=1)
    res = np.exp(-w)[:, None] * (c - np.cross(grad_w, j))
    curl_dot = np.abs(np.sum(grad_w * c, axis=1))
    transport = np.abs(np.sum(grad_w * np.cross(j, c), axis=1) / nj2
                       - np.sum(c * c, axis=1) / nj2)
    return np.linalg.norm(res, axis=1), curl_dot, transport


def _w_and_gradient(w_source, pts, h):
    if hasattr(w_source, "stencil_values"):
        offs = np.vstack([np.zeros((1, 3)), _stencil_offsets(h)])
        vals = w_source.stencil_values(pts, offs)
        return vals[:, 0], vals[:, 1:].reshape(len(pts), 3, len(_OFFSETS)) @ _WEIGHTS / h
    return _eval_w_source(w_source, pts), gradient_of(w_source, pts, h)


def grid_w_and_gradient(w_source, pts, h, threads=1, chunk=CHUNK):
    """w and its FD gradient at ``pts`` in fixed-size chunks.

    Chunks are independent of ``threads`` and results are stitched back in
    input order, so the output does not depend on the worker count.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    pieces = [pts[i:i + chunk] for i in range(0, len(pts), chunk)]
    if threads > 1 and len(pieces) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda q: _w_and_gradient(w_source, q, h), pieces))
    else:
        parts = [_w_and_gradient(w_source, q, h) for q in pieces]
    return (np.concatenate([p[0] for p in parts]),
            np.concatenate([p[1] for p in parts]))


def verify_residuals(field, w_source, box, grid_n=11, h=1e-3, threads=1, chunk=CHUNK,
                     return_grid=False):
    """Check ``curl(exp(-w) j) = 0`` on a ``grid_n^3`` lattice of ``box``.

    ``w_source`` maps points to w; any callable on ``(n, 3)`` arrays works,
    closed forms and :class:`ReconstructedW` alike.  Points where ``w_source``
    yields NaN are counted in ``n_failed`` and left out of the statistics.
    With ``return_grid`` the lattice and its w values are returned as well.
    """
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    if not isinstance(box, Box):
        box = Box.from_bounds(box)
    pts = box.grid(grid_n)
    w, grad = grid_w_and_gradient(w_source, pts, h, threads, chunk)
    ok = np.isfinite(w) & np.all(np.isfinite(grad), axis=1)
    if ok.any():
        r, cd, tr = residual_terms(field, pts[ok], w[ok], grad[ok])
    else:
        r = cd = tr = np.array([np.nan])
    rep = ResidualReport(float(np.max(r)), float(np.mean(r)), float(np.max(cd)),
                         float(np.max(tr)), box.bounds, grid_n, h, len(pts),
                         int(np.count_nonzero(~ok)))
    if return_grid:
        return rep, pts, w, ok
    return rep


def sigma_grid_csv(points, w):
    """CSV with columns x, y, z, w, sigma."""
    rows = [(float(p[0]), float(p[1]), float(p[2]), float(wi), float(np.exp(wi)))
            for p, wi in zip(points, w)]
    return _io.csv_text(["x", "y", "z", "w", "sigma"], rows)
