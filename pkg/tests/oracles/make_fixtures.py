"""Regenerate tests/fixtures/oracles.json.

Every value here is computed with numpy/scipy only, independently of the
package: root finding on the defining equations, quadrature of the defining
integrals, or a reference ODE solve (DOP853 at tight tolerances).  Values are
stored with 12 significant digits.

    python3 tests/oracles/make_fixtures.py
"""

import json
import warnings
from pathlib import Path

import numpy as np
from scipy.integrate import IntegrationWarning, quad, solve_ivp
from scipy.optimize import brentq

OUT = Path(__file__).resolve().parents[1] / "fixtures" / "oracles.json"


def r12(v):
    return float(f"{v:.12g}")


# -- sinh field: j = (1, sinh x, 0), sigma = sinh x / t with f(t) = y - atanh(1/cosh x)

def profile_naive(t):
    s = np.sqrt(1.0 + t * t)
    return s - np.arctanh(1.0 / s)


def sinh_sigma(x, y):
    if x == 0.0:
        return np.exp(1.0 - y)
    r = y - np.arctanh(1.0 / np.cosh(x))
    t = brentq(lambda t: profile_naive(t) - r, 1e-12, 1e6, xtol=1e-15, rtol=1e-15)
    return np.sinh(abs(x)) / t


def atan_family_sigma(x, y):
    r = y - np.arctanh(1.0 / np.cosh(x))
    sgn = 1.0 if x > 0 else -1.0
    g = lambda u: np.log(np.exp(u)) + np.arctan(sgn * np.exp(u)) - r  # noqa: E731
    u = brentq(g, -60.0, 60.0, xtol=1e-15, rtol=1e-15)
    return np.sinh(x) / (sgn * np.exp(u))


def sinh_leg(direction, p, t):
    def rhs(_, y):
        x = y[0]
        if direction == 1:
            j = np.array([1.0, np.sinh(x), 0.0])
            return j / np.linalg.norm(j)
        if direction == 2:
            return np.array([0.0, 0.0, 1.0])
        return np.array([np.tanh(x), -1.0 / np.cosh(x), 0.0])
    if t == 0.0:
        return np.array(p, dtype=float)
    sol = solve_ivp(rhs, (0.0, t), p, method="DOP853", rtol=1e-13, atol=1e-14)
    return sol.y[:, -1]


def sinh_x32(times):
    p = np.array([0.0, 1.0, 0.0])
    for k, t in enumerate(times, start=1):
        p = sinh_leg(k, p, t)
    return p


# -- f g h with f vanishing: interval construction by quadrature

def remark_f_sigma(x, y, z):
    f = lambda s: np.sin(2 * np.pi * s)  # noqa: E731
    s = y + z
    k = np.floor(2 * x)
    a, b = k / 2, (k + 1) / 2
    m = 0.5 * (a + b)
    F = lambda q: quad(lambda r: 1.0 / f(r), m, q, epsabs=1e-14, epsrel=1e-13)[0]  # noqa: E731
    target = s + F(x)
    t = brentq(lambda q: F(q) - target, a + 1e-13, b - 1e-13, xtol=1e-15, rtol=1e-15)
    return f(x) / f(t)


# -- Frobenius counter-example, f = 8x^3 - 6x^4 - 1

def cex_F_direct(x):
    return x ** 2 / 8 - x / 12 - np.log1p(-x) / 24 - np.log(x) / 24 + 1 / (24 * x)


def cex_F_increment(x0, x1):
    f = lambda s: 8 * s ** 3 - 6 * s ** 4 - 1  # noqa: E731
    fp = lambda s: 24 * s ** 2 - 24 * s ** 3  # noqa: E731
    return quad(lambda s: f(s) / fp(s), x0, x1, epsabs=1e-14, epsrel=1e-13, limit=200)[0]


# -- torus scan for fgh with f = sin(2 pi x) + 2, g = h = 1

def fgh_I(start, T, shift=2.0):
    def rhs(_, y):
        f = np.sin(2 * np.pi * y[0]) + shift
        fp = 2 * np.pi * np.cos(2 * np.pi * y[0])
        n2 = 1.0 + 2 * f * f
        return np.array([2 * f * fp, -fp, -fp, 2 * fp * fp]) / n2
    y0 = np.append(start, 0.0)
    fwd = solve_ivp(rhs, (0, T), y0, method="DOP853", rtol=1e-12, atol=1e-13).y[3, -1]
    bwd = solve_ivp(rhs, (0, -T), y0, method="DOP853", rtol=1e-12, atol=1e-13).y[3, -1]
    return fwd - bwd


def main():
    warnings.simplefilter("ignore", IntegrationWarning)
    np.seterr(divide="ignore")
    sinh_points = [(1.0, 2.0, 0.0), (0.5, 0.0, 0.3), (-1.5, -0.7, 0.0), (2.0, 1.0, 0.0),
                   (0.2, -1.0, 1.0), (1e-3, 0.5, 0.0)]
    triples = [(1.0, 0.5, -0.5), (-0.7, -1.2, 1.3), (0.1, 2.0, -2.0), (1.9, -0.3, 0.8),
               (-2.0, 1.0, 2.0), (0.0, 0.4, 1.1)]
    rf_points = [(0.2, 0.1, 0.05), (0.3, -0.2, 0.1), (0.45, 0.3, 0.0), (0.7, 0.1, -0.2),
                 (0.15, -0.4, 0.2)]
    data = {
        "sinh_sigma": [{"point": list(p), "sigma": r12(sinh_sigma(p[0], p[1]))}
                       for p in sinh_points],
        "atan_family_sigma": [{"point": list(p), "sigma": r12(atan_family_sigma(p[0], p[1]))}
                              for p in sinh_points if p[0] != 0],
        "sinh_x32": [{"times": list(t), "point": [r12(v) for v in sinh_x32(t)]}
                     for t in triples],
        "remark_f_sigma": [{"point": list(p), "sigma": r12(remark_f_sigma(*p))}
                           for p in rf_points],
        "cex_F_0.01": r12(cex_F_direct(0.01)),
        "cex_F_increment_0.5_to_0.01": r12(cex_F_increment(0.5, 0.01)),
        "cex_curl_zero_x": r12(brentq(lambda x: 48 * x - 72 * x * x, 0.3, 0.9,
                                      xtol=1e-15)),
        "cosh_blowup_time_from_x1": r12(-np.log(np.tanh(0.5))),
        "fgh_I_bounded": {"start": [0.137, 0.271, 0.533], "T": 64.0,
                          "I": r12(fgh_I(np.array([0.137, 0.271, 0.533]), 64.0))},
        "fgh_I_limit": r12(np.log(3.0)),
    }
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(data, indent=2) + "\n")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
