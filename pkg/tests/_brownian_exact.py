"""Closed-form Brownian tails used as an external yardstick for the MC lane.

For X_t = B_t - c*t the drawup process X_t - inf_{s<=t} X_s is Brownian
motion with drift -c reflected at the origin, so the event {max drawup on
[0, T] exceeds u} is a first-passage problem on [0, u] with a reflecting
boundary at 0 and absorbing boundary at u.  The survival probability has a
Sturm-Liouville eigenfunction expansion: after the Girsanov-style gauge
transform q = exp(c*x + c^2 t / 2) * p the generator becomes the plain heat
operator with a Robin condition q'(0) = -c q(0) and Dirichlet q(u) = 0.
The spectrum consists of trigonometric modes cos(w x) - (c/w) sin(w x)
with w solving c sin(wu) = w cos(wu) (one root per interval of length
pi/u), plus, when c*u > 1, a single hyperbolic mode with v in (0, c)
solving c sinh(vu) = v cosh(vu).  Exactly at c*u = 1 those two families
meet in a degenerate linear mode 1 - c*x.

Because the drawdown of drift -c equals in law the drawup of drift +c,
one function covers both functionals: pass c = +mu_eff for the drawup tail
of B_t - mu_eff*t and c = -mu_eff for its drawdown tail.

All integrals below are antiderivatives evaluated in closed form; the only
numerics are the one-dimensional root finds, bracketed analytically.
"""

import numpy as np
from scipy.optimize import brentq


def exact_rbm_hit(u, c, T, nmodes=300):
    """P(max drawup of B_t - c*t over [0, T] > u), exact in the continuum."""
    g = lambda w: c * np.sin(w * u) - w * np.cos(w * u)
    total = 0.0
    k = found = 0
    while found < nmodes and k < 2 * nmodes + 10:
        a, b = (k * np.pi + 1e-13) / u, ((k + 1) * np.pi - 1e-13) / u
        k += 1
        if np.sign(g(a)) == np.sign(g(b)):
            continue
        w = brentq(g, a, b, xtol=1e-15)
        if w <= 1e-10:
            continue
        found += 1
        s2, sq = np.sin(2 * w * u), np.sin(w * u) ** 2
        norm2 = (u / 2 + s2 / (4 * w)) - (c / w) * sq / w \
            + (c / w) ** 2 * (u / 2 - s2 / (4 * w))
        d = c * c + w * w
        e = np.exp(-c * u)
        int_cos = (e * (-c * np.cos(w * u) + w * np.sin(w * u)) + c) / d
        int_sin = (e * (-c * np.sin(w * u) - w * np.cos(w * u)) + w) / d
        proj = int_cos - (c / w) * int_sin
        total += np.exp(-0.5 * (w * w + c * c) * T) * proj / norm2
    cu = c * u
    if c > 0 and abs(cu - 1.0) < 1e-13:
        # The w -> 0 and v -> 0 limits coincide here; the mode is linear.
        norm2 = u * (1.0 - cu + cu * cu / 3.0)
        proj = u * np.exp(-cu)
        total += np.exp(-0.5 * c * c * T) * proj / norm2
    elif c > 0 and cu > 1.0:
        gh = lambda v: c * np.sinh(v * u) - v * np.cosh(v * u)
        v = brentq(gh, 1e-13, c * (1 - 1e-14), xtol=1e-15)
        sh, ch = np.sinh(v * u), np.cosh(v * u)
        norm2 = (np.sinh(2 * v * u) / (4 * v) + u / 2) - (c / v) * sh * sh / v \
            + (c / v) ** 2 * (np.sinh(2 * v * u) / (4 * v) - u / 2)
        d = v * v - c * c
        e = np.exp(-c * u)
        int_ch = (e * (c * ch + v * sh) - c) / d
        int_sh = (e * (v * ch + c * sh) - v) / d
        proj = int_ch - (c / v) * int_sh
        total += np.exp(-0.5 * (c * c - v * v) * T) * proj / norm2
    return 1.0 - total
