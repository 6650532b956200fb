"""Independent reference implementations used only to verify the package.

Everything here is deliberately written from scratch against the defining
formulas, without importing evaluation code from the package, so agreement is
meaningful.  Brute-force loops and dense grids are fine: these run once per
test session.
"""

from __future__ import annotations

import math

import numpy as np


def erfc_series(z: float) -> float:
    """Complementary error function via power series / continued fraction.

    Series for |z| <= 3, Lentz continued fraction beyond; both classical
    textbook forms.  Absolute error well below 1e-13 on [-8, 8].
    """
    if z < 0:
        return 2.0 - erfc_series(-z)
    if z <= 3.0:
        # erf(z) = (2/sqrt(pi)) * sum_k (-1)^k z^(2k+1) / (k! (2k+1))
        term = z
        total = z
        k = 0
        while abs(term) > 1e-18 * max(1.0, abs(total)):
            k += 1
            term *= -z * z / k
            total += term / (2 * k + 1)
        return 1.0 - 2.0 / math.sqrt(math.pi) * total
    # erfc(z) = exp(-z^2)/sqrt(pi) / (z + (1/2)/(z + 1/(z + (3/2)/(z + ...))))
    # evaluated with the modified Lentz algorithm; a_n = n/2, all b_n = z
    tiny = 1e-300
    f = z if z != 0 else tiny
    c = f
    d = 0.0
    for n in range(1, 400):
        a_n = n / 2.0
        d = z + a_n * d
        d = tiny if d == 0 else d
        c = z + a_n / c
        c = tiny if c == 0 else c
        d = 1.0 / d
        delta = c * d
        f *= delta
        if abs(delta - 1.0) < 1e-17:
            break
    return math.exp(-z * z) / math.sqrt(math.pi) / f


def normal_cdf_series(z: float) -> float:
    """Standard normal CDF built on the series erfc."""
    return 0.5 * erfc_series(-z / math.sqrt(2.0))


def tanh_H(beta: float, x: np.ndarray) -> np.ndarray:
    return beta * np.tanh(x)


def model_U(family: str, y: float, beta: float, a: float, x: np.ndarray) -> np.ndarray:
    if family == "strict_hp":
        return y * beta * np.tanh(x) - a * np.sqrt(1.0 + x * x)
    if family == "gauss_prior":
        return y * beta * np.tanh(x) - 0.5 * x * x
    return -0.5 * np.asarray(x, dtype=float) ** 2


def model_H(family: str, y: float, beta: float, a: float, x: np.ndarray) -> np.ndarray:
    if family == "iid_gauss":
        return np.zeros_like(np.asarray(x, dtype=float))
    return tanh_H(beta, x)


def central_difference(f, x: np.ndarray, step: float) -> np.ndarray:
    return (f(x + step) - f(x - step)) / (2.0 * step)


def dense_grid_fixed_point(
    family: str,
    y: float,
    beta: float,
    a: float,
    half_width: float,
    points: int = 1_000_001,
    tol: float = 1e-12,
) -> float:
    """Undamped fixed-point iteration on a dense trapezoid grid."""
    xs = np.linspace(-half_width, half_width, points)
    h = model_H(family, y, beta, a, xs)
    u = model_U(family, y, beta, a, xs)
    m = 0.0
    for _ in range(5000):
        log_w = u - m * h
        w = np.exp(log_w - log_w.max())
        m_new = float(np.trapezoid(h * w, xs) / np.trapezoid(w, xs))
        if abs(m_new - m) < tol:
            return m_new
        m = m_new
    raise RuntimeError("dense-grid fixed point did not converge")


def brute_force_log_target(
    family: str, y: float, beta: float, a: float, x: np.ndarray
) -> float:
    """Double-sum form of the target log-density, O(N^2) on purpose."""
    n = len(x)
    total = 0.0
    for i in range(n):
        total += float(model_U(family, y, beta, a, np.asarray(x[i])))
    inter = 0.0
    h = [float(model_H(family, y, beta, a, np.asarray(xi))) for xi in x]
    for i in range(n):
        for j in range(n):
            inter += h[i] * h[j]
    return total - inter / (2.0 * n)


def brute_force_log_q(
    family: str,
    y: float,
    beta: float,
    a: float,
    frm: np.ndarray,
    to: np.ndarray,
    sigma_sq: float,
) -> float:
    """Unnormalized Langevin proposal log-density, coordinate by coordinate."""
    n = len(frm)
    h_sum = sum(float(model_H(family, y, beta, a, np.asarray(v))) for v in frm)
    total = 0.0
    for i in range(n):
        xi = float(frm[i])
        t = math.tanh(xi)
        s = 1.0 - t * t
        if family == "strict_hp":
            u1 = y * beta * s - a * xi / math.sqrt(1.0 + xi * xi)
            h1 = beta * s
        elif family == "gauss_prior":
            u1 = y * beta * s - xi
            h1 = beta * s
        else:
            u1 = -xi
            h1 = 0.0
        drift_i = u1 - h1 * h_sum / n
        resid = float(to[i]) - xi - 0.5 * sigma_sq * drift_i
        total -= resid * resid / (2.0 * sigma_sq)
    return total


def brute_force_log_accept_ratio(
    family: str,
    y: float,
    beta: float,
    a: float,
    x: np.ndarray,
    proposal: np.ndarray,
    sigma_sq: float,
) -> float:
    return (
        brute_force_log_target(family, y, beta, a, proposal)
        - brute_force_log_target(family, y, beta, a, x)
        + brute_force_log_q(family, y, beta, a, proposal, x, sigma_sq)
        - brute_force_log_q(family, y, beta, a, x, proposal, sigma_sq)
    )


def grid_search_speed_maximizer(step: float = 1e-6) -> float:
    """Argmax of u^(2/3) * Phi(-u) on a uniform grid."""
    u = np.arange(step, 3.0, step)
    phi_tail = 0.5 * np.array([erfc_series(v / math.sqrt(2.0)) for v in u[:: 1000]])
    # coarse pass to bracket, then fine pass with vectorized scipy-free CDF
    coarse_u = u[::1000]
    coarse_v = coarse_u ** (2.0 / 3.0) * phi_tail
    center = coarse_u[int(np.argmax(coarse_v))]
    fine = np.arange(center - 2e-3, center + 2e-3, step)
    vals = np.array(
        [w ** (2.0 / 3.0) * 0.5 * erfc_series(w / math.sqrt(2.0)) for w in fine]
    )
    return float(fine[int(np.argmax(vals))])


def ar1_series(rng: np.random.Generator, coeff: float, n: int) -> np.ndarray:
    out = np.empty(n)
    out[0] = rng.standard_normal() / math.sqrt(1.0 - coeff * coeff)
    for i in range(1, n):
        out[i] = coeff * out[i - 1] + rng.standard_normal()
    return out
