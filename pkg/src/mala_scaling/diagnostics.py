"""Statistical instruments turning chain output into checks of the limit theory.

The two centerpieces are the exact leading Taylor coefficient ``g3`` of the
log-acceptance ratio in the step scale sigma, and a CLT harness that
standardizes measured log-acceptance ratios so they can be compared against a
standard normal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import StateError
from .limit import LimitState, limit_cdf_table, normal_cdf, _nodes, _pi_weights
from .model import ModelSpec, eval_H, eval_U
from .sampler import (
    ChainState,
    KernelConfig,
    log_accept_ratio_from_noise,
    mala_step,
    run_chain,
)


@dataclass(frozen=True)
class KSResult:
    """Exact one-sample Kolmogorov-Smirnov statistic."""

    statistic: float
    n: int


@dataclass(frozen=True)
class CLTReport:
    """Moments and KS distance of the standardized log-acceptance ratio.

    Standardization is G / (ell^3 tau) + ell^3 tau / 2, so the limiting law
    of the raw ratio has mean -ell^6 tau^2 / 2 and variance ell^6 tau^2.
    """

    n_draws: int
    mean_std: float
    var_std: float
    ks_to_normal: float
    predicted_mean_G: float
    predicted_var_G: float


@dataclass(frozen=True)
class ChaosReport:
    """Marginal KS against the limiting CDF plus a pairwise-independence proxy."""

    ks_marginal: KSResult
    corr12: Optional[float]
    n_snapshots: int


def acceptance_rate(records: Sequence) -> float:
    """Fraction of accepted transitions."""
    if len(records) == 0:
        raise ValueError("acceptance_rate requires at least one record")
    return float(np.mean([r.accepted for r in records]))


def esjd_per_component(records: Sequence, N: int) -> float:
    """Mean squared jump distance per component."""
    if len(records) == 0:
        raise ValueError("esjd_per_component requires at least one record")
    return float(np.mean([r.sq_jump for r in records])) / N


def speed_estimate(esjd: float, N: int, exponent: float) -> float:
    """Rescale ESJD by N^exponent; the large-N limit is the diffusion speed."""
    return esjd * float(N) ** exponent


def iact(series) -> float:
    """Integrated autocorrelation time by initial-positive-sequence truncation.

    Sums 1 + 2*rho_k over lags until the first non-positive sample
    autocorrelation.  A constant series has no autocorrelation structure; the
    estimate is then capped at the series length (rather than raising), and
    the same cap applies in general.
    """
    s = np.asarray(series, dtype=float)
    n = s.size
    if n < 100:
        raise ValueError("iact requires at least 100 points")
    s = s - s.mean()
    var = float(s @ s) / n
    if var == 0.0:
        return float(n)
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(s, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n].real / n
    rho = acov / acov[0]
    total = 1.0
    for k in range(1, n):
        if rho[k] <= 0.0:
            break
        total += 2.0 * rho[k]
    return float(min(total, n))


def ks_statistic(sample, reference_cdf: Callable) -> KSResult:
    """Exact one-sample KS statistic against a vectorized reference CDF."""
    xs = np.sort(np.asarray(sample, dtype=float))
    n = xs.size
    if n == 0:
        raise ValueError("ks_statistic requires a nonempty sample")
    f = np.asarray(reference_cdf(xs), dtype=float)
    i = np.arange(1, n + 1, dtype=float)
    d_plus = float(np.max(i / n - f))
    d_minus = float(np.max(f - (i - 1.0) / n))
    return KSResult(statistic=max(d_plus, d_minus), n=n)


def g3(model: ModelSpec, x: np.ndarray, W: np.ndarray):
    """Leading sigma^3 Taylor coefficient of the log-acceptance ratio.

    Uses the empirical composite psi_N(t) = U(t) - H(t) * mean(H(x)) and
    empirical averages over coordinates.  W may carry a leading batch axis,
    in which case one coefficient per batch row is returned.
    """
    xs = np.asarray(x, dtype=float)
    ws = np.asarray(W, dtype=float)
    if ws.shape[-1] != xs.shape[-1]:
        raise ValueError("x and W must have the same trailing length")
    n = xs.shape[-1]
    mh = float(np.mean(eval_H(model, xs, 0)))
    h1 = np.asarray(eval_H(model, xs, 1))
    h2 = np.asarray(eval_H(model, xs, 2))
    p1 = np.asarray(eval_U(model, xs, 1)) - mh * h1
    p2 = np.asarray(eval_U(model, xs, 2)) - mh * h2
    p3 = np.asarray(eval_U(model, xs, 3)) - mh * np.asarray(eval_H(model, xs, 3))
    t1 = np.mean(3.0 * p2 * p1 * ws + p3 * ws**3, axis=-1)
    e_h1w = np.mean(h1 * ws, axis=-1)
    e_h1p1 = float(np.mean(h1 * p1))
    e_h2w2 = np.mean(h2 * ws * ws, axis=-1)
    out = -(n / 12.0) * (t1 - 3.0 * e_h1w * e_h1p1 - 3.0 * e_h2w2 * e_h1w)
    if np.ndim(out) == 0:
        return float(out)
    return out


_CLT_CHUNK = 256


def _standardize(g_vals: np.ndarray, ell: float, tau: float) -> np.ndarray:
    return g_vals / (ell**3 * tau) + ell**3 * tau / 2.0


def _clt_report(g_vals: np.ndarray, ell: float, tau: float) -> CLTReport:
    s = _standardize(g_vals, ell, tau)
    ks = ks_statistic(s, normal_cdf)
    return CLTReport(
        n_draws=s.size,
        mean_std=float(s.mean()),
        var_std=float(s.var()),
        ks_to_normal=ks.statistic,
        predicted_mean_G=-(ell**6) * tau**2 / 2.0,
        predicted_var_G=(ell**6) * tau**2,
    )


def clt_check_G(
    model: ModelSpec,
    limit: LimitState,
    x: np.ndarray,
    ell: float,
    n_draws: int,
    rng: np.random.Generator,
) -> CLTReport:
    """Standardized log-acceptance ratios over fresh noise at one fixed state.

    Holding the state fixed leaves an O(N^{-1/6}) state-dependent offset in
    the mean; ``clt_check_G_chain`` averages it away by refreshing the state
    between draws.
    """
    if limit.tau is None or not limit.tau > 0:
        raise StateError("clt_check_G requires a limit state with tau > 0")
    xs = np.asarray(x, dtype=float)
    n = xs.size
    sigma_sq = ell**2 * float(n) ** (-1.0 / 3.0)
    out = np.empty(n_draws)
    done = 0
    while done < n_draws:
        b = min(_CLT_CHUNK, n_draws - done)
        w = rng.standard_normal((b, n))
        out[done : done + b] = log_accept_ratio_from_noise(model, xs, w, sigma_sq)
        done += b
    return _clt_report(out, ell, limit.tau)


def clt_check_G_chain(
    model: ModelSpec,
    limit: LimitState,
    state: ChainState,
    ell: float,
    n_draws: int,
    rng: np.random.Generator,
    thin: int = 8,
) -> CLTReport:
    """CLT check with the state refreshed by the chain between draws.

    Each retained draw is the log-acceptance ratio of the chain's own
    proposal at a (approximately) stationary state, so the sample averages
    over the target rather than conditioning on one configuration.
    """
    if limit.tau is None or not limit.tau > 0:
        raise StateError("clt_check_G_chain requires a limit state with tau > 0")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    cfg = KernelConfig.mala(ell, state.x.size)
    g_vals = np.empty(n_draws)
    for j in range(n_draws):
        for _ in range(thin - 1):
            mala_step(model, state, cfg, rng)
        _, rec = mala_step(model, state, cfg, rng)
        g_vals[j] = rec.G
    return _clt_report(g_vals, ell, limit.tau)


def _snapshot_coords(snapshots: Sequence, k: int) -> np.ndarray:
    rows = []
    for snap in snapshots:
        vec = snap.x if isinstance(snap, ChainState) else np.asarray(snap)
        rows.append(vec[:k])
    return np.asarray(rows, dtype=float)


def chaos_check(
    model: ModelSpec,
    limit: LimitState,
    snapshots: Sequence,
    k: int = 2,
) -> ChaosReport:
    """Compare low-order marginals of chain snapshots to the limiting law.

    Snapshots must be separated by at least one autocorrelation time (the
    caller controls spacing).  k = 1 checks the first marginal only; k = 2
    adds the (x1, x2) sample correlation, which should vanish as N grows.
    """
    if not 1 <= k <= 2:
        raise ValueError("k must be 1 or 2")
    if len(snapshots) < 16:
        raise ValueError("chaos_check requires at least 16 snapshots")
    coords = _snapshot_coords(snapshots, k)
    table = limit_cdf_table(model, limit)
    ks = ks_statistic(coords[:, 0], table)
    corr12 = None
    if k == 2:
        corr12 = float(np.corrcoef(coords[:, 0], coords[:, 1])[0, 1])
    return ChaosReport(ks_marginal=ks, corr12=corr12, n_snapshots=coords.shape[0])


_TAIL_FUNCTIONS = ("H", "H2", "U_clipped")
_U_CLIP = 10.0


def _tail_g(model: ModelSpec, name: str, xs: np.ndarray) -> np.ndarray:
    if name == "H":
        return np.asarray(eval_H(model, xs, 0))
    if name == "H2":
        h = np.asarray(eval_H(model, xs, 0))
        return h * h
    return np.clip(np.asarray(eval_U(model, xs, 0)), -_U_CLIP, _U_CLIP)


def tail_frequency(
    model: ModelSpec,
    limit: LimitState,
    snapshots: Sequence,
    g: str,
    lam: float,
) -> float:
    """Empirical frequency of |mean_N g(x) - pi(g)| >= lam / sqrt(N).

    g names a bounded test function: "H", "H2" (its square), or "U_clipped"
    (U clipped to [-10, 10] to keep it bounded).  The reference value pi(g)
    comes from quadrature against the limiting density.
    """
    if g not in _TAIL_FUNCTIONS:
        raise ValueError(f"unknown tail function {g!r}; expected one of {_TAIL_FUNCTIONS}")
    if len(snapshots) == 0:
        raise ValueError("tail_frequency requires at least one snapshot")
    x_nodes, pw, _ = _pi_weights(model, limit)
    ref = float(pw @ _tail_g(model, g, x_nodes))
    hits = 0
    total = 0
    for snap in snapshots:
        vec = snap.x if isinstance(snap, ChainState) else np.asarray(snap)
        n = vec.size
        dev = abs(float(np.mean(_tail_g(model, g, vec))) - ref)
        hits += dev >= lam / math.sqrt(n)
        total += 1
    return hits / total


def collect_snapshots(
    model: ModelSpec,
    state: ChainState,
    cfg: KernelConfig,
    rng: np.random.Generator,
    n_snapshots: int,
    separation: int,
    coords: Optional[int] = None,
) -> list[np.ndarray]:
    """Run the chain and keep a state copy every `separation` steps."""
    if separation < 1:
        raise ValueError("separation must be >= 1")
    summary = run_chain(
        model,
        state,
        cfg,
        rng,
        steps=n_snapshots * separation,
        snapshot_every=separation,
        snapshot_coords=coords,
    )
    return summary.snapshots
