"""MALA and RWM transition kernels on N-dimensional states with O(N) work per step.

The target has log-density sum_i U(x_i) - (sum_i H(x_i))^2 / (2N); the double
sum over H(x_i)H(x_j) collapses to the square of the cached interaction sum,
which is what makes each step O(N).  The log-acceptance ratio is available in
two forms: a general two-point form for arbitrary (x, Y) pairs, and an exact
cancellation-free form for proposals built from their noise vector, which
stays accurate down to step sizes where the ratio is O(sigma^3).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .errors import NumericError, StateError
from .limit import CdfTable, LimitState, limit_cdf_table, prior_cdf_table
from .model import ModelSpec, eval_bundle, eval_H, eval_U

MALA_SCALING_EXPONENT = 1.0 / 3.0
RWM_SCALING_EXPONENT = 1.0

CACHE_REFRESH_INTERVAL = 4096


@dataclass(frozen=True)
class KernelConfig:
    """One kernel instance: kind, step factor ell, dimension, derived variance.

    sigma_sq is stored rather than recomputed so that the scaling law is
    explicit: ell^2 * N^(-1/3) for MALA and ell^2 / N for RWM.
    """

    kind: str
    ell: float
    N: int
    scaling_exponent: float
    sigma_sq: float

    def __post_init__(self):
        if self.kind not in ("mala", "rwm"):
            raise ValueError(f"kernel kind must be 'mala' or 'rwm', got {self.kind!r}")
        if not self.ell > 0:
            raise ValueError("ell must be > 0")
        if self.N < 1:
            raise ValueError("N must be >= 1")
        expected_exp = (
            MALA_SCALING_EXPONENT if self.kind == "mala" else RWM_SCALING_EXPONENT
        )
        if self.scaling_exponent != expected_exp:
            raise ValueError(
                f"scaling_exponent for {self.kind} must be {expected_exp}"
            )
        if self.sigma_sq != self.ell**2 * float(self.N) ** (-self.scaling_exponent):
            raise ValueError("sigma_sq must equal ell^2 * N^(-scaling_exponent)")

    @classmethod
    def mala(cls, ell: float, N: int) -> "KernelConfig":
        return cls(
            kind="mala",
            ell=ell,
            N=N,
            scaling_exponent=MALA_SCALING_EXPONENT,
            sigma_sq=ell**2 * float(N) ** (-MALA_SCALING_EXPONENT),
        )

    @classmethod
    def rwm(cls, ell: float, N: int) -> "KernelConfig":
        return cls(
            kind="rwm",
            ell=ell,
            N=N,
            scaling_exponent=RWM_SCALING_EXPONENT,
            sigma_sq=ell**2 * float(N) ** (-RWM_SCALING_EXPONENT),
        )


@dataclass
class ChainState:
    """An N-dimensional configuration with cached sums.

    log_target is always sum_U - sum_H^2 / (2N) computed from the cached
    fields; the caches are updated incrementally on accepted moves and fully
    recomputed every CACHE_REFRESH_INTERVAL steps to bound float drift.
    """

    x: np.ndarray
    sum_H: float
    sum_U: float
    log_target: float
    step_count: int = 0


@dataclass
class ProposalRecord:
    """One attempted transition."""

    W: np.ndarray
    Y: np.ndarray
    G: float
    accepted: bool
    sq_jump: float


def _interaction(sum_h: float, n: int) -> float:
    return sum_h * sum_h / (2.0 * n)


def log_target(model: ModelSpec, x: np.ndarray) -> float:
    """log pi_N(x) up to the dropped normalizing constant, in O(N)."""
    xs = np.asarray(x, dtype=float)
    if not np.isfinite(xs).all():
        raise NumericError("state vector contains non-finite entries")
    n = xs.shape[-1]
    sum_u = float(np.sum(eval_U(model, xs, 0)))
    sum_h = float(np.sum(eval_H(model, xs, 0)))
    return sum_u - _interaction(sum_h, n)


def chain_state_from(model: ModelSpec, x: np.ndarray) -> ChainState:
    xs = np.array(x, dtype=float)
    if not np.isfinite(xs).all():
        raise NumericError("state vector contains non-finite entries")
    sum_h = float(np.sum(eval_H(model, xs, 0)))
    sum_u = float(np.sum(eval_U(model, xs, 0)))
    return ChainState(
        x=xs,
        sum_H=sum_h,
        sum_U=sum_u,
        log_target=sum_u - _interaction(sum_h, xs.size),
    )


def refresh_caches(model: ModelSpec, state: ChainState) -> None:
    state.sum_H = float(np.sum(eval_H(model, state.x, 0)))
    state.sum_U = float(np.sum(eval_U(model, state.x, 0)))
    state.log_target = state.sum_U - _interaction(state.sum_H, state.x.size)


def drift(model: ModelSpec, x: np.ndarray, sum_h: float | None = None) -> np.ndarray:
    """The gradient of log pi_N: U'(x_i) - H'(x_i) * sum_H / N, vectorized."""
    xs = np.asarray(x, dtype=float)
    n = xs.shape[-1]
    b = eval_bundle(model, xs)
    if sum_h is None:
        sum_h = float(np.sum(b.h))
    return b.u1 - b.h1 * (sum_h / n)


def grad_log_target(model: ModelSpec, x: np.ndarray, i: int) -> float:
    """Coordinate i of the gradient of log pi_N."""
    xs = np.asarray(x, dtype=float)
    if not 0 <= i < xs.size:
        raise ValueError(f"index {i} out of range for state of length {xs.size}")
    sum_h = float(np.sum(eval_H(model, xs, 0)))
    return float(
        eval_U(model, xs[i], 1) - eval_H(model, xs[i], 1) * sum_h / xs.size
    )


def propose_mala(
    model: ModelSpec, state: ChainState, cfg: KernelConfig, W: np.ndarray
) -> np.ndarray:
    """Euler-step proposal Y = x + sigma*W + (sigma^2/2) * drift."""
    sigma = math.sqrt(cfg.sigma_sq)
    return state.x + sigma * W + 0.5 * cfg.sigma_sq * drift(
        model, state.x, state.sum_H
    )


def _log_q(model: ModelSpec, a: np.ndarray, b: np.ndarray, sigma_sq: float) -> float:
    # unnormalized proposal log-density q(a, b); the Gaussian constant cancels
    # in the ratio and is dropped
    resid = b - a - 0.5 * sigma_sq * drift(model, a)
    return float(-(resid @ resid) / (2.0 * sigma_sq))


def log_accept_ratio(
    model: ModelSpec, x: np.ndarray, Y: np.ndarray, sigma_sq: float
) -> float:
    """Two-point log-acceptance ratio for arbitrary states x and Y."""
    xs = np.asarray(x, dtype=float)
    ys = np.asarray(Y, dtype=float)
    if xs.shape != ys.shape:
        raise ValueError("x and Y must have the same length")
    if not sigma_sq > 0:
        raise ValueError("sigma_sq must be > 0")
    g = (
        log_target(model, ys)
        - log_target(model, xs)
        + _log_q(model, ys, xs, sigma_sq)
        - _log_q(model, xs, ys, sigma_sq)
    )
    if not math.isfinite(g):
        raise NumericError("log-acceptance ratio is not finite")
    return g


def _noise_ratio_terms(
    model: ModelSpec,
    x: np.ndarray,
    W: np.ndarray,
    sigma_sq: float,
    sum_h_x: float | None = None,
):
    """Exact log-acceptance ratio for MALA proposals built from noise W.

    Every term is a sum of per-coordinate differences of size O(sigma), so
    the value stays accurate even when the ratio itself is O(sigma^3); the
    naive difference of two O(N) log-densities loses those digits.

    W may be a single vector (N,) or a batch (draws, N).  Returns
    (G, Y, sum_H(Y), sum_U(Y)) with leading batch axes preserved.
    """
    sigma = math.sqrt(sigma_sq)
    n = x.shape[-1]
    bx = eval_bundle(model, x)
    if sum_h_x is None:
        sum_h_x = float(np.sum(bx.h))
    dx = bx.u1 - bx.h1 * (sum_h_x / n)
    Y = x + sigma * W + 0.5 * sigma_sq * dx
    by = eval_bundle(model, Y)
    sum_h_y = by.h.sum(axis=-1)
    dy = by.u1 - by.h1 * (sum_h_y[..., None] / n)
    delta_u = (by.u - bx.u).sum(axis=-1)
    delta_s = (by.h - bx.h).sum(axis=-1)
    interaction = delta_s * (sum_h_y + sum_h_x) / (2.0 * n)
    r = Y - x
    dsum = dx + dy
    q_diff = -0.25 * (dsum * (2.0 * r + 0.5 * sigma_sq * (dy - dx))).sum(axis=-1)
    g = delta_u - interaction + q_diff
    return g, Y, sum_h_y, by.u.sum(axis=-1)


def log_accept_ratio_from_noise(
    model: ModelSpec, x: np.ndarray, W: np.ndarray, sigma_sq: float
):
    """Log-acceptance ratio of the proposal generated by noise W at state x.

    Agrees with ``log_accept_ratio(model, x, Y, sigma_sq)`` for the proposal Y
    it implies, but is evaluated without large-term cancellation.  Supports a
    batch of noise vectors with shape (draws, N).
    """
    xs = np.asarray(x, dtype=float)
    ws = np.asarray(W, dtype=float)
    if ws.shape[-1] != xs.shape[-1]:
        raise ValueError("W must have the same trailing length as x")
    if not sigma_sq > 0:
        raise ValueError("sigma_sq must be > 0")
    g, _, _, _ = _noise_ratio_terms(model, xs, ws, sigma_sq)
    if np.ndim(g) == 0:
        return float(g)
    return g


def _accept(rng: np.random.Generator, g: float) -> bool:
    # log(1 - u) is distributed like log(xi) but cannot hit -inf
    return math.log1p(-rng.random()) < g


def mala_step(
    model: ModelSpec, state: ChainState, cfg: KernelConfig, rng: np.random.Generator
) -> tuple[ChainState, ProposalRecord]:
    """One MALA transition; mutates and returns the state.

    On acceptance the caches are updated from sums already computed for the
    acceptance ratio, so the whole step is O(N).
    """
    W = rng.standard_normal(state.x.size)
    g, Y, sum_h_y, sum_u_y = _noise_ratio_terms(
        model, state.x, W, cfg.sigma_sq, state.sum_H
    )
    g = float(g)
    if not math.isfinite(g):
        raise NumericError("log-acceptance ratio is not finite")
    accepted = _accept(rng, g)
    if accepted:
        jump = Y - state.x
        sq_jump = float(jump @ jump)
        state.x = Y
        state.sum_H = float(sum_h_y)
        state.sum_U = float(sum_u_y)
        state.log_target = state.sum_U - _interaction(state.sum_H, state.x.size)
    else:
        sq_jump = 0.0
    state.step_count += 1
    if state.step_count % CACHE_REFRESH_INTERVAL == 0:
        refresh_caches(model, state)
    return state, ProposalRecord(W=W, Y=Y, G=g, accepted=accepted, sq_jump=sq_jump)


def rwm_step(
    model: ModelSpec, state: ChainState, cfg: KernelConfig, rng: np.random.Generator
) -> tuple[ChainState, ProposalRecord]:
    """One random-walk Metropolis transition; mutates and returns the state."""
    n = state.x.size
    W = rng.standard_normal(n)
    Y = state.x + math.sqrt(cfg.sigma_sq) * W
    bx = eval_bundle(model, state.x)
    by = eval_bundle(model, Y)
    sum_h_y = float(by.h.sum())
    sum_u_y = float(by.u.sum())
    delta_s = float((by.h - bx.h).sum())
    g = float((by.u - bx.u).sum()) - delta_s * (sum_h_y + state.sum_H) / (2.0 * n)
    if not math.isfinite(g):
        raise NumericError("log-acceptance ratio is not finite")
    accepted = _accept(rng, g)
    if accepted:
        jump = Y - state.x
        sq_jump = float(jump @ jump)
        state.x = Y
        state.sum_H = sum_h_y
        state.sum_U = sum_u_y
        state.log_target = sum_u_y - _interaction(sum_h_y, n)
    else:
        sq_jump = 0.0
    state.step_count += 1
    if state.step_count % CACHE_REFRESH_INTERVAL == 0:
        refresh_caches(model, state)
    return state, ProposalRecord(W=W, Y=Y, G=g, accepted=accepted, sq_jump=sq_jump)


def step(model, state, cfg, rng):
    """Dispatch on cfg.kind."""
    if cfg.kind == "mala":
        return mala_step(model, state, cfg, rng)
    return rwm_step(model, state, cfg, rng)


@lru_cache(maxsize=32)
def _marginal_table(model: ModelSpec, limit: LimitState) -> CdfTable:
    return limit_cdf_table(model, limit)


@lru_cache(maxsize=32)
def _prior_table(model: ModelSpec) -> CdfTable:
    return prior_cdf_table(model)


def init_state(
    model: ModelSpec,
    limit: Optional[LimitState],
    N: int,
    rng: np.random.Generator,
    mode: str = "limit_marginal",
) -> ChainState:
    """Draw an initial configuration with i.i.d. coordinates.

    ``limit_marginal`` draws from the limiting density pi (inverse-CDF on a
    quadrature table); ``prior`` draws from the prior mu.  Neither is the
    exact N-dimensional target, so callers are expected to burn in.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if mode == "limit_marginal":
        if limit is None:
            raise StateError("limit_marginal initialization requires a solved limit")
        table = _marginal_table(model, limit)
    elif mode == "prior":
        table = _prior_table(model)
    else:
        raise ValueError(f"unknown init mode {mode!r}")
    return chain_state_from(model, table.sample(rng, N))


def default_burn_in(N: int) -> int:
    """Conservative default burn-in when the caller has no better estimate."""
    return max(10**5, math.ceil(100 * N ** (1.0 / 3.0)))


@dataclass
class RunSummary:
    """Streaming summary of a measurement run."""

    n_steps: int
    n_accepted: int
    sq_jump_sum: float
    log_target_sum: float
    snapshots: list = field(default_factory=list)
    trace: Optional[np.ndarray] = None
    records: Optional[list] = None

    @property
    def acc_rate(self) -> float:
        return self.n_accepted / self.n_steps if self.n_steps else math.nan

    @property
    def mean_log_target(self) -> float:
        return self.log_target_sum / self.n_steps if self.n_steps else math.nan

    def esjd_per_component(self, N: int) -> float:
        return self.sq_jump_sum / self.n_steps / N if self.n_steps else math.nan


def run_chain(
    model: ModelSpec,
    state: ChainState,
    cfg: KernelConfig,
    rng: np.random.Generator,
    steps: int,
    *,
    snapshot_every: int = 0,
    snapshot_coords: Optional[int] = None,
    trace_every: int = 0,
    keep_records: bool = False,
) -> RunSummary:
    """Advance the chain `steps` transitions, accumulating summaries.

    snapshot_every > 0 stores copies of the state every that many steps
    (first `snapshot_coords` coordinates, or the full vector when None).
    trace_every > 0 stores coordinate 0 at that thinning.
    """
    step_fn = mala_step if cfg.kind == "mala" else rwm_step
    n_acc = 0
    sq_sum = 0.0
    lt_sum = 0.0
    snapshots: list = []
    trace: list = []
    records: list = []
    for j in range(steps):
        state, rec = step_fn(model, state, cfg, rng)
        n_acc += rec.accepted
        sq_sum += rec.sq_jump
        lt_sum += state.log_target
        if snapshot_every and (j + 1) % snapshot_every == 0:
            if snapshot_coords is None:
                snapshots.append(state.x.copy())
            else:
                snapshots.append(state.x[:snapshot_coords].copy())
        if trace_every and (j + 1) % trace_every == 0:
            trace.append(state.x[0])
        if keep_records:
            records.append(rec)
    return RunSummary(
        n_steps=steps,
        n_accepted=n_acc,
        sq_jump_sum=sq_sum,
        log_target_sum=lt_sum,
        snapshots=snapshots,
        trace=np.asarray(trace) if trace else None,
        records=records if keep_records else None,
    )
