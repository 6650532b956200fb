"""Sweep drivers: run (kernel, N, ell, seed) cells, aggregate, persist artifacts.

Every cell derives its RNG stream from its own key (master seed, kernel, N,
the bit pattern of ell, seed), never from its position in the schedule, so
results are independent of worker count and completion order and any single
cell can be reproduced in isolation.
"""

from __future__ import annotations

import csv
import hashlib
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConvergenceError, NumericError
from .limit import LimitState, acceptance_limit, solve_limit
from .model import FAMILIES, ModelSpec
from .sampler import KernelConfig, init_state, run_chain

KIND_CODES = {"mala": 1, "rwm": 2}

CSV_COLUMNS = (
    "kind",
    "N",
    "ell",
    "seed",
    "acc_rate",
    "esjd",
    "speed_estimate",
    "predicted_acc",
    "tau",
    "runtime_ms",
    "error",
)
CSV_HEADER = ",".join(CSV_COLUMNS)

THREADS_ENV_VAR = "MALA_SCALING_THREADS"


class ConfigError(ValueError):
    """A config file or flag value is malformed; the message names the key."""


@dataclass(frozen=True)
class ExperimentPlan:
    """One sweep: the model plus the grid of cells and the run lengths."""

    model: ModelSpec
    kernels: tuple[str, ...] = ("mala",)
    n_grid: tuple[int, ...] = (1024,)
    ell_grid: tuple[float, ...] = (1.0,)
    seeds: tuple[int, ...] = (0,)
    burn_in: int = 1000
    steps: int = 200_000
    master_seed: int = 0
    init_mode: str = "limit_marginal"

    def __post_init__(self):
        for kind in self.kernels:
            if kind not in KIND_CODES:
                raise ValueError(f"unknown kernel kind {kind!r}")
        if self.master_seed < 0:
            raise ValueError("master_seed must be >= 0")
        if any(s < 0 for s in self.seeds):
            raise ValueError("seeds must be >= 0")

    def cells(self) -> list[tuple[str, int, float, int]]:
        return [
            (kind, n, ell, seed)
            for kind in self.kernels
            for n in self.n_grid
            for ell in self.ell_grid
            for seed in self.seeds
        ]


@dataclass(frozen=True)
class ResultRow:
    """One experiment cell.  predicted_acc is populated for MALA only;
    runtime_ms only when runtime recording was requested (it is the one
    column exempt from the byte-reproducibility contract)."""

    kind: str
    N: int
    ell: float
    seed: int
    acc_rate: Optional[float] = None
    esjd: Optional[float] = None
    speed_estimate: Optional[float] = None
    predicted_acc: Optional[float] = None
    tau: Optional[float] = None
    runtime_ms: Optional[float] = None
    error: Optional[str] = None


def default_steps(N: int) -> int:
    """Default per-cell measurement window."""
    return max(200_000, math.ceil(200 * N ** (1.0 / 3.0)))


def _ell_bits(ell: float) -> int:
    return int(np.float64(ell).view(np.uint64))


def cell_seed_sequence(
    master_seed: int, kind: str, N: int, ell: float, seed: int
) -> np.random.SeedSequence:
    """Deterministic stream id derived from the cell's own key."""
    return np.random.SeedSequence(
        [int(master_seed), KIND_CODES[kind], int(N), _ell_bits(ell), int(seed)]
    )


def resolve_workers(workers: Optional[int] = None) -> int:
    """Explicit argument, then the env override, then available parallelism."""
    if workers is not None:
        if workers < 1:
            raise ValueError("workers must be >= 1")
        return workers
    env = os.environ.get(THREADS_ENV_VAR)
    if env:
        try:
            value = int(env)
        except ValueError as exc:
            raise ConfigError(f"{THREADS_ENV_VAR} must be an integer, got {env!r}") from exc
        if value < 1:
            raise ConfigError(f"{THREADS_ENV_VAR} must be >= 1, got {value}")
        return value
    return os.cpu_count() or 1


def _make_config(kind: str, ell: float, N: int) -> KernelConfig:
    return KernelConfig.mala(ell, N) if kind == "mala" else KernelConfig.rwm(ell, N)


def run_cell(
    model: ModelSpec,
    limit: LimitState,
    plan: ExperimentPlan,
    kind: str,
    N: int,
    ell: float,
    seed: int,
    record_runtime: bool = False,
) -> ResultRow:
    """Run one cell; failures are captured in the row, never raised."""
    t0 = time.perf_counter()
    try:
        if plan.steps <= 0:
            return ResultRow(kind, N, ell, seed, error="empty measurement window")
        cfg = _make_config(kind, ell, N)
        rng = np.random.default_rng(
            cell_seed_sequence(plan.master_seed, kind, N, ell, seed)
        )
        state = init_state(model, limit, N, rng, plan.init_mode)
        if plan.burn_in > 0:
            run_chain(model, state, cfg, rng, plan.burn_in)
        summary = run_chain(model, state, cfg, rng, plan.steps)
        esjd = summary.esjd_per_component(N)
        return ResultRow(
            kind=kind,
            N=N,
            ell=ell,
            seed=seed,
            acc_rate=summary.acc_rate,
            esjd=esjd,
            speed_estimate=esjd * float(N) ** cfg.scaling_exponent,
            predicted_acc=acceptance_limit(ell, limit.tau) if kind == "mala" else None,
            tau=limit.tau,
            runtime_ms=(time.perf_counter() - t0) * 1e3 if record_runtime else None,
        )
    except Exception as exc:  # per-cell isolation: record, do not abort the sweep
        return ResultRow(kind, N, ell, seed, error=f"{type(exc).__name__}: {exc}")


def _run_cell_packed(args) -> ResultRow:
    return run_cell(*args)


def _row_sort_key(row: ResultRow):
    return (row.kind, row.N, row.ell, row.seed)


def run_scaling_sweep(
    plan: ExperimentPlan,
    *,
    workers: Optional[int] = None,
    record_runtime: bool = False,
    limit: Optional[LimitState] = None,
) -> list[ResultRow]:
    """Run every cell of the plan; rows come back sorted by (kind, N, ell, seed)."""
    if limit is None:
        limit = solve_limit(plan.model)
    cells = plan.cells()
    nworkers = resolve_workers(workers)
    args = [
        (plan.model, limit, plan, kind, n, ell, seed, record_runtime)
        for (kind, n, ell, seed) in cells
    ]
    if nworkers <= 1 or len(cells) <= 1:
        rows = [_run_cell_packed(a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=min(nworkers, len(cells))) as pool:
            rows = list(pool.map(_run_cell_packed, args))
    rows.sort(key=_row_sort_key)
    return rows


@dataclass(frozen=True)
class OptimalityResult:
    ell_star_emp: float
    acc_at_max: float
    rows: tuple[ResultRow, ...]


def run_optimality_sweep(
    plan: ExperimentPlan,
    *,
    workers: Optional[int] = None,
    limit: Optional[LimitState] = None,
) -> OptimalityResult:
    """Locate the speed-maximizing ell on the plan's grid.

    Returns the grid argmax of the seed-averaged speed estimate and the
    empirical acceptance rate observed there.
    """
    if len(plan.ell_grid) < 7:
        raise ValueError("optimality sweep requires at least 7 ell grid points")
    if len(plan.kernels) != 1:
        raise ValueError("optimality sweep runs one kernel kind at a time")
    rows = run_scaling_sweep(plan, workers=workers, limit=limit)
    ok = [r for r in rows if r.error is None]
    if not ok:
        raise NumericError("every cell of the optimality sweep failed")
    by_ell: dict[float, list[ResultRow]] = {}
    for row in ok:
        by_ell.setdefault(row.ell, []).append(row)
    means = {
        ell: float(np.mean([r.speed_estimate for r in group]))
        for ell, group in by_ell.items()
    }
    ell_star = max(means, key=means.get)
    acc = float(np.mean([r.acc_rate for r in by_ell[ell_star]]))
    return OptimalityResult(ell_star_emp=ell_star, acc_at_max=acc, rows=tuple(rows))


_FIT_STREAM_TAG = 3  # domain tag separating fit streams from sweep cells
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _esjd_at_sigma_sq(
    model: ModelSpec,
    limit: LimitState,
    kind: str,
    N: int,
    sigma_sq: float,
    steps: int,
    burn_in: int,
    master_seed: int,
) -> float:
    exponent = 1.0 / 3.0 if kind == "mala" else 1.0
    ell = math.sqrt(sigma_sq * float(N) ** exponent)
    cfg = _make_config(kind, ell, N)
    # common random numbers: the stream depends on (seed, kind, N) only, so
    # esjd varies smoothly in sigma_sq and the unimodal search is stable
    rng = np.random.default_rng(
        np.random.SeedSequence([master_seed, KIND_CODES[kind], int(N), _FIT_STREAM_TAG])
    )
    state = init_state(model, limit, N, rng)
    if burn_in > 0:
        run_chain(model, state, cfg, rng, burn_in)
    summary = run_chain(model, state, cfg, rng, steps)
    return summary.esjd_per_component(N)


def _golden_max(f, lo: float, hi: float, iters: int) -> float:
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _optimal_sigma_sq_one(args) -> tuple[int, float]:
    model, limit, kind, N, steps, burn_in, master_seed, iters, bracket = args

    def objective(t: float) -> float:
        return _esjd_at_sigma_sq(
            model, limit, kind, N, math.exp(t), steps, burn_in, master_seed
        )

    t_opt = _golden_max(objective, math.log(bracket[0]), math.log(bracket[1]), iters)
    return N, math.exp(t_opt)


def optimal_sigma_sq_by_n(
    kind: str,
    model: ModelSpec,
    n_grid: Sequence[int],
    steps: int,
    master_seed: int,
    *,
    burn_in: int = 2000,
    iters: int = 12,
    bracket: tuple[float, float] = (1e-6, 10.0),
    workers: Optional[int] = None,
    limit: Optional[LimitState] = None,
) -> list[tuple[int, float]]:
    """ESJD-maximizing proposal variance per N, by golden-section in log sigma^2."""
    if kind not in KIND_CODES:
        raise ValueError(f"unknown kernel kind {kind!r}")
    if limit is None:
        limit = solve_limit(model)
    ns = sorted(set(int(n) for n in n_grid))
    args = [
        (model, limit, kind, n, steps, burn_in, master_seed, iters, bracket)
        for n in ns
    ]
    nworkers = resolve_workers(workers)
    if nworkers <= 1 or len(ns) <= 1:
        table = [_optimal_sigma_sq_one(a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=min(nworkers, len(ns))) as pool:
            table = list(pool.map(_optimal_sigma_sq_one, args))
    table.sort()
    return table


def fit_variance_exponent(
    kind: str,
    model: ModelSpec,
    n_grid: Sequence[int],
    steps: int,
    master_seed: int,
    *,
    burn_in: int = 2000,
    iters: int = 12,
    bracket: tuple[float, float] = (1e-6, 10.0),
    workers: Optional[int] = None,
    limit: Optional[LimitState] = None,
) -> float:
    """Exponent beta in sigma^2_opt ~ N^(-beta), by least squares in log-log.

    Requires at least 4 distinct N spanning a factor of 16 so the fit has
    leverage against Monte Carlo noise.
    """
    ns = sorted(set(int(n) for n in n_grid))
    if len(ns) < 4:
        raise ValueError("fit_variance_exponent requires >= 4 distinct N values")
    if max(ns) < 16 * min(ns):
        raise ValueError("fit_variance_exponent requires an N span of at least 16x")
    table = optimal_sigma_sq_by_n(
        kind,
        model,
        ns,
        steps,
        master_seed,
        burn_in=burn_in,
        iters=iters,
        bracket=bracket,
        workers=workers,
        limit=limit,
    )
    log_n = np.log([n for n, _ in table])
    log_s = np.log([s for _, s in table])
    if np.ptp(log_n) == 0.0:
        raise ValueError("degenerate fit: no variation in log N")
    slope = np.polyfit(log_n, log_s, 1)[0]
    return float(-slope)


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(rows: Sequence[ResultRow], path) -> None:
    """Write rows under the fixed header; floats use round-trip repr."""
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for row in rows:
                writer.writerow(
                    [_format_value(getattr(row, col)) for col in CSV_COLUMNS]
                )
    except OSError as exc:
        raise OSError(f"failed to write CSV at {path}: {exc}") from exc


def _parse_optional(text: str, caster):
    return None if text == "" else caster(text)


def read_csv(path) -> list[ResultRow]:
    """Parse a CSV produced by write_csv back into rows."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != list(CSV_COLUMNS):
                raise ValueError(f"unexpected CSV header in {path}: {header}")
            rows = []
            for rec in reader:
                vals = dict(zip(CSV_COLUMNS, rec))
                rows.append(
                    ResultRow(
                        kind=vals["kind"],
                        N=int(vals["N"]),
                        ell=float(vals["ell"]),
                        seed=int(vals["seed"]),
                        acc_rate=_parse_optional(vals["acc_rate"], float),
                        esjd=_parse_optional(vals["esjd"], float),
                        speed_estimate=_parse_optional(vals["speed_estimate"], float),
                        predicted_acc=_parse_optional(vals["predicted_acc"], float),
                        tau=_parse_optional(vals["tau"], float),
                        runtime_ms=_parse_optional(vals["runtime_ms"], float),
                        error=vals["error"] or None,
                    )
                )
            return rows
    except OSError as exc:
        raise OSError(f"failed to read CSV at {path}: {exc}") from exc


def write_report(
    rows: Sequence[ResultRow],
    path,
    sigma_opt_tables: Optional[dict[str, Sequence[tuple[int, float]]]] = None,
) -> None:
    """Plain-text summary plus gnuplot-ready data blocks.

    Blocks are separated by two blank lines so gnuplot can address them with
    `index`; columns are whitespace-separated.
    """
    ok = [r for r in rows if r.error is None]
    failed = [r for r in rows if r.error is not None]
    lines: list[str] = []
    lines.append("# mala-scaling sweep report")
    lines.append(f"# cells: {len(rows)}   failed: {len(failed)}")
    groups: dict[tuple[str, int], list[ResultRow]] = {}
    for row in ok:
        groups.setdefault((row.kind, row.N), []).append(row)
    for (kind, n), grp in sorted(groups.items()):
        accs = [r.acc_rate for r in grp]
        spds = [r.speed_estimate for r in grp]
        lines.append(
            f"# {kind} N={n}: cells={len(grp)} "
            f"mean_acc={np.mean(accs):.4f} mean_speed={np.mean(spds):.6g}"
        )
    for row in failed:
        lines.append(
            f"# FAILED kind={row.kind} N={row.N} ell={row.ell} seed={row.seed}: {row.error}"
        )
    for (kind, n), grp in sorted(groups.items()):
        by_ell: dict[float, list[ResultRow]] = {}
        for row in grp:
            by_ell.setdefault(row.ell, []).append(row)
        lines.append("")
        lines.append("")
        lines.append(f"# block: speed_vs_ell kind={kind} N={n}")
        lines.append("# ell  mean_speed")
        for ell in sorted(by_ell):
            lines.append(
                f"{ell!r}  {np.mean([r.speed_estimate for r in by_ell[ell]])!r}"
            )
        lines.append("")
        lines.append("")
        lines.append(f"# block: acc_vs_ell kind={kind} N={n}")
        lines.append("# ell  mean_acc  mean_predicted_acc")
        for ell in sorted(by_ell):
            preds = [r.predicted_acc for r in by_ell[ell] if r.predicted_acc is not None]
            pred = repr(float(np.mean(preds))) if preds else "nan"
            lines.append(
                f"{ell!r}  {np.mean([r.acc_rate for r in by_ell[ell]])!r}  {pred}"
            )
    if sigma_opt_tables:
        for kind, table in sorted(sigma_opt_tables.items()):
            lines.append("")
            lines.append("")
            lines.append(f"# block: sigma_sq_opt_vs_N kind={kind}")
            lines.append("# N  sigma_sq_opt")
            for n, s in table:
                lines.append(f"{n}  {s!r}")
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"failed to write report at {path}: {exc}") from exc


# --- flat "section.key = value" config files ---------------------------------

CONFIG_DEFAULTS: dict[str, str] = {
    "model.family": "strict_hp",
    "model.y": "0.5",
    "model.beta": "1.0",
    "model.a": "1.0",
    "plan.kernels": "mala",
    "plan.n_grid": "1024",
    "plan.ell_grid": "",  # empty: auto grid around the solved ell_hat
    "plan.seeds": "0",
    "plan.burn_in": "1000",
    "plan.steps": "200000",
    "plan.master_seed": "0",
    "plan.init_mode": "limit_marginal",
    "run.out": "runs",
    "run.threads": "",  # empty: MALA_SCALING_THREADS env, then cpu count
}

CONFIG_HELP: dict[str, str] = {
    "model.family": f"model preset, one of {', '.join(FAMILIES)}",
    "model.y": "observed response",
    "model.beta": "interaction amplitude",
    "model.a": "prior tail weight (strict_hp only)",
    "plan.kernels": "comma list of kernels: mala, rwm",
    "plan.n_grid": "comma list of dimensions N",
    "plan.ell_grid": "comma list of ell values (empty: auto around ell_hat)",
    "plan.seeds": "comma list of replicate seeds",
    "plan.burn_in": "burn-in steps per cell",
    "plan.steps": "measurement steps per cell",
    "plan.master_seed": "root seed for all cell streams",
    "plan.init_mode": "initial distribution: limit_marginal or prior",
    "run.out": "base directory for run artifacts",
    "run.threads": "worker count (overrides the env variable)",
}


def parse_config_text(text: str) -> dict[str, str]:
    """Parse the flat key = value format; '#' starts a comment."""
    out: dict[str, str] = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected 'section.key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key not in CONFIG_DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = value.strip()
    return out


def load_config(path) -> dict[str, str]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc


def effective_config(
    file_cfg: Optional[dict[str, str]] = None,
    overrides: Optional[dict[str, str]] = None,
) -> dict[str, str]:
    """defaults <- config file <- flag overrides."""
    cfg = dict(CONFIG_DEFAULTS)
    for source in (file_cfg or {}), (overrides or {}):
        for key, value in source.items():
            if key not in CONFIG_DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            cfg[key] = value
    return cfg


def format_config(cfg: dict[str, str]) -> str:
    return "\n".join(f"{k} = {cfg[k]}" for k in sorted(cfg)) + "\n"


def plan_hash(cfg: dict[str, str]) -> str:
    return hashlib.sha256(format_config(cfg).encode()).hexdigest()[:12]


def _cast(cfg: dict[str, str], key: str, caster, what: str):
    try:
        return caster(cfg[key])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"config key {key!r}: expected {what}, got {cfg[key]!r}") from exc


def _cast_list(cfg: dict[str, str], key: str, caster, what: str) -> tuple:
    raw = cfg[key].strip()
    if not raw:
        return ()
    try:
        return tuple(caster(part.strip()) for part in raw.split(","))
    except (ValueError, TypeError) as exc:
        raise ConfigError(
            f"config key {key!r}: expected comma list of {what}, got {cfg[key]!r}"
        ) from exc


def model_from_config(cfg: dict[str, str]) -> ModelSpec:
    family = cfg["model.family"]
    if family not in FAMILIES:
        raise ConfigError(
            f"config key 'model.family': expected one of {FAMILIES}, got {family!r}"
        )
    return ModelSpec(
        y=_cast(cfg, "model.y", float, "a real"),
        family=family,
        beta=_cast(cfg, "model.beta", float, "a real"),
        a=_cast(cfg, "model.a", float, "a real"),
    )


def plan_from_config(cfg: dict[str, str]) -> ExperimentPlan:
    model = model_from_config(cfg)
    kernels = _cast_list(cfg, "plan.kernels", str, "kernel kinds")
    for kind in kernels:
        if kind not in KIND_CODES:
            raise ConfigError(f"config key 'plan.kernels': unknown kernel {kind!r}")
    init_mode = cfg["plan.init_mode"]
    if init_mode not in ("limit_marginal", "prior"):
        raise ConfigError(
            f"config key 'plan.init_mode': expected limit_marginal or prior, got {init_mode!r}"
        )
    return ExperimentPlan(
        model=model,
        kernels=kernels or ("mala",),
        n_grid=_cast_list(cfg, "plan.n_grid", int, "integers"),
        ell_grid=_cast_list(cfg, "plan.ell_grid", float, "reals"),
        seeds=_cast_list(cfg, "plan.seeds", int, "integers") or (0,),
        burn_in=_cast(cfg, "plan.burn_in", int, "an integer"),
        steps=_cast(cfg, "plan.steps", int, "an integer"),
        master_seed=_cast(cfg, "plan.master_seed", int, "an integer"),
        init_mode=init_mode,
    )
