"""Experiment driver: multi-seed trials, aggregation, fits, CSV artifacts.

The runner owns the mapping from method specs to per-trial work, the
thread pool, and the deterministic reduction that keeps output bytes
independent of scheduling. Trial t of every method draws from the stream
(base_seed, t), so methods see common random numbers and comparisons at
equal trial counts are sharper than independent runs would be.

Recording convention: checkpoint k stores the iterate before step k
(k = 1 is the initial point) and the direction computed by step k. The
compiled and pure kernels follow the same convention; equality between
the three execution paths is bitwise and is enforced by tests.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .core import (
    ConfigError,
    DataError,
    RngStream,
    Trace,
    UsageError,
    format_sig12,
    log_checkpoints,
    record,
    write_trace_csv,
)
from .diagnostics import (
    KappaEstimate,
    RateFit,
    TrialAggregate,
    aggregate,
    direction_variance,
    estimate_kappa,
    fit_direction_variance,
    fit_rate,
)
from .optimizers import METHOD_IDS, STEP_FUNCTIONS, init_state
from .schedules import DecaySchedule, FixedStepsize, default_mg1

THREADS_ENV = "POLYGRAD_THREADS"
TUNING_STREAM_BASE = 1_000_000

DECAY_METHODS = ("accel", "sg", "gradavg", "iteravg")

SUMMARY_HEADER = "method,p,s,sigma,n_trials,rate_slope,rate_r2,kappa_hat,varm_slope"


@dataclass(frozen=True)
class MethodSpec:
    """One method entry of a run: id plus hyperparameters.

    alpha is the fixed stepsize for sgm/svrg; for sgm it may be left
    unset, in which case the runner grid-searches one per problem.
    """

    method: str
    p: float | None = None
    beta: float | None = None
    alpha: float | None = None
    svrg_m: int | None = None

    def __post_init__(self) -> None:
        if self.method not in METHOD_IDS:
            raise ConfigError(
                f"unknown method {self.method!r}; know {', '.join(METHOD_IDS)}"
            )

    def params(self) -> dict:
        out = {}
        for name in ("p", "beta", "alpha", "svrg_m"):
            v = getattr(self, name)
            if v is not None:
                out[name] = v
        return out


@dataclass(frozen=True)
class RunSettings:
    """Trial counts, horizon, seeding, and fit windows for one run.

    Fit windows default to [100, max_k]: early checkpoints carry
    transients that contaminate slope estimates, so they are excluded
    unless a window says otherwise.
    """

    n_trials: int
    max_k: int
    base_seed: int = 0
    snapshots: bool = True
    checkpoints_per_decade: int = 20
    rate_window: tuple[float, float] | None = None
    varm_window: tuple[float, float] | None = None
    kappa_window: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if self.n_trials < 1 or self.max_k < 1:
            raise ConfigError("n_trials and max_k must both be >= 1")
        if self.checkpoints_per_decade < 1:
            raise ConfigError("checkpoints_per_decade must be >= 1")

    def window(self, name: str) -> tuple[float, float]:
        w = getattr(self, name)
        if w is None:
            return (min(100.0, float(self.max_k)), float(self.max_k))
        lo, hi = float(w[0]), float(w[1])
        if not lo < hi:
            raise ConfigError(f"{name} must satisfy lo < hi, got ({lo}, {hi})")
        return (lo, hi)


@dataclass
class MethodResult:
    """Everything measured for one method of a run."""

    spec: MethodSpec
    resolved_params: dict
    schedule_ident: str
    traces: list[Trace]
    directions: np.ndarray | None
    agg: TrialAggregate
    varm: np.ndarray | None
    rate_fit: RateFit | None
    varm_fit: RateFit | None
    kappa: KappaEstimate | None

    @property
    def rate_slope(self) -> float:
        return self.rate_fit.slope if self.rate_fit else float("nan")

    @property
    def rate_r2(self) -> float:
        return self.rate_fit.r_squared if self.rate_fit else float("nan")

    @property
    def varm_slope(self) -> float:
        return self.varm_fit.slope if self.varm_fit else float("nan")

    @property
    def kappa_hat(self) -> float:
        return self.kappa.kappa_hat if self.kappa else float("nan")


@dataclass
class ExperimentResult:
    problem: object
    stepsizes: object
    settings: RunSettings
    checkpoints: np.ndarray
    methods: dict[str, MethodResult]
    report_lines: list[str]
    backend_used: str

    def method(self, method_id: str) -> MethodResult:
        return self.methods[method_id]


def resolve_threads(requested: int) -> int:
    """Request clipped by the POLYGRAD_THREADS cap, floor 1."""
    if requested < 1:
        raise UsageError(f"threads must be >= 1, got {requested}")
    n = requested
    cap = os.environ.get(THREADS_ENV)
    if cap is not None and cap != "":
        try:
            cap_n = int(cap)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {cap!r}")
        n = min(n, max(1, cap_n))
    return max(1, n)


def _stepsizes_for(spec: MethodSpec, stepsizes, resolved: dict):
    if spec.method in DECAY_METHODS:
        return stepsizes
    return FixedStepsize(float(resolved["alpha"]))


def _single_trial(
    problem,
    x0: np.ndarray,
    spec: MethodSpec,
    resolved: dict,
    stepsizes_m,
    max_k: int,
    cps: np.ndarray,
    snapshots: bool,
    base_seed: int,
    stream_id: int,
    seed_label: int,
) -> tuple[Trace, np.ndarray]:
    rng = RngStream(base_seed, stream_id).generator()
    trace = Trace(
        method_id=spec.method,
        schedule_id=stepsizes_m.ident(),
        seed=seed_label,
        snapshots=snapshots,
    )
    if _kernels.fast_path_eligible(problem, spec.method, stepsizes_m):
        X, M = _kernels.run_quadratic_trial(
            problem, x0, spec.method, resolved, stepsizes_m, max_k, cps, rng
        )
        for j, k in enumerate(cps):
            record(trace, int(k), problem, X[j])
        return trace, M

    state = init_state(spec.method, x0, resolved)
    step = STEP_FUNCTIONS[spec.method]
    M = np.empty((len(cps), problem.dim), dtype=np.float64)
    ci = 0
    n_cps = len(cps)
    for k in range(1, max_k + 1):
        at_cp = ci < n_cps and int(cps[ci]) == k
        if at_cp:
            record(trace, k, problem, state.record_point())
        step(state, problem, stepsizes_m, rng)
        if at_cp:
            M[ci] = state.m
            ci += 1
    return trace, M


def sgm_tune(
    problem,
    x0: np.ndarray,
    beta: float,
    settings: RunSettings,
    alphas=None,
    n_seeds: int = 4,
    horizon: int | None = None,
) -> tuple[float, list[tuple[float, float]]]:
    """Deterministic grid search for the fixed sgm stepsize.

    Runs n_seeds short trials per candidate on dedicated streams
    (TUNING_STREAM_BASE + seed, never shared with measurement trials)
    and picks the alpha with the smallest mean final gap, ties going to
    the smaller alpha. Returns (alpha, [(alpha, mean_gap), ...]).
    """
    constants = problem.constants
    if alphas is None:
        a_max = 1.0 / (constants.L * default_mg1(constants))
        alphas = [a_max * 0.5**j for j in range(6)]
    if len(alphas) < 1 or any(a <= 0.0 for a in alphas):
        raise UsageError("alphas must be a nonempty positive grid")
    H = int(horizon) if horizon is not None else min(settings.max_k, 20_000)
    H = max(H, 2)
    cps = np.array([H], dtype=np.int64)
    scored = []
    for a in alphas:
        spec = MethodSpec(method="sgm", beta=beta, alpha=float(a))
        resolved = spec.params()
        stepsizes_m = FixedStepsize(float(a))
        gaps = []
        for t in range(n_seeds):
            trace, _ = _single_trial(
                problem,
                x0,
                spec,
                resolved,
                stepsizes_m,
                H,
                cps,
                False,
                settings.base_seed,
                TUNING_STREAM_BASE + t,
                t,
            )
            gaps.append(trace.f_gaps()[-1])
        scored.append((float(a), float(np.mean(gaps))))
    best = min(scored, key=lambda pair: (pair[1], pair[0]))
    return best[0], scored


def _fits_for_method(
    agg: TrialAggregate,
    cps: np.ndarray,
    varm: np.ndarray | None,
    settings: RunSettings,
):
    rate_fit = None
    try:
        rate_fit = fit_rate(agg, *settings.window("rate_window"))
    except (UsageError, DataError):
        pass
    varm_fit = None
    if varm is not None:
        try:
            varm_fit = fit_direction_variance(cps, varm, *settings.window("varm_window"))
        except (UsageError, DataError):
            pass
    kappa = None
    try:
        kappa = estimate_kappa(agg, *settings.window("kappa_window"))
    except (UsageError, DataError):
        pass
    return rate_fit, varm_fit, kappa


def run_experiment(
    problem,
    x0: np.ndarray,
    stepsizes,
    methods: list[MethodSpec],
    settings: RunSettings,
    out_dir=None,
    threads: int = 1,
    checkpoints=None,
) -> ExperimentResult:
    """Run every method for n_trials seeds, aggregate, fit, and (when
    out_dir is given) write the artifact directory.

    Methods driven by the decaying schedule require a valid
    DecaySchedule; sgm and svrg run on their own fixed stepsizes and an
    unset sgm alpha is grid-searched up front. Results are identical for
    any thread count.
    """
    ids = [m.method for m in methods]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate method entries in {ids}")
    if len(ids) == 0:
        raise ConfigError("no methods requested")

    if any(m.method in DECAY_METHODS for m in methods):
        if not isinstance(stepsizes, DecaySchedule):
            raise ConfigError(
                "accel/sg/gradavg/iteravg require the decaying schedule"
            )
        if not stepsizes.valid:
            raise ConfigError(
                "schedule fails its validity constraints; refusing to run:\n"
                + stepsizes.constraint_report.describe(
                    stepsizes.s, stepsizes.sigma
                )
            )

    if checkpoints is None:
        cps = log_checkpoints(settings.max_k, settings.checkpoints_per_decade)
    else:
        cps = np.asarray(checkpoints, dtype=np.int64)
        if cps.ndim != 1 or cps.size == 0 or np.any(np.diff(cps) <= 0):
            raise UsageError("checkpoints must be strictly increasing and nonempty")
        if cps[0] < 1 or cps[-1] > settings.max_k:
            raise UsageError("checkpoints must lie within [1, max_k]")

    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape != (problem.dim,):
        raise UsageError(f"x0 has shape {x0.shape}, problem dim is {problem.dim}")

    # Resolve hyperparameters (including the sgm grid search) before any
    # trial runs, so the parallel phase is pure computation.
    resolved_params: dict[str, dict] = {}
    tuning_notes: list[str] = []
    for spec in methods:
        resolved = spec.params()
        if spec.method == "accel":
            resolved.setdefault("p", 20.0)
        if spec.method == "sgm":
            resolved.setdefault("beta", 0.9)
        if spec.method == "sgm" and spec.alpha is None:
            beta = float(resolved["beta"])
            alpha, scored = sgm_tune(problem, x0, beta, settings)
            resolved["alpha"] = alpha
            grid_txt = ", ".join(f"{a:.6g}:{g:.3e}" for a, g in scored)
            tuning_notes.append(
                f"sgm alpha grid search (mean final gap): {grid_txt} -> alpha={alpha:.6g}"
            )
        if spec.method == "svrg":
            if resolved.get("alpha") is None or resolved.get("svrg_m") is None:
                raise ConfigError("svrg requires alpha and svrg_m")
            if problem.n_components is None:
                raise ConfigError("svrg requires a finite-sum problem")
        resolved_params[spec.method] = resolved

    n_threads = resolve_threads(threads)
    tasks = [(spec, t) for spec in methods for t in range(settings.n_trials)]

    def work(spec: MethodSpec, t: int):
        resolved = resolved_params[spec.method]
        stepsizes_m = _stepsizes_for(spec, stepsizes, resolved)
        return _single_trial(
            problem,
            x0,
            spec,
            resolved,
            stepsizes_m,
            settings.max_k,
            cps,
            settings.snapshots,
            settings.base_seed,
            t,
            t,
        )

    results: dict[tuple[str, int], tuple[Trace, np.ndarray]] = {}
    if n_threads == 1:
        for spec, t in tasks:
            results[(spec.method, t)] = work(spec, t)
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            futures = {
                (spec.method, t): pool.submit(work, spec, t) for spec, t in tasks
            }
            for key, fut in futures.items():
                results[key] = fut.result()

    # Deterministic reduction: ascending trial order per method, method
    # order as configured.
    method_results: dict[str, MethodResult] = {}
    for spec in methods:
        traces = [results[(spec.method, t)][0] for t in range(settings.n_trials)]
        dirs = np.stack(
            [results[(spec.method, t)][1] for t in range(settings.n_trials)]
        )
        agg = aggregate(traces, cps)
        varm = direction_variance(dirs) if settings.n_trials >= 2 else None
        rate_fit, varm_fit, kappa = _fits_for_method(agg, cps, varm, settings)
        agg.varm = varm
        method_results[spec.method] = MethodResult(
            spec=spec,
            resolved_params=resolved_params[spec.method],
            schedule_ident=_stepsizes_for(
                spec, stepsizes, resolved_params[spec.method]
            ).ident(),
            traces=traces,
            directions=dirs,
            agg=agg,
            varm=varm,
            rate_fit=rate_fit,
            varm_fit=varm_fit,
            kappa=kappa,
        )

    report_lines = _build_report(
        problem, stepsizes, settings, methods, method_results, tuning_notes
    )

    result = ExperimentResult(
        problem=problem,
        stepsizes=stepsizes,
        settings=settings,
        checkpoints=cps,
        methods=method_results,
        report_lines=report_lines,
        backend_used=_kernels.backend(),
    )
    if out_dir is not None:
        write_artifacts(result, out_dir)
    return result


def _build_report(
    problem, stepsizes, settings, methods, method_results, tuning_notes
) -> list[str]:
    lines = [
        f"problem: {type(problem).__name__} dim={problem.dim}",
        f"schedule: {stepsizes.ident()}",
        f"n_trials={settings.n_trials} max_k={settings.max_k} "
        f"base_seed={settings.base_seed} backend={_kernels.backend()}",
    ]
    lines.extend(tuning_notes)
    for spec in methods:
        mr = method_results[spec.method]
        lines.append(
            f"{spec.method}: rate_slope={mr.rate_slope:.4f} r2={mr.rate_r2:.4f} "
            f"varm_slope={mr.varm_slope:.4f} kappa_hat={mr.kappa_hat:.4f}"
        )

    if "accel" in method_results and "sg" in method_results:
        lines.extend(
            _regime_lines(method_results["accel"], method_results["sg"])
        )
    return lines


def _regime_lines(accel: MethodResult, sg: MethodResult) -> list[str]:
    """State which comparison regime the kappa diagnostic selects, and
    whether the selected requirement held on this run."""
    kh = accel.kappa_hat
    out = []
    if kh == kh and kh >= 0.1:
        out.append(
            f"regime: variance dominance observed (kappa_hat={kh:.4f} >= 0.1); "
            f"headline comparison applies: accel rate_slope <= -1.5 expected"
        )
        ok = accel.rate_slope <= -1.5 and accel.rate_r2 >= 0.95
        out.append(
            f"observed: accel {accel.rate_slope:.4f} (r2={accel.rate_r2:.4f}), "
            f"sg {sg.rate_slope:.4f} -> requirement {'met' if ok else 'NOT met'}"
        )
    elif kh == kh:
        out.append(
            f"regime: variance dominance NOT observed (kappa_hat={kh:.4f} < 0.1); "
            f"comparison downgraded to: accel rate_slope <= sg rate_slope - 0.3"
        )
        ok = accel.rate_slope <= sg.rate_slope - 0.3
        out.append(
            f"observed: accel {accel.rate_slope:.4f}, sg {sg.rate_slope:.4f}, "
            f"separation {sg.rate_slope - accel.rate_slope:.4f} "
            f"-> requirement {'met' if ok else 'NOT met'}"
        )
    else:
        out.append(
            "regime: kappa diagnostic unavailable (snapshots off or too few "
            "trials); no comparison issued"
        )
    return out


def summary_rows(result: ExperimentResult) -> list[str]:
    """Rows for summary.csv in configured method order. Fields that do
    not apply to a method (p for non-accel, s/sigma for fixed-step
    methods) are left empty."""
    rows = []
    for mid, mr in result.methods.items():
        spec = mr.spec
        if spec.method in DECAY_METHODS:
            s_txt = format_sig12(result.stepsizes.s)
            sig_txt = format_sig12(result.stepsizes.sigma)
        else:
            s_txt = ""
            sig_txt = ""
        p_txt = (
            format_sig12(mr.resolved_params["p"])
            if spec.method == "accel"
            else ""
        )
        rows.append(
            ",".join(
                [
                    mid,
                    p_txt,
                    s_txt,
                    sig_txt,
                    str(result.settings.n_trials),
                    format_sig12(mr.rate_slope),
                    format_sig12(mr.rate_r2),
                    format_sig12(mr.kappa_hat),
                    format_sig12(mr.varm_slope),
                ]
            )
        )
    return rows


def write_artifacts(result: ExperimentResult, out_dir) -> None:
    """Write traces/, per-method aggregate and kappa CSVs, summary.csv,
    and report.txt under out_dir. All numbers go through the pinned
    12-significant-digit format; every file uses LF endings."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    for mid, mr in result.methods.items():
        tdir = out / "traces" / mid
        tdir.mkdir(parents=True, exist_ok=True)
        for t, trace in enumerate(mr.traces):
            write_trace_csv(trace, tdir / f"trial_{t:04d}.csv")

        agg = mr.agg
        lines = ["k,mean_gap,var_gap,mean_grad_norm_sq,varm"]
        for j, k in enumerate(agg.ks):
            varm_txt = (
                format_sig12(mr.varm[j]) if mr.varm is not None else ""
            )
            lines.append(
                f"{int(k)},{format_sig12(agg.mean_gap[j])},"
                f"{format_sig12(agg.var_gap[j])},"
                f"{format_sig12(agg.mean_grad_norm_sq[j])},{varm_txt}"
            )
        _write_lines(out / f"aggregate_{mid}.csv", lines)

        if agg.kappa_num is not None and agg.kappa_den is not None:
            lines = ["j,mean_diff_sq,var_diff,ratio"]
            for j, k in enumerate(agg.ks[:-1]):
                num = agg.kappa_num[j]
                den = agg.kappa_den[j]
                ratio = num / den if den > 0.0 else float("nan")
                lines.append(
                    f"{int(k)},{format_sig12(num)},{format_sig12(den)},"
                    f"{format_sig12(ratio)}"
                )
            _write_lines(out / f"kappa_{mid}.csv", lines)

    _write_lines(out / "summary.csv", [SUMMARY_HEADER] + summary_rows(result))
    _write_lines(out / "report.txt", result.report_lines)


def _write_lines(path, lines) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
