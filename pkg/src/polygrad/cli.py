"""Command-line entry points: run, validate, asymptotics, plotdata.

Exit codes: 0 success, 1 a numeric check failed (asymptotics), 2 invalid
configuration or usage, 3 I/O failure.

Config files are TOML with four blocks: [problem], [schedule],
[[methods]] (one table per method), and [run]. The manifest written next
to the run artifacts embeds the fully resolved configuration, so a run
can be reproduced from its output directory alone.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import platform
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .asymptotics import (
    AbkParams,
    a_k_grid,
    a_k_leading,
    b_k_grid,
    b_k_leading,
    check_leading_order,
    tricomi_error_sweep,
)
from .core import (
    ConfigError,
    DataError,
    UsageError,
    config_sha256,
    format_sig12,
    log_checkpoints,
)
from .objectives import (
    DATA_STREAM_ID,
    initial_point,
    make_least_squares,
    make_logistic,
    make_quadratic,
)
from .runner import (
    TUNING_STREAM_BASE,
    MethodSpec,
    RunSettings,
    run_experiment,
)
from .schedules import DecaySchedule, default_mg1

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_IO = 3

_PROBLEM_KEYS = {
    "quadratic": {"kind", "dim", "l", "L", "sigma", "data_seed", "x0_radius"},
    "least_squares": {"kind", "n", "dim", "ridge", "batch", "data_seed", "x0_radius"},
    "logistic": {"kind", "n", "dim", "ridge", "data_seed", "x0_radius"},
}
_SCHEDULE_KEYS = {"s", "sigma", "mg1"}
_METHOD_KEYS = {"method", "p", "beta", "alpha", "svrg_m"}
_RUN_KEYS = {
    "n_trials",
    "max_k",
    "base_seed",
    "snapshots",
    "checkpoints_per_decade",
    "rate_window",
    "varm_window",
    "kappa_window",
}


def load_config(path) -> dict:
    p = Path(path)
    with open(p, "rb") as fh:
        try:
            return tomllib.load(fh)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"cannot parse {p}: {e}")


def _require_keys(block: dict, allowed: set, where: str) -> None:
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def _window(value, where: str):
    if value is None:
        return None
    if not (isinstance(value, (list, tuple)) and len(value) == 2):
        raise ConfigError(f"{where} must be a two-element [lo, hi] list")
    return (float(value[0]), float(value[1]))


def resolve_config(raw: dict) -> dict:
    """Validate the parsed tree and fill defaults. Returns a plain dict
    whose canonical JSON is what the manifest hash covers."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a table")
    unknown = set(raw) - {"problem", "schedule", "methods", "run"}
    if unknown:
        raise ConfigError(f"unknown top-level sections: {sorted(unknown)}")
    for section in ("problem", "schedule", "methods", "run"):
        if section not in raw:
            raise ConfigError(f"config is missing the [{section}] section")

    prob = dict(raw["problem"])
    kind = prob.get("kind")
    if kind not in _PROBLEM_KEYS:
        raise ConfigError(
            f"problem.kind must be one of {sorted(_PROBLEM_KEYS)}, got {kind!r}"
        )
    _require_keys(prob, _PROBLEM_KEYS[kind], "[problem]")
    prob.setdefault("data_seed", 11)
    prob.setdefault("x0_radius", 1.0)
    if kind == "quadratic":
        prob.setdefault("dim", 20)
        prob.setdefault("l", 0.5)
        prob.setdefault("L", 1.0)
        prob.setdefault("sigma", 0.1)
    else:
        prob.setdefault("n", 200)
        prob.setdefault("dim", 20)
        prob.setdefault("ridge", 0.5)
        if kind == "least_squares":
            prob.setdefault("batch", 1)

    sched = dict(raw["schedule"])
    _require_keys(sched, _SCHEDULE_KEYS, "[schedule]")
    if "s" not in sched:
        raise ConfigError("[schedule] must set s")
    sched["s"] = float(sched["s"])
    if "sigma" in sched:
        sched["sigma"] = float(sched["sigma"])
    if "mg1" in sched:
        sched["mg1"] = float(sched["mg1"])

    methods_raw = raw["methods"]
    if not isinstance(methods_raw, list) or len(methods_raw) == 0:
        raise ConfigError("[[methods]] must list at least one method")
    methods = []
    for i, entry in enumerate(methods_raw):
        entry = dict(entry)
        _require_keys(entry, _METHOD_KEYS, f"[[methods]] entry {i}")
        if "method" not in entry:
            raise ConfigError(f"[[methods]] entry {i} is missing 'method'")
        methods.append(entry)

    run = dict(raw["run"])
    _require_keys(run, _RUN_KEYS, "[run]")
    for key in ("n_trials", "max_k"):
        if key not in run:
            raise ConfigError(f"[run] must set {key}")
    run["n_trials"] = int(run["n_trials"])
    run["max_k"] = int(run["max_k"])
    run.setdefault("base_seed", 0)
    run["base_seed"] = int(run["base_seed"])
    run.setdefault("snapshots", True)
    run.setdefault("checkpoints_per_decade", 20)
    run["checkpoints_per_decade"] = int(run["checkpoints_per_decade"])
    for key in ("rate_window", "varm_window", "kappa_window"):
        if key in run:
            run[key] = list(run[key])

    return {"problem": prob, "schedule": sched, "methods": methods, "run": run}


def build_problem(resolved: dict):
    prob = resolved["problem"]
    kind = prob["kind"]
    if kind == "quadratic":
        problem = make_quadratic(
            dim=int(prob["dim"]),
            l=float(prob["l"]),
            L=float(prob["L"]),
            data_seed=int(prob["data_seed"]),
            sigma=float(prob["sigma"]),
        )
    elif kind == "least_squares":
        problem = make_least_squares(
            n=int(prob["n"]),
            dim=int(prob["dim"]),
            ridge=float(prob["ridge"]),
            data_seed=int(prob["data_seed"]),
            batch=int(prob["batch"]),
        )
    else:
        problem = make_logistic(
            n=int(prob["n"]),
            dim=int(prob["dim"]),
            ridge=float(prob["ridge"]),
            data_seed=int(prob["data_seed"]),
        )
    x0 = initial_point(problem, int(prob["data_seed"]), radius=float(prob["x0_radius"]))
    return problem, x0


def build_schedule(resolved: dict, constants) -> DecaySchedule:
    sched = resolved["schedule"]
    return DecaySchedule.make(
        s=sched["s"],
        constants=constants,
        sigma=sched.get("sigma"),
        MG1=sched.get("mg1"),
    )


def build_methods(resolved: dict) -> list[MethodSpec]:
    specs = []
    for entry in resolved["methods"]:
        kwargs = {k: v for k, v in entry.items() if k != "method"}
        if "p" in kwargs:
            kwargs["p"] = float(kwargs["p"])
        if "beta" in kwargs:
            kwargs["beta"] = float(kwargs["beta"])
        if "alpha" in kwargs:
            kwargs["alpha"] = float(kwargs["alpha"])
        if "svrg_m" in kwargs:
            kwargs["svrg_m"] = int(kwargs["svrg_m"])
        specs.append(MethodSpec(method=entry["method"], **kwargs))
    return specs


def build_settings(resolved: dict) -> RunSettings:
    run = resolved["run"]
    return RunSettings(
        n_trials=run["n_trials"],
        max_k=run["max_k"],
        base_seed=run["base_seed"],
        snapshots=bool(run["snapshots"]),
        checkpoints_per_decade=run["checkpoints_per_decade"],
        rate_window=_window(run.get("rate_window"), "run.rate_window"),
        varm_window=_window(run.get("varm_window"), "run.varm_window"),
        kappa_window=_window(run.get("kappa_window"), "run.kappa_window"),
    )


def write_manifest(out_dir, resolved: dict, result, problem) -> None:
    manifest = {
        "config_sha256": config_sha256(resolved),
        "resolved_config": resolved,
        "versions": {
            "polygrad": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
        "backend": result.backend_used,
        "streams": {
            "base_seed": result.settings.base_seed,
            "trial_stream_ids": [0, result.settings.n_trials - 1],
            "tuning_stream_base": TUNING_STREAM_BASE,
            "data_seed": resolved["problem"]["data_seed"],
            "data_stream_id": DATA_STREAM_ID,
            "x0_stream_id": DATA_STREAM_ID - 1,
        },
        "methods_resolved": {
            mid: mr.resolved_params for mid, mr in result.methods.items()
        },
    }
    text = json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    with open(Path(out_dir) / "manifest.json", "w", newline="\n") as fh:
        fh.write(text)


def cmd_run(args) -> int:
    resolved = resolve_config(load_config(args.config))
    problem, x0 = build_problem(resolved)
    schedule = build_schedule(resolved, problem.constants)
    methods = build_methods(resolved)
    settings = build_settings(resolved)
    result = run_experiment(
        problem,
        x0,
        schedule,
        methods,
        settings,
        out_dir=args.out,
        threads=args.threads,
    )
    write_manifest(args.out, resolved, result, problem)
    for line in result.report_lines:
        print(line)
    print(f"artifacts written to {args.out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    resolved = resolve_config(load_config(args.config))
    problem, _ = build_problem(resolved)
    constants = problem.constants
    methods = build_methods(resolved)
    for spec in methods:
        if spec.method == "svrg":
            if spec.alpha is None or spec.svrg_m is None:
                raise ConfigError("svrg requires alpha and svrg_m")
            if problem.n_components is None:
                raise ConfigError("svrg requires a finite-sum problem")

    sched_block = resolved["schedule"]
    mg1 = sched_block.get("mg1")
    if mg1 is None:
        mg1 = default_mg1(constants)
    s = sched_block["s"]
    sigma = sched_block.get("sigma")
    sigma_resolved = s * constants.L * mg1 - 1.0 if sigma is None else sigma

    print(
        f"problem: {resolved['problem']['kind']} dim={problem.dim} "
        f"l={constants.l:.12g} L={constants.L:.12g} "
        f"M={constants.M:.12g} M_V={constants.M_V:.12g}"
    )
    print(f"methods: {', '.join(spec.method for spec in methods)}")
    print(f"resolved sigma = {sigma_resolved:.12g}"
          + (" (auto: s*L*MG1 - 1)" if sigma is None else ""))
    print(f"alpha_1 bound = 1/(L*MG1) = {1.0 / (constants.L * mg1):.12g}")

    schedule = build_schedule(resolved, constants)
    print(schedule.constraint_report.describe(schedule.s, schedule.sigma, constants.l))
    if not schedule.valid:
        return EXIT_CONFIG
    return EXIT_OK


def cmd_asymptotics(args) -> int:
    params = AbkParams(s=args.s, sigma=args.sigma, l=args.l, a=args.a)
    kmax = int(args.kmax)
    if kmax < 10_000:
        raise UsageError("kmax must be at least 1e4")
    ks = log_checkpoints(kmax, 20)
    report = check_leading_order(params, ks)
    sweep_a = 0.3 if args.a in (0.0, 1.0) else args.a
    sweep = tricomi_error_sweep(a=sweep_a)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    a_exact = a_k_grid(params, ks)
    b_exact = b_k_grid(params, ks)
    try:
        a_lead = a_k_leading(params, ks)
    except UsageError:
        a_lead = np.full(len(ks), float("nan"))
    b_lead = b_k_leading(params, ks, b_exact)
    lines = ["k,A_k,A_k_leading,B_k,B_k_leading"]
    for j, k in enumerate(ks):
        lines.append(
            f"{int(k)},{format_sig12(a_exact[j])},{format_sig12(a_lead[j])},"
            f"{format_sig12(b_exact[j])},{format_sig12(b_lead[j])}"
        )
    with open(out / "asymptotics.csv", "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")

    report_lines = [
        f"params: s={params.s:.12g} sigma={params.sigma:.12g} "
        f"l={params.l:.12g} a={params.a:.12g}",
    ]
    report_lines.extend(report.lines())
    report_lines.append(
        f"tricomi sweep (a={sweep.a:.12g}): scaled errors "
        + ", ".join(f"{c:.6g}" for c in sweep.scaled)
        + f"; spread {sweep.spread:.4f} (<= 2) ... {'PASS' if sweep.ok else 'FAIL'}"
    )
    with open(out / "report.txt", "w", newline="\n") as fh:
        fh.write("\n".join(report_lines) + "\n")
    for line in report_lines:
        print(line)
    return EXIT_OK if (report.passed and sweep.ok) else EXIT_CHECK_FAILED


def cmd_plotdata(args) -> int:
    in_dir = Path(args.indir)
    if not in_dir.is_dir():
        print(f"input directory {in_dir} does not exist", file=sys.stderr)
        return EXIT_IO
    agg_files = sorted(in_dir.glob("aggregate_*.csv"))
    if not agg_files:
        raise DataError(f"no aggregate_*.csv files in {in_dir}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for path in agg_files:
        method = path.stem.replace("aggregate_", "", 1)
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            rows = list(reader)
        lines = ["k,ln_k,ln_mean_gap,ln_varm"]
        for row in rows:
            k = float(row["k"])
            gap = float(row["mean_gap"])
            gap_txt = format_sig12(math.log(gap)) if gap > 0.0 else ""
            varm_raw = row.get("varm", "")
            varm_txt = ""
            if varm_raw not in ("", None):
                v = float(varm_raw)
                if v > 0.0:
                    varm_txt = format_sig12(math.log(v))
            lines.append(
                f"{int(k)},{format_sig12(math.log(k))},{gap_txt},{varm_txt}"
            )
        with open(out / f"loglog_{method}.csv", "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    print(f"plot data written to {out}")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polygrad",
        description="Stochastic-gradient experiment harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a configured experiment")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--threads", type=int, default=1)
    p_run.set_defaults(func=cmd_run)

    p_val = sub.add_parser("validate", help="dry-run config and schedule checks")
    p_val.add_argument("--config", required=True)
    p_val.set_defaults(func=cmd_validate)

    p_asy = sub.add_parser("asymptotics", help="exact vs leading-order checks")
    p_asy.add_argument("--s", type=float, required=True)
    p_asy.add_argument("--sigma", type=float, required=True)
    p_asy.add_argument("--l", type=float, required=True)
    p_asy.add_argument("--a", type=float, default=0.0)
    p_asy.add_argument("--kmax", type=float, default=1e4)
    p_asy.add_argument("--out", required=True)
    p_asy.set_defaults(func=cmd_asymptotics)

    p_plot = sub.add_parser("plotdata", help="log-log series from stored aggregates")
    p_plot.add_argument("--in", dest="indir", required=True)
    p_plot.add_argument("--out", required=True)
    p_plot.set_defaults(func=cmd_plotdata)

    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, UsageError, DataError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
