"""Experiment orchestration: configs, runs, sweeps, machine-readable output.

Configurations are plain JSON documents; identical configurations produce
byte-identical outputs. Records stream to CSV with the fixed header

    k,comm_rounds,grad_calls,err_sq_stacked,err_sq_mean_block,psi_x,psi_yz

or to JSON mirroring the same field names, with floats at full round-trip
precision. Wall-clock time appears only in the run summary, never in the
record stream.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import hardcase, solver, topology
from .objectives import gen_random_quadratic, gen_synthetic_logistic

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "CSV_HEADER",
    "OUTPUT_DIR_ENV",
    "build_problem",
    "emit",
    "run_experiment",
    "sweep",
]

CSV_HEADER = "k,comm_rounds,grad_calls,err_sq_stacked,err_sq_mean_block,psi_x,psi_yz"
OUTPUT_DIR_ENV = "GOSSIPOPT_OUTPUT_DIR"

_RECORD_FIELDS = CSV_HEADER.split(",")


@dataclass
class ExperimentConfig:
    """One run: problem, topology, algorithm knobs, stop rule, output."""

    problem: dict
    topology: dict | None = None
    chi: float | None = None
    T: int | str = 1
    param_overrides: dict = field(default_factory=dict)
    budget: int | None = None
    target_eps: float | None = None
    stop_metric: str = "mean_block"
    record_lyapunov: bool = True
    certify: bool = False
    output_path: str | None = None
    output_format: str = "csv"

    def __post_init__(self):
        if self.budget is None and self.target_eps is None:
            raise ValueError("config needs a budget, a target_eps, or both")
        if self.T != "auto" and (not isinstance(self.T, int) or self.T < 1):
            raise ValueError(f"T must be a positive integer or 'auto', got {self.T}")
        if self.output_format not in ("csv", "json"):
            raise ValueError(f"unknown output format {self.output_format!r}")

    @classmethod
    def from_dict(cls, obj):
        algorithm = obj.get("algorithm", {})
        stop = obj.get("stop", {})
        output = obj.get("output", {})
        return cls(
            problem=obj["problem"],
            topology=obj.get("topology"),
            chi=obj.get("chi"),
            T=algorithm.get("T", 1),
            param_overrides=algorithm.get("param_overrides", {}),
            budget=stop.get("budget"),
            target_eps=stop.get("target_eps"),
            stop_metric=stop.get("metric", "mean_block"),
            record_lyapunov=output.get("record_lyapunov", True),
            certify=obj.get("certify", False),
            output_path=output.get("path"),
            output_format=output.get("format", "csv"),
        )

    @classmethod
    def from_json_file(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class ExperimentResult:
    summary: dict
    records: list
    cert_report: object | None = None


def build_problem(problem):
    """Return (objectives, hard_instance_or_None) for a problem section."""
    kind = problem["kind"]
    if kind == "synthetic_logistic":
        obj = gen_synthetic_logistic(
            problem["n"],
            problem["m"],
            problem["d"],
            problem["seed"],
            problem["kappa"],
        )
        return obj, None
    if kind == "random_quadratic":
        obj = gen_random_quadratic(
            problem["n"],
            problem["d"],
            problem["L"],
            problem["mu"],
            problem["seed"],
        )
        return obj, None
    if kind == "hard_instance":
        instance = hardcase.build_hard_instance(
            problem["chi"], problem["L"], problem["mu"], problem["d_trunc"]
        )
        return instance.objectives, instance
    raise ValueError(f"unknown problem kind {kind!r}")


def _build_schedule(config, instance):
    if config.topology is not None:
        opts = dict(config.topology)
        kind = opts.pop("kind")
        n = opts.pop("n")
        return topology.make_schedule(kind, n, **opts)
    if instance is not None:
        return instance.schedule
    raise ValueError("config needs a topology section for this problem kind")


def _resolve_output_path(config, output_dir):
    if config.output_path is None:
        return None
    base = output_dir or os.environ.get(OUTPUT_DIR_ENV)
    if base:
        return str(Path(base) / Path(config.output_path).name)
    return config.output_path


def _format_value(v):
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def emit(records, fmt="csv", path=None):
    """Render records to CSV or JSON text; optionally write the file."""
    if fmt == "csv":
        lines = [CSV_HEADER]
        for rec in records:
            lines.append(
                ",".join(_format_value(getattr(rec, name)) for name in _RECORD_FIELDS)
            )
        text = "\n".join(lines) + "\n"
    elif fmt == "json":
        rows = [
            {name: getattr(rec, name) for name in _RECORD_FIELDS} for rec in records
        ]
        text = json.dumps(rows)
    else:
        raise ValueError(f"unknown output format {fmt!r}")
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    return text


def run_experiment(config, output_dir=None):
    """Build every piece from the config, run, and write outputs.

    The declared network condition number, when present, is validated
    against the measured one (declaring less than measured is an error) and
    then drives the parameter schedule.
    """
    started = time.perf_counter()
    objectives, instance = build_problem(config.problem)
    schedule = _build_schedule(config, instance)
    mixing = topology.build_mixing(schedule)

    chi_measured = mixing.chi
    chi_used = chi_measured
    if config.chi is not None:
        if config.chi < chi_measured * (1.0 - 1e-9):
            raise ValueError(
                f"declared chi {config.chi} is below the measured value "
                f"{chi_measured:.6g}"
            )
        chi_used = float(config.chi)

    T = config.T
    if T == "auto":
        T = max(1, math.ceil(chi_used * math.log(2.0)))
    chi_eff = solver.effective_chi(chi_used, T)
    params = solver.derive_params(objectives.L, objectives.mu, chi_eff)
    if config.param_overrides:
        params = params.override(**config.param_overrides)

    x_bar = instance.solution() if instance is not None else None
    reference = solver.make_reference(objectives, params.nu, x_bar=x_bar)

    if config.certify and instance is None:
        raise ValueError("certification requires a hard_instance problem")

    result = solver.run(
        objectives,
        mixing,
        T=T,
        budget=config.budget,
        target_eps=config.target_eps,
        params=params,
        reference=reference,
        stop_metric=config.stop_metric,
        track_lyapunov=config.record_lyapunov,
        collect_trace=config.certify,
    )

    cert_report = None
    if config.certify:
        cert_report = hardcase.certify_run(instance, result.trace, T=T)

    out_path = _resolve_output_path(config, output_dir)
    if out_path is not None:
        emit(result.records, config.output_format, out_path)

    last = result.records[-1]
    converged = (
        config.target_eps is not None
        and (
            last.err_sq_mean_block
            if config.stop_metric == "mean_block"
            else last.err_sq_stacked
        )
        <= config.target_eps
    )
    summary = {
        "iterations": last.k,
        "comm_rounds": last.comm_rounds,
        "grad_calls": last.grad_calls,
        "final_err_sq_stacked": last.err_sq_stacked,
        "final_err_sq_mean_block": last.err_sq_mean_block,
        "converged": converged,
        "chi_measured": chi_measured,
        "chi_used": chi_used,
        "chi_eff": chi_eff,
        "T": T,
        "n": objectives.n,
        "d": objectives.d,
        "L": objectives.L,
        "mu": objectives.mu,
        "wall_time_s": time.perf_counter() - started,
        "output_path": out_path,
    }
    if cert_report is not None:
        summary["certified"] = cert_report.passed
    return ExperimentResult(
        summary=summary, records=result.records, cert_report=cert_report
    )


_SWEEP_AXES = ("kappa", "chi", "T")


def _config_with(config, axis, value):
    problem = dict(config.problem)
    T = config.T
    if axis == "kappa":
        if problem.get("kind") != "synthetic_logistic":
            raise ValueError("kappa sweeps need a synthetic_logistic problem")
        problem["kappa"] = value
    elif axis == "chi":
        if problem.get("kind") != "hard_instance":
            raise ValueError("chi sweeps need a hard_instance problem")
        problem["chi"] = value
    elif axis == "T":
        T = int(value)
    else:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {_SWEEP_AXES}")

    output_path = config.output_path
    if output_path is not None:
        p = Path(output_path)
        output_path = str(p.with_name(f"{p.stem}_{axis}{value}{p.suffix}"))
    return ExperimentConfig(
        problem=problem,
        topology=config.topology,
        chi=config.chi,
        T=T,
        param_overrides=dict(config.param_overrides),
        budget=config.budget,
        target_eps=config.target_eps,
        stop_metric=config.stop_metric,
        record_lyapunov=config.record_lyapunov,
        certify=config.certify,
        output_path=output_path,
        output_format=config.output_format,
    )


def sweep(base_config, axis, values, output_dir=None):
    """One run per value along the axis; failures mark their row only.

    Returns rows with the counts needed for complexity plots: iterations,
    communication rounds and gradient calls at the stop target (None when
    the run only exhausted its budget).
    """
    if not values:
        raise ValueError("sweep needs at least one value")
    rows = []
    for value in values:
        row = {"axis": axis, "value": value}
        try:
            result = run_experiment(_config_with(base_config, axis, value), output_dir)
        except Exception as exc:  # noqa: BLE001 - row-level fault isolation
            row.update(
                status="error",
                error=str(exc),
                iterations_to_eps=None,
                comm_rounds_to_eps=None,
                grad_calls_to_eps=None,
            )
        else:
            s = result.summary
            converged = s["converged"]
            row.update(
                status="ok",
                error=None,
                iterations_to_eps=s["iterations"] if converged else None,
                comm_rounds_to_eps=s["comm_rounds"] if converged else None,
                grad_calls_to_eps=s["grad_calls"] if converged else None,
            )
        rows.append(row)
    return rows
