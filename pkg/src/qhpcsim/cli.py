"""Command-line scenario runner.

    qhpcsim run CONFIG.json [--seed N] [--out DIR]
    qhpcsim compare CONFIG.json --axis {mode,latency} [--seed N] [--out DIR]

Exit codes: 0 success, 2 configuration error, 3 execution failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

from .algorithms import (
    IpeRun,
    PhaseEstimationProblem,
    VqeProblem,
    ipe_sync,
    qpe_parallel,
    vqe_error_detected,
)
from .algorithms.phase import _raise_failures
from .config import ScenarioConfig, load_config
from .errors import ConfigError
from .qpu import make_devices
from .runtime import CPU, Runtime, dumps_metrics_csv, dumps_trace

log = logging.getLogger("qhpcsim")

EXIT_OK, EXIT_CONFIG, EXIT_EXEC = 0, 2, 3


@dataclass
class ScenarioOutcome:
    config: ScenarioConfig
    runtime: Runtime
    lines: list[str] = field(default_factory=list)
    result: object = None

    @property
    def makespan(self) -> float:
        return self.runtime.metrics().makespan

    def summary(self) -> str:
        m = self.runtime.metrics()
        out = list(self.lines)
        out.append(f"makespan_us: {m.makespan!r}")
        for res, u in m.utilization.items():
            out.append(f"utilization[{res}]: {u:.6f}")
        return "\n".join(out) + "\n"


def _phase_lines(prefix: str, result) -> list[str]:
    return [
        f"{prefix}bits: {''.join(map(str, result.bits))}",
        f"{prefix}estimate: {result.estimate!r}",
        f"{prefix}qubits: {result.num_qubits}",
        f"{prefix}clbits: {result.num_clbits}",
        f"{prefix}depth: {result.max_depth}",
    ]


def execute(cfg: ScenarioConfig) -> ScenarioOutcome:
    """Run a scenario in memory. Raises on execution failure."""
    devices = make_devices(cfg.devices, cfg.seed, cfg.noise_params(), cfg.latency_model())
    runtime = Runtime(devices, cfg.mode)
    out = ScenarioOutcome(cfg, runtime, [f"scenario: {cfg.scenario}", f"mode: {cfg.mode}",
                                         f"devices: {cfg.devices}", f"seed: {cfg.seed}"])
    if cfg.scenario in ("ipe", "qpe"):
        problem = PhaseEstimationProblem.from_string(cfg.phi, cfg.shots)
        out.lines.append(f"phi_target: {problem.phi!r}")
        if cfg.scenario == "ipe":
            out.result = ipe_sync(problem, runtime, mode=cfg.mode, classical_cost=cfg.classical_cost)
        else:
            out.result = qpe_parallel(problem, runtime, mode=cfg.mode)
        out.lines += _phase_lines("", out.result)
    elif cfg.scenario == "ensemble":
        problem = PhaseEstimationProblem.from_string(cfg.phi, cfg.shots)
        runs = [IpeRun(problem, creg=f"c{i}", classical_cost=cfg.classical_cost) for i in range(cfg.K)]
        graph = runtime.new_graph()
        for run in runs:
            run.attach(graph)
        _raise_failures(runtime.run(graph))
        out.result = [run.result() for run in runs]
        out.lines.append(f"phi_target: {problem.phi!r}")
        for i, res in enumerate(out.result):
            out.lines += _phase_lines(f"run{i}.", res)
    else:
        problem = VqeProblem(
            c_x=cfg.c_x, c_y=cfg.c_y, p_inject=cfg.p_inject, grid_points=cfg.grid_points,
            shots_per_setting=cfg.shots, max_retries=cfg.max_retries, variant=cfg.variant,
            exact=cfg.exact, classical_cost=cfg.classical_cost,
        )
        res = vqe_error_detected(problem, runtime, mode=cfg.mode)
        out.result = res
        out.lines += [
            f"variant: {problem.variant}",
            f"best_angle: {res.best_angle!r}",
            f"best_cost: {res.best_cost!r}",
            f"acceptance_rate: {res.acceptance_rate!r}",
            f"retries_used: {res.retries_used}",
            f"qubits: {res.num_qubits}",
            f"missing_angles: {len(res.missing_angles)}",
        ]
    return out


def write_artifacts(outcome: ScenarioOutcome, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    rt = outcome.runtime
    trace = rt.trace
    lanes = [d.device_id for d in rt.devices] + [CPU]
    (out_dir / "trace.json").write_text(dumps_trace(outcome.config.scenario, trace, lanes))
    (out_dir / "metrics.csv").write_text(dumps_metrics_csv(trace))
    (out_dir / "summary.txt").write_text(outcome.summary())


def run_scenario(cfg: ScenarioConfig, out_dir: Optional[Path] = None) -> int:
    try:
        outcome = execute(cfg)
    except ConfigError:
        raise
    except Exception as exc:  # noqa: BLE001 - any failure maps to the execution exit code
        log.error("execution failed: %s", exc)
        return EXIT_EXEC
    write_artifacts(outcome, Path(out_dir or cfg.output_dir))
    sys.stdout.write(outcome.summary())
    return EXIT_OK


AXES = {"mode": ("sync", "async"), "latency": ("tight", "cloud")}


def compare(cfg: ScenarioConfig, axis: str, out_dir: Optional[Path] = None) -> tuple[int, list[dict]]:
    """Run ``cfg`` under both values of ``axis`` with identical seeds."""
    if axis not in AXES:
        raise ConfigError("axis", f"must be one of {list(AXES)}")
    rows = []
    for value in AXES[axis]:
        variant = replace(cfg, **{axis: value})
        try:
            outcome = execute(variant)
        except Exception as exc:  # noqa: BLE001
            log.error("execution failed under %s=%s: %s", axis, value, exc)
            return EXIT_EXEC, rows
        m = outcome.runtime.metrics()
        dev_util = m.device_utilization()
        rows.append({
            "axis": axis,
            "value": value,
            "makespan": m.makespan,
            "mean_device_utilization": sum(dev_util.values()) / len(dev_util) if dev_util else 0.0,
        })
    base = rows[0]["makespan"]
    for row in rows:
        row["ratio"] = row["makespan"] / base if base > 0 else 1.0
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    target = Path(out_dir or cfg.output_dir)
    target.mkdir(parents=True, exist_ok=True)
    (target / "compare.csv").write_text(buf.getvalue())
    sys.stdout.write(f"{'value':>8} {'makespan_us':>16} {'device_util':>12} {'ratio':>8}\n")
    for row in rows:
        sys.stdout.write(f"{row['value']:>8} {row['makespan']:>16.3f} "
                         f"{row['mean_device_utilization']:>12.4f} {row['ratio']:>8.4f}\n")
    return EXIT_OK, rows


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qhpcsim", description="Hybrid quantum-classical task runtime simulator")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run", "compare"):
        sp = sub.add_parser(name)
        sp.add_argument("config", type=Path)
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--out", type=Path, default=None, help="override output_dir")
        if name == "compare":
            sp.add_argument("--axis", choices=sorted(AXES), required=True)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("seed", "must be a 64-bit unsigned integer")
            cfg.seed = args.seed
        if args.command == "run":
            return run_scenario(cfg, args.out)
        code, _ = compare(cfg, args.axis, args.out)
        return code
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
