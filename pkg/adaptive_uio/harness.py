"""Scenario runs, CSV artifacts, metrics and parameter sweeps."""

import asyncio
import csv
import logging
import math
import re
import time
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .base import ConfigError, Record, UIOError
from .loop import EventCallback, run_pipeline
from .numerics import Trajectory
from .scenario import Scenario, with_overrides

logger = logging.getLogger(__name__)

TIMESERIES_FILE = "timeseries.csv"
REPORT_FILE = "report.csv"
CONFIG_ECHO_FILE = "config_echo"
SWEEP_FILE = "sweep.csv"

METRIC_NAMES: tuple[str, ...] = (
    "first_unclamped",
    "freeze_time",
    "amplitude_unclamped",
    "xi_error",
    "xi_rel_error",
    "omega_error",
    "omega_rel_error",
    "f_error_tail",
    "xtilde_final",
    "xtilde_rms_tail",
)

_VECTOR_COLUMN = re.compile(r"^(?P<name>.+)\[(?P<index>\d+)\]$")


def _fmt(value: float) -> str:
    return format(value, ".17g")


@dataclass(kw_only=True, frozen=True)
class RunReport(Record):
    """Summary of one scenario run. Every metric is recomputable from timeseries.csv."""

    scenario: str
    metrics: dict[str, float]
    wall_clock: float
    config_echo: str
    timeseries_path: Path | None = None
    report_path: Path | None = None
    config_echo_path: Path | None = None
    trajectory: Trajectory | None = field(default=None, repr=False)

    def as_row(self) -> dict[str, Any]:
        return {"scenario": self.scenario, **self.metrics}


def emit_csv(trajectory: Trajectory, path: str | Path) -> Path:
    """Writes t and every channel as RFC 4180 CSV with 17 significant digits.

    Vector channels become one column per component, named name[1], name[2], ...
    """
    path = Path(path)
    header = ["t"]
    columns = [np.asarray(trajectory.times, dtype=float)]
    for name, values in trajectory.channels.items():
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            header.append(name)
            columns.append(values)
        elif values.ndim == 2:
            header.extend(f"{name}[{i + 1}]" for i in range(values.shape[1]))
            columns.extend(values.T)
        else:
            raise ConfigError(f"channel {name!r} has {values.ndim} dimensions, at most 2 can be written")
    table = np.column_stack(columns) if len(trajectory) else np.empty((0, len(header)))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in table.tolist():
            writer.writerow([_fmt(v) for v in row])
    return path


def read_csv(path: str | Path, *, dt: float | None = None) -> Trajectory:
    """Parses a file written by emit_csv back into a Trajectory.

    dt is taken from the first two samples unless given.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "t":
            raise ConfigError(f"{path} is not a trajectory table (first column must be t)")
        rows = [[float(v) for v in row] for row in reader]
    table = np.array(rows, dtype=float).reshape(len(rows), len(header))

    groups: dict[str, list[int]] = {}
    vector: set[str] = set()
    for col, label in enumerate(header[1:], start=1):
        match = _VECTOR_COLUMN.match(label)
        name = match["name"] if match else label
        if match:
            vector.add(name)
        groups.setdefault(name, []).append(col)

    times = table[:, 0].copy()
    channels = {
        name: table[:, cols].copy() if name in vector else table[:, cols[0]].copy()
        for name, cols in groups.items()
    }
    if dt is None:
        dt = float(times[1] - times[0]) if len(times) > 1 else 1.0
    t0 = float(times[0]) if len(times) else 0.0
    return Trajectory(t0=t0, dt=dt, times=times, channels=channels)


def _first_time(trajectory: Trajectory, mask: np.ndarray) -> float:
    hits = np.flatnonzero(mask)
    return float(trajectory.times[hits[0]]) if hits.size else math.nan


def compute_metrics(
    trajectory: Trajectory,
    *,
    xi0: Sequence[float],
    omega: float,
    tail: float = 0.2,
) -> dict[str, float]:
    """Convergence times and terminal errors of a logged run.

    Times are NaN when the event never happened; tail errors use the last
    `tail` fraction of the horizon.
    """
    if len(trajectory) == 0:
        raise ConfigError("cannot compute metrics of an empty trajectory")
    xi_true = np.asarray(xi0, dtype=float)
    xi_error = float(np.linalg.norm(trajectory["xi_hat"][-1] - xi_true))
    omega_error = abs(float(trajectory["omega_hat"][-1]) - omega)
    xi_scale = float(np.linalg.norm(xi_true))

    mask = trajectory.tail_mask(tail)
    f_tilde = trajectory["f_hat"][mask] - trajectory["f"][mask]
    x_tilde = trajectory["xtilde"]
    return {
        "first_unclamped": _first_time(trajectory, trajectory["clamped"] == 0.0),
        "freeze_time": _first_time(trajectory, trajectory["frozen"] == 1.0),
        "amplitude_unclamped": _first_time(trajectory, trajectory["clamped_a"] == 0.0),
        "xi_error": xi_error,
        "xi_rel_error": xi_error / xi_scale if xi_scale > 0 else xi_error,
        "omega_error": omega_error,
        "omega_rel_error": omega_error / omega if omega > 0 else omega_error,
        "f_error_tail": float(np.max(np.abs(f_tilde))),
        "xtilde_final": float(np.linalg.norm(x_tilde[-1])),
        "xtilde_rms_tail": float(np.sqrt(np.mean(np.sum(x_tilde[mask] ** 2, axis=1)))),
    }


def true_parameters(scenario: Scenario) -> tuple[list[float], float]:
    """ξ(0) and the first disturbance frequency (0 without a disturbance)."""
    omega = scenario.disturbance[0].frequency if scenario.disturbance else 0.0
    return list(scenario.generator.xi0), omega


def _write_rows(path: Path, fieldnames: Sequence[str], rows: Sequence[Mapping[str, Any]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(fieldnames))
        writer.writeheader()
        for row in rows:
            writer.writerow(
                {k: _fmt(v) if isinstance(v, float) else v for k, v in row.items()}
            )


def run_scenario(
    scenario: Scenario,
    *,
    out_dir: str | Path | None = None,
    event_callback: EventCallback | None = None,
) -> RunReport:
    """Runs the full pipeline and, given out_dir, writes the three artifacts into it."""
    started = time.perf_counter()
    trajectory = run_pipeline(scenario, event_callback=event_callback)
    xi0, omega = true_parameters(scenario)
    metrics = compute_metrics(trajectory, xi0=xi0, omega=omega)
    echo = scenario.model_dump_json(indent=2)

    report = RunReport(
        scenario=scenario.name,
        metrics=metrics,
        wall_clock=time.perf_counter() - started,
        config_echo=echo,
        trajectory=trajectory,
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        timeseries = emit_csv(trajectory, out / TIMESERIES_FILE)
        report_path = out / REPORT_FILE
        row = report.as_row()
        _write_rows(report_path, list(row), [row])
        echo_path = out / CONFIG_ECHO_FILE
        echo_path.write_text(echo + "\n")
        report = report.replace(
            timeseries_path=timeseries, report_path=report_path, config_echo_path=echo_path
        )
        logger.info("artifacts written to %s", out)
    logger.info(
        "scenario %r finished in %.2f s wall-clock: ξ error %.3g, ω error %.3g, ‖x̃(T)‖ %.3g",
        scenario.name,
        report.wall_clock,
        metrics["xi_error"],
        metrics["omega_error"],
        metrics["xtilde_final"],
    )
    return report


def parse_grid(text: str) -> tuple[str, list[float]]:
    """Parses FIELD=a:b:n into the field path and n evenly spaced values."""
    try:
        name, spec = text.split("=", 1)
        start, stop, count = spec.split(":")
        values = np.linspace(float(start), float(stop), int(count))
    except ValueError as e:
        raise ConfigError(f"sweep grid must look like FIELD=a:b:n, got {text!r}") from e
    if not name or len(values) < 1:
        raise ConfigError(f"sweep grid {text!r} names no field or no points")
    return name, [float(v) for v in values]


async def sweep_async(
    base: Scenario,
    name: str,
    values: Sequence[float],
    *,
    workers: int = 4,
    timeout: float | None = None,
) -> list[dict[str, Any]]:
    """Runs one scenario per grid value in worker threads, at most `workers` at a time.

    Rows that fail or time out carry NaN metrics and the error message. A timed
    out worker thread cannot be interrupted and finishes in the background.
    """
    if workers < 1:
        raise ConfigError(f"sweep needs at least one worker, got {workers}")
    semaphore = asyncio.Semaphore(workers)

    async def run_row(index: int, value: float) -> dict[str, Any]:
        overrides: dict[str, Any] = {name: value}
        if name == "noise.seed":
            seed = int(value)
            overrides[name] = seed
        else:
            seed = (base.noise.seed + index) % 2**64
            overrides["noise.seed"] = seed
        row: dict[str, Any] = {"index": index, name: value, "seed": seed}
        async with semaphore:
            try:
                scenario = with_overrides(base, overrides)
                report = await asyncio.wait_for(
                    asyncio.to_thread(run_scenario, scenario), timeout=timeout
                )
            except UIOError as e:
                logger.warning("sweep row %d (%s = %g) failed: %s", index, name, value, e.message)
                return row | dict.fromkeys(METRIC_NAMES, math.nan) | {"error": e.message}
            except TimeoutError:
                message = f"timed out after {timeout} seconds"
                logger.warning("sweep row %d (%s = %g) %s", index, name, value, message)
                return row | dict.fromkeys(METRIC_NAMES, math.nan) | {"error": message}
            except Exception as e:
                message = f"{type(e).__name__}: {e}"
                logger.warning(
                    "sweep row %d (%s = %g) raised %s", index, name, value, message, exc_info=True
                )
                return row | dict.fromkeys(METRIC_NAMES, math.nan) | {"error": message}
        return row | report.metrics | {"error": ""}

    return list(await asyncio.gather(*(run_row(i, v) for i, v in enumerate(values))))


def sweep(
    base: Scenario,
    name: str,
    values: Sequence[float],
    *,
    out_dir: str | Path | None = None,
    workers: int = 4,
    timeout: float | None = None,
) -> list[dict[str, Any]]:
    """Runs a one-dimensional grid over any scalar scenario field; writes sweep.csv into out_dir."""
    rows = asyncio.run(sweep_async(base, name, values, workers=workers, timeout=timeout))
    failures = sum(1 for row in rows if row["error"])
    logger.info("sweep over %s: %d rows, %d failed", name, len(rows), failures)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_rows(out / SWEEP_FILE, ["index", name, "seed", *METRIC_NAMES, "error"], rows)
        logger.info("sweep table written to %s", out / SWEEP_FILE)
    return rows
