"""Evaluation matrix runner: planners x traffic agents x scenarios x seeds.

Episodes run on a process pool; rows are sorted before anything is written
so the output bytes never depend on the worker count or scheduling.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import EngineConfig, run_episode
from .metrics import score_episode
from .planners import HybridConfig
from .registry import make_planner, make_traffic
from .scenario import Scenario, read_scenario
from .synthetic import derive_seed

log = logging.getLogger(__name__)

COLUMNS = (
    "scenario_id", "planner", "traffic_agent", "seed", "af_collision", "off_road", "goal",
    "s_cmf", "s_align", "s_ctr", "combined", "steps_alive", "wall_time_ms",
)
ERROR_COLUMNS = ("scenario_id", "planner", "traffic_agent", "seed", "error")
WORKERS_ENV = "BEHAVIOR_ENGINE_WORKERS"


@dataclass(frozen=True)
class EvalJob:
    scenarios: tuple[Scenario, ...]
    planners: tuple[str, ...]
    traffic: tuple[str, ...]
    seeds: tuple[int, ...] = (0,)
    workers: int = 1
    engine: EngineConfig = field(default_factory=EngineConfig)
    hybrid: HybridConfig = field(default_factory=HybridConfig)
    record_timing: bool = False

    def tasks(self) -> list[tuple[int, str, str, int]]:
        return [
            (i, p, t, s)
            for i in range(len(self.scenarios))
            for p in self.planners
            for t in self.traffic
            for s in self.seeds
        ]


@dataclass
class EvalResult:
    rows: list[dict]
    errors: list[dict]


def episode_seed(seed: int, scenario_id: str) -> int:
    return derive_seed(seed, scenario_id)


def run_one(job: EvalJob, task) -> dict:
    """Run and score one episode; returns a result row or an error row."""
    i, planner_name, traffic_name, seed = task
    sc = job.scenarios[i]
    base = {"scenario_id": sc.id, "planner": planner_name, "traffic_agent": traffic_name, "seed": seed}
    start = time.perf_counter()
    try:
        planner = make_planner(planner_name, job.hybrid)
        traffic = make_traffic(traffic_name)
        ep = run_episode(sc, planner, traffic, job.engine, episode_seed(seed, sc.id))
        s = score_episode(ep, sc.map_index(), sc.goal)
    except Exception as exc:  # one failing episode must not stop the matrix
        return {**base, "error": f"{type(exc).__name__}: {exc}"}
    elapsed = (time.perf_counter() - start) * 1e3
    return {
        **base,
        "af_collision": s.af_collision,
        "off_road": s.off_road,
        "goal": s.goal,
        "s_cmf": float(s.s_cmf),
        "s_align": float(s.s_align),
        "s_ctr": float(s.s_ctr),
        "combined": float(s.combined),
        "steps_alive": s.steps_alive,
        "wall_time_ms": round(elapsed, 3) if job.record_timing else None,
    }


_WORKER_JOB: EvalJob | None = None


def _init_worker(job: EvalJob) -> None:
    global _WORKER_JOB
    _WORKER_JOB = job


def _run_task(task) -> dict:
    return run_one(_WORKER_JOB, task)


def resolve_workers(requested: int) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            requested = int(env)
        except ValueError:
            raise ValueError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    return max(1, requested)


def _row_key(row: dict):
    return (row["scenario_id"], row["planner"], row["traffic_agent"], row["seed"])


def run_matrix(job: EvalJob) -> EvalResult:
    tasks = job.tasks()
    workers = min(resolve_workers(job.workers), max(1, len(tasks)))
    if workers == 1:
        out = [run_one(job, t) for t in tasks]
    else:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(job,)) as pool:
            out = list(pool.map(_run_task, tasks, chunksize=1))
    rows = sorted((r for r in out if "error" not in r), key=_row_key)
    errors = sorted((r for r in out if "error" in r), key=_row_key)
    for e in errors:
        log.error("episode %s/%s/%s/%s failed: %s", e["scenario_id"], e["planner"], e["traffic_agent"], e["seed"], e["error"])
    return EvalResult(rows, errors)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows, columns=COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in columns])
    return buf.getvalue()


def aggregate(rows) -> tuple[list[str], list[str], dict]:
    """Mean combined score x100 per (planner, traffic agent)."""
    planners = sorted({r["planner"] for r in rows})
    traffic = sorted({r["traffic_agent"] for r in rows})
    cells = {}
    for p in planners:
        for t in traffic:
            vals = [float(r["combined"]) for r in rows if r["planner"] == p and r["traffic_agent"] == t]
            if vals:
                cells[(p, t)] = 100.0 * float(np.mean(vals))
    return planners, traffic, cells


def aggregate_csv(rows) -> str:
    planners, traffic, cells = aggregate(rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["planner", *traffic])
    for p in planners:
        w.writerow([p, *(_cell(cells.get((p, t))) for t in traffic)])
    return buf.getvalue()


def write_results(result: EvalResult, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(rows_to_csv(result.rows))
    doc = [{c: r.get(c) for c in COLUMNS} for r in result.rows]
    (out / "results.json").write_text(json.dumps(doc, indent=1, sort_keys=False) + "\n")
    (out / "aggregate.csv").write_text(aggregate_csv(result.rows))
    err_path = out / "errors.csv"
    if result.errors:
        err_path.write_text(rows_to_csv(result.errors, ERROR_COLUMNS))
    elif err_path.exists():
        err_path.unlink()


def read_results_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    missing = set(COLUMNS) - set(rows[0]) if rows else set()
    if missing:
        raise ValueError(f"{path} lacks columns {sorted(missing)}")
    for r in rows:
        r["seed"] = int(r["seed"])
        r["combined"] = float(r["combined"])
    return rows


def load_scenario_set(path: str | Path) -> tuple[Scenario, ...]:
    """Scenarios from a directory of JSON files or from a split manifest.

    A manifest names its source directory under ``"source"`` (resolved
    relative to the manifest) and the chosen ids under ``"ids"``.
    """
    path = Path(path)
    if path.is_dir():
        scenarios = [read_scenario(p) for p in sorted(path.glob("*.json"))]
    else:
        manifest = json.loads(path.read_text())
        source = Path(manifest["source"])
        if not source.is_absolute():
            source = path.parent / source
        by_id = {sc.id: sc for sc in (read_scenario(p) for p in sorted(source.glob("*.json")))}
        missing = [i for i in manifest["ids"] if i not in by_id]
        if missing:
            raise FileNotFoundError(f"manifest ids not found in {source}: {missing[:5]}")
        scenarios = [by_id[i] for i in manifest["ids"]]
    ids = [sc.id for sc in scenarios]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate scenario ids in the scenario set")
    return tuple(scenarios)
