"""Batch orchestration: enumerate, construct, simulate, evaluate, report.

A run plan expands into cells, one per (design, scenario, replication). Cells
are independent - each owns its kernel, plant, and controller - so they fan
out over a worker pool. Every completed cell is appended to a journal file
before anything else happens with it, which makes interrupted batches
resumable without recomputation. Results are keyed and sorted by cell, so the
output files are identical for any worker count.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from multiprocessing import Pool
from pathlib import Path

from flowdse.designspace import (
    DesignSpace,
    enumerate_configurations,
    deduplicate,
    load_design_space,
)
from flowdse.evaluator import (
    KpiVector,
    ParetoFront,
    result_columns,
    score,
    write_pareto_json,
    write_plot_csv,
    write_results_csv,
)
from flowdse.kernel import derive_seed
from flowdse.plant import PlantSimulation
from flowdse.scenario import Scenario, compatibility_issues, load_scenario

JOBS_ENV_VAR = "FLOWDSE_JOBS"


class PlanError(ValueError):
    """Bad plan inputs (files, thresholds, journal mismatch)."""


@dataclass(frozen=True)
class RunPlan:
    space_path: str
    scenario_paths: tuple[str, ...]
    base_seed: int
    out_dir: str
    jobs: int = 1
    replications: int = 1
    dedup: bool = False
    stop_first: bool = False
    min_attainment: tuple[tuple[str, float], ...] = ()  # (scenario id, threshold)
    clamp: bool = True

    def fingerprint(self) -> dict:
        """What a resumed run must agree on for the journal to be reusable."""
        return {
            "space": os.path.basename(self.space_path),
            "scenarios": [os.path.basename(p) for p in self.scenario_paths],
            "seed": self.base_seed,
            "replications": self.replications,
            "dedup": self.dedup,
            "clamp": self.clamp,
        }


@dataclass
class ExplorationReport:
    designs_evaluated: int
    cells_executed: int
    cells_resumed: int
    front: ParetoFront
    vectors: list[KpiVector]
    stopped_at_design: int | None
    wall_s: float
    out_dir: Path
    files: dict[str, Path] = field(default_factory=dict)


def default_jobs() -> int:
    raw = os.environ.get(JOBS_ENV_VAR)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise PlanError(f"{JOBS_ENV_VAR} must be an integer, got {raw!r}") from None
    return 1


def cell_seed(base_seed: int, design_index: int, scenario_index: int, replication: int) -> int:
    """Pure function of the cell coordinates; no cell perturbs another."""
    return derive_seed(base_seed, "cell", design_index, scenario_index, replication)


# -- worker side -------------------------------------------------------------

_WORKER: dict = {}


def _init_worker(space_path: str, scenario_paths: tuple[str, ...], clamp: bool) -> None:
    space = load_design_space(space_path)
    _WORKER["space"] = space
    _WORKER["configs"] = list(enumerate_configurations(space))
    _WORKER["scenarios"] = [load_scenario(p) for p in scenario_paths]
    _WORKER["clamp"] = clamp


def _run_cell(cell: tuple[int, int, int, int]) -> tuple[tuple[int, int, int], dict]:
    design_index, scenario_index, replication, base_seed = cell
    space: DesignSpace = _WORKER["space"]
    config = _WORKER["configs"][design_index]
    scenario: Scenario = _WORKER["scenarios"][scenario_index]
    seed = cell_seed(base_seed, design_index, scenario_index, replication)
    sim = PlantSimulation(space, config, scenario, seed)
    tallies = sim.run()
    result = score(tallies, scenario, design_index, seed, clamp=_WORKER["clamp"])
    return (design_index, scenario_index, replication), result.to_record()


def simulate_single(
    space_path: str,
    design_index: int,
    scenario_path: str,
    seed: int,
    trace: bool = False,
    clamp: bool = True,
):
    """One replication with its exact cell inputs; optionally with a trace."""
    space = load_design_space(space_path)
    configs = list(enumerate_configurations(space))
    if not 0 <= design_index < len(configs):
        raise PlanError(
            f"design index {design_index} out of range 0..{len(configs) - 1}"
        )
    scenario = load_scenario(scenario_path)
    _check_compatibility(space, [scenario])
    sim = PlantSimulation(space, configs[design_index], scenario, seed, trace=trace)
    tallies = sim.run()
    result = score(tallies, scenario, design_index, seed, clamp=clamp)
    return result, sim.trace_rows


def _check_compatibility(space: DesignSpace, scenarios: list[Scenario]) -> None:
    issues = []
    for scenario in scenarios:
        issues.extend(
            compatibility_issues(scenario, space.destination_tags, space.lanes)
        )
    if issues:
        raise PlanError("; ".join(issues))


# -- batch driver ------------------------------------------------------------


def _load_journal(path: Path, fingerprint: dict) -> dict[tuple[int, int, int], dict]:
    completed: dict[tuple[int, int, int], dict] = {}
    if not path.exists():
        return completed
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header:
            return completed
        try:
            head = json.loads(header)
        except json.JSONDecodeError:
            raise PlanError(f"{path} is corrupt (bad header line)") from None
        if head.get("plan") != fingerprint:
            raise PlanError(
                f"{path} was written by a different plan; "
                f"use a fresh --out directory or matching inputs"
            )
        for line in fh:
            line = line.strip()
            if not line:
                continue
            entry = json.loads(line)
            completed[tuple(entry["cell"])] = entry["result"]
    return completed


def explore(plan: RunPlan, echo=None) -> ExplorationReport:
    started = time.perf_counter()
    say = echo or (lambda *_: None)

    space = load_design_space(plan.space_path)
    scenarios = [load_scenario(p) for p in plan.scenario_paths]
    if not scenarios:
        raise PlanError("at least one scenario file is required")
    _check_compatibility(space, scenarios)

    scenario_ids = [s.scenario_id for s in scenarios]
    if len(set(scenario_ids)) != len(scenario_ids):
        raise PlanError(f"duplicate scenario ids: {scenario_ids}")
    thresholds = dict(plan.min_attainment)
    unknown = set(thresholds) - set(scenario_ids)
    if unknown:
        raise PlanError(f"thresholds reference unknown scenarios: {sorted(unknown)}")
    if plan.stop_first and not thresholds:
        raise PlanError("--stop-first needs at least one --min-attainment threshold")

    configs = list(enumerate_configurations(space))
    say(f"{space.space_id}: {len(configs)} configurations")
    if plan.dedup:
        distinct = deduplicate(space, configs)
        design_indices = [rep.index for rep, _ in distinct]
        multiplicity = {rep.index: mult for rep, mult in distinct}
        say(f"deduplicated to {len(distinct)} distinct designs")
    else:
        design_indices = list(range(len(configs)))
        multiplicity = {i: 1 for i in design_indices}

    out_dir = Path(plan.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    journal_path = out_dir / "journal.jsonl"
    fingerprint = plan.fingerprint()
    completed = _load_journal(journal_path, fingerprint)
    if completed:
        say(f"journal: {len(completed)} cells already done")

    cells = [
        (d, s, r, plan.base_seed)
        for d in design_indices
        for s in range(len(scenarios))
        for r in range(plan.replications)
    ]
    pending = [c for c in cells if c[:3] not in completed]

    fresh = journal_path if not journal_path.exists() else None
    journal = open(journal_path, "a", encoding="utf-8")
    if fresh:
        journal.write(json.dumps({"plan": fingerprint}) + "\n")
        journal.flush()

    per_design = len(scenarios) * plan.replications
    collected: dict[tuple[int, int, int], dict] = dict(completed)
    stopped_at = None

    def design_done(d: int) -> bool:
        return all(
            (d, s, r) in collected
            for s in range(len(scenarios))
            for r in range(plan.replications)
        )

    def meets_thresholds(d: int) -> bool:
        for sid, minimum in thresholds.items():
            s = scenario_ids.index(sid)
            kpis = [collected[(d, s, r)]["kpi"] for r in range(plan.replications)]
            if sum(kpis) / len(kpis) < minimum:
                return False
        return True

    executed = 0
    try:
        if plan.jobs <= 1 or not pending:
            _init_worker(plan.space_path, plan.scenario_paths, plan.clamp)
            stream = map(_run_cell, pending)
            pool = None
        else:
            pool = Pool(
                processes=plan.jobs,
                initializer=_init_worker,
                initargs=(plan.space_path, plan.scenario_paths, plan.clamp),
            )
            if plan.stop_first:
                chunk = 1  # keep the journal aligned with evaluation order
            else:
                chunk = max(1, min(16, len(pending) // (plan.jobs * 4) or 1))
            stream = pool.imap(_run_cell, pending, chunksize=chunk)

        for key, record in stream:
            journal.write(json.dumps({"cell": list(key), "result": record}) + "\n")
            journal.flush()
            collected[key] = record
            executed += 1
            if executed % (per_design * 64) == 0:
                say(f"{len(collected)}/{len(cells)} cells")
            if plan.stop_first:
                d = key[0]
                if design_done(d) and meets_thresholds(d):
                    stopped_at = d
                    break
        if pool is not None:
            if stopped_at is None:
                pool.close()
            else:
                pool.terminate()
            pool.join()
    finally:
        journal.close()

    if plan.stop_first and stopped_at is None:
        # honor journal-resumed qualifiers from an interrupted earlier run
        for d in design_indices:
            if design_done(d) and meets_thresholds(d):
                stopped_at = d
                break

    candidates = design_indices
    if plan.stop_first and stopped_at is not None:
        # truncate in evaluation order; under dedup the representative indices
        # are not necessarily ascending
        candidates = design_indices[: design_indices.index(stopped_at) + 1]
    evaluated = [d for d in candidates if design_done(d)]

    vectors = []
    for d in evaluated:
        values = []
        for s in range(len(scenarios)):
            kpis = [collected[(d, s, r)]["kpi"] for r in range(plan.replications)]
            values.append(sum(kpis) / len(kpis))
        vectors.append(KpiVector(d, tuple(values), multiplicity[d]))
    front = ParetoFront.from_vectors(vectors)

    records = [
        collected[(d, s, r)]
        for d in evaluated
        for s in range(len(scenarios))
        for r in range(plan.replications)
    ]
    columns = result_columns(scenarios)
    files = {
        "results": out_dir / "results.csv",
        "pareto": out_dir / "pareto.json",
        "plot": out_dir / "plot.csv",
        "journal": journal_path,
        "meta": out_dir / "meta.json",
    }
    write_results_csv(files["results"], records, columns)
    wiring = {d: configs[d].chosen for d in front.design_indices()}
    write_pareto_json(files["pareto"], front, scenario_ids, wiring)
    write_plot_csv(files["plot"], vectors, scenario_ids, front)

    wall = time.perf_counter() - started
    meta = {
        "plan": fingerprint,
        "jobs": plan.jobs,
        "stop_first": plan.stop_first,
        "min_attainment": dict(plan.min_attainment),
        "configurations": len(configs),
        "designs_evaluated": len(evaluated),
        "cells_total": len(cells),
        "cells_executed": executed,
        "cells_resumed": len(completed),
        "front_size": len(front),
        "stopped_at_design": stopped_at,
        "wall_s": round(wall, 3),
    }
    files["meta"].write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")

    return ExplorationReport(
        designs_evaluated=len(evaluated),
        cells_executed=executed,
        cells_resumed=len(completed),
        front=front,
        vectors=vectors,
        stopped_at_design=stopped_at,
        wall_s=wall,
        out_dir=out_dir,
        files=files,
    )


def validate_inputs(space_path: str, scenario_paths: list[str]) -> tuple[str, list[str]]:
    """Static checks only; returns (summary line, violation list)."""
    from flowdse.designspace import DesignSpaceError
    from flowdse.scenario import ScenarioError

    violations: list[str] = []
    space = None
    try:
        space = load_design_space(space_path)
    except DesignSpaceError as err:
        violations.append(str(err))

    n_configs = n_distinct = 0
    if space is not None:
        configs = list(enumerate_configurations(space))
        n_configs = len(configs)
        n_distinct = len(deduplicate(space, configs))

    for path in scenario_paths:
        try:
            scenario = load_scenario(path)
        except ScenarioError as err:
            violations.append(str(err))
            continue
        if space is not None:
            violations.extend(
                compatibility_issues(scenario, space.destination_tags, space.lanes)
            )

    summary = (
        f"{n_configs} configurations, {n_distinct} distinct, "
        f"{len(violations)} violations"
    )
    return summary, violations
