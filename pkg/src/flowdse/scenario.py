"""Scenario definitions: recipe tables, per-lane inflow, horizon, controller block.

A scenario file is JSON with four parts: an ordered `recipes` array containing
exactly one default recipe (priority "*", the catch-all), an `inflow` array
giving each lane's arrival rate and weight source, `horizon_s`, and an
optional `controller` block overriding the control-loop defaults.
Weights come either from an empirical sample file (one gram value per line,
drawn with replacement) or a truncated normal distribution.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from flowdse.controller import ControllerConfig

log = logging.getLogger(__name__)


class ScenarioError(ValueError):
    """A scenario file failed validation; message names the offending field."""


@dataclass(frozen=True)
class Recipe:
    destination: str
    priority: int | None  # None marks the default ("*" in the file)
    target_per_min: float | None
    min_weight_g: float
    max_weight_g: float
    max_trim_g: float

    @property
    def is_default(self) -> bool:
        return self.priority is None

    def accepts(self, post_trim_weight_g: float) -> bool:
        return self.min_weight_g <= post_trim_weight_g <= self.max_weight_g


@dataclass(frozen=True)
class TruncatedNormalWeights:
    mean_g: float
    stddev_g: float
    lower_g: float
    upper_g: float

    def sample(self, rng) -> float:
        while True:
            w = rng.gauss(self.mean_g, self.stddev_g)
            if self.lower_g <= w <= self.upper_g:
                return w

    def to_dict(self) -> dict:
        return {
            "kind": "truncated_normal",
            "mean_g": self.mean_g,
            "stddev_g": self.stddev_g,
            "lower_g": self.lower_g,
            "upper_g": self.upper_g,
        }


@dataclass(frozen=True)
class EmpiricalWeights:
    """Weight samples from a file, drawn with replacement."""

    source_file: str
    values: tuple[float, ...] = field(repr=False)

    def sample(self, rng) -> float:
        return self.values[rng.randrange(len(self.values))]

    def to_dict(self) -> dict:
        return {"kind": "empirical", "file": self.source_file}


@dataclass(frozen=True)
class LaneInflow:
    lane: str
    rate_per_min: float
    weights: TruncatedNormalWeights | EmpiricalWeights
    process: str = "deterministic"  # or "poisson"


@dataclass(frozen=True)
class Scenario:
    scenario_id: str
    recipes: tuple[Recipe, ...]
    inflow: tuple[LaneInflow, ...]
    horizon_s: float
    controller: ControllerConfig

    @property
    def default_recipe(self) -> Recipe:
        return next(r for r in self.recipes if r.is_default)

    @property
    def destinations(self) -> set[str]:
        return {r.destination for r in self.recipes}


def _parse_recipe(raw: dict, pos: int) -> Recipe:
    where = f"recipes[{pos}]"
    try:
        destination = raw["destination"]
        priority_raw = raw["priority"]
        target_raw = raw["target_throughput_per_min"]
        min_w = float(raw["min_fillet_weight_g"])
        max_w = float(raw["max_fillet_weight_g"])
        max_trim = float(raw["max_trim_weight_g"])
    except KeyError as missing:
        raise ScenarioError(f"{where}: missing field {missing}") from None

    if priority_raw == "*":
        priority = None
        if target_raw != "*":
            raise ScenarioError(f"{where}: default recipe must have target '*'")
        target = None
    else:
        priority = int(priority_raw)
        if priority < 1:
            raise ScenarioError(f"{where}: priority must be >= 1, got {priority}")
        if target_raw == "*":
            raise ScenarioError(f"{where}: only the default recipe may use target '*'")
        target = float(target_raw)
        if target <= 0:
            raise ScenarioError(f"{where}: target throughput must be positive")

    if not (0 <= min_w < max_w):
        raise ScenarioError(f"{where}: need 0 <= min < max, got [{min_w}, {max_w}]")
    if max_trim < 0:
        raise ScenarioError(f"{where}: max trim weight must be >= 0")
    return Recipe(destination, priority, target, min_w, max_w, max_trim)


def _parse_weights(raw: dict, base_dir: Path, where: str):
    kind = raw.get("kind")
    if kind == "truncated_normal":
        source = TruncatedNormalWeights(
            float(raw["mean_g"]),
            float(raw["stddev_g"]),
            float(raw["lower_g"]),
            float(raw["upper_g"]),
        )
        if source.stddev_g <= 0:
            raise ScenarioError(f"{where}: stddev_g must be positive")
        if not (0 <= source.lower_g < source.upper_g):
            raise ScenarioError(f"{where}: truncation bounds must satisfy 0 <= lower < upper")
        return source
    if kind == "empirical":
        name = raw["file"]
        path = Path(name)
        if not path.is_absolute():
            path = base_dir / path
        values = load_weight_samples(path)
        return EmpiricalWeights(name, values)
    raise ScenarioError(f"{where}: unknown weight source kind {kind!r}")


def load_weight_samples(path: Path) -> tuple[float, ...]:
    """Read a plain-text weight file: one positive gram value per line."""
    try:
        lines = path.read_text(encoding="utf-8").split()
    except OSError as err:
        raise ScenarioError(f"cannot read weight file {path}: {err}") from None
    if not lines:
        raise ScenarioError(f"weight file {path} is empty")
    values = []
    for i, token in enumerate(lines, start=1):
        try:
            w = float(token)
        except ValueError:
            raise ScenarioError(f"{path}, entry {i}: not a number: {token!r}") from None
        if w <= 0:
            raise ScenarioError(f"{path}, entry {i}: weights must be positive, got {w}")
        values.append(w)
    return tuple(values)


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as err:
        raise ScenarioError(f"cannot read {path}: {err}") from None
    except json.JSONDecodeError as err:
        raise ScenarioError(f"{path} is not valid JSON: {err}") from None
    return parse_scenario(raw, base_dir=path.parent, fallback_id=path.stem)


def parse_scenario(raw: dict, base_dir: Path, fallback_id: str = "scenario") -> Scenario:
    scenario_id = raw.get("id", fallback_id)
    recipes_raw = raw.get("recipes", [])
    if not recipes_raw:
        raise ScenarioError(f"{scenario_id}: recipe list is empty")
    recipes = tuple(_parse_recipe(r, i) for i, r in enumerate(recipes_raw))

    defaults = [r for r in recipes if r.is_default]
    if len(defaults) != 1:
        raise ScenarioError(
            f"{scenario_id}: expected exactly one default recipe, found {len(defaults)}"
        )
    if defaults[0].max_trim_g != 0:
        raise ScenarioError(f"{scenario_id}: default recipe must have max trim 0")

    priorities = [r.priority for r in recipes if not r.is_default]
    if len(priorities) != len(set(priorities)):
        log.warning(
            "%s: duplicate recipe priorities; declaration order breaks ties",
            scenario_id,
        )

    inflow_raw = raw.get("inflow", [])
    if not inflow_raw:
        raise ScenarioError(f"{scenario_id}: inflow list is empty")
    inflow = []
    seen_lanes = set()
    for i, lane_raw in enumerate(inflow_raw):
        where = f"inflow[{i}]"
        lane = lane_raw.get("lane")
        if not lane:
            raise ScenarioError(f"{where}: missing lane id")
        if lane in seen_lanes:
            raise ScenarioError(f"{where}: duplicate lane id {lane!r}")
        seen_lanes.add(lane)
        rate = float(lane_raw["rate_per_min"])
        if rate <= 0:
            raise ScenarioError(f"{where}: rate_per_min must be positive")
        process = lane_raw.get("process", "deterministic")
        if process not in ("deterministic", "poisson"):
            raise ScenarioError(f"{where}: unknown arrival process {process!r}")
        weights = _parse_weights(lane_raw["weights"], base_dir, where)
        inflow.append(LaneInflow(lane, rate, weights, process))

    horizon = float(raw.get("horizon_s", 0))
    if horizon <= 0:
        raise ScenarioError(f"{scenario_id}: horizon_s must be positive")

    ctrl_raw = raw.get("controller", {})
    try:
        controller = ControllerConfig(
            window_size=int(ctrl_raw.get("N", ControllerConfig.window_size)),
            recompute_interval_s=float(
                ctrl_raw.get("t_s", ControllerConfig.recompute_interval_s)
            ),
            bin_width_g=float(ctrl_raw.get("bin_width_g", ControllerConfig.bin_width_g)),
            warmup_s=float(ctrl_raw.get("warmup_s", ControllerConfig.warmup_s)),
        )
    except ValueError as err:
        raise ScenarioError(f"{scenario_id}: controller block: {err}") from None

    return Scenario(scenario_id, recipes, tuple(inflow), horizon, controller)


def scenario_to_dict(s: Scenario) -> dict:
    """Inverse of parse_scenario, for round-trip checks and re-export."""
    return {
        "id": s.scenario_id,
        "recipes": [
            {
                "destination": r.destination,
                "priority": "*" if r.is_default else r.priority,
                "target_throughput_per_min": "*" if r.is_default else r.target_per_min,
                "min_fillet_weight_g": r.min_weight_g,
                "max_fillet_weight_g": r.max_weight_g,
                "max_trim_weight_g": r.max_trim_g,
            }
            for r in s.recipes
        ],
        "inflow": [
            {
                "lane": lane.lane,
                "rate_per_min": lane.rate_per_min,
                "process": lane.process,
                "weights": lane.weights.to_dict(),
            }
            for lane in s.inflow
        ],
        "horizon_s": s.horizon_s,
        "controller": {
            "N": s.controller.window_size,
            "t_s": s.controller.recompute_interval_s,
            "bin_width_g": s.controller.bin_width_g,
            "warmup_s": s.controller.warmup_s,
        },
    }


def compatibility_issues(
    scenario: Scenario, destination_tags: set[str], origin_lanes: list[str]
) -> list[str]:
    """Cross-checks against a design space: unknown tags, lane-count mismatch.

    Inflow entries feed Origin modules positionally (inflow[i] -> i-th Origin
    in declaration order), so only the counts must agree; scenario lane labels
    are free-form.
    """
    issues = []
    for r in scenario.recipes:
        if r.destination not in destination_tags:
            issues.append(
                f"{scenario.scenario_id}: recipe destination {r.destination!r} "
                f"not among design-space destinations {sorted(destination_tags)}"
            )
    if len(scenario.inflow) != len(origin_lanes):
        issues.append(
            f"{scenario.scenario_id}: {len(scenario.inflow)} inflow lanes but the "
            f"design space has {len(origin_lanes)} origin modules"
        )
    return issues
