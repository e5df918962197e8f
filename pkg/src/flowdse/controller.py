"""Production control: sliding weight windows, histogram-driven strategy computation.

The controller watches measured fillet weights per lane, and every recompute
interval rebuilds a per-lane strategy that maps weight bins to (recipe,
optional trim instruction). Strategy construction walks recipes in priority
order; for each it grows a direct weight range from the recipe's lower limit,
and if the predicted throughput still misses the target, grows a trim range
above the upper limit on lanes that can trim. Assigned bins become unavailable
to later recipes. Unassigned bins fall through to the default recipe.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field


@dataclass(frozen=True)
class ControllerConfig:
    """Tuning knobs for the control loop.

    window_size: weights retained per lane for throughput prediction.
    recompute_interval_s: seconds between strategy recomputations.
    bin_width_g: histogram granularity in grams.
    warmup_s: seconds before the first strategy exists; until then every
        fillet goes to the default destination.
    """

    window_size: int = 1000
    recompute_interval_s: float = 10.0
    bin_width_g: float = 10.0
    warmup_s: float = 60.0

    def __post_init__(self) -> None:
        if self.window_size < 1:
            raise ValueError(f"window_size must be >= 1, got {self.window_size}")
        if self.recompute_interval_s <= 0:
            raise ValueError("recompute_interval_s must be positive")
        if self.bin_width_g <= 0:
            raise ValueError("bin_width_g must be positive")
        if self.warmup_s < 0:
            raise ValueError("warmup_s must be non-negative")


@dataclass(frozen=True)
class RouteCatalog:
    """Static routing facts derived from one design's wiring.

    reachable: lane id -> destination tags reachable from its assignment stage.
    has_trimmer: lane id -> whether a trimming module lies on the lane's path.
    distributor_ports: distributor id -> (out port -> reachable tag frozenset).
    """

    reachable: dict[str, frozenset[str]]
    has_trimmer: dict[str, bool]
    distributor_ports: dict[str, dict[str, frozenset[str]]]

    @property
    def lanes(self) -> list[str]:
        return list(self.reachable)


@dataclass(frozen=True)
class BinAssignment:
    recipe_index: int
    destination: str
    trim_g: float | None  # None = send as-is


@dataclass
class LaneWindow:
    """Sliding window of the most recent weights on one lane, plus its histogram."""

    lane: str
    window_size: int
    bin_width_g: float
    samples: deque = field(init=False)  # (time_s, weight_g) pairs
    counts: dict[int, int] = field(init=False, default_factory=dict)

    def __post_init__(self) -> None:
        self.samples = deque(maxlen=self.window_size)

    def bin_of(self, weight_g: float) -> int:
        return int(weight_g // self.bin_width_g)

    def record(self, weight_g: float, time_s: float) -> None:
        if len(self.samples) == self.window_size:
            _, evicted = self.samples[0]
            old_bin = self.bin_of(evicted)
            remaining = self.counts[old_bin] - 1
            if remaining:
                self.counts[old_bin] = remaining
            else:
                del self.counts[old_bin]
        self.samples.append((time_s, weight_g))
        new_bin = self.bin_of(weight_g)
        self.counts[new_bin] = self.counts.get(new_bin, 0) + 1

    def span_s(self) -> float:
        if len(self.samples) < 2:
            return 0.0
        return self.samples[-1][0] - self.samples[0][0]


class ProductionController:
    """Per-replication control state: one window per lane, one strategy per lane."""

    def __init__(self, config: ControllerConfig, routes: RouteCatalog, recipes) -> None:
        self.config = config
        self.routes = routes
        self.recipes = list(recipes)
        defaults = [i for i, r in enumerate(self.recipes) if r.is_default]
        if len(defaults) != 1:
            raise ValueError(f"expected exactly one default recipe, found {len(defaults)}")
        self.default_index = defaults[0]
        self.default_destination = self.recipes[self.default_index].destination
        # priority order: smaller number first, declaration order breaks ties
        self.priority_order = sorted(
            (i for i in range(len(self.recipes)) if i != self.default_index),
            key=lambda i: (self.recipes[i].priority, i),
        )
        self.windows = {
            lane: LaneWindow(lane, config.window_size, config.bin_width_g)
            for lane in routes.lanes
        }
        self.strategies: dict[str, dict[int, BinAssignment]] = {}
        self.recomputes = 0
        self.last_computed_s: float | None = None

    # -- measurement side ---------------------------------------------------

    def record_weight(self, lane: str, weight_g: float, time_s: float) -> None:
        self.windows[lane].record(weight_g, time_s)

    def predict_throughput(self, lane: str, bins) -> float:
        """Observed fillets/minute for the given bin set, from the lane window.

        The window's time span is clamped below by one recompute interval so a
        nearly-simultaneous burst of samples cannot predict absurd rates.
        """
        window = self.windows[lane]
        if not window.samples:
            return 0.0
        count = sum(window.counts.get(b, 0) for b in bins)
        span = max(window.span_s(), self.config.recompute_interval_s)
        return count / (span / 60.0)

    # -- strategy side ------------------------------------------------------

    def recompute(self, time_s: float) -> None:
        self.strategies = self.compute_strategies()
        self.recomputes += 1
        self.last_computed_s = time_s

    def compute_strategies(self) -> dict[str, dict[int, BinAssignment]]:
        binw = self.config.bin_width_g
        available: dict[str, set[int]] = {}
        for lane, window in self.windows.items():
            available[lane] = set(window.counts)
        strategies: dict[str, dict[int, BinAssignment]] = {
            lane: {} for lane in self.windows
        }

        for idx in self.priority_order:
            recipe = self.recipes[idx]
            lanes = [
                lane
                for lane in self.windows
                if recipe.destination in self.routes.reachable[lane]
            ]
            if not lanes:
                continue  # unservable here; attainment stays 0

            target = recipe.target_per_min
            chosen_direct: list[int] = []
            predicted = 0.0

            # direct phase: grow the range one bin at a time from the lower limit;
            # a bin qualifies only if it lies wholly inside [min, max]
            b = math.ceil(recipe.min_weight_g / binw)
            while (b + 1) * binw <= recipe.max_weight_g and predicted < target:
                predicted += self._pooled_rate(lanes, b, available)
                chosen_direct.append(b)
                b += 1

            # trim phase: only lanes that can physically trim, starting at the
            # first bin holding weights above the upper limit. Every trim bin's
            # post-trim weights land in [max - bin width, max), so the phase is
            # skipped entirely when that interval pokes below the lower limit.
            trim_lanes = [lane for lane in lanes if self.routes.has_trimmer[lane]]
            chosen_trim: list[tuple[int, float]] = []
            if (
                predicted < target
                and trim_lanes
                and recipe.max_weight_g - binw >= recipe.min_weight_g
            ):
                b = int(recipe.max_weight_g // binw)
                while predicted < target:
                    trim = (b + 1) * binw - recipe.max_weight_g
                    if trim > recipe.max_trim_g:
                        break
                    predicted += self._pooled_rate(trim_lanes, b, available)
                    chosen_trim.append((b, trim))
                    b += 1

            for b in chosen_direct:
                assignment = BinAssignment(idx, recipe.destination, None)
                for lane in lanes:
                    if b in available[lane]:
                        available[lane].discard(b)
                        strategies[lane][b] = assignment
            for b, trim in chosen_trim:
                assignment = BinAssignment(idx, recipe.destination, trim)
                for lane in trim_lanes:
                    if b in available[lane]:
                        available[lane].discard(b)
                        strategies[lane][b] = assignment

        return strategies

    def _pooled_rate(self, lanes, b: int, available) -> float:
        return sum(
            self.predict_throughput(lane, (b,))
            for lane in lanes
            if b in available[lane]
        )

    def lookup(self, lane: str, weight_g: float) -> BinAssignment:
        """Bin lookup for one fillet; unassigned bins fall to the default recipe."""
        strategy = self.strategies.get(lane)
        if strategy:
            hit = strategy.get(int(weight_g // self.config.bin_width_g))
            if hit is not None:
                return hit
        return BinAssignment(self.default_index, self.default_destination, None)
