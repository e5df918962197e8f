"""Design spaces: module declarations, allowed-connection matrix, enumeration, dedup.

A design space is a set of module declarations plus a boolean matrix saying
which out-port may feed which in-port. Enumeration expands a frontier of
unconnected out-ports starting from the Origin modules, picking one allowed
target per out-port, and yields every complete wiring that satisfies the
validity rules:

  * all-or-none: once a module is reached, every one of its out-ports must be
    connected (dead ends are pruned, not yielded);
  * single feed: in-ports take exactly one incoming connection, except
    merge-capable destinations which take any number;
  * required modules (if declared) must end up connected;
  * every flow terminates in a Destination, and the wiring is acyclic; both
    fall out of the frontier construction, and are re-checked for hand-built
    configurations by validate_configuration.

Deduplication collapses configurations that differ only by relabeling
interchangeable module instances. Two modules are interchangeable when their
declarations match and swapping them (ports mapped positionally) maps the
allowed-connection set onto itself; the canonical key is the smallest edge
list over all relabelings within those classes.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator

from flowdse.controller import RouteCatalog


class DesignSpaceError(ValueError):
    """A design-space file failed validation; message names the offending part."""


class ModuleKind(str, Enum):
    ORIGIN = "origin"
    WEIGHING = "weighing"
    ASSIGNMENT = "assignment"
    TRIMMING = "trimming"
    DISTRIBUTION = "distribution"
    DESTINATION = "destination"


# (in-port count, out-port count) per kind; destinations take one logical
# in-port that may receive several connections
PORT_SHAPES = {
    ModuleKind.ORIGIN: (0, 1),
    ModuleKind.WEIGHING: (1, 1),
    ModuleKind.ASSIGNMENT: (1, 1),
    ModuleKind.TRIMMING: (1, 1),
    ModuleKind.DISTRIBUTION: (1, 2),
    ModuleKind.DESTINATION: (1, 0),
}


@dataclass(frozen=True)
class ModuleSpec:
    module_id: str
    kind: ModuleKind
    in_ports: tuple[str, ...] = ()
    out_ports: tuple[str, ...] = ()
    latency_s: float = 1.0
    destination_tag: str | None = None
    required: bool = False
    merge_allowed: bool = False

    def port_key(self, port: str) -> str:
        return f"{self.module_id}.{port}"

    def signature(self) -> tuple:
        """Everything that must match for two modules to be interchangeable."""
        return (
            self.kind,
            len(self.in_ports),
            len(self.out_ports),
            self.latency_s,
            self.destination_tag,
            self.required,
            self.merge_allowed,
        )


@dataclass(frozen=True)
class DesignSpace:
    space_id: str
    modules: tuple[ModuleSpec, ...]
    allowed: tuple[tuple[str, str], ...]

    @cached_property
    def by_id(self) -> dict[str, ModuleSpec]:
        return {m.module_id: m for m in self.modules}

    @cached_property
    def port_owner(self) -> dict[str, ModuleSpec]:
        owners: dict[str, ModuleSpec] = {}
        for m in self.modules:
            for p in m.in_ports + m.out_ports:
                owners[m.port_key(p)] = m
        return owners

    @cached_property
    def choices(self) -> dict[str, tuple[str, ...]]:
        """Out-port -> allowed in-ports, in matrix declaration order."""
        table: dict[str, list[str]] = {
            m.port_key(p): [] for m in self.modules for p in m.out_ports
        }
        for out_port, in_port in self.allowed:
            table[out_port].append(in_port)
        return {k: tuple(v) for k, v in table.items()}

    @cached_property
    def origins(self) -> tuple[ModuleSpec, ...]:
        return tuple(m for m in self.modules if m.kind == ModuleKind.ORIGIN)

    @cached_property
    def destination_tags(self) -> set[str]:
        return {m.destination_tag for m in self.modules if m.kind == ModuleKind.DESTINATION}

    @property
    def lanes(self) -> list[str]:
        return [m.module_id for m in self.origins]


@dataclass(frozen=True)
class DesignConfiguration:
    """One complete wiring of the space: a chosen in-port per connected out-port."""

    index: int
    chosen: tuple[tuple[str, str], ...]  # sorted (out-port, in-port) pairs
    connected: frozenset[str] = field(compare=False)

    @cached_property
    def edge_map(self) -> dict[str, str]:
        return dict(self.chosen)


def load_design_space(path: str | Path) -> DesignSpace:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as err:
        raise DesignSpaceError(f"cannot read {path}: {err}") from None
    except json.JSONDecodeError as err:
        raise DesignSpaceError(f"{path} is not valid JSON: {err}") from None
    return parse_design_space(raw, fallback_id=path.stem)


def parse_design_space(raw: dict, fallback_id: str = "space") -> DesignSpace:
    space_id = raw.get("id", fallback_id)
    modules = []
    for i, m in enumerate(raw.get("modules", [])):
        where = f"modules[{i}]"
        try:
            kind = ModuleKind(m["kind"])
            module_id = m["id"]
        except KeyError as missing:
            raise DesignSpaceError(f"{where}: missing field {missing}") from None
        except ValueError:
            raise DesignSpaceError(f"{where}: unknown kind {m.get('kind')!r}") from None
        tag = m.get("destination_tag")
        spec = ModuleSpec(
            module_id=module_id,
            kind=kind,
            in_ports=tuple(m.get("in_ports", ())),
            out_ports=tuple(m.get("out_ports", ())),
            latency_s=float(m.get("latency_s", 1.0)),
            destination_tag=tag,
            required=bool(m.get("required", False)),
            merge_allowed=bool(m.get("merge_allowed", tag == "fillet_strips")),
        )
        modules.append(spec)
    allowed = [tuple(pair) for pair in raw.get("allowed", [])]
    space = DesignSpace(space_id, tuple(modules), tuple(allowed))
    problems = space_problems(space)
    if problems:
        raise DesignSpaceError(f"{space_id}: " + "; ".join(problems))
    return space


def space_problems(space: DesignSpace) -> list[str]:
    """Static well-formedness checks; returns human-readable violations."""
    problems = []
    seen_ids = set()
    seen_tags = set()
    for m in space.modules:
        if m.module_id in seen_ids:
            problems.append(f"duplicate module id {m.module_id!r}")
        seen_ids.add(m.module_id)
        n_in, n_out = PORT_SHAPES[m.kind]
        if len(m.in_ports) != n_in or len(m.out_ports) != n_out:
            problems.append(
                f"{m.module_id}: {m.kind.value} needs {n_in} in / {n_out} out ports, "
                f"has {len(m.in_ports)}/{len(m.out_ports)}"
            )
        if m.latency_s < 0:
            problems.append(f"{m.module_id}: negative latency")
        if m.kind == ModuleKind.DESTINATION:
            if not m.destination_tag:
                problems.append(f"{m.module_id}: destination without a tag")
            elif m.destination_tag in seen_tags:
                problems.append(f"{m.module_id}: duplicate destination tag {m.destination_tag!r}")
            seen_tags.add(m.destination_tag)
        elif m.destination_tag:
            problems.append(f"{m.module_id}: only destinations carry a tag")
    if not any(m.kind == ModuleKind.ORIGIN for m in space.modules):
        problems.append("no origin modules")
    if not any(m.kind == ModuleKind.DESTINATION for m in space.modules):
        problems.append("no destination modules")

    ports = set(space.port_owner)
    out_ports = {m.port_key(p) for m in space.modules for p in m.out_ports}
    in_ports = ports - out_ports
    seen_pairs = set()
    for out_port, in_port in space.allowed:
        if out_port not in out_ports:
            problems.append(f"allowed pair references unknown out-port {out_port!r}")
        elif in_port not in in_ports:
            problems.append(f"allowed pair references unknown in-port {in_port!r}")
        if (out_port, in_port) in seen_pairs:
            problems.append(f"duplicate allowed pair {out_port} -> {in_port}")
        seen_pairs.add((out_port, in_port))
    for out_port, targets in space.choices.items():
        if not targets:
            problems.append(f"out-port {out_port} has no allowed connection (empty row)")
    return problems


def enumerate_configurations(space: DesignSpace) -> Iterator[DesignConfiguration]:
    """Yield every valid configuration exactly once, in a deterministic order.

    Backtracking over a discovery-ordered frontier of out-ports; the yield
    order (and so each configuration's index) is fixed by module and matrix
    declaration order.
    """
    choices = space.choices
    owner = space.port_owner
    required = {m.module_id for m in space.modules if m.required}

    frontier: list[str] = []
    connected: set[str] = set()
    for origin in space.origins:
        connected.add(origin.module_id)
        frontier.extend(origin.port_key(p) for p in origin.out_ports)

    chosen: dict[str, str] = {}
    feeds: dict[str, int] = {}
    counter = itertools.count()

    def expand(pos: int) -> Iterator[DesignConfiguration]:
        if pos == len(frontier):
            if required <= connected:
                yield DesignConfiguration(
                    index=next(counter),
                    chosen=tuple(sorted(chosen.items())),
                    connected=frozenset(connected),
                )
            return
        out_port = frontier[pos]
        for in_port in choices[out_port]:
            target = owner[in_port]
            taken = feeds.get(in_port, 0)
            if taken and not (target.kind == ModuleKind.DESTINATION and target.merge_allowed):
                continue
            chosen[out_port] = in_port
            feeds[in_port] = taken + 1
            newly_reached = target.module_id not in connected
            if newly_reached:
                connected.add(target.module_id)
                frontier.extend(target.port_key(p) for p in target.out_ports)
            yield from expand(pos + 1)
            if newly_reached:
                connected.discard(target.module_id)
                if target.out_ports:
                    del frontier[-len(target.out_ports):]
            feeds[in_port] = taken
            del chosen[out_port]

    yield from expand(0)


def validate_configuration(space: DesignSpace, config: DesignConfiguration) -> list[str]:
    """Full validity audit for one configuration (hand-built ones included)."""
    problems = []
    owner = space.port_owner
    edge_map = config.edge_map
    allowed = set(space.allowed)
    feeds: dict[str, int] = {}
    reached: set[str] = {m.module_id for m in space.origins}

    for out_port, in_port in config.chosen:
        if (out_port, in_port) not in allowed:
            problems.append(f"connection {out_port} -> {in_port} is not in the matrix")
            continue
        feeds[in_port] = feeds.get(in_port, 0) + 1
        reached.add(owner[in_port].module_id)

    for in_port, count in feeds.items():
        target = owner[in_port]
        limit_one = target.kind != ModuleKind.DESTINATION or not target.merge_allowed
        if count > 1 and limit_one:
            problems.append(f"in-port {in_port} fed by {count} connections")

    if reached != set(config.connected):
        problems.append("connected-module set does not match the chosen edges")

    for module_id in config.connected:
        m = space.by_id.get(module_id)
        if m is None:
            problems.append(f"unknown module {module_id!r}")
            continue
        wired_out = [p for p in m.out_ports if m.port_key(p) in edge_map]
        if module_id in reached and len(wired_out) != len(m.out_ports):
            problems.append(f"{module_id}: reached but not all out-ports connected")

    for m in space.modules:
        if m.required and m.module_id not in config.connected:
            problems.append(f"required module {m.module_id} is not connected")

    # cycle check over module-level edges, destinations excluded as sinks
    succ: dict[str, list[str]] = {}
    for out_port, in_port in config.chosen:
        src = owner[out_port].module_id
        dst = owner[in_port].module_id
        if space.by_id[dst].kind != ModuleKind.DESTINATION:
            succ.setdefault(src, []).append(dst)
    state: dict[str, int] = {}

    def has_cycle(node: str) -> bool:
        state[node] = 1
        for nxt in succ.get(node, ()):
            mark = state.get(nxt)
            if mark == 1 or (mark is None and has_cycle(nxt)):
                return True
        state[node] = 2
        return False

    if any(state.get(n) is None and has_cycle(n) for n in list(succ)):
        problems.append("cycle among non-destination modules")

    for origin in space.origins:
        if origin.module_id in config.connected and not _reaches_destination(
            space, config, origin.module_id
        ):
            problems.append(f"{origin.module_id}: no destination reachable")
    return problems


def _reaches_destination(space: DesignSpace, config: DesignConfiguration, start: str) -> bool:
    owner = space.port_owner
    edge_map = config.edge_map
    todo = [start]
    seen = set()
    while todo:
        module_id = todo.pop()
        if module_id in seen:
            continue
        seen.add(module_id)
        m = space.by_id[module_id]
        if m.kind == ModuleKind.DESTINATION:
            return True
        for p in m.out_ports:
            in_port = edge_map.get(m.port_key(p))
            if in_port is not None:
                todo.append(owner[in_port].module_id)
    return False


# -- interchangeability and canonical keys ----------------------------------


def interchangeable_classes(space: DesignSpace) -> list[tuple[str, ...]]:
    """Groups of modules whose pairwise swap leaves the allowed matrix unchanged."""
    allowed = set(space.allowed)
    groups: dict[str, str] = {}  # module id -> class leader

    def find(x: str) -> str:
        while groups[x] != x:
            groups[x] = groups[groups[x]]
            x = groups[x]
        return x

    candidates = [m for m in space.modules if m.kind != ModuleKind.ORIGIN]
    for m in candidates:
        groups[m.module_id] = m.module_id
    for a, b in itertools.combinations(candidates, 2):
        if a.signature() != b.signature():
            continue
        if _swap_preserves(allowed, a, b):
            ra, rb = find(a.module_id), find(b.module_id)
            if ra != rb:
                groups[rb] = ra

    classes: dict[str, list[str]] = {}
    for m in candidates:
        classes.setdefault(find(m.module_id), []).append(m.module_id)
    return [tuple(members) for members in classes.values() if len(members) > 1]


def _port_swap_map(a: ModuleSpec, b: ModuleSpec) -> dict[str, str]:
    mapping = {}
    for pa, pb in zip(a.in_ports + a.out_ports, b.in_ports + b.out_ports):
        mapping[a.port_key(pa)] = b.port_key(pb)
        mapping[b.port_key(pb)] = a.port_key(pa)
    return mapping


def _swap_preserves(allowed: set[tuple[str, str]], a: ModuleSpec, b: ModuleSpec) -> bool:
    mapping = _port_swap_map(a, b)
    for out_port, in_port in allowed:
        image = (mapping.get(out_port, out_port), mapping.get(in_port, in_port))
        if image not in allowed:
            return False
    return True


def canonical_key(
    space: DesignSpace,
    config: DesignConfiguration,
    classes: list[tuple[str, ...]] | None = None,
) -> tuple[tuple[str, str], ...]:
    """Smallest edge-list encoding over relabelings of interchangeable modules."""
    if classes is None:
        classes = interchangeable_classes(space)
    if not classes:
        return config.chosen

    best = config.chosen
    per_class = [list(itertools.permutations(cls)) for cls in classes]
    for combo in itertools.product(*per_class):
        mapping: dict[str, str] = {}
        identity = True
        for cls, perm in zip(classes, combo):
            for src, dst in zip(cls, perm):
                if src == dst:
                    continue
                identity = False
                a, b = space.by_id[src], space.by_id[dst]
                for pa, pb in zip(a.in_ports + a.out_ports, b.in_ports + b.out_ports):
                    mapping[a.port_key(pa)] = b.port_key(pb)
        if identity:
            continue
        relabeled = tuple(
            sorted(
                (mapping.get(o, o), mapping.get(i, i)) for o, i in config.chosen
            )
        )
        if relabeled < best:
            best = relabeled
    return best


def deduplicate(
    space: DesignSpace, configs: Iterable[DesignConfiguration]
) -> list[tuple[DesignConfiguration, int]]:
    """Collapse configurations sharing a canonical key.

    Returns (representative, multiplicity) pairs in first-seen order; the
    representative is the member with the smallest raw edge list.
    """
    classes = interchangeable_classes(space)
    table: dict[tuple, list] = {}
    order: list[tuple] = []
    for config in configs:
        key = canonical_key(space, config, classes)
        entry = table.get(key)
        if entry is None:
            table[key] = [config, 1]
            order.append(key)
        else:
            entry[1] += 1
            if config.chosen < entry[0].chosen:
                entry[0] = config
    return [(table[key][0], table[key][1]) for key in order]


# -- route derivation --------------------------------------------------------


def derive_routes(space: DesignSpace, config: DesignConfiguration) -> RouteCatalog:
    """Static routing facts for the controller, from one configuration's wiring.

    A lane "has trimming" only when a trimming module sits on the trunk between
    its assignment stage and the first distributor, i.e. before any branching:
    only then is a trim instruction guaranteed to be executed whatever the
    destination.
    """
    owner = space.port_owner
    edge_map = config.edge_map

    def successors(module_id: str) -> list[str]:
        m = space.by_id[module_id]
        out = []
        for p in m.out_ports:
            in_port = edge_map.get(m.port_key(p))
            if in_port is not None:
                out.append(owner[in_port].module_id)
        return out

    reach_memo: dict[str, frozenset[str]] = {}

    def reach(module_id: str) -> frozenset[str]:
        cached = reach_memo.get(module_id)
        if cached is not None:
            return cached
        m = space.by_id[module_id]
        if m.kind == ModuleKind.DESTINATION:
            tags = frozenset({m.destination_tag})
        else:
            tags = frozenset().union(*[reach(s) for s in successors(module_id)])
        reach_memo[module_id] = tags
        return tags

    reachable: dict[str, frozenset[str]] = {}
    has_trimmer: dict[str, bool] = {}
    for origin in space.origins:
        if origin.module_id not in config.connected:
            continue
        # walk the trunk to the assignment stage, then on to the first branch
        node = origin.module_id
        assignment_seen = False
        trimmer_on_trunk = False
        while True:
            m = space.by_id[node]
            if m.kind == ModuleKind.ASSIGNMENT:
                assignment_seen = True
                reachable[origin.module_id] = reach(node)
            if m.kind == ModuleKind.TRIMMING and assignment_seen:
                trimmer_on_trunk = True
            nxt = successors(node)
            if len(nxt) != 1 or m.kind == ModuleKind.DESTINATION:
                break
            node = nxt[0]
        if origin.module_id not in reachable:
            reachable[origin.module_id] = reach(origin.module_id)
        has_trimmer[origin.module_id] = trimmer_on_trunk

    distributor_ports: dict[str, dict[str, frozenset[str]]] = {}
    for m in space.modules:
        if m.kind != ModuleKind.DISTRIBUTION or m.module_id not in config.connected:
            continue
        ports = {}
        for p in m.out_ports:
            in_port = edge_map.get(m.port_key(p))
            if in_port is not None:
                ports[p] = reach(owner[in_port].module_id)
        distributor_ports[m.module_id] = ports

    return RouteCatalog(reachable, has_trimmer, distributor_ports)
