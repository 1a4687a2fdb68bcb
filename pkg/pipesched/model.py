"""
Core model: task graphs, clusters, link/execution cost models and schedules
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from pipesched.errors import ModelError, ScheduleError, ValidationError
from utils.logger import Logger

logger = Logger(__name__)

PORTION_TOL = 1e-9


@dataclass(frozen=True, order=True)
class Edge:
    parent: str
    child: str
    file_size: int


class TaskGraph:
    """
    DAG of tasks whose edges carry the size (bytes) of the file sent from
    parent to child. Tasks created by duplication remember their origin task,
    which is what execution costs are looked up by.
    """

    def __init__(self, tasks: Iterable[str], edges: Iterable[Union[Edge, Sequence]],
                 entry_task: str, exit_task: str, origins: Optional[Dict[str, str]] = None):
        self.g = nx.DiGraph()
        self.entry_task = entry_task
        self.exit_task = exit_task
        self._origins: Dict[str, str] = dict(origins or {})
        self.duplicate_edges: List[Tuple[str, str]] = []
        for task in tasks:
            self.g.add_node(task, declared=True)
        for edge in edges:
            parent, child, size = (edge.parent, edge.child, edge.file_size) if isinstance(edge, Edge) else edge
            if self.g.has_edge(parent, child):
                self.duplicate_edges.append((parent, child))
                continue
            # endpoints missing from the task list stay undeclared; validate() reports them
            self.g.add_edge(parent, child, file_size=int(size))

    # -- queries -------------------------------------------------------------

    @property
    def tasks(self) -> List[str]:
        return sorted(n for n, declared in self.g.nodes(data="declared") if declared)

    @property
    def edges(self) -> List[Edge]:
        return sorted(Edge(p, c, d["file_size"]) for p, c, d in self.g.edges(data=True))

    def __contains__(self, task: str) -> bool:
        return task in self.g

    def __len__(self) -> int:
        return len(self.tasks)

    def parents(self, task: str) -> List[str]:
        return sorted(self.g.predecessors(task))

    def children(self, task: str) -> List[str]:
        return sorted(self.g.successors(task))

    def file_size(self, parent: str, child: str) -> int:
        try:
            return self.g.edges[parent, child]["file_size"]
        except KeyError:
            raise ModelError(f"no edge {parent}->{child}")

    def origin(self, task: str) -> str:
        return self._origins.get(task, task)

    @property
    def origins(self) -> Dict[str, str]:
        return {t: o for t, o in self._origins.items() if t in self.g}

    def copies_of(self, task: str) -> List[str]:
        base = self.origin(task)
        return sorted(t for t in self.tasks if t != task and self.origin(t) == base)

    def roots(self) -> List[str]:
        """Tasks fed directly by the input stream: the entry task and its duplicates"""
        base = self.origin(self.entry_task)
        return sorted(t for t in self.tasks if self.origin(t) == base and self.g.in_degree(t) == 0)

    def is_acyclic(self) -> bool:
        return nx.is_directed_acyclic_graph(self.g)

    def topological_order(self) -> List[str]:
        return list(nx.lexicographical_topological_sort(self.g))

    def unique_name(self, base: str) -> str:
        if base not in self.g:
            return base
        n = 2
        while f"{base}{n}" in self.g:
            n += 1
        return f"{base}{n}"

    # -- mutation (used by duplication on copies only) -------------------------

    def add_task(self, task: str, origin: Optional[str] = None) -> None:
        self.g.add_node(task, declared=True)
        if origin and origin != task:
            self._origins[task] = origin

    def add_edge(self, parent: str, child: str, file_size: int) -> None:
        self.g.add_edge(parent, child, file_size=int(file_size))

    def remove_edge(self, parent: str, child: str) -> None:
        self.g.remove_edge(parent, child)

    def remove_task(self, task: str) -> None:
        self.g.remove_node(task)
        self._origins.pop(task, None)

    def copy(self) -> "TaskGraph":
        other = TaskGraph.__new__(TaskGraph)
        other.g = self.g.copy()
        other.entry_task = self.entry_task
        other.exit_task = self.exit_task
        other._origins = dict(self._origins)
        other.duplicate_edges = list(self.duplicate_edges)
        return other

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TaskGraph):
            return NotImplemented
        return (self.tasks == other.tasks and self.edges == other.edges
                and self.entry_task == other.entry_task and self.exit_task == other.exit_task
                and self.origins == other.origins)

    def __repr__(self) -> str:
        return f"TaskGraph({len(self.tasks)} tasks, {self.g.number_of_edges()} edges)"


@dataclass(frozen=True)
class LinkProfile:
    """Quadratic transfer-time model time = a*s^2 + b*s + c for a file of s bytes"""
    a: float
    b: float
    c: float
    min_size: Optional[float] = None
    max_size: Optional[float] = None

    def predict(self, size: float) -> float:
        return self.a * size * size + self.b * size + self.c

    def in_range(self, size: float) -> bool:
        if self.min_size is None or self.max_size is None:
            return True
        return self.min_size <= size <= self.max_size

    def scaled(self, factor: float) -> "LinkProfile":
        return LinkProfile(self.a * factor, self.b * factor, self.c * factor, self.min_size, self.max_size)


def transfer_time(profile: LinkProfile, size: float) -> float:
    if size < 0:
        raise ModelError(f"file size must be >= 0, got {size}")
    value = profile.predict(size)
    if value < 0:
        raise ModelError(f"profile {profile} predicts negative time {value:.6g}s for {size} bytes")
    return value


@dataclass
class Cluster:
    nodes: Tuple[str, ...]
    links: Dict[Tuple[str, str], LinkProfile]
    _cache: Dict[Tuple[str, str, int], float] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.nodes = tuple(sorted(self.nodes))

    def link(self, src: str, dst: str) -> LinkProfile:
        try:
            return self.links[(src, dst)]
        except KeyError:
            raise ModelError(f"no link profile for {src}->{dst}")

    def transfer_time(self, src: str, dst: str, size: int) -> float:
        if src == dst:
            return 0.0
        key = (src, dst, size)
        cached = self._cache.get(key)
        if cached is None:
            cached = transfer_time(self.link(src, dst), size)
            self._cache[key] = cached
        return cached

    def inter_node_pairs(self) -> List[Tuple[str, str]]:
        return [(u, v) for u in self.nodes for v in self.nodes if u != v]

    def mean_transfer_time(self, size: int) -> float:
        pairs = self.inter_node_pairs()
        if not pairs:
            return 0.0
        return float(np.mean([self.transfer_time(u, v, size) for u, v in pairs]))

    def scaled(self, factor: float) -> "Cluster":
        return Cluster(self.nodes, {k: p.scaled(factor) for k, p in self.links.items()})

    def with_link(self, src: str, dst: str, profile: LinkProfile) -> "Cluster":
        links = dict(self.links)
        links[(src, dst)] = profile
        return Cluster(self.nodes, links)


@dataclass
class ExecutionMatrix:
    times: Dict[Tuple[str, str], float]

    def time(self, task: str, node: str) -> float:
        try:
            return self.times[(task, node)]
        except KeyError:
            raise ModelError(f"no execution time for ({task}, {node})")

    def cost(self, graph: TaskGraph, task: str, node: str) -> float:
        """Execution time of task on node, resolving duplicates to their origin"""
        return self.time(graph.origin(task), node)

    def has(self, task: str, node: str) -> bool:
        return (task, node) in self.times

    def mean_time(self, task: str, nodes: Iterable[str]) -> float:
        return float(np.mean([self.time(task, n) for n in nodes]))

    def scaled(self, factor: float) -> "ExecutionMatrix":
        return ExecutionMatrix({k: v * factor for k, v in self.times.items()})

    def tasks(self) -> List[str]:
        return sorted({t for t, _ in self.times})

    def nodes(self) -> List[str]:
        return sorted({n for _, n in self.times})


@dataclass(frozen=True)
class Placement:
    node: str
    portion: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.portion <= 1.0 + PORTION_TOL):
            raise ScheduleError(f"portion must be in (0, 1], got {self.portion} on {self.node}")


@dataclass(frozen=True)
class Node:
    id: str

    @property
    def sort_key(self) -> Tuple[int, str, str]:
        return (0, self.id, "")

    def __str__(self) -> str:
        return self.id


@dataclass(frozen=True)
class Link:
    src: str
    dst: str

    def __post_init__(self):
        if self.src == self.dst:
            raise ModelError(f"link endpoints must differ, got {self.src}")

    @property
    def sort_key(self) -> Tuple[int, str, str]:
        return (1, self.src, self.dst)

    def __str__(self) -> str:
        return f"{self.src}->{self.dst}"


Resource = Union[Node, Link]


@dataclass
class Schedule:
    assignment: Dict[str, List[Placement]]
    graph: TaskGraph

    @classmethod
    def unsplit(cls, mapping: Dict[str, str], graph: TaskGraph) -> "Schedule":
        return cls({t: [Placement(n, 1.0)] for t, n in sorted(mapping.items())}, graph)

    def placements(self, task: str) -> List[Placement]:
        try:
            return self.assignment[task]
        except KeyError:
            raise ScheduleError(f"task {task} is not scheduled")

    def nodes_of(self, task: str) -> List[str]:
        return [p.node for p in self.placements(task)]

    def node_of(self, task: str) -> str:
        placements = self.placements(task)
        if len(placements) != 1:
            raise ScheduleError(f"task {task} is split over {len(placements)} nodes")
        return placements[0].node

    def tasks_on(self, node: str) -> Dict[str, float]:
        found = {}
        for task in sorted(self.assignment):
            for p in self.assignment[task]:
                if p.node == node:
                    found[task] = p.portion
        return found

    def used_nodes(self) -> List[str]:
        return sorted({p.node for ps in self.assignment.values() for p in ps})

    def is_split(self) -> bool:
        return any(len(ps) > 1 for ps in self.assignment.values())

    def placement_count(self) -> int:
        return sum(len(ps) for ps in self.assignment.values())

    def copy(self) -> "Schedule":
        return Schedule({t: list(ps) for t, ps in self.assignment.items()}, self.graph)

    def problems(self, cluster: Optional[Cluster] = None) -> List[str]:
        found = []
        tasks = set(self.graph.tasks)
        for task in sorted(tasks - set(self.assignment)):
            found.append(f"task {task} has no placement")
        for task in sorted(set(self.assignment) - tasks):
            found.append(f"placement for unknown task {task}")
        known = set(cluster.nodes) if cluster is not None else None
        for task, placements in sorted(self.assignment.items()):
            if not placements:
                found.append(f"task {task} has an empty placement list")
                continue
            total = sum(p.portion for p in placements)
            if abs(total - 1.0) > PORTION_TOL:
                found.append(f"portions of {task} sum to {total:.12g}")
            nodes = [p.node for p in placements]
            if len(set(nodes)) != len(nodes):
                found.append(f"task {task} has two placements on one node")
            if known is not None:
                for node in nodes:
                    if node not in known:
                        found.append(f"task {task} placed on unknown node {node}")
        return found

    def check(self, cluster: Optional[Cluster] = None) -> "Schedule":
        found = self.problems(cluster)
        if found:
            raise ScheduleError("; ".join(found))
        return self


@dataclass
class ValidationReport:
    violations: List[str] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def raise_if_invalid(self) -> None:
        if self.violations:
            raise ValidationError(self.violations)


def validate(graph: TaskGraph, cluster: Cluster, exec: ExecutionMatrix) -> ValidationReport:
    """Check a (graph, cluster, matrix) triple and collect every violation found"""
    report = ValidationReport()
    g = graph.g
    declared = set(graph.tasks)

    for node in sorted(n for n in g.nodes if n not in declared):
        for p, c in sorted(list(g.in_edges(node)) + list(g.out_edges(node))):
            report.violations.append(f"dangling edge endpoint {node} in edge {p}->{c}")
    for p, c in graph.duplicate_edges:
        report.violations.append(f"duplicate edge {p}->{c}")

    for p, c in sorted(nx.selfloop_edges(g)):
        report.violations.append(f"cycle: {p} -> {c}")
    loop_free = g.copy()
    loop_free.remove_edges_from(list(nx.selfloop_edges(g)))
    for n, cycle in enumerate(nx.simple_cycles(loop_free)):
        if n >= 10:
            report.violations.append("cycle: further cycles omitted")
            break
        report.violations.append("cycle: " + " -> ".join(cycle + cycle[:1]))

    for name, task in (("entry", graph.entry_task), ("exit", graph.exit_task)):
        if task not in declared:
            report.violations.append(f"{name} task {task} is not a declared task")
    if graph.entry_task in g and g.in_degree(graph.entry_task) > 0:
        report.violations.append(f"entry task {graph.entry_task} has parents")
    if graph.exit_task in g and g.out_degree(graph.exit_task) > 0:
        report.violations.append(f"exit task {graph.exit_task} has children")

    if graph.entry_task in g and graph.exit_task in g:
        reached = set()
        for root in graph.roots():
            reached |= nx.descendants(g, root) | {root}
        for task in sorted(declared - reached):
            report.violations.append(f"task {task} is unreachable from the entry task")
        feeding = nx.ancestors(g, graph.exit_task) | {graph.exit_task}
        for task in sorted(declared - feeding):
            report.violations.append(f"task {task} has no path to the exit task")

    for task in sorted(declared):
        for node in cluster.nodes:
            if not exec.has(graph.origin(task), node):
                report.violations.append(f"missing exec entry ({task}, {node})")
            elif not exec.time(graph.origin(task), node) > 0:
                report.violations.append(f"non-positive exec entry ({task}, {node})")

    sizes = sorted({e.file_size for e in graph.edges})
    for src, dst in cluster.inter_node_pairs():
        profile = cluster.links.get((src, dst))
        if profile is None:
            report.violations.append(f"missing link profile ({src}, {dst})")
            continue
        for size in sizes:
            if size < 0:
                continue
            if profile.predict(size) < 0:
                report.violations.append(f"negative transfer time on {src}->{dst} for {size} bytes")
            elif not profile.in_range(size):
                report.warnings.append(f"{size} bytes on {src}->{dst} is outside the fitted range "
                                       f"[{profile.min_size:g}, {profile.max_size:g}]")
    for edge in graph.edges:
        if edge.file_size < 0:
            report.violations.append(f"negative file size on {edge.parent}->{edge.child}")

    for warning in report.warnings:
        logger.warning(warning)
    return report


def upward_rank(graph: TaskGraph, cluster: Cluster, exec: ExecutionMatrix) -> Dict[str, float]:
    """rank(n) = mean exec(n) + max over children k of (mean comm(n,k) + rank(k))"""
    ranks: Dict[str, float] = {}
    for task in reversed(list(nx.topological_sort(graph.g))):
        comp = float(np.mean([exec.cost(graph, task, n) for n in cluster.nodes]))
        tail = 0.0
        for child in graph.children(task):
            comm = cluster.mean_transfer_time(graph.file_size(task, child))
            tail = max(tail, comm + ranks[child])
        ranks[task] = comp + tail
    return ranks


def rank_order(ranks: Dict[str, float]) -> List[str]:
    return sorted(ranks, key=lambda t: (-ranks[t], t))
