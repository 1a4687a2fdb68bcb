"""
Synthetic workloads: DAG shapes, clusters and execution matrices with
compute and communication scale factors.
"""

import inspect
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from pipesched.errors import UsageError
from pipesched.model import Cluster, ExecutionMatrix, LinkProfile, TaskGraph
from pipesched.schedulers import spread_mapping

# one "unit" file costs 1 s on a default link (1 MB at 1 MB/s)
UNIT = 1_000_000
DEFAULT_B = 1e-6


@dataclass
class Bundle:
    name: str
    graph: TaskGraph
    cluster: Cluster
    exec: ExecutionMatrix
    manual: Dict[str, str] = field(default_factory=dict)

    def scaled(self, compute_scale: float = 1.0, comm_scale: float = 1.0) -> "Bundle":
        return Bundle(self.name, self.graph, self.cluster.scaled(comm_scale),
                      self.exec.scaled(compute_scale), dict(self.manual))

    def with_slow_link(self, src: str, dst: str, factor: float) -> "Bundle":
        slow = self.cluster.link(src, dst).scaled(factor)
        return Bundle(self.name, self.graph, self.cluster.with_link(src, dst, slow), self.exec, dict(self.manual))


def _names(prefix: str, count: int, start: int = 0) -> List[str]:
    width = len(str(start + count - 1))
    return [f"{prefix}{i:0{width}d}" for i in range(start, start + count)]


def node_names(count: int) -> List[str]:
    return _names("n", count, start=1)


def uniform_cluster(num_nodes: int, b: float = DEFAULT_B, a: float = 0.0, c: float = 0.0) -> Cluster:
    nodes = node_names(num_nodes)
    profile = LinkProfile(a, b, c)
    return Cluster(tuple(nodes), {(u, v): profile for u in nodes for v in nodes if u != v})


def uniform_matrix(loads: Dict[str, float], nodes) -> ExecutionMatrix:
    return ExecutionMatrix({(t, n): load for t, load in loads.items() for n in nodes})


def fig1_bundle() -> Bundle:
    """Four-task diamond on three nodes; link seconds equal the file sizes"""
    graph = TaskGraph(["T0", "T1", "T2", "T3"],
                      [("T0", "T1", 2), ("T0", "T2", 1), ("T1", "T3", 3), ("T2", "T3", 2)], "T0", "T3")
    cluster = uniform_cluster(3, b=1.0)
    exec = uniform_matrix({"T0": 3.0, "T1": 2.0, "T2": 2.0, "T3": 5.0}, cluster.nodes)
    return Bundle("fig1", graph, cluster, exec, {"T0": "n1", "T1": "n2", "T2": "n2", "T3": "n3"})


def diamond_bundle(compute_scale: float = 1.0, comm_scale: float = 1.0, num_nodes: int = 8,
                   heavy_branch: float = 1.0) -> Bundle:
    """Fork into two branches and join; heavy_branch > 1 unbalances the first branch"""
    graph = TaskGraph(["T0", "T1", "T2", "T3"],
                      [("T0", "T1", UNIT), ("T0", "T2", UNIT), ("T1", "T3", UNIT), ("T2", "T3", UNIT)],
                      "T0", "T3")
    cluster = uniform_cluster(num_nodes, b=DEFAULT_B * comm_scale)
    loads = {"T0": 2.0, "T1": 3.0 * heavy_branch, "T2": 3.0, "T3": 2.0}
    exec = uniform_matrix({t: v * compute_scale for t, v in loads.items()}, cluster.nodes)
    return Bundle("diamond", graph, cluster, exec, spread_mapping(graph, cluster))


def linear_bundle(length: int = 5, exec_time: float = 1.0, file_size: int = UNIT, num_nodes: int = 5,
                  compute_scale: float = 1.0, comm_scale: float = 1.0) -> Bundle:
    if length < 1:
        raise UsageError(f"a chain needs at least one task, got {length}")
    tasks = _names("T", length)
    graph = TaskGraph(tasks, [(p, c, file_size) for p, c in zip(tasks, tasks[1:])], tasks[0], tasks[-1])
    cluster = uniform_cluster(num_nodes, b=DEFAULT_B * comm_scale)
    exec = uniform_matrix({t: exec_time * compute_scale for t in tasks}, cluster.nodes)
    return Bundle(f"linear-{length}", graph, cluster, exec, spread_mapping(graph, cluster))


def fork_join_bundle(width: int = 3, exec_time: float = 1.0, file_size: int = UNIT, num_nodes: int = 6,
                     compute_scale: float = 1.0, comm_scale: float = 1.0) -> Bundle:
    if width < 1:
        raise UsageError(f"fork-join width must be >= 1, got {width}")
    branches = _names("B", width, start=1)
    tasks = ["T0"] + branches + ["TJ"]
    edges = [("T0", b, file_size) for b in branches] + [(b, "TJ", file_size) for b in branches]
    graph = TaskGraph(tasks, edges, "T0", "TJ")
    cluster = uniform_cluster(num_nodes, b=DEFAULT_B * comm_scale)
    exec = uniform_matrix({t: exec_time * compute_scale for t in tasks}, cluster.nodes)
    return Bundle(f"fork-join-{width}", graph, cluster, exec, spread_mapping(graph, cluster))


def layered_random_bundle(num_tasks: int = 8, num_nodes: int = 4, seed: int = 0, edge_prob: float = 0.3,
                          compute_scale: float = 1.0, comm_scale: float = 1.0,
                          heterogeneous: bool = True) -> Bundle:
    """
    Random layered DAG with a single entry and exit. Execution time is a task
    load divided by a node speed; link bandwidth varies per node pair.
    """
    if num_tasks < 2:
        raise UsageError(f"a random DAG needs at least 2 tasks, got {num_tasks}")
    rng = np.random.default_rng(seed)
    tasks = _names("T", num_tasks)
    entry, exit_task, inner = tasks[0], tasks[-1], tasks[1:-1]

    num_layers = max(1, int(round(np.sqrt(len(inner))))) if inner else 0
    layer = {entry: 0}
    for task, depth in zip(inner, sorted(rng.integers(1, num_layers + 1, size=len(inner)))):
        layer[task] = int(depth)

    def size() -> int:
        return int(UNIT * rng.uniform(0.2, 2.0))

    edges = []
    for task in inner:
        earlier = [t for t in [entry] + inner if layer[t] < layer[task]]
        first = earlier[int(rng.integers(len(earlier)))]
        edges.append((first, task, size()))
        for other in earlier:
            if other != first and rng.random() < edge_prob:
                edges.append((other, task, size()))
    has_child = {p for p, _, _ in edges}
    for task in [entry] + inner:
        if task not in has_child:
            edges.append((task, exit_task, size()))

    nodes = node_names(num_nodes)
    speed = rng.uniform(0.5, 2.0, size=num_nodes) if heterogeneous else np.ones(num_nodes)
    loads = rng.uniform(1.0, 10.0, size=num_tasks)
    exec = ExecutionMatrix({(t, n): float(loads[i] / speed[j]) * compute_scale
                            for i, t in enumerate(tasks) for j, n in enumerate(nodes)})
    links = {}
    for i, u in enumerate(nodes):
        for v in nodes[i + 1:]:
            factor = rng.uniform(0.5, 2.0) if heterogeneous else 1.0
            profile = LinkProfile(0.0, DEFAULT_B * factor * comm_scale, 0.0)
            links[(u, v)] = links[(v, u)] = profile
    graph = TaskGraph(tasks, edges, entry, exit_task)
    cluster = Cluster(tuple(nodes), links)
    return Bundle(f"random-{num_tasks}-{seed}", graph, cluster, exec, spread_mapping(graph, cluster))


SHAPES: Dict[str, Callable[..., Bundle]] = {
    "fig1": fig1_bundle,
    "diamond": diamond_bundle,
    "linear": linear_bundle,
    "fork-join": fork_join_bundle,
    "layered-random": layered_random_bundle,
}


def generate(shape: str, params: Optional[dict] = None) -> Bundle:
    """Build a bundle by shape name, rejecting parameters the shape does not take"""
    if shape not in SHAPES:
        raise UsageError(f"unknown shape {shape!r}; choose from {', '.join(SHAPES)}")
    builder = SHAPES[shape]
    params = dict(params or {})
    accepted = set(inspect.signature(builder).parameters)
    unknown = sorted(set(params) - accepted)
    if unknown:
        raise UsageError(f"shape {shape} does not take {', '.join(unknown)}")
    return builder(**params)
