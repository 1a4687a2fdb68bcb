"""
Initial schedulers: HEFT (makespan), TPHEFT (throughput) and manual maps
"""

from bisect import insort
from collections import defaultdict
from typing import Dict, List, Sequence, Tuple, Union

from pipesched.analysis import ResourceTimes, argmin_node, exceeds
from pipesched.errors import ScheduleError
from pipesched.model import (Cluster, ExecutionMatrix, Link, Node, Placement, Schedule, TaskGraph,
                             rank_order, upward_rank)
from utils.logger import Logger

logger = Logger(__name__)

ManualEntry = Union[str, Sequence[Tuple[str, float]], Dict[str, float]]


def _earliest_slot(busy: List[Tuple[float, float]], ready: float, duration: float) -> float:
    """Earliest start >= ready that fits duration into a gap of the busy intervals"""
    prev_end = 0.0
    for start, finish in busy:
        candidate = max(ready, prev_end)
        if candidate + duration <= start:
            return candidate
        prev_end = max(prev_end, finish)
    return max(ready, prev_end)


def heft_schedule(graph: TaskGraph, cluster: Cluster, exec: ExecutionMatrix) -> Schedule:
    """Classic insertion-based HEFT, minimising the finish time of each task in rank order"""
    order = rank_order(upward_rank(graph, cluster, exec))
    busy: Dict[str, List[Tuple[float, float]]] = {n: [] for n in cluster.nodes}
    finish: Dict[str, float] = {}
    where: Dict[str, str] = {}

    for task in order:
        best = None
        for node in cluster.nodes:
            ready = max((finish[p] + cluster.transfer_time(where[p], node, graph.file_size(p, task))
                         for p in graph.parents(task)), default=0.0)
            duration = exec.cost(graph, task, node)
            start = _earliest_slot(busy[node], ready, duration)
            if best is None or exceeds(best[0], start + duration):
                best = (start + duration, node, start)
        eft, node, start = best
        insort(busy[node], (start, eft))
        finish[task], where[task] = eft, node
        logger.debug(f"HEFT {task} -> {node} [{start:.6g}, {eft:.6g}]")

    return Schedule.unsplit(where, graph)


def _effected_cost(task: str, node: str, where: Dict[str, str], times: ResourceTimes,
                   graph: TaskGraph, cluster: Cluster, exec: ExecutionMatrix
                   ) -> Tuple[float, float, Dict[Link, float]]:
    node_time = times.node_time(node) + exec.cost(graph, task, node)
    increments: Dict[Link, float] = defaultdict(float)
    for parent in graph.parents(task):
        if parent not in where:
            raise ScheduleError(f"parent {parent} of {task} is not placed yet")
        src = where[parent]
        if src != node:
            increments[Link(src, node)] += cluster.transfer_time(src, node, graph.file_size(parent, task))
    worst = node_time
    for link, extra in increments.items():
        worst = max(worst, times.get(link) + extra)
    return worst, node_time, increments


def tpheft_schedule(graph: TaskGraph, cluster: Cluster, exec: ExecutionMatrix) -> Schedule:
    """
    Throughput-oriented HEFT: each task goes to the node that keeps the
    largest schedule time among the resources it touches smallest.
    """
    order = rank_order(upward_rank(graph, cluster, exec))
    times = ResourceTimes({Node(n): 0.0 for n in cluster.nodes})
    where: Dict[str, str] = {}

    entry = graph.entry_task
    first, cost = argmin_node((n, exec.cost(graph, entry, n)) for n in cluster.nodes)
    where[entry] = first
    times.add(Node(first), cost)
    logger.debug(f"TPHEFT {entry} -> {first} (fastest node)")

    for task in order:
        if task in where:
            continue
        evaluated = {n: _effected_cost(task, n, where, times, graph, cluster, exec) for n in cluster.nodes}
        node, worst = argmin_node((n, evaluated[n][0]) for n in cluster.nodes)
        _, node_time, increments = evaluated[node]
        where[task] = node
        times.times[Node(node)] = node_time
        for link, extra in increments.items():
            times.add(link, extra)
        logger.debug(f"TPHEFT {task} -> {node} (effected max {worst:.6g})")

    return Schedule.unsplit(where, graph)


def _placements_for(task: str, entry: ManualEntry) -> List[Placement]:
    if isinstance(entry, str):
        return [Placement(entry, 1.0)]
    if isinstance(entry, dict):
        return [Placement(n, float(p)) for n, p in entry.items()]
    placements = []
    for item in entry:
        if isinstance(item, dict):
            placements.extend(Placement(n, float(p)) for n, p in item.items())
        else:
            node, portion = item
            placements.append(Placement(node, float(portion)))
    return placements


def manual_schedule(mapping: Dict[str, ManualEntry], graph: TaskGraph, cluster: Cluster) -> Schedule:
    """User-supplied placement, checked for totality, portions and known nodes"""
    schedule = Schedule({t: _placements_for(t, e) for t, e in sorted(mapping.items())}, graph)
    return schedule.check(cluster)


def spread_mapping(graph: TaskGraph, cluster: Cluster) -> Dict[str, str]:
    """Every task on its own node in topological order, wrapping round when nodes run out"""
    order = graph.topological_order()
    return {task: cluster.nodes[i % len(cluster.nodes)] for i, task in enumerate(order)}
