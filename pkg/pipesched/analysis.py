"""
Analytic throughput model: per-resource schedule times and the bottleneck
"""

from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple

import pandas as pd

from pipesched.errors import ScheduleError
from pipesched.model import Cluster, ExecutionMatrix, Link, Node, Resource, Schedule

TIE_REL = 1e-9


def exceeds(value: float, reference: float) -> bool:
    """value > reference beyond the relative tie tolerance"""
    return value - reference > TIE_REL * max(abs(reference), abs(value))


def ties(value: float, reference: float) -> bool:
    return not exceeds(value, reference) and not exceeds(reference, value)


class ResourceTimes:
    """Seconds of work each resource spends per input instance"""

    def __init__(self, times: Optional[Dict[Resource, float]] = None):
        self.times: Dict[Resource, float] = dict(times or {})

    def get(self, resource: Resource) -> float:
        return self.times.get(resource, 0.0)

    def add(self, resource: Resource, seconds: float) -> None:
        self.times[resource] = self.times.get(resource, 0.0) + seconds

    def node_time(self, node: str) -> float:
        return self.get(Node(node))

    def link_time(self, src: str, dst: str) -> float:
        return self.get(Link(src, dst))

    def items(self) -> List[Tuple[Resource, float]]:
        return sorted(self.times.items(), key=lambda kv: kv[0].sort_key)

    def nodes(self) -> Dict[str, float]:
        return {r.id: t for r, t in self.items() if isinstance(r, Node)}

    def links(self) -> Dict[Tuple[str, str], float]:
        return {(r.src, r.dst): t for r, t in self.items() if isinstance(r, Link)}

    def touching(self, node: str) -> List[Tuple[Link, float]]:
        return [(r, t) for r, t in self.items() if isinstance(r, Link) and node in (r.src, r.dst)]

    def max_time(self) -> float:
        return max(self.times.values(), default=0.0)

    def pressure(self) -> Tuple[float, int]:
        """(max time, number of resources within tolerance of it)"""
        top = self.max_time()
        return top, sum(1 for t in self.times.values() if ties(t, top))

    def copy(self) -> "ResourceTimes":
        return ResourceTimes(self.times)

    def __len__(self) -> int:
        return len(self.times)

    def __repr__(self) -> str:
        return "ResourceTimes(" + ", ".join(f"{r}={t:.6g}" for r, t in self.items()) + ")"


@dataclass(frozen=True)
class ThroughputEstimate:
    max_schedule_time: float
    bottleneck: Resource
    throughput: float

    @property
    def per_1000s(self) -> float:
        return self.throughput * 1000.0


def resource_times(schedule: Schedule, cluster: Cluster, exec: ExecutionMatrix) -> ResourceTimes:
    graph = schedule.graph
    known = set(cluster.nodes)
    times = ResourceTimes({Node(n): 0.0 for n in cluster.nodes})

    for task in graph.tasks:
        for p in schedule.placements(task):
            if p.node not in known:
                raise ScheduleError(f"task {task} placed on unknown node {p.node}")
            times.add(Node(p.node), p.portion * exec.cost(graph, task, p.node))

    # replica choices of parent and child are independent, so the pair carries pp*pc of the flow
    for edge in graph.edges:
        for pp in schedule.placements(edge.parent):
            for pc in schedule.placements(edge.child):
                if pp.node == pc.node:
                    continue
                seconds = pp.portion * pc.portion * cluster.transfer_time(pp.node, pc.node, edge.file_size)
                if seconds > 0:
                    times.add(Link(pp.node, pc.node), seconds)
    return times


def bottleneck(times: ResourceTimes) -> Tuple[Resource, float]:
    """Resource with the largest time; ties go to nodes, then to the smaller id"""
    best: Optional[Tuple[Resource, float]] = None
    for resource, seconds in times.items():
        if best is None or exceeds(seconds, best[1]):
            best = (resource, seconds)
    if best is None:
        raise ScheduleError("no resources to rank")
    return best


def predicted_throughput(times: ResourceTimes) -> ThroughputEstimate:
    resource, seconds = bottleneck(times)
    if seconds <= 0:
        raise ScheduleError("empty schedule: max schedule time is 0")
    return ThroughputEstimate(seconds, resource, 1.0 / seconds)


def estimate(schedule: Schedule, cluster: Cluster, exec: ExecutionMatrix) -> ThroughputEstimate:
    return predicted_throughput(resource_times(schedule, cluster, exec))


def argmin_node(costs: Iterable[Tuple[str, float]]) -> Optional[Tuple[str, float]]:
    """First (node, cost) with the smallest cost in iteration order"""
    best = None
    for node, cost in costs:
        if best is None or exceeds(best[1], cost):
            best = (node, cost)
    return best


def analysis_report(times: ResourceTimes) -> pd.DataFrame:
    est = predicted_throughput(times)
    rows = [{
        "resource": str(r),
        "kind": "node" if isinstance(r, Node) else "link",
        "seconds": t,
        "bottleneck": r == est.bottleneck,
    } for r, t in times.items()]
    frame = pd.DataFrame(rows, columns=["resource", "kind", "seconds", "bottleneck"])
    frame.attrs["throughput_per_1000s"] = est.per_1000s
    frame.attrs["bottleneck"] = str(est.bottleneck)
    return frame


def format_report(times: ResourceTimes) -> str:
    frame = analysis_report(times)
    lines = [frame.to_string(index=False, float_format=lambda v: f"{v:.6g}")]
    lines.append(f"bottleneck: {frame.attrs['bottleneck']}")
    lines.append(f"throughput: {frame.attrs['throughput_per_1000s']:.4g} per 1000 s")
    return "\n".join(lines)
