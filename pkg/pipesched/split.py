"""
Node splitting: move a portion of the bottleneck node's work onto idle nodes,
and the replica routing rules the split schedule runs with.
"""

from bisect import bisect_right
from dataclasses import dataclass
from enum import Enum
from itertools import accumulate
from typing import Callable, List, Optional, Sequence

import numpy as np

from pipesched.analysis import ResourceTimes, bottleneck, exceeds, resource_times, ties
from pipesched.errors import RoutingError, ScheduleError
from pipesched.model import (PORTION_TOL, Cluster, ExecutionMatrix, Link, Placement, Schedule,
                             TaskGraph)
from utils.logger import Logger

logger = Logger(__name__)

GOLDEN = (5 ** 0.5 - 1) / 2


@dataclass(frozen=True)
class SplitDecision:
    source_node: str
    target_node: str
    portion: float
    predicted_source_time: float
    predicted_target_time: float
    bottleneck_time: float
    candidate_time: float


def idle_nodes(times: ResourceTimes, cluster: Cluster, threshold: float = 0.0) -> List[str]:
    """Nodes whose schedule time is at most threshold (0 keeps only fully idle nodes)"""
    return [n for n in cluster.nodes if times.node_time(n) <= threshold]


def _moved(schedule: Schedule, source: str, target: str, fraction: float) -> Schedule:
    assignment = {}
    for task, placements in schedule.assignment.items():
        on_source = next((p for p in placements if p.node == source), None)
        if on_source is None:
            assignment[task] = list(placements)
            continue
        moved = on_source.portion * fraction
        kept = on_source.portion - moved
        updated = []
        for p in placements:
            if p.node == source:
                if kept > PORTION_TOL:
                    updated.append(Placement(source, kept))
            elif p.node == target:
                updated.append(Placement(target, p.portion + moved))
            else:
                updated.append(p)
        if target not in (p.node for p in placements):
            updated.append(Placement(target, moved))
        assignment[task] = updated
    return Schedule(assignment, schedule.graph)


def _best_split_of(source: str, btnk_time: float, schedule: Schedule, cluster: Cluster,
                   exec: ExecutionMatrix, candidates: Sequence[str]) -> Optional[SplitDecision]:
    if not schedule.tasks_on(source) or btnk_time <= 0:
        return None
    best = None
    for candidate in sorted(candidates):
        if candidate == source:
            continue
        trial = resource_times(_moved(schedule, source, candidate, 1.0), cluster, exec)
        t = max([trial.node_time(candidate)] + [s for _, s in trial.touching(candidate)])
        if best is None or exceeds(best[0], t):
            best = (t, candidate)
    if best is None:
        return None
    t, target = best
    ptn = btnk_time / (btnk_time + t)
    return SplitDecision(source, target, ptn, (1 - ptn) * btnk_time, ptn * t, btnk_time, t)


def _better(new: tuple, old: tuple) -> bool:
    """Lexicographic (max, count) comparison with the tie tolerance on the max"""
    if exceeds(old[0], new[0]):
        return True
    return ties(new[0], old[0]) and new[1] < old[1]


def select_split(times: ResourceTimes, schedule: Schedule, cluster: Cluster, exec: ExecutionMatrix,
                 candidates: Sequence[str]) -> Optional[SplitDecision]:
    if not candidates:
        return None
    btnk, btnk_time = bottleneck(times)
    if not isinstance(btnk, Link):
        return _best_split_of(btnk.id, btnk_time, schedule, cluster, exec, candidates)

    # a link can't be split itself: try each endpoint and keep the better outcome
    chosen = None
    for side in (btnk.src, btnk.dst):
        decision = _best_split_of(side, btnk_time, schedule, cluster, exec, candidates)
        if decision is None:
            continue
        outcome = resource_times(apply_split(schedule, decision), cluster, exec).pressure()
        if chosen is None or _better(outcome, chosen[0]):
            chosen = (outcome, decision)
    return chosen[1] if chosen else None


def apply_split(schedule: Schedule, decision: SplitDecision) -> Schedule:
    if not 0.0 < decision.portion < 1.0:
        raise ScheduleError(f"split portion must be in (0, 1), got {decision.portion}")
    return _moved(schedule, decision.source_node, decision.target_node, decision.portion)


def iterate_split(schedule: Schedule, cluster: Cluster, exec: ExecutionMatrix, max_rounds: int,
                  idle_threshold: float = 0.0) -> Schedule:
    current = schedule
    for round_no in range(1, max_rounds + 1):
        times = resource_times(current, cluster, exec)
        candidates = idle_nodes(times, cluster, idle_threshold)
        if not candidates:
            logger.debug(f"split round {round_no}: no idle nodes left")
            break
        decision = select_split(times, current, cluster, exec, candidates)
        if decision is None:
            logger.debug(f"split round {round_no}: nothing to split")
            break
        trial = apply_split(current, decision)
        before, after = times.pressure(), resource_times(trial, cluster, exec).pressure()
        if not _better(after, before):
            logger.info(f"split round {round_no}: {decision.source_node}->{decision.target_node} "
                        f"does not lower the bottleneck ({before[0]:.6g}s), stopping")
            break
        logger.info(f"split round {round_no}: {decision.source_node} -> {decision.target_node} "
                    f"at {decision.portion:.4f}, max {before[0]:.6g}s -> {after[0]:.6g}s")
        current = trial
    return current


class RoutingMode(Enum):
    PROBABILITY = "probability"
    HASH = "hash"


def decimal_hash(instance_id: str) -> int:
    if not instance_id.isdecimal():
        raise RoutingError(f"hash routing needs a decimal instance id, got {instance_id!r}")
    return int(instance_id)


def routing_mode(graph: TaskGraph, task: str) -> RoutingMode:
    # every parent must send a given instance to the same replica, which only a shared hash can do
    return RoutingMode.HASH if len(graph.parents(task)) > 1 else RoutingMode.PROBABILITY


def _pick(portions: Sequence[float], draw: float) -> int:
    cumulative = list(accumulate(portions))
    index = bisect_right(cumulative, draw * cumulative[-1])
    return min(index, len(portions) - 1)


def choose_replica(child_task: str, replicas: Sequence[Placement], instance_id: str, mode: RoutingMode,
                   rng: Optional[np.random.Generator] = None,
                   hash_fn: Callable[[str], int] = decimal_hash, bucket: str = "modulo") -> int:
    """Index of the replica of child_task that receives instance_id"""
    if not replicas:
        raise RoutingError(f"task {child_task} has no replicas")
    if len(replicas) == 1:
        return 0
    if mode is RoutingMode.HASH:
        code = hash_fn(instance_id)
        if bucket == "weighted":
            return _pick([p.portion for p in replicas], (code * GOLDEN) % 1.0)
        return code % len(replicas)
    if rng is None:
        raise RoutingError("probability routing needs a seeded generator")
    return _pick([p.portion for p in replicas], float(rng.random()))


def replica_names(schedule: Schedule, task: str) -> List[str]:
    return [f"{task}-{i}" for i in range(1, len(schedule.placements(task)) + 1)]


def routing_table(schedule: Schedule, task: str) -> str:
    """Where task sends its files, e.g. `T1-1/0.5 : T1-2/0.5 : T2-1/1`"""
    entries = []
    for child in schedule.graph.children(task):
        for name, p in zip(replica_names(schedule, child), schedule.placements(child)):
            entries.append(f"{name}/{p.portion:g}")
    return " : ".join(entries)
