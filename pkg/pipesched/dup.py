"""
Task duplication: relieve a bottleneck link by re-running the tasks that feed
it on an idle node that reaches the destination more cheaply.
"""

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import networkx as nx

from pipesched.analysis import ResourceTimes, argmin_node, bottleneck, exceeds, resource_times
from pipesched.errors import ScheduleError
from pipesched.model import Cluster, ExecutionMatrix, Link, Placement, Schedule, TaskGraph
from pipesched.split import idle_nodes
from utils.logger import Logger

logger = Logger(__name__)


@dataclass(frozen=True)
class DupChoice:
    link: Link
    node: str
    src_tasks: Tuple[str, ...]
    child_map: Dict[str, Tuple[str, ...]] = field(hash=False)
    predicted_max: float
    bottleneck_time: float


def _candidate_cost(proc: str, src_tasks: Sequence[str], child_map: Dict[str, Tuple[str, ...]], dst: str,
                    times: ResourceTimes, schedule: Schedule, graph: TaskGraph, cluster: Cluster,
                    exec: ExecutionMatrix) -> float:
    node_time = times.node_time(proc) + sum(exec.cost(graph, t, proc) for t in src_tasks)
    increments: Dict[Link, float] = defaultdict(float)
    for task in src_tasks:
        for parent in graph.parents(task):
            src = schedule.node_of(parent)
            if src != proc:
                increments[Link(src, proc)] += cluster.transfer_time(src, proc, graph.file_size(parent, task))
        for child in child_map[task]:
            increments[Link(proc, dst)] += cluster.transfer_time(proc, dst, graph.file_size(task, child))
    return max([node_time] + [times.get(link) + extra for link, extra in increments.items()])


def find_best_dup_node(times: ResourceTimes, schedule: Schedule, graph: TaskGraph, cluster: Cluster,
                       exec: ExecutionMatrix, candidates: Sequence[str]) -> Optional[DupChoice]:
    btnk, btnk_time = bottleneck(times)
    if not isinstance(btnk, Link):
        return None

    child_map: Dict[str, Tuple[str, ...]] = {}
    for task in schedule.tasks_on(btnk.src):
        on_dst = tuple(c for c in graph.children(task) if btnk.dst in schedule.nodes_of(c))
        if on_dst:
            child_map[task] = on_dst
    if not child_map:
        return None
    src_tasks = tuple(sorted(child_map))

    best = argmin_node(
        (proc, _candidate_cost(proc, src_tasks, child_map, btnk.dst, times, schedule, graph, cluster, exec))
        for proc in sorted(candidates) if proc not in (btnk.src, btnk.dst))
    if best is None or not exceeds(btnk_time, best[1]):
        return None
    return DupChoice(btnk, best[0], src_tasks, child_map, best[1], btnk_time)


def apply_duplication(schedule: Schedule, graph: TaskGraph, choice: DupChoice) -> Tuple[Schedule, TaskGraph]:
    rewritten = graph.copy()
    assignment = {t: list(ps) for t, ps in schedule.assignment.items()}
    for task in choice.src_tasks:
        dup = rewritten.unique_name(f"{task}-dup")
        rewritten.add_task(dup, origin=graph.origin(task))
        for parent in graph.parents(task):
            rewritten.add_edge(parent, dup, graph.file_size(parent, task))
        for child in choice.child_map[task]:
            size = graph.file_size(task, child)
            rewritten.remove_edge(task, child)
            rewritten.add_edge(dup, child, size)
        assignment[dup] = [Placement(choice.node, 1.0)]
        logger.debug(f"duplicated {task} as {dup} on {choice.node} for {', '.join(choice.child_map[task])}")
    return Schedule(assignment, rewritten), rewritten


def garbage_collect_zombies(schedule: Schedule, graph: TaskGraph) -> Tuple[Schedule, TaskGraph]:
    """Drop tasks whose output can no longer reach the exit task"""
    cleaned = graph.copy()
    if graph.exit_task not in cleaned:
        raise ScheduleError(f"exit task {graph.exit_task} is missing")
    feeding = nx.ancestors(cleaned.g, cleaned.exit_task) | {cleaned.exit_task}
    zombies = [t for t in cleaned.tasks if t not in feeding]

    if cleaned.entry_task in zombies:
        survivors = [t for t in cleaned.copies_of(cleaned.entry_task) if t in feeding]
        if not survivors:
            raise ScheduleError("exit task is unreachable from the entry task")
        logger.debug(f"entry task {cleaned.entry_task} replaced by its copy {survivors[0]}")
        cleaned.entry_task = survivors[0]

    assignment = {t: list(ps) for t, ps in schedule.assignment.items()}
    for task in zombies:
        cleaned.remove_task(task)
        assignment.pop(task, None)
        logger.debug(f"removed zombie task {task}")

    reached = set()
    for root in cleaned.roots():
        reached |= nx.descendants(cleaned.g, root) | {root}
    if cleaned.exit_task not in reached:
        raise ScheduleError("exit task is unreachable from the entry task")
    return Schedule(assignment, cleaned), cleaned


def iterate_dup(schedule: Schedule, graph: TaskGraph, cluster: Cluster, exec: ExecutionMatrix,
                max_rounds: int) -> Tuple[Schedule, TaskGraph]:
    if schedule.is_split():
        raise ScheduleError("duplication needs an unsplit schedule")
    current, current_graph = schedule, graph
    for round_no in range(1, max_rounds + 1):
        times = resource_times(current, cluster, exec)
        candidates = idle_nodes(times, cluster)
        if not candidates:
            logger.debug(f"dup round {round_no}: no idle nodes left")
            break
        btnk, btnk_time = bottleneck(times)
        if not isinstance(btnk, Link):
            logger.info(f"dup round {round_no}: bottleneck {btnk} is a node, nothing to duplicate")
            break
        choice = find_best_dup_node(times, current, current_graph, cluster, exec, candidates)
        if choice is None:
            logger.info(f"dup round {round_no}: no idle node relieves {btnk}")
            break
        trial, trial_graph = apply_duplication(current, current_graph, choice)
        trial, trial_graph = garbage_collect_zombies(trial, trial_graph)
        if not trial_graph.is_acyclic():
            raise ScheduleError(f"duplication round {round_no} produced a cycle")
        new_max = resource_times(trial, cluster, exec).max_time()
        if exceeds(new_max, btnk_time):
            logger.info(f"dup round {round_no}: duplicating onto {choice.node} raises the max "
                        f"({btnk_time:.6g}s -> {new_max:.6g}s), stopping")
            break
        logger.info(f"dup round {round_no}: {', '.join(choice.src_tasks)} onto {choice.node}, "
                    f"max {btnk_time:.6g}s -> {new_max:.6g}s")
        current, current_graph = trial, trial_graph
    return current, current_graph
