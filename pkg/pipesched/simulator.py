"""
Discrete-event simulation of a schedule processing a stream of input instances.

Nodes are single-core FIFO servers and every directed link carries one file
at a time. Files are tagged with their instance so a multi-parent task only
starts once every parent's file for that instance has arrived.
"""

import itertools
import math
from collections import Counter, defaultdict, deque
from dataclasses import asdict, dataclass, field
from heapq import heappop, heappush
from typing import Callable, Deque, Dict, List, Optional, Set, Tuple

import numpy as np
import pandas as pd

from pipesched.errors import DeadlockError, PipeschedError, ScheduleError, UsageError
from pipesched.model import Cluster, ExecutionMatrix, Link, Node, Resource, Schedule, TaskGraph
from pipesched.split import RoutingMode, choose_replica, decimal_hash, routing_mode
from utils.logger import Logger

logger = Logger(__name__)

DISCIPLINES = ("async", "lockstep")
HASH_BUCKETS = ("modulo", "weighted")

# event priorities at equal timestamps
FINISH, ARRIVAL = 0, 1


@dataclass
class SimConfig:
    num_instances: int = 300
    warmup_instances: Optional[int] = None
    input_interarrival: float = 0.0
    seed: int = 0
    jitter: float = 0.0
    discipline: str = "async"
    max_in_flight: Optional[int] = None
    hash_bucket: str = "weighted"
    record_events: bool = False
    hash_fn: Callable[[str], int] = decimal_hash

    def __post_init__(self):
        problems = []
        if self.num_instances < 1:
            problems.append(f"num_instances must be >= 1, got {self.num_instances}")
        if self.warmup_instances is not None and not 0 <= self.warmup_instances < self.num_instances:
            problems.append(f"warmup_instances must be in [0, {self.num_instances}), got {self.warmup_instances}")
        if self.input_interarrival < 0:
            problems.append(f"input_interarrival must be >= 0, got {self.input_interarrival}")
        if not 0 <= self.jitter < 1:
            problems.append(f"jitter must be in [0, 1), got {self.jitter}")
        if self.discipline not in DISCIPLINES:
            problems.append(f"discipline must be one of {', '.join(DISCIPLINES)}, got {self.discipline!r}")
        if self.discipline == "lockstep" and self.input_interarrival > 0:
            problems.append("lockstep runs only with a saturating source")
        if self.max_in_flight is not None and self.max_in_flight < 1:
            problems.append(f"max_in_flight must be >= 1, got {self.max_in_flight}")
        if self.hash_bucket not in HASH_BUCKETS:
            problems.append(f"hash_bucket must be one of {', '.join(HASH_BUCKETS)}, got {self.hash_bucket!r}")
        if problems:
            raise UsageError("; ".join(problems))


@dataclass(frozen=True)
class EventRecord:
    time: float
    resource: str
    event: str
    instance: str
    task: str


@dataclass
class SimResult:
    throughput: float
    per_resource_busy_fraction: Dict[Resource, float]
    completion_times: List[Tuple[str, float]]
    steady_state_period: float
    warmup: int
    injected: int
    completed: int
    last_injection: float
    replica_loads: Dict[Tuple[str, str], int]
    routing_violations: int
    events: List[EventRecord] = field(default_factory=list)
    task_timings: Dict[Tuple[str, str], Tuple[float, float]] = field(default_factory=dict)
    file_arrivals: Dict[Tuple[str, str, str], float] = field(default_factory=dict)
    busy_intervals: Dict[Resource, List[Tuple[float, float]]] = field(default_factory=dict)

    @property
    def per_1000s(self) -> float:
        return self.throughput * 1000.0

    def busy_fraction(self, resource: Resource) -> float:
        return self.per_resource_busy_fraction.get(resource, 0.0)


def _measured(times: List[float], warmup: int, last_injection: float) -> List[float]:
    """Post-warmup completions that happened while the source was still feeding the pipeline"""
    counted = times[warmup:]
    saturated = [t for t in counted if t <= last_injection]
    if len(saturated) >= 2:
        return saturated
    # short runs inject everything up front; the drain is all there is
    return counted


def measure_throughput(result: SimResult) -> float:
    times = _measured(sorted(t for _, t in result.completion_times), result.warmup, result.last_injection)
    if len(times) < 2:
        raise PipeschedError(f"need at least 2 completions after warmup, got {len(times)}")
    span = times[-1] - times[0]
    if span <= 0:
        raise PipeschedError("post-warmup completions share one timestamp")
    return (len(times) - 1) / span


def write_event_log(result: SimResult, path) -> None:
    if not result.events:
        raise UsageError("no events recorded; run the simulation with record_events")
    frame = pd.DataFrame([asdict(e) for e in result.events], columns=["time", "resource", "event", "instance", "task"])
    frame.to_csv(path, index=False)


class _Engine:
    def __init__(self, graph: TaskGraph, cluster: Cluster, exec: ExecutionMatrix, schedule: Schedule,
                 config: SimConfig):
        Schedule(schedule.assignment, graph).check(cluster)
        if not graph.is_acyclic():
            raise ScheduleError("cannot simulate a cyclic graph")
        self.graph, self.cluster, self.exec, self.config = graph, cluster, exec, config
        tasks = graph.tasks
        self.placements = {t: schedule.placements(t) for t in tasks}
        self.parents = {t: graph.parents(t) for t in tasks}
        self.children = {t: graph.children(t) for t in tasks}
        self.modes = {t: routing_mode(graph, t) for t in tasks}
        self.roots = graph.roots()
        self.exit = graph.exit_task
        self.window = config.max_in_flight or 4 * schedule.placement_count() + 4
        self.open_source = config.input_interarrival > 0
        self.warmup = self._warmup(len(tasks))

        self.route_rng = np.random.default_rng([config.seed, 0])
        self.jitter_rng = np.random.default_rng([config.seed, 1])
        self.seq = itertools.count()
        self.sort_keys: Dict[Resource, tuple] = {}

        self.queues: Dict[Resource, list] = defaultdict(list)
        self.waiting: Set[Resource] = set()
        self.busy: Set[Resource] = set()
        self.intervals: Dict[Resource, List[Tuple[float, float]]] = defaultdict(list)
        self.fel: list = []

        self.buckets: Dict[Tuple[int, str], Set[str]] = {}
        self.bucket_replica: Dict[Tuple[int, str], int] = {}
        self.chosen: Dict[Tuple[int, str], int] = {}
        self.pending: Dict[Tuple[str, int], int] = {}
        self.backlog: Dict[Tuple[str, int], Deque[int]] = defaultdict(deque)

        self.injected = 0
        self.completed = 0
        self.last_injection = 0.0
        self.completions: List[Tuple[str, float]] = []
        self.replica_loads: Counter = Counter()
        self.routing_violations = 0
        self.events: List[EventRecord] = []
        self.task_timings: Dict[Tuple[str, str], Tuple[float, float]] = {}
        self.file_arrivals: Dict[Tuple[str, str, str], float] = {}

    def _warmup(self, task_count: int) -> int:
        n = self.config.num_instances
        if self.config.warmup_instances is not None:
            return self.config.warmup_instances
        default = max(2 * task_count, 20)
        limit = max(0, n - 2)
        if default > limit:
            logger.warning(f"warmup of {default} instances clamped to {limit} for a {n}-instance run")
            return limit
        return default

    # -- work items ------------------------------------------------------------
    # exec item: ("x", instance, task, node, replica)
    # file item: ("f", instance, parent, child, src, dst, replica)

    def _sort_key(self, resource: Resource) -> tuple:
        key = self.sort_keys.get(resource)
        if key is None:
            key = self.sort_keys[resource] = resource.sort_key
        return key

    def _duration(self, item: tuple) -> float:
        if item[0] == "x":
            base = self.exec.cost(self.graph, item[2], item[3])
        else:
            base = self.cluster.transfer_time(item[4], item[5], self.graph.file_size(item[2], item[3]))
        if self.config.jitter:
            base *= 1.0 + self.jitter_rng.uniform(-self.config.jitter, self.config.jitter)
        return base

    @staticmethod
    def _label(item: tuple) -> str:
        return item[2] if item[0] == "x" else f"{item[2]}->{item[3]}"

    def _enqueue(self, resource: Resource, item: tuple, now: float) -> None:
        heappush(self.queues[resource], (now, item[1], self._label(item), next(self.seq), item))
        self.waiting.add(resource)

    def _record(self, now: float, resource: Resource, event: str, item: tuple) -> None:
        if self.config.record_events:
            self.events.append(EventRecord(now, str(resource), event, str(item[1]), self._label(item)))

    def _started(self, resource: Resource, item: tuple, now: float) -> None:
        if item[0] == "x":
            slot = (item[2], item[4])
            if self.pending.get(slot) == item[1]:
                del self.pending[slot]
        self._record(now, resource, "start", item)

    def _finished(self, resource: Resource, item: tuple, start: float, now: float) -> None:
        self.busy.discard(resource)
        self.intervals[resource].append((start, now))
        self._record(now, resource, "finish", item)
        if item[0] == "f":
            self._deliver(item[1], item[2], item[3], item[6], now)
            return
        _, inst, task, node, _ = item
        if self.config.record_events:
            self.task_timings[(str(inst), task)] = (start, now)
        if task == self.exit:
            self.completed += 1
            self.completions.append((str(inst), now))
            return
        for child in self.children[task]:
            replica = self._replica_for(inst, child)
            dest = self.placements[child][replica].node
            if dest == node:
                self._deliver(inst, task, child, replica, now)
            else:
                self._enqueue(Link(node, dest), ("f", inst, task, child, node, dest, replica), now)

    # -- routing -----------------------------------------------------------------

    def _replica_for(self, inst: int, child: str) -> int:
        replicas = self.placements[child]
        if len(replicas) == 1:
            return 0
        if self.modes[child] is RoutingMode.HASH:
            # recomputed for every file; _deliver audits that all parents agree
            return choose_replica(child, replicas, str(inst), RoutingMode.HASH,
                                  hash_fn=self.config.hash_fn, bucket=self.config.hash_bucket)
        key = (inst, child)
        replica = self.chosen.get(key)
        if replica is None:
            replica = self.chosen[key] = choose_replica(child, replicas, str(inst), RoutingMode.PROBABILITY,
                                                        rng=self.route_rng)
        return replica

    def _deliver(self, inst: int, parent: str, child: str, replica: int, now: float) -> None:
        key = (inst, child)
        first = self.bucket_replica.setdefault(key, replica)
        if first != replica:
            self.routing_violations += 1
        arrived = self.buckets.setdefault(key, set())
        arrived.add(parent)
        if self.config.record_events:
            self.file_arrivals[(str(inst), parent, child)] = now
        if len(arrived) < len(self.parents[child]):
            return
        del self.buckets[key]
        del self.bucket_replica[key]
        self.chosen.pop(key, None)
        node = self.placements[child][replica].node
        self.replica_loads[(child, node)] += 1
        self._enqueue(Node(node), ("x", inst, child, node, replica), now)

    # -- source --------------------------------------------------------------------

    def _draw(self, now: float) -> List[Tuple[str, int, int]]:
        """Create the next instance and pick, by portion, the replica of every root that receives it"""
        inst = self.injected
        self.injected += 1
        self.last_injection = now
        return [(root, choose_replica(root, self.placements[root], str(inst), RoutingMode.PROBABILITY,
                                      rng=self.route_rng), inst) for root in self.roots]

    def _admit(self, inst: int, root: str, replica: int, now: float) -> None:
        node = self.placements[root][replica].node
        self.replica_loads[(root, node)] += 1
        self._enqueue(Node(node), ("x", inst, root, node, replica), now)

    def _release(self, now: float) -> bool:
        released = False
        for slot, waiting in self.backlog.items():
            if waiting and slot not in self.pending:
                inst = waiting.popleft()
                self.pending[slot] = inst
                self._admit(inst, slot[0], slot[1], now)
                released = True
        return released

    def _idle(self, root: str) -> bool:
        return any((root, i) not in self.pending and not self.backlog[(root, i)]
                   for i in range(len(self.placements[root])))

    def _inject(self, now: float) -> bool:
        """
        Saturating source. Each root replica holds at most one unstarted instance
        in its node queue; further instances drawn for it wait in its backlog.
        New instances are drawn while some replica of every root sits idle and
        fewer than `window` instances are in flight.
        """
        progressed = self._release(now)
        while (self.injected < self.config.num_instances and self.injected - self.completed < self.window
               and all(self._idle(root) for root in self.roots)):
            for root, replica, inst in self._draw(now):
                self.backlog[(root, replica)].append(inst)
            self._release(now)
            progressed = True
        return progressed

    def _arrival(self, now: float) -> None:
        for root, replica, inst in self._draw(now):
            self._admit(inst, root, replica, now)
        if self.injected < self.config.num_instances:
            heappush(self.fel, (now + self.config.input_interarrival, ARRIVAL, next(self.seq), None, None, now))

    # -- disciplines -----------------------------------------------------------------

    def _dispatch(self, now: float) -> bool:
        started = False
        for resource in sorted(self.waiting - self.busy, key=self._sort_key):
            queue = self.queues[resource]
            item = heappop(queue)[4]
            if not queue:
                self.waiting.discard(resource)
            self.busy.add(resource)
            self._started(resource, item, now)
            heappush(self.fel, (now + self._duration(item), FINISH, next(self.seq), resource, item, now))
            started = True
        return started

    def _settle(self, now: float) -> None:
        while True:
            injected = not self.open_source and self._inject(now)
            if not self._dispatch(now) and not injected:
                return

    def run_async(self) -> None:
        if self.open_source:
            heappush(self.fel, (0.0, ARRIVAL, next(self.seq), None, None, 0.0))
        now = 0.0
        self._settle(now)
        while self.fel:
            now = self.fel[0][0]
            # completions first, then every idle resource picks its next item
            while self.fel and self.fel[0][0] == now:
                _, kind, _, resource, item, start = heappop(self.fel)
                if kind == FINISH:
                    self._finished(resource, item, start, now)
                else:
                    self._arrival(now)
            self._settle(now)
        self._check_done(now)

    def run_lockstep(self) -> None:
        """Rounds: each resource works through what was queued when the round began"""
        now = 0.0
        self._inject(now)
        while self.completed < self.config.num_instances:
            batch = {}
            for resource in sorted(self.waiting, key=self._sort_key):
                queue = self.queues[resource]
                batch[resource] = [heappop(queue)[4] for _ in range(len(queue))]
            self.waiting.clear()
            if not batch:
                self._check_done(now)
            outputs = []
            end = now
            for resource, items in batch.items():
                clock = now
                for item in items:
                    self._started(resource, item, clock)
                    finish = clock + self._duration(item)
                    outputs.append((finish, next(self.seq), resource, item, clock))
                    clock = finish
                end = max(end, clock)
            for finish, _, resource, item, start in sorted(outputs, key=lambda o: (o[0], o[1])):
                self._finished(resource, item, start, finish)
            now = end
            self._inject(now)

    def _check_done(self, now: float) -> None:
        if self.completed >= self.config.num_instances:
            return
        snapshot = {
            "time": now,
            "injected": self.injected,
            "completed": self.completed,
            "queued": {str(r): len(self.queues[r]) for r in sorted(self.waiting, key=self._sort_key)},
            "partial_buckets": {f"{inst}:{child}": sorted(parents)
                                for (inst, child), parents in sorted(self.buckets.items())[:20]},
        }
        raise DeadlockError(f"simulation stalled at t={now:.6g} with {self.completed}/"
                            f"{self.config.num_instances} instances complete", snapshot)

    # -- results -------------------------------------------------------------------

    def result(self) -> SimResult:
        times = _measured([t for _, t in self.completions], self.warmup, self.last_injection)
        if len(times) >= 2 and times[-1] > times[0]:
            period = (times[-1] - times[0]) / (len(times) - 1)
            throughput = 1.0 / period
            start, end = times[0], times[-1]
        else:
            logger.warning(f"only {len(times)} completions after warmup, throughput is undefined")
            period, throughput = math.nan, math.nan
            start, end = 0.0, (self.completions[-1][1] if self.completions else 0.0)

        resources = [Node(n) for n in self.cluster.nodes] + sorted(
            (r for r in self.intervals if isinstance(r, Link)), key=self._sort_key)
        fractions = {}
        for resource in resources:
            if end <= start:
                fractions[resource] = 0.0
                continue
            overlap = sum(max(0.0, min(e, end) - max(s, start)) for s, e in self.intervals.get(resource, []))
            fractions[resource] = overlap / (end - start)

        return SimResult(
            throughput=throughput,
            per_resource_busy_fraction=fractions,
            completion_times=list(self.completions),
            steady_state_period=period,
            warmup=self.warmup,
            injected=self.injected,
            completed=self.completed,
            last_injection=self.last_injection,
            replica_loads=dict(self.replica_loads),
            routing_violations=self.routing_violations,
            events=self.events,
            task_timings=self.task_timings,
            file_arrivals=self.file_arrivals,
            busy_intervals={r: list(v) for r, v in self.intervals.items()} if self.config.record_events else {},
        )


def simulate(graph: TaskGraph, cluster: Cluster, exec: ExecutionMatrix, schedule: Schedule,
             config: Optional[SimConfig] = None) -> SimResult:
    config = config or SimConfig()
    engine = _Engine(graph, cluster, exec, schedule, config)
    if config.discipline == "lockstep":
        engine.run_lockstep()
    else:
        engine.run_async()
    result = engine.result()
    logger.info(f"simulated {result.completed} instances ({config.discipline}): "
                f"{result.per_1000s:.4g} per 1000 s, {result.routing_violations} routing violations")
    return result
