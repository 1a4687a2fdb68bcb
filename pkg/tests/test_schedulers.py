import itertools

import pytest

from pipesched.analysis import ResourceTimes, estimate, resource_times
from pipesched.errors import ScheduleError
from pipesched.generators import fork_join_bundle, layered_random_bundle, linear_bundle, uniform_cluster, uniform_matrix
from pipesched.model import ExecutionMatrix, Node, Placement, Schedule, TaskGraph, rank_order, upward_rank
from pipesched.schedulers import (_earliest_slot, _effected_cost, heft_schedule, manual_schedule, spread_mapping,
                                  tpheft_schedule)
from pipesched.simulator import SimConfig, simulate
from tests.helpers import chain_graph, flat_matrix


def _fig1_forcing_matrix(nodes):
    preferred = {"T0": ("n1", 3.0), "T1": ("n2", 2.0), "T2": ("n2", 2.0), "T3": ("n3", 5.0)}
    return ExecutionMatrix({(t, n): (cost if n == node else 100.0)
                            for t, (node, cost) in preferred.items() for n in nodes})


def test_heft_homogeneous_chain_stays_on_one_node():
    graph = chain_graph(5, size=10 ** 6)
    cluster = uniform_cluster(4)
    schedule = heft_schedule(graph, cluster, flat_matrix(graph, cluster))
    assert schedule.used_nodes() == ["n1"]
    assert not schedule.is_split()


def test_heft_single_task_takes_fastest_node():
    graph = TaskGraph(["T0"], [], "T0", "T0")
    cluster = uniform_cluster(3)
    exec = ExecutionMatrix({("T0", "n1"): 4.0, ("T0", "n2"): 1.5, ("T0", "n3"): 2.0})
    assert heft_schedule(graph, cluster, exec).node_of("T0") == "n2"
    assert tpheft_schedule(graph, cluster, exec).node_of("T0") == "n2"


def test_heft_reproduces_fig1_placement(fig1):
    schedule = heft_schedule(fig1.graph, fig1.cluster, _fig1_forcing_matrix(fig1.cluster.nodes))
    assert {t: schedule.node_of(t) for t in fig1.graph.tasks} == fig1.manual


def test_earliest_slot_fills_gaps():
    busy = [(0.0, 2.0), (5.0, 7.0)]
    assert _earliest_slot(busy, ready=1.0, duration=2.0) == 2.0
    assert _earliest_slot(busy, ready=1.0, duration=4.0) == 7.0
    assert _earliest_slot([], ready=3.0, duration=1.0) == 3.0


def test_tpheft_spreads_a_chain():
    graph = chain_graph(5, size=0)
    cluster = uniform_cluster(6)
    schedule = tpheft_schedule(graph, cluster, flat_matrix(graph, cluster, 2.0))
    assert len(schedule.used_nodes()) == 5
    assert estimate(schedule, cluster, flat_matrix(graph, cluster, 2.0)).throughput == pytest.approx(0.5)


def test_tpheft_single_node_keeps_everything():
    graph = chain_graph(4, size=10)
    cluster = uniform_cluster(1)
    schedule = tpheft_schedule(graph, cluster, flat_matrix(graph, cluster))
    assert schedule.used_nodes() == ["n1"]


def test_tpheft_separates_diamond_branches(fig1):
    cluster = uniform_cluster(4, b=0.01)
    exec = uniform_matrix({"T0": 3.0, "T1": 2.0, "T2": 2.0, "T3": 5.0}, cluster.nodes)
    schedule = tpheft_schedule(fig1.graph, cluster, exec)
    assert schedule.node_of("T0") == "n1"
    assert schedule.node_of("T1") == "n2"
    assert schedule.node_of("T2") == "n3"


@pytest.mark.parametrize("seed", [0, 3, 11])
def test_tpheft_places_every_task_on_random_dags(seed):
    bundle = layered_random_bundle(num_tasks=7, num_nodes=4, seed=seed)
    schedule = tpheft_schedule(bundle.graph, bundle.cluster, bundle.exec)
    assert schedule.problems(bundle.cluster) == []
    assert not schedule.is_split()
    assert resource_times(schedule, bundle.cluster, bundle.exec).max_time() > 0


@pytest.mark.parametrize("seed", range(6))
def test_tpheft_every_step_takes_the_smallest_effected_max(seed):
    bundle = layered_random_bundle(num_tasks=8, num_nodes=4, seed=seed)
    graph, cluster, exec = bundle.graph, bundle.cluster, bundle.exec
    schedule = tpheft_schedule(graph, cluster, exec)

    entry = graph.entry_task
    where = {entry: schedule.node_of(entry)}
    assert exec.cost(graph, entry, where[entry]) == min(exec.cost(graph, entry, n) for n in cluster.nodes)
    times = ResourceTimes({Node(n): 0.0 for n in cluster.nodes})
    times.add(Node(where[entry]), exec.cost(graph, entry, where[entry]))

    for task in rank_order(upward_rank(graph, cluster, exec)):
        if task in where:
            continue
        costs = {n: _effected_cost(task, n, where, times, graph, cluster, exec) for n in cluster.nodes}
        chosen = schedule.node_of(task)
        assert costs[chosen][0] <= min(c[0] for c in costs.values()) + 1e-9, task
        where[task] = chosen
        times.times[Node(chosen)] = costs[chosen][1]
        for link, extra in costs[chosen][2].items():
            times.add(link, extra)


@pytest.mark.parametrize("k", [2, 3, 4, 5, 6])
def test_chain_throughput_ratio_equals_length(k):
    bundle = linear_bundle(length=k, exec_time=2.0, file_size=0, num_nodes=k)
    heft = heft_schedule(bundle.graph, bundle.cluster, bundle.exec)
    tpheft = tpheft_schedule(bundle.graph, bundle.cluster, bundle.exec)
    predicted = estimate(tpheft, bundle.cluster, bundle.exec).throughput / \
        estimate(heft, bundle.cluster, bundle.exec).throughput
    assert predicted == pytest.approx(k)

    config = SimConfig(num_instances=200, seed=1)
    sim_heft = simulate(bundle.graph, bundle.cluster, bundle.exec, heft, config).throughput
    sim_tpheft = simulate(bundle.graph, bundle.cluster, bundle.exec, tpheft, config).throughput
    assert sim_tpheft / sim_heft == pytest.approx(k, rel=0.02)


def test_fork_join_ratio_below_chain_ratio():
    width = 3
    fork = fork_join_bundle(width=width, exec_time=2.0, file_size=1, num_nodes=width + 2)
    chain = linear_bundle(length=width + 2, exec_time=2.0, file_size=1, num_nodes=width + 2)

    def ratio(bundle):
        heft = heft_schedule(bundle.graph, bundle.cluster, bundle.exec)
        tpheft = tpheft_schedule(bundle.graph, bundle.cluster, bundle.exec)
        return estimate(tpheft, bundle.cluster, bundle.exec).throughput / \
            estimate(heft, bundle.cluster, bundle.exec).throughput

    assert ratio(fork) < ratio(chain)
    assert ratio(fork) == pytest.approx(3.0, rel=1e-3)


def test_schedulers_are_deterministic():
    bundle = layered_random_bundle(num_tasks=9, num_nodes=5, seed=4)
    for scheduler in (heft_schedule, tpheft_schedule):
        first = scheduler(bundle.graph, bundle.cluster, bundle.exec)
        second = scheduler(bundle.graph, bundle.cluster, bundle.exec)
        assert first.assignment == second.assignment
        assert first.problems(bundle.cluster) == []
        assert not first.is_split()


def test_manual_schedule_accepts_maps_and_portions(fig1):
    schedule = manual_schedule({"T0": "n1", "T1": [("n2", 0.25), ("n3", 0.75)], "T2": {"n2": 1.0},
                                "T3": [{"n3": 1.0}]}, fig1.graph, fig1.cluster)
    assert schedule.placements("T1") == [Placement("n2", 0.25), Placement("n3", 0.75)]
    assert schedule.node_of("T2") == "n2"


def test_manual_schedule_rejects_partial_maps(fig1):
    with pytest.raises(ScheduleError, match="T3"):
        manual_schedule({"T0": "n1", "T1": "n2", "T2": "n2"}, fig1.graph, fig1.cluster)
    with pytest.raises(ScheduleError, match="unknown node"):
        manual_schedule({"T0": "n1", "T1": "n2", "T2": "n2", "T3": "n8"}, fig1.graph, fig1.cluster)


def test_spread_mapping_uses_distinct_nodes(fig1):
    cluster = uniform_cluster(4)
    mapping = spread_mapping(fig1.graph, cluster)
    assert mapping == {"T0": "n1", "T1": "n2", "T2": "n3", "T3": "n4"}


def _best_unsplit_throughput(bundle):
    best = 0.0
    nodes = bundle.cluster.nodes
    tasks = bundle.graph.tasks
    for choice in itertools.product(nodes, repeat=len(tasks)):
        schedule = Schedule.unsplit(dict(zip(tasks, choice)), bundle.graph)
        best = max(best, estimate(schedule, bundle.cluster, bundle.exec).throughput)
    return best


@pytest.mark.parametrize("seed", [1, 2, 5])
def test_exhaustive_optimum_bounds_both_heuristics(seed):
    bundle = layered_random_bundle(num_tasks=5, num_nodes=3, seed=seed)
    optimum = _best_unsplit_throughput(bundle)
    for scheduler in (heft_schedule, tpheft_schedule):
        found = estimate(scheduler(bundle.graph, bundle.cluster, bundle.exec), bundle.cluster, bundle.exec)
        assert found.throughput <= optimum * (1 + 1e-9)


def test_tpheft_is_optimal_on_free_chains():
    bundle = linear_bundle(length=4, exec_time=3.0, file_size=0, num_nodes=4)
    schedule = tpheft_schedule(bundle.graph, bundle.cluster, bundle.exec)
    assert estimate(schedule, bundle.cluster, bundle.exec).throughput == \
        pytest.approx(_best_unsplit_throughput(bundle))
