import pytest

from pipesched.analysis import (ResourceTimes, analysis_report, bottleneck, format_report, predicted_throughput,
                                resource_times)
from pipesched.errors import ScheduleError
from pipesched.model import Link, LinkProfile, Node, Placement, Schedule
from tests.helpers import chain_graph, flat_matrix, free_cluster


def test_fig1_resource_times(fig1, fig1_schedule):
    times = resource_times(fig1_schedule, fig1.cluster, fig1.exec)
    assert times.nodes() == {"n1": 3.0, "n2": 4.0, "n3": 5.0}
    assert times.links() == {("n1", "n2"): 3.0, ("n2", "n3"): 5.0}


def test_fig1_bottleneck_prefers_node_on_tie(fig1, fig1_schedule):
    times = resource_times(fig1_schedule, fig1.cluster, fig1.exec)
    assert bottleneck(times) == (Node("n3"), 5.0)
    estimate = predicted_throughput(times)
    assert estimate.throughput == pytest.approx(0.2)
    assert estimate.per_1000s == pytest.approx(200.0)


def test_single_node_schedule_has_no_link_time(fig1):
    schedule = Schedule.unsplit({t: "n2" for t in fig1.graph.tasks}, fig1.graph)
    times = resource_times(schedule, fig1.cluster, fig1.exec)
    assert times.links() == {}
    assert times.node_time("n2") == 12.0
    assert times.node_time("n1") == 0.0


def test_split_parent_halves_each_link(fig1):
    schedule = Schedule({
        "T0": [Placement("n1", 0.5), Placement("n3", 0.5)],
        "T1": [Placement("n2", 1.0)], "T2": [Placement("n2", 1.0)], "T3": [Placement("n2", 1.0)],
    }, fig1.graph)
    times = resource_times(schedule, fig1.cluster, fig1.exec)
    assert times.link_time("n1", "n2") == pytest.approx(1.5)
    assert times.link_time("n3", "n2") == pytest.approx(1.5)
    assert times.node_time("n1") == pytest.approx(1.5)


def test_unknown_node_rejected(fig1):
    schedule = Schedule.unsplit({"T0": "n7", "T1": "n1", "T2": "n1", "T3": "n1"}, fig1.graph)
    with pytest.raises(ScheduleError):
        resource_times(schedule, fig1.cluster, fig1.exec)


def test_link_time_is_linear_in_file_size():
    cluster = free_cluster(2).with_link("n1", "n2", LinkProfile(0.0, 0.5, 0.0))
    for size in (2, 4, 8):
        graph = chain_graph(2, size=size)
        schedule = Schedule.unsplit({"T0": "n1", "T1": "n2"}, graph)
        times = resource_times(schedule, cluster, flat_matrix(graph, cluster))
        assert times.link_time("n1", "n2") == pytest.approx(size * 0.5)


def test_ties_within_tolerance():
    times = ResourceTimes({Link("n1", "n2"): 5.0, Node("n2"): 5.0 * (1 - 1e-12), Node("n1"): 1.0})
    assert bottleneck(times)[0] == Node("n2")
    times = ResourceTimes({Link("n1", "n2"): 5.0, Link("n0", "n3"): 5.0})
    assert bottleneck(times)[0] == Link("n0", "n3")


def test_argmax_unchanged_by_uniform_scaling(fig1, fig1_schedule):
    times = resource_times(fig1_schedule, fig1.cluster, fig1.exec)
    for factor in (1e-6, 3.0, 1e6):
        scaled = ResourceTimes({r: t * factor for r, t in times.items()})
        assert bottleneck(scaled)[0] == bottleneck(times)[0]


def test_zero_max_is_an_error():
    with pytest.raises(ScheduleError):
        predicted_throughput(ResourceTimes({Node("n1"): 0.0}))


def test_pressure_counts_resources_at_max(fig1, fig1_schedule):
    times = resource_times(fig1_schedule, fig1.cluster, fig1.exec)
    assert times.pressure() == (5.0, 2)


def test_report(fig1, fig1_schedule):
    times = resource_times(fig1_schedule, fig1.cluster, fig1.exec)
    frame = analysis_report(times)
    assert list(frame["resource"]) == ["n1", "n2", "n3", "n1->n2", "n2->n3"]
    assert frame.loc[frame["bottleneck"], "resource"].tolist() == ["n3"]
    assert frame.attrs["throughput_per_1000s"] == pytest.approx(200.0)
    assert "bottleneck: n3" in format_report(times)
