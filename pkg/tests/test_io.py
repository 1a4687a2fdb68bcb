import json
from pathlib import Path

import pytest

from pipesched import io
from pipesched.errors import ModelError, UsageError
from pipesched.model import LinkProfile, Placement, Schedule, TaskGraph

DATA = Path(__file__).resolve().parent.parent / "data" / "fig1"


def test_fig1_files_load(fig1):
    graph = io.load_graph(f"{DATA}/dag.json")
    cluster = io.load_cluster(f"{DATA}/cluster.json")
    matrix = io.load_matrix(f"{DATA}/exec.json")
    assert graph == fig1.graph
    assert cluster.nodes == ("n1", "n2", "n3")
    assert cluster.link("n3", "n1") == LinkProfile(0.0, 1.0, 0.0)
    assert matrix.time("T3", "n2") == 5.0
    assert io.load_manual_map(f"{DATA}/manual.json") == fig1.manual


def test_graph_keeps_origins(tmp_path):
    graph = TaskGraph(["A", "B", "B-dup", "C"], [("A", "B", 5), ("A", "B-dup", 5), ("B", "C", 1), ("B-dup", "C", 1)],
                      "A", "C", origins={"B-dup": "B"})
    path = tmp_path / "dag.json"
    io.save_graph(graph, path)
    loaded = io.load_graph(path)
    assert loaded == graph
    assert loaded.origin("B-dup") == "B"


def test_cluster_links_and_defaults():
    cluster = io.cluster_from_dict({
        "nodes": ["a", "b", "c"],
        "default": {"a": 0, "b": 1e-6, "c": 0},
        "links": [{"src": "a", "dst": "b", "a": 0, "b": 2e-6, "c": 0.1, "undirected": True},
                  {"src": "c", "dst": "a", "a": 0, "b": 0, "c": 0, "min_size": 1, "max_size": 10}],
    })
    assert cluster.link("b", "a") == cluster.link("a", "b") == LinkProfile(0.0, 2e-6, 0.1)
    assert cluster.link("a", "c").b == 1e-6
    assert cluster.link("c", "a").max_size == 10

    saved = io.cluster_to_dict(cluster)
    assert len(saved["links"]) == 6
    assert io.cluster_from_dict(saved).links == cluster.links


def test_schedule_file_format(fig1, tmp_path):
    schedule = Schedule({"T0": [Placement("n1", 0.15), Placement("n2", 0.85)], "T1": [Placement("n2", 1.0)],
                         "T2": [Placement("n2", 1.0)], "T3": [Placement("n3", 1.0)]}, fig1.graph)
    path = tmp_path / "schedule.json"
    io.save_schedule(schedule, path)
    assert json.loads(path.read_text())["T0"] == [{"n1": 0.15}, {"n2": 0.85}]
    assert io.load_schedule(path, fig1.graph).assignment == schedule.assignment

    bare = io.schedule_from_dict({"T0": "n1", "T1": "n2", "T2": "n2", "T3": "n3"}, fig1.graph)
    assert bare.node_of("T3") == "n3"


def test_missing_and_broken_files(tmp_path):
    with pytest.raises(UsageError, match="file not found"):
        io.load_graph(tmp_path / "nope.json")
    broken = tmp_path / "dag.json"
    broken.write_text("{not json")
    with pytest.raises(ModelError):
        io.load_graph(broken)
    with pytest.raises(ModelError, match="malformed"):
        io.graph_from_dict({"tasks": ["T0"]})


def test_transfer_samples_from_columns(tmp_path):
    path = tmp_path / "samples.csv"
    path.write_text("src,dst,size_bytes,time_s\nn1,n2,100,0.5\nn1,n2,200,0.9\nn2,n1,100,0.4\n")
    samples = io.load_transfer_samples(path)
    assert sorted(samples) == [("n1", "n2"), ("n2", "n1")]
    assert [s.size for s in samples[("n1", "n2")]] == [100.0, 200.0]


def test_transfer_samples_from_file_name(tmp_path):
    path = tmp_path / "n1__n2.csv"
    path.write_text("size_bytes,time_s\n1,6\n2,17\n3,34\n")
    assert list(io.load_transfer_samples(path)) == [("n1", "n2")]
    unnamed = tmp_path / "link.csv"
    unnamed.write_text("size_bytes,time_s\n1,6\n")
    with pytest.raises(UsageError):
        io.load_transfer_samples(unnamed)


def test_exec_samples_need_columns(tmp_path):
    path = tmp_path / "exec.csv"
    path.write_text("task,node,time_s\nT0,n1,3.0\nT0,n1,3.2\n")
    samples = io.load_exec_samples(path)
    assert [(s.task, s.node, s.time) for s in samples] == [("T0", "n1", 3.0), ("T0", "n1", 3.2)]
    bad = tmp_path / "bad.csv"
    bad.write_text("task,time_s\nT0,3.0\n")
    with pytest.raises(UsageError, match="node"):
        io.load_exec_samples(bad)
