import json
from pathlib import Path

import pytest

from pipesched import io
from pipesched.generators import fig1_bundle
from pipesched_cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_VALIDATION, main

DATA = Path(__file__).resolve().parent.parent / "data" / "fig1"


def model_args(schedule=None):
    args = [f"--dag={DATA / 'dag.json'}", f"--cluster={DATA / 'cluster.json'}", f"--matrix={DATA / 'exec.json'}"]
    if schedule:
        args.append(f"--schedule={schedule}")
    return args


def test_analyze_prints_bottleneck(capsys):
    assert main(["analyze"] + model_args(DATA / "manual.json")) == EXIT_OK
    out = capsys.readouterr().out
    assert "bottleneck: n3" in out
    assert "200 per 1000 s" in out


def test_schedule_writes_every_task(tmp_path):
    out = tmp_path / "heft.json"
    assert main(["schedule"] + model_args() + ["--algorithm=heft", f"--out={out}"]) == EXIT_OK
    assert set(json.loads(out.read_text())) == {"T0", "T1", "T2", "T3"}


def test_manual_schedule_needs_a_map(tmp_path):
    assert main(["schedule"] + model_args() + ["--algorithm=manual", f"--out={tmp_path / 's.json'}"]) == EXIT_USAGE
    assert main(["schedule"] + model_args() + ["--algorithm=greedy"]) == EXIT_USAGE


def test_refine_without_idle_nodes_keeps_schedule(tmp_path, capsys):
    out = tmp_path / "refined.json"
    code = main(["refine"] + model_args(DATA / "manual.json") + ["--method=split", "--max-rounds=3", f"--out={out}"])
    assert code == EXIT_OK
    refined = io.load_schedule(out, fig1_bundle().graph)
    assert refined.node_of("T3") == "n3"
    assert "before: 200 per 1000 s" in capsys.readouterr().out


def test_refine_dup_writes_graph(tmp_path):
    out, dag_out = tmp_path / "dup.json", tmp_path / "dag_dup.json"
    code = main(["refine"] + model_args(DATA / "manual.json") +
                ["--method=dup", "--max-rounds=2", f"--out={out}", f"--dag-out={dag_out}"])
    assert code == EXIT_OK
    assert io.load_graph(dag_out) == fig1_bundle().graph


def test_simulate_reports_both_throughputs(tmp_path, capsys):
    events = tmp_path / "events.csv"
    code = main(["simulate"] + model_args(DATA / "manual.json") + ["--instances=50", f"--events={events}"])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "simulated:  200 per 1000 s" in out
    assert "analytic:   200 per 1000 s" in out
    assert events.exists()


def test_simulate_hash_bucket_option(capsys):
    code = main(["simulate"] + model_args(DATA / "manual.json") + ["--instances=50", "--hash-bucket=modulo"])
    assert code == EXIT_OK
    assert "simulated:  200 per 1000 s" in capsys.readouterr().out
    assert main(["simulate"] + model_args(DATA / "manual.json") + ["--hash-bucket=random"]) == EXIT_USAGE


def test_gen_writes_bundle(tmp_path):
    assert main(["gen", "linear", "--length=3", "--nodes=2", f"--out-dir={tmp_path}"]) == EXIT_OK
    graph = io.load_graph(tmp_path / "dag.json")
    assert graph.tasks == ["T0", "T1", "T2"]
    assert io.load_cluster(tmp_path / "cluster.json").nodes == ("n1", "n2")
    assert json.loads((tmp_path / "manual.json").read_text()) == {"T0": "n1", "T1": "n2", "T2": "n1"}


def test_gen_rejects_options_the_shape_ignores(tmp_path):
    assert main(["gen", "linear", "--width=3", f"--out-dir={tmp_path}"]) == EXIT_USAGE


def test_bad_invocations():
    assert main(["schedule", "--dag=x.json"]) == EXIT_USAGE
    assert main(["analyze", "--dag=missing.json", "--cluster=c.json", "--matrix=m.json", "--schedule=s.json"]) \
        == EXIT_USAGE


def test_cyclic_graph_is_a_validation_error(tmp_path):
    data = json.loads((DATA / "dag.json").read_text())
    data["edges"].append({"parent": "T3", "child": "T1", "size": 1})
    dag = tmp_path / "dag.json"
    dag.write_text(json.dumps(data))
    args = [f"--dag={dag}", f"--cluster={DATA / 'cluster.json'}", f"--matrix={DATA / 'exec.json'}",
            f"--schedule={DATA / 'manual.json'}"]
    assert main(["analyze"] + args) == EXIT_VALIDATION


def _write_fit_inputs(tmp_path, sizes):
    bundle = fig1_bundle()
    io.save_graph(bundle.graph, tmp_path / "dag.json")
    rows = ["task,node,time_s"] + [f"{t},{n},{bundle.exec.time(t, n)}" for t in bundle.graph.tasks
                                   for n in ("n1", "n2")]
    (tmp_path / "exec.csv").write_text("\n".join(rows) + "\n")
    transfers = ["size_bytes,time_s"] + [f"{s},{3 * s * s + 2 * s + 1}" for s in sizes]
    (tmp_path / "n1__n2.csv").write_text("\n".join(transfers) + "\n")
    return [f"--dag={tmp_path / 'dag.json'}", f"--exec-samples={tmp_path / 'exec.csv'}",
            f"--transfers={tmp_path / 'n1__n2.csv'}", f"--cluster-out={tmp_path / 'cluster.json'}",
            f"--matrix-out={tmp_path / 'exec.json'}"]


def test_fit_recovers_profiles(tmp_path):
    assert main(["fit"] + _write_fit_inputs(tmp_path, [1, 2, 3])) == EXIT_OK
    cluster = io.load_cluster(tmp_path / "cluster.json")
    assert cluster.nodes == ("n1", "n2")
    assert cluster.link("n2", "n1").a == pytest.approx(3.0, abs=1e-9)
    assert cluster.link("n1", "n2").c == pytest.approx(1.0, abs=1e-9)
    assert io.load_matrix(tmp_path / "exec.json").time("T3", "n2") == 5.0


def test_fit_failure_is_a_runtime_error(tmp_path):
    assert main(["fit"] + _write_fit_inputs(tmp_path, [1, 1, 2])) == EXIT_RUNTIME


def test_experiment_writes_table(tmp_path, capsys):
    config = tmp_path / "exp.json"
    config.write_text(json.dumps({
        "pipelines": ["heft", "tpheft", "tpheft+split"],
        "bundles": [{"name": "chain", "shape": "linear", "params": {"length": 3, "num_nodes": 4}}],
        "max_rounds": 2,
    }))
    out = tmp_path / "results.csv"
    assert main(["experiment", str(config), f"--out={out}", "--instances=60"]) == EXIT_OK
    assert out.exists()
    assert "tpheft" in capsys.readouterr().out
