"""
Readers and writers for the JSON and CSV files the tools exchange
"""

import json
from collections import defaultdict
from pathlib import Path
from typing import Dict, List, Tuple, Union

import pandas as pd

from pipesched.errors import ModelError, UsageError
from pipesched.model import Cluster, ExecutionMatrix, LinkProfile, Placement, Schedule, TaskGraph
from pipesched.profiling import ExecSample, TransferSample

PathLike = Union[str, Path]


def _read_json(path: PathLike) -> dict:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"file not found: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ModelError(f"{path} is not valid JSON: {e}")


def _write_json(data: dict, path: PathLike) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


# -- task graphs ---------------------------------------------------------------

def graph_to_dict(graph: TaskGraph) -> dict:
    data = {
        "entry": graph.entry_task,
        "exit": graph.exit_task,
        "tasks": graph.tasks,
        "edges": [{"parent": e.parent, "child": e.child, "size": e.file_size} for e in graph.edges],
    }
    if graph.origins:
        data["origins"] = dict(sorted(graph.origins.items()))
    return data


def graph_from_dict(data: dict) -> TaskGraph:
    try:
        edges = [(e["parent"], e["child"], e["size"]) for e in data["edges"]]
        return TaskGraph(data["tasks"], edges, data["entry"], data["exit"], data.get("origins"))
    except (KeyError, TypeError) as e:
        raise ModelError(f"malformed task graph: missing {e}")


def load_graph(path: PathLike) -> TaskGraph:
    return graph_from_dict(_read_json(path))


def save_graph(graph: TaskGraph, path: PathLike) -> None:
    _write_json(graph_to_dict(graph), path)


# -- clusters -----------------------------------------------------------------

def _profile_to_dict(profile: LinkProfile) -> dict:
    data = {"a": profile.a, "b": profile.b, "c": profile.c}
    if profile.min_size is not None:
        data["min_size"] = profile.min_size
        data["max_size"] = profile.max_size
    return data


def _profile_from_dict(data: dict) -> LinkProfile:
    return LinkProfile(float(data["a"]), float(data["b"]), float(data["c"]),
                       data.get("min_size"), data.get("max_size"))


def cluster_from_dict(data: dict) -> Cluster:
    """
    Links are directed; an entry marked "undirected" sets both directions, and
    an optional "default" profile fills every pair not listed.
    """
    try:
        nodes = list(data["nodes"])
        links: Dict[Tuple[str, str], LinkProfile] = {}
        if "default" in data:
            default = _profile_from_dict(data["default"])
            links.update({(u, v): default for u in nodes for v in nodes if u != v})
        for entry in data.get("links", []):
            profile = _profile_from_dict(entry)
            links[(entry["src"], entry["dst"])] = profile
            if entry.get("undirected"):
                links[(entry["dst"], entry["src"])] = profile
    except (KeyError, TypeError) as e:
        raise ModelError(f"malformed cluster: missing {e}")
    return Cluster(tuple(nodes), links)


def cluster_to_dict(cluster: Cluster) -> dict:
    return {
        "nodes": list(cluster.nodes),
        "links": [dict(src=u, dst=v, **_profile_to_dict(p)) for (u, v), p in sorted(cluster.links.items())],
    }


def load_cluster(path: PathLike) -> Cluster:
    return cluster_from_dict(_read_json(path))


def save_cluster(cluster: Cluster, path: PathLike) -> None:
    _write_json(cluster_to_dict(cluster), path)


# -- execution matrices ---------------------------------------------------------

def matrix_to_dict(matrix: ExecutionMatrix) -> dict:
    times: Dict[str, Dict[str, float]] = defaultdict(dict)
    for (task, node), seconds in sorted(matrix.times.items()):
        times[task][node] = seconds
    return {"times": dict(times)}


def matrix_from_dict(data: dict) -> ExecutionMatrix:
    try:
        return ExecutionMatrix({(t, n): float(s) for t, row in data["times"].items() for n, s in row.items()})
    except (KeyError, TypeError, AttributeError) as e:
        raise ModelError(f"malformed execution matrix: {e}")


def load_matrix(path: PathLike) -> ExecutionMatrix:
    return matrix_from_dict(_read_json(path))


def save_matrix(matrix: ExecutionMatrix, path: PathLike) -> None:
    _write_json(matrix_to_dict(matrix), path)


# -- schedules ------------------------------------------------------------------

def schedule_to_dict(schedule: Schedule) -> dict:
    """{"T0": [{"n1": 0.15}, {"n2": 0.85}], ...} with placements in order"""
    return {t: [{p.node: p.portion} for p in ps] for t, ps in sorted(schedule.assignment.items())}


def schedule_from_dict(data: dict, graph: TaskGraph) -> Schedule:
    assignment: Dict[str, List[Placement]] = {}
    for task, entries in data.items():
        if isinstance(entries, str):
            assignment[task] = [Placement(entries, 1.0)]
            continue
        placements = []
        for entry in entries:
            placements.extend(Placement(node, float(portion)) for node, portion in entry.items())
        assignment[task] = placements
    return Schedule(assignment, graph)


def load_schedule(path: PathLike, graph: TaskGraph) -> Schedule:
    return schedule_from_dict(_read_json(path), graph)


def save_schedule(schedule: Schedule, path: PathLike) -> None:
    _write_json(schedule_to_dict(schedule), path)


def load_manual_map(path: PathLike) -> dict:
    """Task -> node map, or the schedule format for split manual placements"""
    data = _read_json(path)
    if not isinstance(data, dict):
        raise ModelError(f"{path}: a manual map must be a JSON object")
    return data


# -- samples --------------------------------------------------------------------

def _read_csv(path: PathLike, required: List[str]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"file not found: {path}")
    frame = pd.read_csv(path)
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise UsageError(f"{path} is missing columns {', '.join(missing)}")
    return frame


def load_transfer_samples(path: PathLike) -> Dict[Tuple[str, str], List[TransferSample]]:
    """
    Columns size_bytes,time_s plus src,dst. Without src/dst the file stem
    names the link as SRC__DST.
    """
    path = Path(path)
    frame = _read_csv(path, ["size_bytes", "time_s"])
    if {"src", "dst"} <= set(frame.columns):
        keys = list(zip(frame["src"].astype(str), frame["dst"].astype(str)))
    else:
        if "__" not in path.stem:
            raise UsageError(f"{path}: no src/dst columns and the file name is not SRC__DST")
        keys = [tuple(path.stem.split("__", 1))] * len(frame)
    samples: Dict[Tuple[str, str], List[TransferSample]] = defaultdict(list)
    for key, size, seconds in zip(keys, frame["size_bytes"], frame["time_s"]):
        samples[key].append(TransferSample(float(size), float(seconds)))
    return dict(samples)


def load_exec_samples(path: PathLike) -> List[ExecSample]:
    frame = _read_csv(path, ["task", "node", "time_s"])
    return [ExecSample(str(t), str(n), float(s)) for t, n, s in zip(frame["task"], frame["node"], frame["time_s"])]
