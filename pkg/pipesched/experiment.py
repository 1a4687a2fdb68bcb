"""
Experiment harness: schedule -> refine -> simulate over bundles, pipelines
and parameter sweeps, collected into comparison tables.
"""

import inspect
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import pandas as pd

from pipesched import io
from pipesched.analysis import estimate
from pipesched.dup import iterate_dup
from pipesched.errors import PipeschedError, UsageError
from pipesched.generators import SHAPES, Bundle, generate
from pipesched.schedulers import heft_schedule, manual_schedule, tpheft_schedule
from pipesched.simulator import SimConfig, simulate
from pipesched.split import iterate_split
from utils.logger import Logger

logger = Logger(__name__)

BASES = ("heft", "tpheft", "manual")
REFINEMENTS = ("split", "dup")
SWEEPABLE = ("compute_scale", "comm_scale")
COLUMNS = ["bundle", "sweep_param", "sweep_value", "pipeline", "baseline", "predicted_per_1000s",
           "simulated_per_1000s", "delta_pct", "error"]


@dataclass
class ExperimentConfig:
    bundles: List[dict]
    pipelines: List[str]
    instances: int = 300
    seed: int = 0
    max_rounds: int = 8
    warmup: Optional[int] = None
    idle_threshold: float = 0.0
    hash_bucket: str = "weighted"
    sweep: Optional[dict] = None
    base_dir: str = "."

    def __post_init__(self):
        if not self.pipelines:
            raise UsageError("experiment lists no pipelines")
        if not self.bundles:
            raise UsageError("experiment lists no bundles")
        for pipeline in self.pipelines:
            parse_pipeline(pipeline)
        if self.sweep is not None:
            if self.sweep.get("param") not in SWEEPABLE:
                raise UsageError(f"sweep param must be one of {', '.join(SWEEPABLE)}")
            if not self.sweep.get("values"):
                raise UsageError("sweep lists no values")

    def sweep_points(self) -> List[Tuple[Optional[str], Optional[float]]]:
        if self.sweep is None:
            return [(None, None)]
        return [(self.sweep["param"], float(v)) for v in self.sweep["values"]]


def load_experiment_config(path, instances: Optional[int] = None, seed: Optional[int] = None) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"file not found: {path}")
    data = json.loads(path.read_text(encoding="utf-8"))
    data.setdefault("base_dir", str(path.parent))
    if instances is not None:
        data.setdefault("instances", instances)
    if seed is not None:
        data.setdefault("seed", seed)
    try:
        return ExperimentConfig(**data)
    except TypeError as e:
        raise UsageError(f"bad experiment config: {e}")


def parse_pipeline(name: str) -> Tuple[str, Optional[str]]:
    base, _, refine = name.partition("+")
    if base not in BASES or (refine and refine not in REFINEMENTS):
        raise UsageError(f"unknown pipeline {name!r}; use one of {', '.join(BASES)} "
                         f"optionally followed by +{' or +'.join(REFINEMENTS)}")
    return base, refine or None


def baseline_of(pipeline: str) -> Optional[str]:
    base, refine = parse_pipeline(pipeline)
    if refine:
        return base
    return "heft" if base == "tpheft" else None


def build_bundle(entry: dict, base_dir: str = ".", sweep_param: Optional[str] = None,
                 sweep_value: Optional[float] = None) -> Bundle:
    if "files" in entry:
        files = {k: Path(base_dir) / v for k, v in entry["files"].items()}
        graph = io.load_graph(files["dag"])
        bundle = Bundle(entry.get("name", files["dag"].stem), graph, io.load_cluster(files["cluster"]),
                        io.load_matrix(files["exec"]),
                        io.load_manual_map(files["manual"]) if "manual" in files else {})
        if sweep_param:
            bundle = bundle.scaled(**{sweep_param: sweep_value})
    else:
        shape = entry.get("shape")
        params = dict(entry.get("params", {}))
        takes_sweep = shape in SHAPES and sweep_param in inspect.signature(SHAPES[shape]).parameters
        if sweep_param and takes_sweep:
            params[sweep_param] = sweep_value
        bundle = generate(shape, params)
        if sweep_param and not takes_sweep:
            bundle = bundle.scaled(**{sweep_param: sweep_value})
        bundle.name = entry.get("name", bundle.name)
    slow = entry.get("slow_link")
    if slow:
        bundle = bundle.with_slow_link(slow["src"], slow["dst"], float(slow.get("factor", 10.0)))
    return bundle


def run_pipeline(bundle: Bundle, pipeline: str, config: ExperimentConfig) -> Tuple[float, float]:
    """(predicted, simulated) throughput per 1000 s for one pipeline on one bundle"""
    base, refine = parse_pipeline(pipeline)
    graph, cluster, exec = bundle.graph, bundle.cluster, bundle.exec
    if base == "heft":
        schedule = heft_schedule(graph, cluster, exec)
    elif base == "tpheft":
        schedule = tpheft_schedule(graph, cluster, exec)
    else:
        if not bundle.manual:
            raise UsageError(f"bundle {bundle.name} has no manual map")
        schedule = manual_schedule(bundle.manual, graph, cluster)

    if refine == "split":
        schedule = iterate_split(schedule, cluster, exec, config.max_rounds, config.idle_threshold)
    elif refine == "dup":
        schedule, graph = iterate_dup(schedule, graph, cluster, exec, config.max_rounds)

    predicted = estimate(schedule, cluster, exec).per_1000s
    sim = simulate(graph, cluster, exec, schedule,
                   SimConfig(num_instances=config.instances, warmup_instances=config.warmup, seed=config.seed,
                             hash_bucket=config.hash_bucket))
    return predicted, sim.per_1000s


def _run_cell(cell: dict) -> dict:
    config: ExperimentConfig = cell["config"]
    row = {"bundle": cell["entry"].get("name", cell["entry"].get("shape")), "sweep_param": cell["sweep_param"],
           "sweep_value": cell["sweep_value"], "pipeline": cell["pipeline"],
           "baseline": baseline_of(cell["pipeline"]), "predicted_per_1000s": math.nan,
           "simulated_per_1000s": math.nan, "error": ""}
    try:
        bundle = build_bundle(cell["entry"], config.base_dir, cell["sweep_param"], cell["sweep_value"])
        row["bundle"] = bundle.name
        row["predicted_per_1000s"], row["simulated_per_1000s"] = run_pipeline(bundle, cell["pipeline"], config)
    except (PipeschedError, KeyError, ValueError) as e:
        row["error"] = f"{type(e).__name__}: {e}"
        logger.error(f"Cell {row['bundle']}/{cell['pipeline']} failed: {e}")
    return row


def _add_deltas(frame: pd.DataFrame) -> pd.DataFrame:
    lookup: Dict[tuple, float] = {
        (r.bundle, r.sweep_value, r.pipeline): r.simulated_per_1000s for r in frame.itertuples()}
    deltas = []
    for r in frame.itertuples():
        base = lookup.get((r.bundle, r.sweep_value, r.baseline)) if r.baseline else None
        if base is None or not base > 0 or math.isnan(r.simulated_per_1000s):
            deltas.append(math.nan)
        else:
            deltas.append((r.simulated_per_1000s / base - 1.0) * 100.0)
    frame["delta_pct"] = deltas
    return frame[COLUMNS]


def run_experiment(config: ExperimentConfig, workers: int = 1) -> pd.DataFrame:
    cells = [{"config": config, "entry": entry, "sweep_param": param, "sweep_value": value, "pipeline": pipeline}
             for entry in config.bundles
             for param, value in config.sweep_points()
             for pipeline in config.pipelines]
    logger.info(f"running {len(cells)} cells with {workers} worker(s)")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_cell, cells))
    else:
        rows = [_run_cell(c) for c in cells]
    failures = sum(1 for r in rows if r["error"])
    if failures:
        logger.warning(f"{failures} of {len(rows)} cells failed")
    return _add_deltas(pd.DataFrame(rows))


def summary_table(frame: pd.DataFrame) -> pd.DataFrame:
    """One row per bundle/sweep point: simulated throughput per pipeline and % deltas vs baselines"""
    index = ["bundle", "sweep_value"] if frame["sweep_value"].notna().any() else ["bundle"]
    ordered = list(dict.fromkeys(frame["pipeline"]))
    values = frame.pivot_table(index=index, columns="pipeline", values="simulated_per_1000s",
                               aggfunc="first", dropna=False)
    deltas = frame.pivot_table(index=index, columns="pipeline", values="delta_pct", aggfunc="first",
                               dropna=False)
    table = pd.DataFrame(index=values.index)
    for pipeline in ordered:
        table[pipeline] = values.get(pipeline)
        if pipeline in deltas and deltas[pipeline].notna().any():
            table[f"{pipeline} %"] = deltas[pipeline]
    return table


def format_table(frame: pd.DataFrame) -> str:
    return summary_table(frame).round(1).to_string(na_rep="-")
