"""pipesched - throughput scheduling for pipelined DAG applications

Usage:
  pipesched_cli.py fit --dag=FILE --exec-samples=CSV (--transfers=CSV)... [--nodes=LIST] [--cluster-out=FILE] [--matrix-out=FILE]
  pipesched_cli.py schedule --dag=FILE --cluster=FILE --matrix=FILE --algorithm=ALG [--map=FILE] [--out=FILE]
  pipesched_cli.py refine --dag=FILE --cluster=FILE --matrix=FILE --schedule=FILE --method=METHOD [--max-rounds=N] [--idle-threshold=SEC] [--out=FILE] [--dag-out=FILE]
  pipesched_cli.py simulate --dag=FILE --cluster=FILE --matrix=FILE --schedule=FILE [--instances=N] [--warmup=N] [--seed=S] [--jitter=X] [--interarrival=SEC] [--discipline=D] [--hash-bucket=B] [--events=CSV]
  pipesched_cli.py analyze --dag=FILE --cluster=FILE --matrix=FILE --schedule=FILE
  pipesched_cli.py gen <shape> [--length=N] [--width=N] [--tasks=N] [--nodes=N] [--compute-scale=X] [--comm-scale=X] [--seed=S] [--out-dir=DIR]
  pipesched_cli.py experiment <config> [--out=CSV] [--workers=N] [--instances=N] [--seed=S]
  pipesched_cli.py (-h | --help)

Options:
  -h --help              Show this screen.
  --dag=FILE             Task graph JSON.
  --cluster=FILE         Cluster JSON (nodes and link profiles).
  --matrix=FILE          Execution matrix JSON.
  --schedule=FILE        Schedule JSON.
  --exec-samples=CSV     Execution samples (task,node,time_s).
  --transfers=CSV        Transfer samples (size_bytes,time_s[,src,dst]); repeatable.
  --nodes=LIST           Comma-separated node ids for fit, node count for gen.
  --cluster-out=FILE     Where fit writes the cluster [default: cluster.json].
  --matrix-out=FILE      Where fit writes the matrix [default: exec.json].
  --algorithm=ALG        heft, tpheft or manual.
  --map=FILE             Task to node map for the manual scheduler.
  --method=METHOD        split or dup.
  --max-rounds=N         Refinement rounds (default PIPESCHED_MAX_ROUNDS).
  --idle-threshold=SEC   Nodes at or below this schedule time count as idle [default: 0].
  --out=FILE             Output file.
  --dag-out=FILE         Where refine --method=dup writes the rewritten DAG [default: dag_dup.json].
  --instances=N          Input instances (default PIPESCHED_INSTANCES).
  --warmup=N             Completions ignored before measuring.
  --seed=S               Random seed (default PIPESCHED_SEED).
  --jitter=X             Uniform +-fraction applied to every duration [default: 0].
  --interarrival=SEC     Seconds between inputs, 0 keeps the source saturated [default: 0].
  --discipline=D         async (event driven) or lockstep (stage by stage rounds; on data/fig1 the
                         first output lands at 20 s under lockstep, 17 s under async) [default: async].
  --hash-bucket=B        How join tasks pick replicas: weighted follows split portions,
                         modulo alternates instance ids over replicas [default: weighted].
  --events=CSV           Write the event log here.
  --length=N             Chain length for linear.
  --width=N              Branch count for fork-join.
  --tasks=N              Task count for layered-random.
  --compute-scale=X      Multiply every execution time.
  --comm-scale=X         Multiply every link profile.
  --out-dir=DIR          Directory for generated files [default: .].
  --workers=N            Worker processes for experiment cells [default: 1].
"""

import json
import sys
from pathlib import Path

from docopt import DocoptExit, docopt

from pipesched import io
from pipesched.analysis import estimate, format_report, resource_times
from pipesched.dup import iterate_dup
from pipesched.errors import (DeadlockError, ModelError, PipeschedError, ProfileError, ScheduleError,
                              UsageError, ValidationError)
from pipesched.experiment import format_table, load_experiment_config, run_experiment
from pipesched.generators import generate
from pipesched.model import Cluster, validate
from pipesched.profiling import build_execution_matrix, fit_link_profiles, residual_sum_of_squares
from pipesched.schedulers import heft_schedule, manual_schedule, tpheft_schedule
from pipesched.simulator import SimConfig, simulate, write_event_log
from pipesched.split import iterate_split
from utils.config import Config
from utils.logger import Logger, setup_logging

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2, 3

logger = Logger("cli")


def _int(args, key, config: Config, env_key: str) -> int:
    value = args[key]
    if value is None:
        return config.get_int(env_key)
    try:
        return int(value)
    except ValueError:
        raise UsageError(f"{key} must be an integer, got {value!r}")


def _float(args, key) -> float:
    try:
        return float(args[key])
    except (TypeError, ValueError):
        raise UsageError(f"{key} must be a number, got {args[key]!r}")


def _load_model(args):
    graph = io.load_graph(args["--dag"])
    cluster = io.load_cluster(args["--cluster"])
    matrix = io.load_matrix(args["--matrix"])
    report = validate(graph, cluster, matrix)
    report.raise_if_invalid()
    return graph, cluster, matrix


def cmd_fit(args, config: Config) -> int:
    graph = io.load_graph(args["--dag"])
    samples = {}
    for path in args["--transfers"]:
        for link, found in io.load_transfer_samples(path).items():
            samples.setdefault(link, []).extend(found)
    exec_samples = io.load_exec_samples(args["--exec-samples"])
    if not samples or not exec_samples:
        raise UsageError("fit needs transfer samples and execution samples")

    if args["--nodes"]:
        nodes = [n.strip() for n in args["--nodes"].split(",") if n.strip()]
    else:
        nodes = sorted({s.node for s in exec_samples} | {n for link in samples for n in link})
    # a pair measured in one direction only serves both
    for (u, v) in list(samples):
        samples.setdefault((v, u), samples[(u, v)])

    wanted = {(u, v): samples[(u, v)] for u in nodes for v in nodes if u != v and (u, v) in samples}
    profiles, failures = fit_link_profiles(wanted)
    for u in nodes:
        for v in nodes:
            if u != v and (u, v) not in wanted:
                failures[(u, v)] = "no samples"
    if failures:
        raise ProfileError("link fits failed: " + "; ".join(f"{u}->{v}: {msg}" for (u, v), msg in sorted(failures.items())))

    cluster = Cluster(tuple(nodes), profiles)
    matrix = build_execution_matrix(exec_samples, graph, cluster)
    for (u, v), profile in sorted(profiles.items()):
        rss = residual_sum_of_squares(profile, wanted[(u, v)])
        print(f"{u}->{v}: a={profile.a:.6g} b={profile.b:.6g} c={profile.c:.6g} rss={rss:.6g}")
    io.save_cluster(cluster, args["--cluster-out"])
    io.save_matrix(matrix, args["--matrix-out"])
    print(f"Wrote {args['--cluster-out']} and {args['--matrix-out']}")
    return EXIT_OK


def cmd_schedule(args, config: Config) -> int:
    graph, cluster, matrix = _load_model(args)
    algorithm = args["--algorithm"]
    if algorithm == "heft":
        schedule = heft_schedule(graph, cluster, matrix)
    elif algorithm == "tpheft":
        schedule = tpheft_schedule(graph, cluster, matrix)
    elif algorithm == "manual":
        if not args["--map"]:
            raise UsageError("the manual scheduler needs --map")
        schedule = manual_schedule(io.load_manual_map(args["--map"]), graph, cluster)
    else:
        raise UsageError(f"unknown algorithm {algorithm!r}; use heft, tpheft or manual")
    out = args["--out"] or "schedule.json"
    io.save_schedule(schedule, out)
    print(format_report(resource_times(schedule, cluster, matrix)))
    print(f"Wrote {out}")
    return EXIT_OK


def cmd_refine(args, config: Config) -> int:
    graph, cluster, matrix = _load_model(args)
    schedule = io.load_schedule(args["--schedule"], graph).check(cluster)
    rounds = _int(args, "--max-rounds", config, "PIPESCHED_MAX_ROUNDS")
    before = estimate(schedule, cluster, matrix)
    method = args["--method"]
    if method == "split":
        refined = iterate_split(schedule, cluster, matrix, rounds, _float(args, "--idle-threshold"))
        graph_out = None
    elif method == "dup":
        refined, graph_out = iterate_dup(schedule, graph, cluster, matrix, rounds)
    else:
        raise UsageError(f"unknown method {method!r}; use split or dup")
    after = estimate(refined, cluster, matrix)
    if method == "dup" and graph_out is graph:
        print(f"Bottleneck {before.bottleneck} was not relieved by duplication; schedule unchanged")

    out = args["--out"] or "refined.json"
    io.save_schedule(refined, out)
    if graph_out is not None:
        io.save_graph(graph_out, args["--dag-out"])
        print(f"Wrote {args['--dag-out']}")
    print(f"before: {before.per_1000s:.4g} per 1000 s (bottleneck {before.bottleneck})")
    print(f"after:  {after.per_1000s:.4g} per 1000 s (bottleneck {after.bottleneck})")
    print(f"Wrote {out}")
    return EXIT_OK


def cmd_simulate(args, config: Config) -> int:
    graph, cluster, matrix = _load_model(args)
    schedule = io.load_schedule(args["--schedule"], graph).check(cluster)
    sim_config = SimConfig(
        num_instances=_int(args, "--instances", config, "PIPESCHED_INSTANCES"),
        warmup_instances=int(args["--warmup"]) if args["--warmup"] else None,
        input_interarrival=_float(args, "--interarrival"),
        seed=_int(args, "--seed", config, "PIPESCHED_SEED"),
        jitter=_float(args, "--jitter"),
        discipline=args["--discipline"],
        hash_bucket=args["--hash-bucket"],
        record_events=bool(args["--events"]),
    )
    result = simulate(graph, cluster, matrix, schedule, sim_config)
    predicted = estimate(schedule, cluster, matrix)

    print(f"simulated:  {result.per_1000s:.4g} per 1000 s (warmup {result.warmup}, "
          f"{result.completed} completed)")
    print(f"analytic:   {predicted.per_1000s:.4g} per 1000 s (bottleneck {predicted.bottleneck})")
    if predicted.per_1000s > 0:
        print(f"difference: {(result.per_1000s / predicted.per_1000s - 1) * 100:+.2f}%")
    print("busy fractions:")
    for resource, fraction in result.per_resource_busy_fraction.items():
        print(f"  {str(resource):<16} {fraction:.3f}")
    if result.routing_violations:
        logger.warning(f"{result.routing_violations} files reached a replica other than their siblings'")
    if args["--events"]:
        write_event_log(result, args["--events"])
        print(f"Wrote {args['--events']}")
    return EXIT_OK


def cmd_analyze(args, config: Config) -> int:
    graph, cluster, matrix = _load_model(args)
    schedule = io.load_schedule(args["--schedule"], graph).check(cluster)
    print(format_report(resource_times(schedule, cluster, matrix)))
    return EXIT_OK


GEN_OPTIONS = {
    "--length": ("length", int),
    "--width": ("width", int),
    "--tasks": ("num_tasks", int),
    "--nodes": ("num_nodes", int),
    "--compute-scale": ("compute_scale", float),
    "--comm-scale": ("comm_scale", float),
    "--seed": ("seed", int),
}


def cmd_gen(args, config: Config) -> int:
    shape = args["<shape>"]
    params = {}
    for option, (name, kind) in GEN_OPTIONS.items():
        if args[option] is not None:
            try:
                params[name] = kind(args[option])
            except ValueError:
                raise UsageError(f"{option} must be a number, got {args[option]!r}")
    if shape == "layered-random" and "seed" not in params:
        params["seed"] = config.get_int("PIPESCHED_SEED")
    bundle = generate(shape, params)

    out_dir = Path(args["--out-dir"])
    io.save_graph(bundle.graph, out_dir / "dag.json")
    io.save_cluster(bundle.cluster, out_dir / "cluster.json")
    io.save_matrix(bundle.exec, out_dir / "exec.json")
    if bundle.manual:
        (out_dir / "manual.json").write_text(json.dumps(bundle.manual, indent=2) + "\n", encoding="utf-8")
    print(f"Wrote {bundle.name} to {out_dir}")
    return EXIT_OK


def cmd_experiment(args, config: Config) -> int:
    instances = int(args["--instances"]) if args["--instances"] else config.get_int("PIPESCHED_INSTANCES")
    seed = int(args["--seed"]) if args["--seed"] else config.get_int("PIPESCHED_SEED")
    experiment = load_experiment_config(args["<config>"], instances=instances, seed=seed)
    frame = run_experiment(experiment, workers=int(args["--workers"]))
    out = args["--out"] or "experiment.csv"
    frame.to_csv(out, index=False)
    print(format_table(frame))
    print(f"Wrote {out}")
    return EXIT_OK if (frame["error"] == "").any() else EXIT_RUNTIME


COMMANDS = {
    "fit": cmd_fit,
    "schedule": cmd_schedule,
    "refine": cmd_refine,
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "gen": cmd_gen,
    "experiment": cmd_experiment,
}


def main(argv=None) -> int:
    try:
        args = docopt(__doc__, argv=argv)
    except DocoptExit as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE

    config = Config()
    setup_logging(config.get("PIPESCHED_LOG_LEVEL"), config.get("PIPESCHED_LOG_FILE") or None)
    command = next(name for name in COMMANDS if args[name])
    try:
        return COMMANDS[command](args, config)
    except (UsageError, ValueError) as e:
        logger.error(f"Usage error: {e}")
        return EXIT_USAGE
    except (ValidationError, ModelError, ScheduleError) as e:
        logger.error(f"Invalid input: {e}")
        return EXIT_VALIDATION
    except DeadlockError as e:
        logger.error(f"Simulation deadlocked: {e} {e.snapshot}")
        return EXIT_RUNTIME
    except PipeschedError as e:
        logger.error(f"Error running {command}: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
