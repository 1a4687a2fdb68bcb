from pipesched.generators import uniform_cluster, uniform_matrix
from pipesched.model import Cluster, ExecutionMatrix, TaskGraph


def chain_graph(length: int, size: int = 0) -> TaskGraph:
    tasks = [f"T{i}" for i in range(length)]
    return TaskGraph(tasks, [(p, c, size) for p, c in zip(tasks, tasks[1:])], tasks[0], tasks[-1])


def free_cluster(num_nodes: int) -> Cluster:
    """Every link costs nothing"""
    return uniform_cluster(num_nodes, b=0.0)


def flat_matrix(graph: TaskGraph, cluster: Cluster, seconds: float = 1.0) -> ExecutionMatrix:
    return uniform_matrix({t: seconds for t in graph.tasks}, cluster.nodes)
