import pytest

from pipesched.generators import fig1_bundle, uniform_matrix
from pipesched.model import Cluster, LinkProfile, Schedule


@pytest.fixture
def fig1():
    return fig1_bundle()


@pytest.fixture
def fig1_schedule(fig1):
    return Schedule.unsplit(fig1.manual, fig1.graph)


@pytest.fixture
def fig1_with_spare():
    """The diamond plus an idle n4 that matches n3 and has cheap links"""
    bundle = fig1_bundle()
    nodes = ("n1", "n2", "n3", "n4")
    links = dict(bundle.cluster.links)
    cheap = LinkProfile(0.0, 0.01, 0.0)
    for other in ("n1", "n2", "n3"):
        links[(other, "n4")] = cheap
        links[("n4", other)] = cheap
    cluster = Cluster(nodes, links)
    exec = uniform_matrix({"T0": 3.0, "T1": 2.0, "T2": 2.0, "T3": 5.0}, nodes)
    return bundle.graph, cluster, exec, Schedule.unsplit(bundle.manual, bundle.graph)
