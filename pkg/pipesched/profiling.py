"""
Fitting link and execution cost models from measured samples
"""

import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np
import pandas as pd

from pipesched.errors import ProfileError
from pipesched.model import Cluster, ExecutionMatrix, LinkProfile, TaskGraph
from utils.logger import Logger

logger = Logger(__name__)

MAX_CONDITION = 1e12


@dataclass(frozen=True)
class TransferSample:
    size: float
    time: float

    def __post_init__(self):
        if not (math.isfinite(self.size) and math.isfinite(self.time)):
            raise ProfileError(f"non-finite transfer sample ({self.size}, {self.time})")
        if self.size < 0 or self.time < 0:
            raise ProfileError(f"negative transfer sample ({self.size}, {self.time})")


@dataclass(frozen=True)
class ExecSample:
    task: str
    node: str
    time: float

    def __post_init__(self):
        if not (math.isfinite(self.time) and self.time > 0):
            raise ProfileError(f"execution time for ({self.task}, {self.node}) must be > 0, got {self.time}")


def fit_link_profile(samples: Sequence[TransferSample]) -> LinkProfile:
    """
    Least-squares fit of time = a*s^2 + b*s + c.

    Sizes are divided by the largest size before solving so the normal
    equations stay well conditioned for byte-sized inputs; the coefficients
    are scaled back on return.
    """
    if not samples:
        raise ProfileError("no transfer samples")
    ordered = sorted(samples, key=lambda s: (s.size, s.time))
    sizes = np.array([s.size for s in ordered], dtype=float)
    times = np.array([s.time for s in ordered], dtype=float)

    distinct = len(np.unique(sizes))
    if distinct < 3:
        raise ProfileError(f"need at least 3 distinct sizes for a quadratic fit, got {distinct}")

    smax = float(sizes.max())
    x = sizes / smax
    design = np.column_stack([x * x, x, np.ones_like(x)])
    normal = design.T @ design
    cond = float(np.linalg.cond(normal))
    if not math.isfinite(cond) or cond > MAX_CONDITION:
        raise ProfileError(f"ill-conditioned fit, condition number {cond:.3g}")

    a_s, b_s, c_s = np.linalg.solve(normal, design.T @ times)
    profile = LinkProfile(float(a_s) / smax ** 2, float(b_s) / smax, float(c_s),
                          float(sizes.min()), smax)
    logger.debug(f"fitted {profile} from {len(samples)} samples (cond {cond:.3g})")
    return profile


def residual_sum_of_squares(profile: LinkProfile, samples: Iterable[TransferSample]) -> float:
    return float(sum((profile.predict(s.size) - s.time) ** 2 for s in samples))


def fit_link_profiles(samples_by_link: Dict[Tuple[str, str], List[TransferSample]]
                      ) -> Tuple[Dict[Tuple[str, str], LinkProfile], Dict[Tuple[str, str], str]]:
    """Fit every link; returns (profiles, failures) with one message per failed link"""
    profiles, failures = {}, {}
    for link in sorted(samples_by_link):
        try:
            profiles[link] = fit_link_profile(samples_by_link[link])
        except ProfileError as e:
            failures[link] = str(e)
            logger.error(f"Link {link[0]}->{link[1]}: {e}")
    return profiles, failures


def fixed_bandwidth_profile(bandwidth: float) -> LinkProfile:
    """Constant-bandwidth model: time = size / bandwidth"""
    if not bandwidth > 0:
        raise ProfileError(f"bandwidth must be > 0, got {bandwidth}")
    return LinkProfile(0.0, 1.0 / bandwidth, 0.0)


def matrix_from_compute_factors(loads: Dict[str, float], factors: Dict[str, float]) -> ExecutionMatrix:
    """Execution time as task load divided by a per-node speed factor"""
    bad = sorted(n for n, f in factors.items() if not f > 0)
    if bad:
        raise ProfileError(f"compute factors must be > 0 for {', '.join(bad)}")
    return ExecutionMatrix({(t, n): load / f for t, load in loads.items() for n, f in factors.items()})


def build_execution_matrix(samples: Sequence[ExecSample], graph: TaskGraph, cluster: Cluster) -> ExecutionMatrix:
    frame = pd.DataFrame([(s.task, s.node, s.time) for s in samples], columns=["task", "node", "time"])
    means = frame.groupby(["task", "node"])["time"].mean().to_dict() if len(frame) else {}

    wanted = [t for t in graph.tasks if graph.origin(t) == t]
    missing = [(t, n) for t in wanted for n in cluster.nodes if (t, n) not in means]
    if missing:
        raise ProfileError("missing execution samples for " + ", ".join(f"({t}, {n})" for t, n in missing))
    return ExecutionMatrix({(t, n): float(means[(t, n)]) for t in wanted for n in cluster.nodes})
