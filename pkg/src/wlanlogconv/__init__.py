"""Throughput model, log-convexity witnesses and fair allocation for 802.11e WLANs."""

__version__ = "0.1.0"

from .model import AttemptVector, ThroughputVector, WlanParams, throughput  # noqa: E402
from .logconv import midpoint_witness, solve_delta  # noqa: E402
from .fairness import FairnessProblem, maxmin_fair, solve_fair  # noqa: E402

__all__ = [
    "AttemptVector",
    "FairnessProblem",
    "ThroughputVector",
    "WlanParams",
    "maxmin_fair",
    "midpoint_witness",
    "solve_delta",
    "solve_fair",
    "throughput",
]
