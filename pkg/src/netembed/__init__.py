"""netembed: from finite nets in unit balls to certified linear embeddings.

The package is organized around the constructive pipeline

    net -> net map -> almost-extension -> Poisson evolutes -> linear map

with side tools for the L1 factorization route, exact finite-metric
distortion (cut-cone LP / Gram SDP), the minimum-cost matching metric,
and a closed-form parameter calculator.  All objects are immutable after
construction and safe for concurrent reads.
"""

from netembed.spaces import NormedSpace, Net, make_space, greedy_net, sphere_net
from netembed.errors import (
    JohnPositionUnavailableError,
    NetTooLargeError,
    HypothesisViolatedError,
    StabilizationNotFoundError,
    GoodPointNotFoundError,
)

__all__ = [
    "NormedSpace",
    "Net",
    "make_space",
    "greedy_net",
    "sphere_net",
    "JohnPositionUnavailableError",
    "NetTooLargeError",
    "HypothesisViolatedError",
    "StabilizationNotFoundError",
    "GoodPointNotFoundError",
]

__version__ = "0.1.0"
