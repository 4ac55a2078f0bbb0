"""Error types shared across the pipeline.

Each error carries a stable machine-readable ``code`` so CLI reports and
pipeline stage tags can name the failure without parsing messages.
"""


class NetembedError(Exception):
    """Base class; ``code`` is a stable kebab-case identifier."""

    code = "netembed-error"

    def __init__(self, message: str):
        super().__init__(f"{self.code}: {message}")


class JohnPositionUnavailableError(NetembedError):
    """No analytic scalar scaling brings this norm into the Euclidean sandwich."""

    code = "john-position-unavailable"


class NetTooLargeError(NetembedError):
    """Requested net would exceed the configured point cap."""

    code = "net-too-large"


class HypothesisViolatedError(NetembedError):
    """A hard hypothesis of a construction does not hold for the given inputs."""

    code = "hypothesis-violated"


class StabilizationNotFoundError(NetembedError):
    """No scale in the scan satisfied the stabilization inequality.

    This contradicts the averaging argument up to numerics, so it is
    surfaced with the full scan log rather than silently patched.
    """

    code = "stabilization-not-found"

    def __init__(self, message: str, log=None):
        super().__init__(message)
        self.log = log


class GoodPointNotFoundError(NetembedError):
    """No lattice point passed the per-direction derivative-gap test."""

    code = "good-point-not-found"

    def __init__(self, message: str, worst_slack=None):
        super().__init__(message)
        self.worst_slack = worst_slack
