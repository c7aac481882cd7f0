"""Exception hierarchy shared across the package."""

from __future__ import annotations


class FdbsError(Exception):
    """Base class for all errors raised by this package."""


# --- data model / shard images ---


class InvalidRecord(FdbsError):
    """A record field violates its invariants."""


class InvalidPredicate(FdbsError):
    """A query predicate is structurally invalid."""


class InvalidPrefixLen(FdbsError):
    """Prefix length outside 1..5."""


class InvalidCoverage(FdbsError):
    """A coverage description violates its invariants."""


class CoverageViolation(FdbsError):
    """A record lies outside the coverage it was assigned to."""


class DuplicateRecord(FdbsError):
    """Two records collide on the full (postcode, theme, lon, lat) key."""


class FormatError(FdbsError):
    """Shard image bytes do not conform to the file format."""


class ChecksumMismatch(FdbsError):
    """Stored digest does not match the recomputed record-section digest."""


class InvariantViolation(FdbsError):
    """A structurally valid image fails a semantic invariant."""


# --- cluster simulation ---


class ImageNotFound(FdbsError):
    """A pod template references an image the store cannot load."""


class UnknownPod(FdbsError):
    """Operation names a pod that does not exist."""


class UnknownService(FdbsError):
    """Operation names a service that does not exist."""


class UnknownDeployment(FdbsError):
    """Operation names a deployment that does not exist."""


class ServiceUnavailable(FdbsError):
    """No Ready pod matches the service and no external endpoint is set."""


class UpdateStalled(FdbsError):
    """A rolling update failed to converge within its step budget."""


class InvalidSpec(FdbsError):
    """An orchestration spec violates its invariants."""


# --- catalog / engine ---


class NameConflict(FdbsError):
    """Register would overwrite a differing entry of the same name."""


class UnreachableChild(FdbsError):
    """Federation registration probe could not reach the child endpoint."""


class NoCoverage(FdbsError):
    """Strict-mode planning found no catalog entry intersecting the predicate."""


class PartialFailure(FdbsError):
    """Some sub-queries of a plan failed after retries.

    ``failures`` lists (target name, slice, error message) triples.
    """

    def __init__(self, failures):
        self.failures = list(failures)
        names = ", ".join(f"{n}[{o},{o + l})" for n, (o, l), _ in self.failures)
        super().__init__(f"{len(self.failures)} sub-queries failed: {names}")


# --- cost model ---


class DegenerateSamples(FdbsError):
    """Fewer than two distinct x values; a line cannot be fitted."""


class NoCrossover(FdbsError):
    """The two latency models never trade places (or always do)."""
