"""Error hierarchy shared by all aegis modules.

Every failure mode that can cross a module boundary gets a named exception
with a stable integer code.  The CLI maps codes to process exit statuses and
the wire bridge ships them as ``err`` records, so the numbers here are part
of the public contract (documented in the README).
"""

from __future__ import annotations


class AegisError(Exception):
    """Base class for all package errors."""

    code = 1


# -- geometry ---------------------------------------------------------------

class DegenerateInput(AegisError):
    """Point set spans fewer than 3 dimensions and inflation is disabled."""

    code = 4


class NonConvergence(AegisError):
    """Iterative fit hit its iteration cap before closing the duality gap."""

    code = 5


# -- perception -------------------------------------------------------------

class PerceptionError(AegisError):
    code = 6


class EmptyRegion(PerceptionError):
    """No pixel in the requested region carries valid depth."""


class EmptyCloud(PerceptionError):
    """Operation requires a nonempty point cloud."""


class NoCluster(PerceptionError):
    """Density clustering classified every point as noise."""


class PipelineEmpty(PerceptionError):
    """A preprocessing stage emptied the obstacle cloud."""


# -- assessment -------------------------------------------------------------

class AssessmentError(AegisError):
    code = 7


class RemoteUnavailable(AssessmentError):
    """Network or HTTP failure talking to a remote backend."""


class MalformedReply(AssessmentError):
    """Remote reply violated the single-line, name-only contract."""


class NotFound(AssessmentError):
    """Detector returned no candidate box for the query."""


# -- filter -----------------------------------------------------------------

class UnsafeStart(AegisError):
    """Bodies touch or overlap at t0; no positive barrier value exists."""

    code = 3


class DegenerateConstraint(AegisError):
    """A violated safety constraint has numerically zero coefficients."""

    code = 9


# -- sim / io ---------------------------------------------------------------

class ScenarioInvalid(AegisError):
    """Scenario file missing, unparseable, or violating its invariants."""

    code = 2


class EmptyResults(AegisError):
    """Metric aggregation over an empty episode list."""

    code = 8


class TraceFormatError(AegisError):
    """Trace file failed to parse."""

    code = 8
