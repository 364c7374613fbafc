"""Exception types raised across the package.

Everything derives from KubgenError so callers can catch one base class.
Names describe the failure, not the call site; several are shared by
multiple modules (ParseError covers both mesh text and manifest JSON).
"""


class KubgenError(Exception):
    """Base class for all errors raised by this package."""


class DuplicateAsset(KubgenError):
    """An asset uid was added to a scene that already contains it."""


class UnknownProperty(KubgenError):
    """A keyframe or view update referenced a property that does not exist."""


class EmptyTrack(KubgenError):
    """Interpolation was requested on a keyframe track with no keys."""


class BehindCamera(KubgenError):
    """A point with non-positive depth along the optical axis was projected."""


class ParseError(KubgenError):
    """Malformed structured text (mesh geometry, manifest JSON, CLI syntax)."""


class MissingField(KubgenError):
    """A required field was absent from a manifest or record."""


class EmptyMesh(KubgenError):
    """A mesh with no triangles where geometry is required."""


class DegenerateInput(KubgenError):
    """Input without enough rank for the operation (e.g. coplanar hull points)."""


class InvalidWinding(KubgenError):
    """Mesh triangles are not consistently wound outward (non-positive volume)."""


class InvalidDirection(KubgenError):
    """A direction vector of (near-)zero length was supplied."""


class PlacementFailed(KubgenError):
    """Rejection sampling exhausted its trial budget without a valid pose."""


class InvalidRates(KubgenError):
    """step_rate is not a positive integer multiple of frame_rate."""


class FormatError(KubgenError):
    """A binary raster file has a bad magic, version, dtype, or size."""


class IncompleteRecord(KubgenError):
    """A scene record directory is missing required files."""


class InconsistentRecord(KubgenError):
    """Files in a scene record disagree (shapes, frame ranges, ids)."""


class NoQueryCandidates(KubgenError):
    """Point-track sampling found no visible surface pixels to query."""


class UnknownWorker(KubgenError):
    """A worker name not present in the registry."""


class InvalidJobSpec(KubgenError):
    """Job sharding parameters out of range (job_id, num_jobs, counts)."""


class EmptyMask(KubgenError):
    """A metric was asked to score an empty pixel selection."""


class NoForeground(KubgenError):
    """fg_ari found no pixels outside the background id."""


class MismatchedTracks(KubgenError):
    """Predicted and ground-truth track sets differ in shape or count."""


class UnknownFeature(KubgenError):
    """An evaluation task or layer name not supported."""


class MissingCamera(KubgenError):
    """A scene operation that needs a camera found none."""


class InvalidCutoff(KubgenError):
    """A band-limit cutoff frequency outside (0, Nyquist]."""
