"""Exception taxonomy.

Every failure mode that callers are expected to handle gets its own class so
the CLI can map any library error to a nonzero exit without string matching.
"""


class RegionCamError(Exception):
    """Base class for all errors raised by this package."""


# --- array container ---------------------------------------------------------

class ArrayFileError(RegionCamError):
    """Base class for array container (.npy) violations."""


class MalformedHeader(ArrayFileError):
    """Bad magic, unsupported version, undecodable or inconsistent header."""


class DtypeUnsupported(ArrayFileError):
    """Container declares a dtype other than little-endian float32/int32."""


class FortranOrder(ArrayFileError):
    """Container declares column-major payload; only C order is accepted."""


class NonFiniteData(ArrayFileError):
    """Float payload contains NaN or Inf."""


# --- array ops ---------------------------------------------------------------

class EmptyInput(RegionCamError):
    """An operation received an array with a zero extent."""


class ShapeMismatch(RegionCamError):
    """Two arrays that must agree in shape do not."""


# --- bundles -----------------------------------------------------------------

class BundleError(RegionCamError):
    """Base class for feature-bundle violations."""


class ManifestMissing(BundleError):
    """Bundle directory has no manifest.json."""


class MalformedManifest(BundleError):
    """manifest.json is unreadable or violates the documented schema."""


class NonMonotoneLayers(BundleError):
    """Layer resolutions do not grow monotonically from deep to shallow."""


class BundleExists(BundleError):
    """Refusing to overwrite an existing bundle without force=True."""


# --- activation maps ---------------------------------------------------------

class MissingGapWeights(RegionCamError):
    """CAM baseline requested on a bundle without classifier GAP weights."""


class EmptyStack(RegionCamError):
    """Fusion requested over zero maps."""


class UnknownClass(RegionCamError):
    """Requested class id is not present in the bundle."""


class UnknownLayer(RegionCamError):
    """Requested layer name is not present in the bundle."""


class ConfigError(RegionCamError):
    """Invalid pipeline configuration (bad subset order, empty grids, ...)."""


# --- clustering --------------------------------------------------------------

class TooFewPoints(RegionCamError):
    """Fewer points than requested clusters."""


class DegenerateInput(RegionCamError):
    """All points are zero vectors; cosine distance is undefined everywhere."""


# --- propagation -------------------------------------------------------------

class EmptyCascade(RegionCamError):
    """Region-averaging cascade invoked with no label maps."""


# --- seeding / metrics -------------------------------------------------------

class EmptyClassSet(RegionCamError):
    """Seed mask requested from an empty class->map collection."""


# --- localization ------------------------------------------------------------

class EmptyMask(RegionCamError):
    """Component extraction on a mask with no set pixels."""


class EmptyRecords(RegionCamError):
    """Localization scoring over an empty record list."""


class LengthMismatch(RegionCamError):
    """Paired lists (before/after measurements) differ in length."""
