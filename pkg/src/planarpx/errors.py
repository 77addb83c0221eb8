"""Exception hierarchy. Every error carries a short machine category used by the CLI."""


class ToolkitError(Exception):
    """Base class for all toolkit errors."""

    category = "error"


class SingularHomographyError(ToolkitError):
    category = "singular-homography"


class PointAtInfinityError(ToolkitError):
    category = "point-at-infinity"


class LateralMotionError(ToolkitError):
    """Raised when |t_z| is (numerically) zero and the epipole lies at infinity."""

    category = "lateral-motion"


class HorizonError(ToolkitError):
    """gamma + ppe <= eps: depth unbounded or behind the camera."""

    category = "horizon"


class NonPositiveDepthError(ToolkitError):
    category = "nonpositive-depth"


class PoleError(ToolkitError):
    """Residual-flow factor pole: gamma * t_z / h_c == 1."""

    category = "flow-pole"


class EpipoleProximityError(ToolkitError):
    category = "epipole-proximity"


class DegenerateFlowError(ToolkitError):
    category = "degenerate-flow"


class DegenerateCloudError(ToolkitError):
    category = "degenerate-cloud"


class InsufficientInliersError(ToolkitError):
    category = "insufficient-inliers"


class NoCorrespondenceError(ToolkitError):
    category = "no-correspondence"


class EmptyMaskError(ToolkitError):
    category = "empty-mask"


class FormatError(ToolkitError):
    """Malformed input file (bad magic, truncation, wrong bit depth, parse failure)."""

    category = "format"


class NonRigidPoseError(FormatError):
    category = "non-rigid-pose"
