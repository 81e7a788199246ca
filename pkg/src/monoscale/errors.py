"""Exceptions and warnings shared across the package."""


class TooFewPoints(ValueError):
    """Not enough map points inside a detection to form a surface estimate."""


class DegenerateGeometry(ValueError):
    """A geometric construction has no usable solution (parallel rays, tangent lines, ...)."""


class InvalidObservation(ValueError):
    """Measured object extent too small to convert into a scale observation."""


class MissingPrior(KeyError):
    """No height prior configured for a detection class."""

    def __init__(self, class_label):
        super().__init__(class_label)
        self.class_label = class_label

    def __str__(self):
        return f"no height prior configured for class {self.class_label!r}"


class LengthMismatch(ValueError):
    """Paired sequences differ in length."""


class EmptyOverlap(ValueError):
    """No subsequence of any requested evaluation length exists."""


class ConfigError(ValueError):
    """Configuration values are out of range or inconsistent."""


class ParseError(ValueError):
    """A data file could not be parsed; carries file and line context."""

    def __init__(self, path, line_no, reason):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = str(path)
        self.line_no = line_no
        self.reason = reason


class ValidationError(ValueError):
    """A loaded dataset violates its invariants; carries the full report."""

    def __init__(self, report):
        shown = "; ".join(f"{i.where}: {i.message}" for i in report.issues[:5])
        extra = "" if len(report.issues) <= 5 else f" (+{len(report.issues) - 5} more)"
        super().__init__(f"dataset failed validation: {shown}{extra}")
        self.report = report


class DegenerateUpdateWarning(RuntimeWarning):
    """All grid likelihoods underflowed; the posterior was left unchanged."""
