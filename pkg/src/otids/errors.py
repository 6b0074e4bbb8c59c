"""Exception taxonomy shared by all pipeline stages.

Grouping matters for the command line front end: parse failures, schema
failures, configuration failures and degenerate-data failures map to
distinct process exit codes.
"""


class OtidsError(Exception):
    """Base class for every error raised by this package."""


# --- input / parse failures ------------------------------------------------

class ParseError(OtidsError):
    """Input file is structurally broken (truncated header, no data section)."""


# --- schema failures ---------------------------------------------------------

class SchemaError(OtidsError):
    """Base for disagreements between data and a declared schema."""


class UnknownSchema(SchemaError):
    """Requested builtin schema identifier does not exist."""


class SchemaMismatch(SchemaError):
    """File columns cannot be matched to the schema; message lists the names."""


class ShapeMismatch(SchemaError):
    """Array dimensions disagree with what a trained model expects."""


# --- configuration failures --------------------------------------------------

class InvalidConfig(OtidsError):
    """A configuration value is out of its documented domain."""


class InvalidComponentCount(InvalidConfig):
    """Requested projection size exceeds the available dimensions (or < 1)."""


# --- degenerate data ----------------------------------------------------------

class DegenerateDataError(OtidsError):
    """Base for data that is structurally valid but unusable for the task."""


class MissingLabels(DegenerateDataError):
    """Operation needs labels and the dataset does not carry them."""


class EmptyInput(DegenerateDataError):
    """Operation received zero rows."""


class EmptyColumn(DegenerateDataError):
    """A column has no observed value at all, so it cannot be interpolated."""


class NotInterpolated(DegenerateDataError):
    """Matrix still contains missing cells where a complete matrix is required."""


class StratumTooSmall(DegenerateDataError):
    """A class has too few records to stratify at the requested granularity."""


class DegenerateLabels(DegenerateDataError):
    """Training labels collapse to a single class."""


class EmptyNode(DegenerateDataError):
    """Impurity of an empty histogram is undefined."""


class EmptyEvaluation(DegenerateDataError):
    """Metrics over zero predictions are undefined."""


class NotFinite(DegenerateDataError):
    """Input contains NaN or infinity where finite values are required."""
