"""Exception hierarchy shared by the library and the CLI."""


class DwTestError(Exception):
    """Base class for every error raised by this package."""

    exit_code: int = 1


class UsageError(DwTestError):
    """Invalid command-line usage or option combination."""

    exit_code = 1


class DataError(DwTestError):
    """Input data violates a precondition (file, format, group structure)."""

    exit_code = 2


class NumericError(DwTestError):
    """A numerical procedure could not produce a valid result."""

    exit_code = 3


class DisconnectedGraphError(NumericError):
    """Shortest paths requested on a graph with several components."""


class DegenerateNeighborRatiosError(NumericError):
    """Two-NN ratios carry no information (duplicated data)."""


class DegenerateSimplexError(NumericError):
    """Simplex vertices are affinely dependent."""


class NonGenericInputError(NumericError):
    """Cospherical or flat configuration detected during simplex location."""

    def __init__(self, detail: str = "") -> None:
        message = "non-generic input; perturb"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)


class ZeroVarianceError(NumericError):
    """Null variance of the statistic is zero, so it cannot be standardized."""
