"""Exception types shared across the toolkit.

Every error carries a stable machine-readable ``code`` and the process
``exit_code`` the command line front end maps it to (2 = configuration,
3 = numeric/rank, 4 = identification).
"""

from __future__ import annotations


class IvGraphError(Exception):
    """Base class for all toolkit errors."""

    code = "ERROR"
    exit_code = 3


class ConfigError(IvGraphError):
    code = "CONFIG"
    exit_code = 2


class ParseError(ConfigError):
    """A delimited-text cell could not be read as a finite number."""

    code = "PARSE_ERROR"

    def __init__(self, row: int, column: str, message: str):
        super().__init__(f"row {row}, column {column!r}: {message}")
        self.row = row
        self.column = column


class RoleError(ConfigError):
    """A role map names a column or block that does not fit the data."""

    code = "ROLE_ERROR"


class CycleError(ConfigError):
    """The block graph admits no topological order."""

    code = "CYCLE"

    def __init__(self, blocks: tuple[str, ...]):
        super().__init__(f"graph contains a cycle through block(s): {', '.join(blocks)}")
        self.blocks = tuple(blocks)


class RankDeficient(IvGraphError):
    """A predictor matrix fell below full column rank."""

    code = "RANK_DEFICIENT"

    def __init__(self, effective_rank: int, threshold: float, detail: str = "predictor matrix"):
        super().__init__(f"{detail} is rank deficient (effective rank {effective_rank}, threshold {threshold:g})")
        self.effective_rank = effective_rank
        self.threshold = threshold


class SingularMoment(IvGraphError):
    """A population moment sub-block required to be invertible is singular."""

    code = "SINGULAR_MOMENT"


class WeakInstrument(IvGraphError):
    """The first-stage cross moment is numerically rank deficient."""

    code = "WEAK_INSTRUMENT"

    def __init__(self, rank: int, threshold: float, smallest: float):
        super().__init__(
            f"first stage too weak: smallest singular value {smallest:.3e} of the "
            f"instrument/treatment cross moment is below {threshold:g} (effective rank {rank})"
        )
        self.rank = rank
        self.threshold = threshold
        self.smallest = smallest


class Underidentified(IvGraphError):
    """Fewer instrument columns than treatment columns."""

    code = "UNDERIDENTIFIED"
    exit_code = 4

    def __init__(self, k: int, p_x: int):
        super().__init__(f"{k} instrument column(s) cannot identify {p_x} treatment column(s)")
        self.k = k
        self.p_x = p_x


class NoValidSpace(IvGraphError):
    """The sample orthogonality constraints leave no feasible instrument."""

    code = "NO_VALID_SPACE"
    exit_code = 4


class InsufficientCount(IvGraphError):
    """The feasible instrument space has lower dimension than requested."""

    code = "INSUFFICIENT_COUNT"
    exit_code = 4

    def __init__(self, available: int, requested: int):
        super().__init__(f"feasible instrument space has dimension {available}, {requested} requested")
        self.available = available
        self.requested = requested


class TooManyFailures(IvGraphError):
    """More than the tolerated share of bootstrap replicates failed."""

    code = "TOO_MANY_FAILURES"

    def __init__(self, failed: int, total: int):
        super().__init__(f"{failed} of {total} bootstrap replicates had a degenerate first stage")
        self.failed = failed
        self.total = total
