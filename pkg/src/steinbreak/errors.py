"""Exception hierarchy shared across the package."""


class SteinbreakError(Exception):
    """Base class for all errors raised by this package."""


class InvalidPartition(SteinbreakError):
    """Break times are out of range, non-increasing, or leave an empty segment."""


class SegmentRankDeficient(SteinbreakError):
    """A segment Gram matrix is numerically singular."""


class DimensionMismatch(SteinbreakError):
    """Array shapes are inconsistent with the model dimensions."""


class RestrictionRankDeficient(SteinbreakError):
    """The restriction matrix does not have full row rank."""


class InfeasibleConfig(SteinbreakError):
    """No partition satisfies the requested break count and minimum segment length."""


class BudgetExceeded(SteinbreakError):
    """Exhaustive search aborted because the partition count exceeds the budget."""

    def __init__(self, partition_count: int, budget: int):
        self.partition_count = partition_count
        self.budget = budget
        super().__init__(
            f"exhaustive search over {partition_count} partitions exceeds budget {budget}"
        )


class SingularConstraintGram(SteinbreakError):
    """R (Z'Z)^-1 R' is numerically singular; the constraint cannot be imposed."""


class GammaSingular(SteinbreakError):
    """The scaled design Gram matrix is not positive definite."""


class KTooSmall(SteinbreakError):
    """The restriction rank is too small for a Stein-type rule (needs k > 2)."""


class MismatchedPartitions(SteinbreakError):
    """Estimates being combined were fitted on different partitions."""


class DivergentMoment(SteinbreakError):
    """The requested inverse moment does not exist for this degrees of freedom."""


class NonConvergence(SteinbreakError):
    """An iterative computation hit its iteration cap before reaching tolerance."""


class SingularFactorization(SteinbreakError):
    """A covariance factorization failed (matrix not positive semidefinite)."""


class ConfigError(SteinbreakError):
    """A run configuration is malformed (unknown keys, missing or invalid values)."""
