"""Exception hierarchy shared across the package."""


class GflupError(Exception):
    """Base class for all package-specific errors."""


class ZeroVariance(GflupError):
    """A column is constant over the rows used for standardization."""

    def __init__(self, column):
        self.column = column
        super().__init__(f"column {column!r} has zero variance over the stats rows")


class UnbalancedDesign(GflupError):
    """Genotypes do not all have the same number of replicates."""


class DegenerateMarkers(GflupError):
    """Marker matrix carries no polymorphism (scaling constant is zero)."""


class InsufficientReplication(GflupError):
    """Within-genotype variation requires at least two replicates."""


class InsufficientGenotypes(GflupError):
    """Between-genotype variation requires at least two genotypes."""


class NonSymmetric(GflupError):
    """Matrix is not symmetric within tolerance."""


class NonPositiveDiagonal(GflupError):
    """A diagonal entry is not strictly positive."""

    def __init__(self, index):
        self.index = index
        super().__init__(f"non-positive diagonal entry at index {index}")


class InvalidThreshold(GflupError):
    """Filtering threshold outside (0, 1]."""


class InvalidPenalty(GflupError):
    """Penalty parameter outside (0, 1]."""


class SingularPenalizedMatrix(GflupError):
    """Penalized correlation matrix is singular (only possible at zero penalty)."""


class InvalidDimension(GflupError):
    """Requested latent dimension is not admissible."""


class InvalidSplit(GflupError):
    """Train/test split sizes are not admissible."""


class TooManyFactors(GflupError):
    """Exhaustive subset search requested beyond the combinatorial guard."""


class SingularNoise(GflupError):
    """Noise matrix in the factor-score projection is numerically singular."""


class SingularV(GflupError):
    """Mixed-model coefficient matrix is numerically singular."""


class SingularKtt(GflupError):
    """Test-set kinship block is numerically singular."""


class SingularSigmaE(GflupError):
    """Residual trait covariance is not positive definite."""


class SingularPhenotypic(GflupError):
    """Regularized phenotypic covariance is numerically singular."""


class DegenerateVariance(GflupError):
    """Accuracy is undefined when either argument has zero variance."""


class DimensionMismatch(GflupError):
    """Shapes of related arrays do not agree."""


class MissingTestData(GflupError):
    """Scenario requires test-set secondary data that was not supplied."""


class ConfigError(GflupError):
    """Invalid simulation or pipeline configuration."""
