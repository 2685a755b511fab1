"""Exception hierarchy shared across the toolkit."""


class BikeflowError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(BikeflowError):
    """Malformed or out-of-contract input data."""


class PointOutsideGridError(InvalidInputError):
    """Coordinate falls outside the declared grid bounding box."""


class InfeasibleInstanceError(BikeflowError):
    """Instance is infeasible by construction (detected before solving)."""


class OracleSizeError(BikeflowError):
    """Instance exceeds the size bounds the exhaustive oracle accepts."""


class NumericalError(BikeflowError):
    """The LP core could not certify a result numerically."""
