"""Exception types shared across the simulator."""


class FedSenseError(Exception):
    """Base class for all fedsense errors."""


class PackingFailure(FedSenseError):
    """Hardcore thinning could not place the requested number of points."""


class DegenerateGeometry(FedSenseError):
    """Geometric quantity undefined for the given points."""


class InvalidDistance(FedSenseError):
    """Path loss evaluated at a non-positive distance."""


class NegativeStd(FedSenseError):
    """Shadowing standard deviation came out negative for these parameters."""


class LengthMismatch(FedSenseError):
    """Signal length does not match the configured sample count."""


class ShapeMismatch(FedSenseError):
    """Array shapes do not agree."""


class InvalidLength(FedSenseError):
    """Signal length too short for the network's pooling stages."""


class EmptyDataset(FedSenseError):
    """Operation requires at least one example."""


class EmptyUpdateSet(FedSenseError):
    """Aggregation requires at least one client update."""


class NonPositiveSnr(FedSenseError):
    """SNR-weighted aggregation requires strictly positive SNRs."""


class ParseError(FedSenseError):
    """Config document is malformed."""


class ValidationError(FedSenseError):
    """Config violates an invariant."""
