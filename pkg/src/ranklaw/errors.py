"""Exception hierarchy shared by the toolkit modules."""


class RanklawError(Exception):
    """Base class for all toolkit errors."""


class IngestError(RanklawError):
    """Malformed input data or schema violation."""


class StatsError(RanklawError):
    """Invalid input to a statistics routine."""


class RankingError(RanklawError):
    """Invalid ranking input (empty map, mismatched entity sets)."""


class CorrelationError(RanklawError):
    """Invalid input to a correlation routine."""


class FitError(RanklawError):
    """Invalid input to a fitting routine."""


class RegimeError(RanklawError):
    """Invalid input to a regime-segmentation routine."""


class SimulationError(RanklawError):
    """Invalid urn-process configuration or exhausted capacity."""
