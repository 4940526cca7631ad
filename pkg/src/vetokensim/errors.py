"""Exception types shared across the simulator."""


class VeTokenSimError(Exception):
    """Base class for every error the simulator raises on purpose."""


class LedgerError(VeTokenSimError):
    pass


class PriceError(LedgerError):
    pass


class EscrowError(VeTokenSimError):
    pass


class GaugeError(VeTokenSimError):
    pass


class AggregatorError(VeTokenSimError):
    pass


class BribeMarketError(VeTokenSimError):
    pass


class AgentError(VeTokenSimError):
    pass


class MetricsError(VeTokenSimError):
    pass


class ScenarioError(VeTokenSimError):
    """Scenario file parse or validation problem (CLI exit code 1)."""


class SimulationError(VeTokenSimError):
    """Runtime failure inside the epoch loop, annotated with epoch/agent context."""
