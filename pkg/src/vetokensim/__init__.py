"""Deterministic discrete-time simulator of vote-escrowed token governance.

The stack has three tiers: a base escrow/gauge protocol (lock a token for
time-decaying voting weight that steers weekly emissions), a pooling
aggregator whose own short-lock token governs the pooled weight through
fortnightly meta-rounds, and a bribe market that pays the meta-voters who
direct weight to bribed gauges.  Agent strategies generate the lock, vote and
bribe flow; a metrics engine reads the resulting trace.
"""

from .errors import VeTokenSimError
from .sim import ScenarioConfig, SimTrace, World, load_scenario, packaged_scenarios, run_scenario

__version__ = "0.1.0"

__all__ = [
    "ScenarioConfig",
    "SimTrace",
    "VeTokenSimError",
    "World",
    "load_scenario",
    "packaged_scenarios",
    "run_scenario",
    "__version__",
]
