"""Online leader selection for multi-agent collective tracking.

A library plus CLI simulator for leader-follower swarms that track an
external velocity reference while holding a formation, where the identity
of the leader is re-optimized online from the spectral properties of the
leader-grounded communication graph and the current tracking error.
"""

from .errors import (
    CertificateError,
    ConfigError,
    ConvergenceError,
    DisconnectedGraphError,
    FilterDivergenceError,
    InfeasibleGainsError,
    InvalidTopologyError,
    LeadselError,
    SimulationDivergenceError,
)
from .graphs import (
    GraphModel,
    GroundedSpectrum,
    TopologySpec,
    build_topology,
    canonical_topologies,
    eigenvalues_symmetric,
    ground,
    spectrum_survey,
)

__version__ = "0.1.0"
