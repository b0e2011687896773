"""Exception types shared across the library."""


class LeadselError(Exception):
    """Base class for all library-specific errors."""


class InvalidTopologyError(LeadselError):
    """Topology request is malformed (unknown kind, bad size or probability)."""


class DisconnectedGraphError(LeadselError):
    """Operation requires a connected communication graph."""


class ConvergenceError(LeadselError):
    """An iterative solver exhausted its iteration budget."""


class InfeasibleGainsError(LeadselError):
    """Gains violate the feasibility conditions required by a rate certificate."""


class CertificateError(LeadselError):
    """Closed-form and numeric certificate routes disagree beyond tolerance."""


class FilterDivergenceError(LeadselError):
    """Consensus filter state grew past the divergence guard."""


class SimulationDivergenceError(LeadselError):
    """Closed-loop simulation diverged (error metric above abort threshold)."""


class ConfigError(LeadselError):
    """Scenario configuration violates a structural invariant."""
