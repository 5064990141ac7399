"""SIDO player-performance scoring for team-invasion game telemetry."""

from .data import (
    GameRecord,
    ObservationTable,
    Phase,
    PlayerRow,
    Role,
    RosterLabel,
    Server,
    Stat,
    Team,
)
from .inference import (
    HierarchicalEffectsRegressor,
    ModelConfig,
    PosteriorFit,
    fit_hierarchical,
)
from .sido import Scope, SidoScore

__version__ = "0.1.0"

__all__ = [
    "GameRecord",
    "HierarchicalEffectsRegressor",
    "ModelConfig",
    "ObservationTable",
    "Phase",
    "PlayerRow",
    "PosteriorFit",
    "Role",
    "RosterLabel",
    "Scope",
    "Server",
    "SidoScore",
    "Stat",
    "Team",
    "fit_hierarchical",
    "__version__",
]
