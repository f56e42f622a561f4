"""Built-in grid traffic simulator."""
from .episode import EpisodeResult, SimulationMetrics, collect_metrics, run_episode, write_episode_log
from .network import NUM_PHASES, Network, build_network
from .scenario import ScenarioConfig, make_scenario
from .simulator import (
    ApproachVehicle,
    IntersectionSnapshot,
    LaneLinkObservation,
    LaneObservation,
    Simulator,
)

__all__ = [
    "EpisodeResult",
    "SimulationMetrics",
    "collect_metrics",
    "run_episode",
    "write_episode_log",
    "NUM_PHASES",
    "Network",
    "build_network",
    "ScenarioConfig",
    "make_scenario",
    "ApproachVehicle",
    "IntersectionSnapshot",
    "LaneLinkObservation",
    "LaneObservation",
    "Simulator",
]
