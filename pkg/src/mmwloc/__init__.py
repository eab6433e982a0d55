"""Position and rotation bounds and estimation for single-anchor mm-wave MIMO OFDM."""
from .config import ArrayOfdmConfig, LIGHT_SPEED
from .errors import MmwlocError
from .geometry import ChannelParamSet, PathParams, Pose, Scenario, params_from_scenario
from .channel import ObservationSet, PilotBlock, random_pilots, synthesize
from .fim import bounds, efim_position_rotation, fim_channel_params, fim_location, scenario_bounds
from .pipeline import estimate

__all__ = [
    "ArrayOfdmConfig", "LIGHT_SPEED", "MmwlocError", "ChannelParamSet", "PathParams", "Pose",
    "Scenario", "params_from_scenario", "ObservationSet", "PilotBlock", "random_pilots",
    "synthesize", "bounds", "efim_position_rotation", "fim_channel_params", "fim_location",
    "scenario_bounds", "estimate",
]
