"""Fault-tolerant odometry multiplexing with a deterministic failure-injection simulator."""

from hero_mux.geometry import Pose, UnitRotation, between, compose, inverse
from hero_mux.mobility import Behavior, MobilityService, behavior_step, map_quality_to_service
from hero_mux.mux import MuxConfig, Ranking, ResiliencyMux, StreamSetup, TickInputs
from hero_mux.state import Quality, RobotState, StateQuality

__all__ = [
    "Behavior", "MobilityService", "MuxConfig", "Pose", "Quality", "Ranking", "ResiliencyMux",
    "RobotState", "StateQuality", "StreamSetup", "TickInputs", "UnitRotation", "behavior_step",
    "between", "compose", "inverse", "map_quality_to_service",
]
