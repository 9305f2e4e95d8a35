"""Terrain-aware UAV deployment for cooperative spectrum sensing."""

from ._accel import backend_name
from .deploy import ConstraintBounds, Deployment, FitnessReport, FitnessWeights, fitness, repair, violations
from .energy import EnergyParams, avg_excess_energy, hover_energy
from .los import Bvh, build_bvh, los_dense_oracle, los_query
from .optimizer import GaConfig, OptTrace, PsoConfig, baseline_non_optimized, baseline_pso_only, optimize
from .scenario import ConfigError, Scenario, load_scenario, scenario_from_dict
from .sensing import (AntennaParams, EbdParams, LinkBudget, Target, UavState, antenna_gain,
                      cooperative_sum, detection_probability, ebd_threshold, simulate_ebd)
from .terrain import GaussianBump, HeightGrid, TerrainModel, fit_gaussians, load_heightmap

__version__ = "0.1.0"
