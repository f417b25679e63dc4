"""Pre-optimized irregular antenna arrays for multi-user MIMO base stations."""

__version__ = "0.1.0"

from .geometry import (ArrayLayout, GridSpec, MovementRegion, check_feasible,
                       make_reference_grid, make_uniform_layout, repair)
from .channel import ScenarioConfig, UserDrop, channel_matrix, sample_drop
from .precoding import bd_precoders, sum_rate, user_rate, waterfill
from .optimizer import PsoConfig, optimize_ma, optimize_pia, pso_optimize
from .bench import EvalReport, compare, evaluate_fixed, evaluate_ma, sweep_antennas
