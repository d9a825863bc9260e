"""Coverage maximization for an energy-limited fixed-wing aerial base station.

Alternates exact user scheduling with convexified trajectory optimization,
solved by a built-in conic interior-point method.
"""

from .bcd import BcdOptions, SolveReport, Termination, optimize
from .init_traj import InitConfig, InitKind, build_init, circular_init, designed_init
from .model import RateConvention, Scenario, Schedule, SystemParams, Trajectory, coverage, total_energy, validate
from .robust import UliErrorModel, apply_uli_error, optimize_medm, optimize_wc
from .schedule import ScheduleOptions, solve_scheduling

__version__ = "0.1.0"

__all__ = [
                    "BcdOptions",
                    "InitConfig",
                    "InitKind",
                    "RateConvention",
                    "Scenario",
                    "Schedule",
                    "ScheduleOptions",
                    "SolveReport",
                    "SystemParams",
                    "Termination",
                    "Trajectory",
                    "UliErrorModel",
                    "apply_uli_error",
                    "build_init",
                    "circular_init",
                    "coverage",
                    "designed_init",
                    "optimize",
                    "optimize_medm",
                    "optimize_wc",
                    "solve_scheduling",
                    "total_energy",
                    "validate",
]
