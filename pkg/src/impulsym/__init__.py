"""Symbolic models, alternating simulation functions and safety controllers
for impulsive systems with dwell-time constrained jumps."""

from .abstraction import (AbstractState, ConcreteState, SymbolicModel, build_symbolic,
                          check_nonblocking, concrete_post, post)
from .certificates import (AsfParameters, ComparisonFunction, MaxFormParameters,
                           StabilityCertificate, case_tag, check_dwell, derive_asf,
                           derive_reverse_asf, linear_system_certificate, optimize_precision,
                           to_max_form, verify_certificate)
from .config import RunConfig, case_config, load_config, parse_config
from .dynamics import (ImpulseSchedule, ImpulsiveSystem, InputSignal, Trajectory, flow_map,
                       jump_map, make_model, random_schedule, simulate, storage_delivery)
from .errors import *  # noqa: F401,F403
from .geometry import Box, GridDomain, ball_points, decode, quantize
from .synthesis import (SafetyController, SafetySpec, closed_loop, read_controller, refine,
                        synthesize_safety, validate_relation, write_controller)

__version__ = "0.1.0"
