"""Angular-rate estimation from simulated event-camera star fields."""

from .catalog import StarCatalog, StarRecord, generate_desk_catalog, parse_catalog, query_fov
from .estimator import (EstimatorConfig, RateEstimate, estimate_global_flow, estimate_local_flow,
                        estimate_rates, solve_rates)
from .event_sim import Event, EventStream, RenderConfig, generate_events, simulate_case
from .fusion import DualMounting, FusedRates, fuse, fuse_b_frame, rates_to_inertial
from .geometry import CameraModel, EulerAngles, boresight_attitude, project_pinhole, rotation_from_euler
from .harness import CaseResult, RmsSummary, SimulationConfig, compute_rms, emit_results, run_campaign
from .kinematics import AngularRates, MotionFieldSample, motion_field, motion_matrix, propagate_attitude

__version__ = "0.1.0"
