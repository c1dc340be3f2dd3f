"""Discrete conformal structures and the fractional combinatorial Calabi flow."""
from ._backend import BACKEND
from .errors import (DCFlowError, DegenerateFlip, DegenerateLength, DegenerateTriangle, DimensionMismatch,
                     Disconnected, FlipLimitExceeded, FoldedQuad, InvalidR, InvalidTarget, InvalidU, MeshError,
                     NonManifold, NonOrientable, NotPSD, ParseError, PreconditionViolated, StepFailure)
from .experiment import (ExperimentConfig, build_experiment, dump_experiment, emit_trace, load_experiment,
                         parse_experiment, reference_structure)
from .flow import (FlowConfig, FlowResult, FlowState, TraceRecord, calabi_energy, conservation_monitor, decay_rate,
                   expected_decay_rate, potential_F, run_flow, step, uniform_target, validate_target, velocity)
from .fractional import SpectralForm, apply_fractional_laplacian, fractional_power, spectral_decompose
from .geometry import MetricState, curvature, flip_diagonal_length, gauss_bonnet_residual, metric_state
from .jacobian import JacobianL, curvature_and_jacobian, curvature_of, jacobian_L, weighted_delaunay_indicator
from .mesh import (PRESET_NAMES, TriangulatedSurface, build_mesh, euler_characteristic, flip_edge, preset,
                   read_mesh, write_mesh)
from .structure import (Background, DiscreteConformalStructure, check_structure_condition, edge_lengths, r_from_u,
                        u_from_r)
from .surgery import (DelaunayReport, FlipEvent, conformal_transport, delaunay_check, flip_to_delaunay,
                      run_flow_with_surgery, weighted_delaunay_surgery_mode)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
