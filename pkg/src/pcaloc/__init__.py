"""Direct localization of multiple narrowband sources by partly calibrated arrays."""

from .errors import *  # noqa: F401,F403
from .geometry import (ArrayGeometry, SubarrayGeometry, circular_subarray, composite_steering, linear_subarray,
                       propagation_delay, steering_matrix, steering_vector)
from .scenario import (SampleCovariance, ScenarioConfig, SignalKind, SignalModel, Snapshots, generate_signals,
                       normalize_power, sample_covariance, synthesize_snapshots)
from .subspace import build_steering_block, project_block, reduced_matrix, top_eigensum
from .estimators import (beamformer_weights, estimate_b_exact, estimate_b_relaxed, exact_ml_cost, music_spectrum,
                         mvdr_inverse_blocks, mvdr_spectrum, rc_cost, rc_cost_coherent, rc_cost_single,
                         rml_cost_coherent, rml_cost_noncoherent, rml_cost_single)
from .search import SearchGrid, alternating_projection, grid_argmax, pick_peaks

__version__ = "0.1.0"
