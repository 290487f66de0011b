"""Exact Cramer-Rao bounds for single-source near-field localization with a ULA."""

from .closed_form import (
    closed_form_crb, crb_approx_literature, crb_conditional_eg, crb_conditional_vg,
    crb_firstorder_comparison, crb_taylor_eg, crb_unconditional, received_power_normalized,
)
from .errors import (
    DegenerateGeometry, EmptySearchRegion, IllConditioned, NearFieldError, NearSingular,
    NotAchievable,
)
from .fim import CrbResult, Model, ScenarioParams, SourceTag, oracle_crb
from .geometry import (
    ArrayConfig, DelayModel, Gain, SourceLocation, approx_delay, exact_delay,
    fresnel_bounds, gain_profile, steering_vector,
)
from .mlsim import McReport, generate_snapshots, ml_estimate, monte_carlo
from .nflr import (
    Criterion, RegionSpec, min_observation_time, min_sensors, min_snr, nflr_map,
    position_error_std, relative_error_std,
)

__version__ = "0.1.0"
