"""Laser firing-delay side channel in a multi-laser decoy-state BB84 transmitter:
event simulation, delay recovery with error bars, and gate-based signal/decoy
discrimination."""

__version__ = "0.1.0"

from .attack import (
    AttackReport,
    GateConfig,
    acceptance_fraction,
    attack_report,
    classify_events,
    min_gate_width,
    misclassification_probability,
)
from .config import SessionConfig, load_config
from .delays import (
    DelayEstimate,
    DelayReport,
    PeakTime,
    analyze_session,
    coverage_trial,
    detector_offset,
    solve_delays,
)
from .histogram import (
    GaussianFit,
    Histogram,
    fit_gaussian,
    fold_events,
    mean_variance_closed_form,
    mean_variance_sum_form,
    residual_variance,
)
from .model import (
    AnnouncedClass,
    ChannelConfig,
    Detector,
    EmissionConfig,
    GaussianPeak,
    IntensityClass,
    LaserId,
    Polarization,
    select_state,
    sigma_from_fwhm,
)
from .simulate import route_detector, simulate_pass
