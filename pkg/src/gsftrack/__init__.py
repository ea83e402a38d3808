"""Single-object radar tracking in clutter.

A Gaussian sum filter over data-association hypotheses with two conditional
update backends: the plain Kalman update and a robust Student's-t update
solved by variational inference. Ships with a contaminated-noise simulator
and a Monte Carlo benchmark harness (see the `gsftrack` CLI).
"""

from .exceptions import (
    EmptyPosteriorError,
    InvalidParameterError,
    NumericDegeneracyError,
)
from .kalman import kf_predict, kf_update, log_evidence
from .mixture import (
    GaussianMixture,
    MixtureComponent,
    merge_cost,
    merge_pair,
    mmse_estimate,
    normalize,
    prune,
    reduce_runnalls,
)
from .models import (
    GaussianBelief,
    LinearModel,
    StateVector,
    build_cv_model,
    symmetrize_psd,
)
from .rstkf import (
    FreeEnergyEstimate,
    StudentTConfig,
    VBFactors,
    VBPriors,
    aux_matrices,
    estimate_free_energy,
    make_vb_priors,
    rstkf_sweeps,
    rstkf_update,
    vb_init,
    vb_update_lambda,
    vb_update_sigma,
    vb_update_state,
    vb_update_xi,
)
from .simulate import (
    OutlierSchedule,
    Scenario,
    StepObservation,
    generate_detections,
    make_demo_scenario,
    make_experiment_scenario,
    read_scenario_config,
    simulate_run,
    simulate_truth,
    write_scenario_config,
)
from .tracker import (
    AssociationConfig,
    TrackerConfig,
    TrackerState,
    conditional_update,
    hypothesis_log_weight,
    make_tracker_state,
    predict_mixture,
    tracker_step,
)

__version__ = "0.1.0"

__all__ = [
    "AssociationConfig",
    "EmptyPosteriorError",
    "FreeEnergyEstimate",
    "GaussianBelief",
    "GaussianMixture",
    "InvalidParameterError",
    "LinearModel",
    "MixtureComponent",
    "NumericDegeneracyError",
    "OutlierSchedule",
    "Scenario",
    "StateVector",
    "StepObservation",
    "StudentTConfig",
    "TrackerConfig",
    "TrackerState",
    "VBFactors",
    "VBPriors",
    "aux_matrices",
    "build_cv_model",
    "conditional_update",
    "estimate_free_energy",
    "generate_detections",
    "hypothesis_log_weight",
    "kf_predict",
    "kf_update",
    "log_evidence",
    "make_demo_scenario",
    "make_experiment_scenario",
    "make_tracker_state",
    "make_vb_priors",
    "merge_cost",
    "merge_pair",
    "mmse_estimate",
    "normalize",
    "predict_mixture",
    "prune",
    "read_scenario_config",
    "reduce_runnalls",
    "rstkf_sweeps",
    "rstkf_update",
    "simulate_run",
    "simulate_truth",
    "symmetrize_psd",
    "tracker_step",
    "vb_init",
    "vb_update_lambda",
    "vb_update_sigma",
    "vb_update_state",
    "vb_update_xi",
    "write_scenario_config",
]
