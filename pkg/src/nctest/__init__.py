"""Single-qubit nonclassicality test: theory, hidden-variable models, and a
simulated heralded-photon experiment with the full estimator pipeline."""

from .analysis import (
    AnalyticQ,
    AssembledQuantities,
    CharacterizationMetrics,
    EstimateWithUncertainty,
    ProjectorEstimates,
    analytic_Q,
    assemble_test_quantities,
    characterization_metrics,
    estimate_projector,
    estimate_splitting,
    eta,
    significance,
)
from .lrt_models import (
    DominanceReport,
    HiddenVariableModel,
    PiecewisePolynomial,
    check_dominance,
    classical_moments,
    classical_theorem_check,
    counterexample_model,
    load_model,
    save_model,
)
from .photon_sim import (
    BackgroundSubtraction,
    BlockCounts,
    CountsRecord,
    DetectionChainConfig,
    McaHistogram,
    MeasurementSettings,
    SourceCharacterization,
    SourceModel,
    background_subtract,
    characterize_source,
    detect,
    polarizer_pass,
    run_measurement,
    sample_photon_number,
    split_photons,
)
from .pipeline import TestRunResult, measurement_plan, simulate_test_run
from .qubit_algebra import (
    QubitObservable,
    QubitState,
    eigenvalues,
    expectation,
    obs_combine,
    obs_multiply,
    projector,
    pure_state,
)
from .test_core import (
    QuantumPrediction,
    REFERENCE_PARAMETERS,
    TestParameters,
    build_A,
    build_A2,
    build_B,
    build_B2,
    build_B2_splitting_form,
    d_minus_closed_form,
    find_violating_states,
    optimize_parameters,
    p2_from_p1,
    predict,
    pure_state_H,
)

__version__ = "0.1.0"
