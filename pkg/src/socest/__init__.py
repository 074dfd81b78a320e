"""Online Thevenin-model identification and lithium-ion SOC estimation.

Library layout:
  model     equivalent-circuit math (OCV curve, coulomb counting, exact
            discrete propagation, bilinear coefficient maps)
  ident     forgetting-factor recursive least squares and its battery
            instantiations
  filters   the four SOC estimators (EKF, H-infinity, and two adaptive
            variants) behind one step interface
  sim       synthetic drive cycles, exact truth integration, seeded noise
  pipeline  the joint online loop plus RMSE/MAE scoring
  cli       batch commands: simulate, fit-ocv, run, compare
"""

from .errors import (
    ConfigError,
    DegenerateUpdateError,
    EmptyInputError,
    EmptyWindowError,
    IllConditionedError,
    InvalidCoeffsError,
    LengthMismatchError,
    MissingReferenceError,
    NonPhysicalParamsError,
    RiccatiBlowupError,
    SingularInnovationError,
    SocestError,
    TraceFormatError,
)
from .filters import (
    AdaptiveConfig,
    FilterKind,
    FilterState,
    HinfConfig,
    NoiseConfig,
    StepDiagnostics,
    ahiekf_adapt,
    default_adaptive_config,
    default_hinf_config,
    default_noise_config,
    ekf_update,
    filter_step,
    hinf_update,
    iahiekf_adapt,
    innovate,
    make_filter_state,
    predict,
    window_mean,
)
from .ident import (
    FfrlsState,
    RegressorSample,
    ffrls_step,
    fit_ocv_polynomial,
    new_ffrls_state,
    ocv_ident_step,
    thevenin_ident_step,
)
from .model import (
    DEFAULT_OCV_COEFFS,
    BatterySpec,
    DiscreteCoeffs,
    EcmState,
    OcvCurve,
    TheveninParams,
    coulomb_step,
    default_battery_spec,
    default_ocv_curve,
    discrete_from_params,
    ocv_eval,
    ocv_slope,
    params_from_discrete,
    terminal_voltage,
    thevenin_step,
)
from .pipeline import (
    FilterRunResult,
    ReferenceMode,
    RunConfig,
    RunResult,
    build_reference,
    mae_pct,
    rmse_pct,
    run_joint,
)
from .sim import (
    CycleKind,
    DriveCycleSpec,
    MeasuredTrace,
    NoiseSpec,
    TruthTrace,
    corrupt,
    generate_cycle,
    simulate_truth,
)

__version__ = "0.1.0"
