"""Joint online loop: forgetting-factor identification and filter-based
SOC estimation advancing together each sample, plus scoring.

Each requested filter kind owns a full private chain (its own recursive
identifier, its own filter state, its own previous-SOC feedback), so
adding or removing kinds never perturbs the others and four-way
comparisons stay clean.  Per-step failures (non-physical identified
parameters, filter existence failures) are counted and bridged, never
allowed to abort a run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import (
    EmptyInputError,
    InvalidCoeffsError,
    LengthMismatchError,
    MissingReferenceError,
    NonPhysicalParamsError,
    RiccatiBlowupError,
    SingularInnovationError,
)
from .filters import (
    AdaptiveConfig,
    FilterKind,
    FilterState,
    HinfConfig,
    NoiseConfig,
    StepDiagnostics,
    default_adaptive_config,
    default_hinf_config,
    default_noise_config,
    filter_step,
    innovate,
    make_filter_state,
    predict,
)
from .ident import new_ffrls_state, thevenin_ident_step
from .model import (
    BatterySpec,
    OcvCurve,
    TheveninParams,
    coulomb_step,
    default_battery_spec,
    default_ocv_curve,
    ocv_eval,
    params_from_discrete,
)
from .sim import MeasuredTrace, TruthTrace


class ReferenceMode(str, Enum):
    PROVIDED = "provided"        # soc_ref column carried by the samples
    COULOMB = "coulomb"          # ampere-hour integration from a known start
    SIM_TRUTH = "sim_truth"      # simulator's clean SOC trajectory


@dataclass(slots=True)
class RunConfig:
    """Everything a joint run needs besides the samples themselves."""

    kinds: tuple[FilterKind, ...] = (FilterKind.EKF, FilterKind.HIEKF,
                                     FilterKind.AHIEKF, FilterKind.IAHIEKF)
    battery: BatterySpec = field(default_factory=default_battery_spec)
    curve: OcvCurve = field(default_factory=default_ocv_curve)
    initial_params: TheveninParams = field(
        default_factory=lambda: TheveninParams(0.05, 0.03, 1000.0)
    )
    noise: NoiseConfig = field(default_factory=default_noise_config)
    hinf: HinfConfig = field(default_factory=default_hinf_config)
    adaptive: AdaptiveConfig = field(default_factory=default_adaptive_config)
    ident_lambda: float = 0.999
    ident_warmup_steps: int = 10
    ident_theta0: tuple[float, float, float] = (1e-3, 1e-3, 0.5)
    ident_cov0_scale: float = 1e6
    soc_init_estimator: float = 0.8
    reference_mode: ReferenceMode = ReferenceMode.PROVIDED
    reference_init_soc: float = 1.0

    def __post_init__(self):
        if not self.kinds:
            raise ValueError("at least one filter kind is required")
        if self.ident_warmup_steps < 0:
            raise ValueError("ident_warmup_steps must be >= 0")
        if not 0.0 <= self.soc_init_estimator <= 1.0:
            raise ValueError("soc_init_estimator must lie in [0, 1]")


@dataclass(slots=True)
class FilterRunResult:
    """Per-step traces and summary metrics for one filter kind."""

    kind: FilterKind
    soc_est: np.ndarray
    up_est: np.ndarray
    residual_v: np.ndarray
    r0_ohm: np.ndarray
    rp_ohm: np.ndarray
    cp_f: np.ndarray
    rx: np.ndarray
    qx_trace: np.ndarray
    rmse_pct: float
    mae_pct: float
    negative_rx_count: int
    nonphysical_count: int
    filter_error_count: int
    cutoff_events: int
    min_rx_minus_hph: float  # adaptive-Rx floor margin, min over all steps


@dataclass(slots=True)
class RunResult:
    filters: dict[FilterKind, FilterRunResult]
    reference: np.ndarray
    n_steps: int


def rmse_pct(est, ref) -> float:
    """100 * sqrt(mean squared error) between two SOC sequences."""
    est = np.asarray(est, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if est.shape != ref.shape or est.size == 0:
        raise LengthMismatchError(f"shapes {est.shape} vs {ref.shape}")
    return 100.0 * float(np.sqrt(np.mean((est - ref) ** 2)))


def mae_pct(est, ref) -> float:
    """100 * mean absolute error between two SOC sequences."""
    est = np.asarray(est, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if est.shape != ref.shape or est.size == 0:
        raise LengthMismatchError(f"shapes {est.shape} vs {ref.shape}")
    return 100.0 * float(np.mean(np.abs(est - ref)))


def build_reference(
    config: RunConfig, samples: MeasuredTrace, truth: TruthTrace | None = None
) -> np.ndarray:
    """Reference SOC sequence per the configured mode.

    PROVIDED passes the soc_ref column through; SIM_TRUTH requires a truth
    trace; COULOMB integrates current (clean current when a truth trace is
    at hand, the measured one otherwise) from `reference_init_soc`.
    """
    n = len(samples)
    mode = config.reference_mode
    if mode is ReferenceMode.PROVIDED:
        if samples.soc_ref is None:
            raise MissingReferenceError("samples carry no soc_ref column")
        return np.asarray(samples.soc_ref, dtype=float).copy()
    if mode is ReferenceMode.SIM_TRUTH:
        if truth is None:
            raise MissingReferenceError("sim_truth reference requires a truth trace")
        if len(truth) != n:
            raise MissingReferenceError(
                f"truth length {len(truth)} does not match samples length {n}"
            )
        return truth.soc_true.copy()
    current = truth.current_a if truth is not None else samples.current_a
    out = np.empty(n)
    soc = config.reference_init_soc
    spec = config.battery
    for k in range(n):
        soc, _ = coulomb_step(soc, float(current[k]), spec)
        out[k] = soc
    return out


class _KindChain:
    """Private per-kind runtime: identifier, filter, feedback, counters."""

    __slots__ = (
        "kind", "ffrls", "fs", "prev_soc", "i_prev", "ue_prev", "last_params",
        "nonphysical", "negative_rx", "filter_errors", "min_margin",
        "soc", "up", "resid", "r0", "rp", "cp", "rx", "qx",
    )

    def __init__(self, kind: FilterKind, config: RunConfig):
        self.kind = kind
        self.ffrls = new_ffrls_state(
            config.ident_theta0, lam=config.ident_lambda, cov0_scale=config.ident_cov0_scale
        )
        self.fs = make_filter_state(config.soc_init_estimator, config.noise)
        self.prev_soc = config.soc_init_estimator
        self.i_prev = 0.0
        self.ue_prev = 0.0
        self.last_params = config.initial_params
        self.nonphysical = 0
        self.negative_rx = 0
        self.filter_errors = 0
        self.min_margin = float("inf")
        self.soc = []
        self.up = []
        self.resid = []
        self.r0 = []
        self.rp = []
        self.cp = []
        self.rx = []
        self.qx = []


def run_joint(
    config: RunConfig, samples: MeasuredTrace, truth: TruthTrace | None = None
) -> RunResult:
    """Run identification and every requested filter over the samples.

    Per sample: form the voltage sag Ue from the filter's previous SOC
    estimate, advance that filter's identifier, convert to circuit
    parameters (holding last-good values on a non-physical inversion, and
    the configured initial parameters during warmup), then take one filter
    step.  Filter existence failures fall back to pure prediction for
    that step and are counted.
    """
    n = len(samples)
    if n == 0:
        raise EmptyInputError("empty sample trace")
    reference = build_reference(config, samples, truth)

    spec = config.battery
    curve = config.curve
    hconf = config.hinf
    aconf = config.adaptive
    warmup = config.ident_warmup_steps
    dt = spec.dt_s
    window = aconf.window_len
    currents = samples.current_a
    voltages = samples.voltage_v

    chains = [_KindChain(kind, config) for kind in config.kinds]

    for k in range(n):
        i_k = float(currents[k])
        v_k = float(voltages[k])
        in_warmup = k < warmup
        for ch in chains:
            ue_k = ocv_eval(curve, ch.prev_soc) - v_k
            ch.ffrls, coeffs = thevenin_ident_step(ch.ffrls, i_k, ch.i_prev, ue_k, ch.ue_prev)
            ch.i_prev = i_k
            ch.ue_prev = ue_k
            if in_warmup:
                params = ch.last_params
            else:
                try:
                    params = params_from_discrete(coeffs, dt)
                    ch.last_params = params
                except (InvalidCoeffsError, NonPhysicalParamsError):
                    ch.nonphysical += 1
                    params = ch.last_params
            try:
                ch.fs, soc, diag = filter_step(
                    ch.kind, ch.fs, params, spec, curve, hconf, aconf, i_k, v_k
                )
            except (SingularInnovationError, RiccatiBlowupError, AssertionError):
                ch.filter_errors += 1
                pred = predict(ch.fs, params, spec, i_k)
                _, resid = innovate(pred, params, curve, i_k, v_k)
                noise = pred.noise
                ch.fs = FilterState(
                    x=pred.x,
                    p=pred.p,
                    noise=noise,
                    residuals=(pred.residuals + (resid,))[-window:],
                    step_index=pred.step_index,
                )
                soc = pred.x[0]
                diag = StepDiagnostics(
                    predicted_v=v_k - resid, residual_v=resid, gain=(0.0, 0.0),
                    qx_trace=noise.qx[0][0] + noise.qx[1][1], rx=noise.rx,
                    hph=0.0, negative_rx=False,
                )
            ch.prev_soc = soc
            if diag.negative_rx:
                ch.negative_rx += 1
            margin = diag.rx - diag.hph
            if margin < ch.min_margin:
                ch.min_margin = margin
            ch.soc.append(soc)
            ch.up.append(ch.fs.x[1])
            ch.resid.append(diag.residual_v)
            ch.r0.append(params.r0_ohm)
            ch.rp.append(params.rp_ohm)
            ch.cp.append(params.cp_f)
            ch.rx.append(diag.rx)
            ch.qx.append(diag.qx_trace)

    cutoff_events = 1 if (truth is not None and truth.cutoff) else 0
    results: dict[FilterKind, FilterRunResult] = {}
    for ch in chains:
        soc_est = np.asarray(ch.soc)
        results[ch.kind] = FilterRunResult(
            kind=ch.kind,
            soc_est=soc_est,
            up_est=np.asarray(ch.up),
            residual_v=np.asarray(ch.resid),
            r0_ohm=np.asarray(ch.r0),
            rp_ohm=np.asarray(ch.rp),
            cp_f=np.asarray(ch.cp),
            rx=np.asarray(ch.rx),
            qx_trace=np.asarray(ch.qx),
            rmse_pct=rmse_pct(soc_est, reference),
            mae_pct=mae_pct(soc_est, reference),
            negative_rx_count=ch.negative_rx,
            nonphysical_count=ch.nonphysical,
            filter_error_count=ch.filter_errors,
            cutoff_events=cutoff_events,
            min_rx_minus_hph=ch.min_margin,
        )
    return RunResult(filters=results, reference=reference, n_steps=n)
