"""Four SOC estimators behind one step interface.

EKF      linearized Kalman filter on the two-state Thevenin model
HIEKF    H-infinity variant: gain and covariance carry the worst-case
         performance bound gamma (gamma = 0 reduces exactly to the EKF)
AHIEKF   HIEKF plus windowed residual-moment adaptation of Qx and Rx;
         its Rx update can go negative, which is floored and flagged
IAHIEKF  AHIEKF with a fading-memory weight d(k) that keeps Rx
         provably non-negative and discounts old residuals

State is the pair x = [SOC, Up]; the measurement is the terminal
voltage with Jacobian h = [dOCV/dSOC, -1].  The state/input matrices are
rebuilt from the circuit parameters every step, so online identification
can feed time-varying parameters.  All steps are pure value-in/value-out;
the 2x2 algebra is unrolled to keep per-step cost a few microseconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Sequence

from .errors import EmptyWindowError, RiccatiBlowupError, SingularInnovationError
from .model import BatterySpec, OcvCurve, TheveninParams, ocv_eval, ocv_slope

Mat2 = tuple[tuple[float, float], tuple[float, float]]

_EYE2: Mat2 = ((1.0, 0.0), (0.0, 1.0))


class FilterKind(str, Enum):
    EKF = "ekf"
    HIEKF = "hiekf"
    AHIEKF = "ahiekf"
    IAHIEKF = "iahiekf"


_HINF_KINDS = frozenset((FilterKind.HIEKF, FilterKind.AHIEKF, FilterKind.IAHIEKF))
_ADAPTIVE_KINDS = frozenset((FilterKind.AHIEKF, FilterKind.IAHIEKF))


def _check_sym_2x2(m, name):
    (a, b), (c, d) = m
    if not all(math.isfinite(v) for v in (a, b, c, d)):
        raise ValueError(f"{name} must be finite")
    if abs(b - c) > 1e-12 * (1.0 + abs(b) + abs(c)):
        raise ValueError(f"{name} must be symmetric")


@dataclass(slots=True)
class NoiseConfig:
    """Process/measurement noise and initial error covariance.

    qx: 2x2 PSD process noise; rx: scalar measurement noise variance;
    p0: 2x2 PD initial error covariance.  Adaptive variants replace qx/rx
    each step; p0 only seeds the filter.
    """

    qx: Mat2
    rx: float
    p0: Mat2

    def __post_init__(self):
        _check_sym_2x2(self.qx, "qx")
        if self.qx[0][0] < 0.0 or self.qx[1][1] < 0.0:
            raise ValueError("qx diagonal must be non-negative")
        if not (math.isfinite(self.rx) and self.rx > 0.0):
            raise ValueError(f"rx must be positive, got {self.rx}")
        _check_sym_2x2(self.p0, "p0")
        if self.p0[0][0] <= 0.0 or self.p0[0][0] * self.p0[1][1] - self.p0[0][1] * self.p0[1][0] <= 0.0:
            raise ValueError("p0 must be positive definite")


@dataclass(slots=True)
class HinfConfig:
    """H-infinity weights: SPD sx, transform lx (identity by default), bound gamma >= 0."""

    sx: Mat2 = ((0.9, 0.0), (0.0, 0.1))
    lx: Mat2 = _EYE2
    gamma: float = 0.005

    def __post_init__(self):
        _check_sym_2x2(self.sx, "sx")
        if self.sx[0][0] <= 0.0 or self.sx[0][0] * self.sx[1][1] - self.sx[0][1] * self.sx[1][0] <= 0.0:
            raise ValueError("sx must be positive definite")
        if not (math.isfinite(self.gamma) and self.gamma >= 0.0):
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")


@dataclass(slots=True)
class AdaptiveConfig:
    """Residual window length and fading base b in (0.9, 1)."""

    window_len: int = 5
    b: float = 0.96

    def __post_init__(self):
        if self.window_len < 1:
            raise ValueError(f"window_len must be >= 1, got {self.window_len}")
        if not 0.9 < self.b < 1.0:
            raise ValueError(f"b must lie in (0.9, 1), got {self.b}")


@dataclass(slots=True)
class FilterState:
    """Estimator value: state pair, covariance, live noise config,
    residual window, and the 1-based step counter."""

    x: tuple[float, float]
    p: Mat2
    noise: NoiseConfig
    residuals: tuple[float, ...] = ()
    step_index: int = 0


class StepDiagnostics(NamedTuple):
    predicted_v: float
    residual_v: float
    gain: tuple[float, float]
    qx_trace: float
    rx: float
    hph: float           # h P_pred h' of this step
    negative_rx: bool    # AHIEKF Rx went non-positive and was floored


def _make_noise(qx: Mat2, rx: float, p0: Mat2) -> NoiseConfig:
    # internal constructor for adaptation outputs, which satisfy the type
    # invariants by construction; skips per-step validation cost
    nc = object.__new__(NoiseConfig)
    nc.qx = qx
    nc.rx = rx
    nc.p0 = p0
    return nc


def default_noise_config() -> NoiseConfig:
    return NoiseConfig(qx=((1e-5, 0.0), (0.0, 1e-5)), rx=0.8, p0=((0.035, 0.0), (0.0, 0.25)))


def default_hinf_config() -> HinfConfig:
    return HinfConfig()


def default_adaptive_config() -> AdaptiveConfig:
    return AdaptiveConfig()


def make_filter_state(
    soc_init: float, noise: NoiseConfig | None = None, up_init: float = 0.0
) -> FilterState:
    noise = noise if noise is not None else default_noise_config()
    return FilterState(x=(float(soc_init), float(up_init)), p=noise.p0, noise=noise)


def predict(
    fs: FilterState, params: TheveninParams, spec: BatterySpec, current_a: float
) -> FilterState:
    """Time update: x = A x + B I, P = A P A' + Qx.

    A and B are rebuilt from `params` on every call since identification
    changes them.  Starts a new step (step_index increments here).
    """
    alpha = math.exp(-spec.dt_s / params.tau_s)
    b0 = -spec.coulombic_efficiency * spec.dt_s / spec.capacity_as
    b1 = params.rp_ohm * (1.0 - alpha)
    x0, x1 = fs.x
    (p00, p01), (_, p11) = fs.p
    (q00, q01), (_, q11) = fs.noise.qx
    new_p01 = alpha * p01 + q01
    return FilterState(
        x=(x0 + b0 * current_a, alpha * x1 + b1 * current_a),
        p=((p00 + q00, new_p01), (new_p01, alpha * alpha * p11 + q11)),
        noise=fs.noise,
        residuals=fs.residuals,
        step_index=fs.step_index + 1,
    )


def innovate(
    fs: FilterState,
    params: TheveninParams,
    curve: OcvCurve,
    current_a: float,
    measured_v: float,
) -> tuple[tuple[float, float], float]:
    """Measurement Jacobian and voltage residual at the (predicted) state.

    h = [dOCV/dSOC, -1] because Ut = OCV(SOC) - Up - R0 I; the residual is
    measured minus predicted terminal voltage.
    """
    soc, up = fs.x
    predicted = ocv_eval(curve, soc) - up - params.r0_ohm * current_a
    return (ocv_slope(curve, soc), -1.0), measured_v - predicted


def _ekf_core(x, p, rx, h, residual):
    h0, h1 = h
    (p00, p01), (p10, p11) = p
    s = h0 * (h0 * p00 + h1 * p10) + h1 * (h0 * p01 + h1 * p11) + rx
    if not s > 0.0:
        raise SingularInnovationError(f"innovation variance {s} <= 0")
    k0 = (p00 * h0 + p01 * h1) / s
    k1 = (p10 * h0 + p11 * h1) / s
    a00 = 1.0 - k0 * h0
    a11 = 1.0 - k1 * h1
    n00 = a00 * p00 - k0 * h1 * p10
    n01 = a00 * p01 - k0 * h1 * p11
    n10 = -k1 * h0 * p00 + a11 * p10
    n11 = -k1 * h0 * p01 + a11 * p11
    off = 0.5 * (n01 + n10)
    return (x[0] + k0 * residual, x[1] + k1 * residual), ((n00, off), (off, n11)), k0, k1


def _hinf_core(x, p, rx, h, residual, hconf: HinfConfig):
    h0, h1 = h
    (p00, p01), (p10, p11) = p
    # sbar = lx sx lx'
    if hconf.lx is _EYE2:
        (sb00, sb01), (sb10, sb11) = hconf.sx
    else:
        (l00, l01), (l10, l11) = hconf.lx
        (s00, s01), (s10, s11) = hconf.sx
        t00 = l00 * s00 + l01 * s10
        t01 = l00 * s01 + l01 * s11
        t10 = l10 * s00 + l11 * s10
        t11 = l10 * s01 + l11 * s11
        sb00 = t00 * l00 + t01 * l01
        sb01 = t00 * l10 + t01 * l11
        sb10 = t10 * l00 + t11 * l01
        sb11 = t10 * l10 + t11 * l11
    g = hconf.gamma
    inv_rx = 1.0 / rx
    # c = h' h / rx - gamma sbar ; d = I + c p
    c00 = h0 * h0 * inv_rx - g * sb00
    c01 = h0 * h1 * inv_rx - g * sb01
    c10 = h1 * h0 * inv_rx - g * sb10
    c11 = h1 * h1 * inv_rx - g * sb11
    d00 = 1.0 + c00 * p00 + c01 * p10
    d01 = c00 * p01 + c01 * p11
    d10 = c10 * p00 + c11 * p10
    d11 = 1.0 + c10 * p01 + c11 * p11
    det = d00 * d11 - d01 * d10
    # det(D) = det(P) * det(inverse updated covariance): a non-positive value
    # means the performance bound broke the Riccati existence condition
    if not det > 0.0 or not math.isfinite(det):
        raise RiccatiBlowupError(f"gain matrix determinant {det} <= 0; gamma too large")
    i00 = d11 / det
    i01 = -d01 / det
    i10 = -d10 / det
    i11 = d00 / det
    v0 = (i00 * h0 + i01 * h1) * inv_rx
    v1 = (i10 * h0 + i11 * h1) * inv_rx
    k0 = p00 * v0 + p01 * v1
    k1 = p10 * v0 + p11 * v1
    n00 = p00 * i00 + p01 * i10
    n01 = p00 * i01 + p01 * i11
    n10 = p10 * i00 + p11 * i10
    n11 = p10 * i01 + p11 * i11
    scale = 1.0 + max(abs(n00), abs(n01), abs(n10), abs(n11))
    if not math.isfinite(scale):
        raise RiccatiBlowupError("covariance update not finite; gamma too large")
    if abs(n01 - n10) > 1e-8 * scale:
        raise RiccatiBlowupError("covariance lost symmetry; gamma too large")
    # tolerance-based definiteness: rank-one adapted process noise lets one
    # variance decay to denormal scale, where strict positivity is just
    # roundoff; genuinely negative variances mean the bound is violated
    tol = 1e-9 * scale
    if n00 < -tol or n11 < -tol:
        raise RiccatiBlowupError(
            "updated covariance not positive semidefinite; gamma violates the existence condition"
        )
    n00 = n00 if n00 > 0.0 else 0.0
    n11 = n11 if n11 > 0.0 else 0.0
    off = 0.5 * (n01 + n10)
    lim = math.sqrt(n00 * n11)
    if off > lim:
        off = lim
    elif off < -lim:
        off = -lim
    return (x[0] + k0 * residual, x[1] + k1 * residual), ((n00, off), (off, n11)), k0, k1


def ekf_update(fs: FilterState, h: tuple[float, float], residual: float) -> FilterState:
    """Kalman measurement update with scalar innovation; covariance via (E - K h) P."""
    x, p, _, _ = _ekf_core(fs.x, fs.p, fs.noise.rx, h, residual)
    return FilterState(x=x, p=p, noise=fs.noise, residuals=fs.residuals, step_index=fs.step_index)


def hinf_update(
    fs: FilterState, h: tuple[float, float], residual: float, hconf: HinfConfig
) -> FilterState:
    """H-infinity measurement update.

    K = P inv(E - gamma sbar P + h' h P / rx) h' / rx with sbar = lx sx lx';
    the covariance picks up the same inverse.  Raises RiccatiBlowupError
    when the matrix is singular or the updated covariance stops being
    symmetric positive definite (the existence condition on gamma).
    """
    x, p, _, _ = _hinf_core(fs.x, fs.p, fs.noise.rx, h, residual, hconf)
    return FilterState(x=x, p=p, noise=fs.noise, residuals=fs.residuals, step_index=fs.step_index)


def window_mean(residuals: Sequence[float]) -> float:
    """Mean of squared residuals over the window."""
    if len(residuals) == 0:
        raise EmptyWindowError("residual window is empty")
    return sum(r * r for r in residuals) / len(residuals)


def _quadform(h, p):
    # h P h' clamped at zero: mathematically non-negative for PSD p, and the
    # adaptation formulas rely on that even at denormal covariance scales
    h0, h1 = h
    q = h0 * (h0 * p[0][0] + h1 * p[1][0]) + h1 * (h0 * p[0][1] + h1 * p[1][1])
    return q if q > 0.0 else 0.0


def ahiekf_adapt(
    fs_pred: FilterState,
    gain: tuple[float, float],
    h: tuple[float, float],
    m: float,
    rx_floor: float = 1e-8,
) -> tuple[NoiseConfig, bool]:
    """Residual-moment noise adaptation: Qx = K M K', Rx = M - h P h'.

    `fs_pred` must carry the predicted covariance of the step that
    produced `gain`.  The Rx form can go non-positive (M smaller than the
    predicted output variance); it is then floored at `rx_floor` and
    flagged so the run keeps going and the failure stays observable.
    """
    k0, k1 = gain
    q00 = k0 * k0 * m
    q01 = k0 * k1 * m
    q11 = k1 * k1 * m
    rx_raw = m - _quadform(h, fs_pred.p)
    negative = rx_raw <= 0.0
    rx = rx_floor if negative else rx_raw
    return _make_noise(((q00, q01), (q01, q11)), rx, fs_pred.noise.p0), negative


def iahiekf_adapt(
    fs_pred: FilterState,
    gain: tuple[float, float],
    h: tuple[float, float],
    m: float,
    aconf: AdaptiveConfig,
) -> NoiseConfig:
    """Fading-memory adaptation: d = (1-b)/(1-b^k), Qx = K (d M) K',
    Rx = (1-d) M + h P h'.

    Rx is a sum of non-negative terms, so unlike ahiekf_adapt it never
    needs a floor; that is asserted, not patched.
    """
    k = fs_pred.step_index
    if k < 1:
        raise ValueError("step_index must be >= 1 (call predict first)")
    b = aconf.b
    d = (1.0 - b) / (1.0 - b**k)
    dm = d * m
    k0, k1 = gain
    q00 = k0 * k0 * dm
    q01 = k0 * k1 * dm
    q11 = k1 * k1 * dm
    rx = (1.0 - d) * m + _quadform(h, fs_pred.p)
    assert rx >= 0.0, "fading-memory Rx must be non-negative by construction"
    return _make_noise(((q00, q01), (q01, q11)), rx, fs_pred.noise.p0)


def filter_step(
    kind: FilterKind,
    fs: FilterState,
    params: TheveninParams,
    spec: BatterySpec,
    curve: OcvCurve,
    hconf: HinfConfig | None,
    aconf: AdaptiveConfig | None,
    current_a: float,
    measured_v: float,
) -> tuple[FilterState, float, StepDiagnostics]:
    """One full estimation step: predict, innovate, measurement update,
    and (for the adaptive kinds) noise adaptation.

    The adaptation runs after the measurement update with this step's
    gain, so the new Qx/Rx take effect from the next step; the update
    law is circular in the gain otherwise.  Returns the new state, the
    SOC estimate, and per-step diagnostics.
    """
    if kind in _HINF_KINDS and hconf is None:
        raise ValueError(f"{kind.value} requires an HinfConfig")
    if kind in _ADAPTIVE_KINDS and aconf is None:
        raise ValueError(f"{kind.value} requires an AdaptiveConfig")

    pred = predict(fs, params, spec, current_a)
    h, resid = innovate(pred, params, curve, current_a, measured_v)
    if kind is FilterKind.EKF:
        x, p, k0, k1 = _ekf_core(pred.x, pred.p, pred.noise.rx, h, resid)
    else:
        x, p, k0, k1 = _hinf_core(pred.x, pred.p, pred.noise.rx, h, resid, hconf)

    window = aconf.window_len if aconf is not None else 5
    residuals = (pred.residuals + (resid,))[-window:]
    hph = _quadform(h, pred.p)

    negative_rx = False
    if kind is FilterKind.AHIEKF:
        noise, negative_rx = ahiekf_adapt(pred, (k0, k1), h, window_mean(residuals))
    elif kind is FilterKind.IAHIEKF:
        noise = iahiekf_adapt(pred, (k0, k1), h, window_mean(residuals), aconf)
    else:
        noise = pred.noise

    out = FilterState(x=x, p=p, noise=noise, residuals=residuals, step_index=pred.step_index)
    diag = StepDiagnostics(
        predicted_v=measured_v - resid,
        residual_v=resid,
        gain=(k0, k1),
        qx_trace=noise.qx[0][0] + noise.qx[1][1],
        rx=noise.rx,
        hph=hph,
        negative_rx=negative_rx,
    )
    return out, x[0], diag
