"""Single-RC (Thevenin) equivalent-circuit battery model.

The cell is a voltage source OCV(SOC) in series with an ohmic resistance
R0 and one parallel RC pair (Rp, Cp).  State is the pair [SOC, Up] where
Up is the polarization voltage across the RC pair.

Sign convention: discharge current is POSITIVE.  SOC falls and the
terminal voltage sits below OCV while discharging; charging (negative
current) raises the terminal voltage above OCV.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import InvalidCoeffsError, NonPhysicalParamsError

# Degree-6 OCV(SOC) coefficients shipped as the library default, fitted
# for a 2.04 Ah NMC 18650-class cell.  Highest power first.
DEFAULT_OCV_COEFFS = (-0.5061, 11.1208, -27.5840, 25.9496, -10.4888, 2.3296, 3.3398)


@dataclass(frozen=True, slots=True)
class BatterySpec:
    """Physical cell constants.

    capacity_as           charge capacity in ampere-seconds
    coulombic_efficiency  fraction of charge throughput retained, in (0, 1]
    v_max / v_min         charge / discharge cutoff voltages
    dt_s                  fixed sample interval in seconds
    """

    capacity_as: float
    coulombic_efficiency: float = 1.0
    v_max: float = 4.2
    v_min: float = 2.75
    dt_s: float = 1.0

    def __post_init__(self):
        if not self.capacity_as > 0:
            raise ValueError(f"capacity_as must be positive, got {self.capacity_as}")
        if not 0 < self.coulombic_efficiency <= 1:
            raise ValueError(
                f"coulombic_efficiency must be in (0, 1], got {self.coulombic_efficiency}"
            )
        if not self.v_min < self.v_max:
            raise ValueError(f"require v_min < v_max, got {self.v_min} >= {self.v_max}")
        if not self.dt_s > 0:
            raise ValueError(f"dt_s must be positive, got {self.dt_s}")


def default_battery_spec(dt_s: float = 1.0) -> BatterySpec:
    """Spec of the 2.0383 Ah cell used for the shipped defaults."""
    return BatterySpec(capacity_as=2.0383 * 3600.0, coulombic_efficiency=1.0,
                       v_max=4.2, v_min=2.75, dt_s=dt_s)


@dataclass(frozen=True, slots=True)
class OcvCurve:
    """Degree-6 polynomial SOC -> open-circuit voltage, coefficients highest power first."""

    coeffs: tuple[float, ...]

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coeffs)
        if len(coeffs) != 7:
            raise ValueError(f"OcvCurve needs exactly 7 coefficients, got {len(coeffs)}")
        if not all(math.isfinite(c) for c in coeffs):
            raise ValueError("OcvCurve coefficients must be finite")
        object.__setattr__(self, "coeffs", coeffs)

    def within_voltage_band(self, lo: float = 1.0, hi: float = 5.5, n: int = 201) -> bool:
        """Sanity gate: does the curve stay inside [lo, hi] V over SOC in [0, 1]?"""
        return all(lo <= ocv_eval(self, i / (n - 1)) <= hi for i in range(n))


def default_ocv_curve() -> OcvCurve:
    return OcvCurve(DEFAULT_OCV_COEFFS)


@dataclass(frozen=True, slots=True)
class TheveninParams:
    """Circuit parameters: ohmic resistance, polarization resistance/capacitance."""

    r0_ohm: float
    rp_ohm: float
    cp_f: float

    def __post_init__(self):
        for name in ("r0_ohm", "rp_ohm", "cp_f"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")

    @property
    def tau_s(self) -> float:
        """Polarization time constant Rp * Cp."""
        return self.rp_ohm * self.cp_f


@dataclass(frozen=True, slots=True)
class EcmState:
    """Model state: SOC fraction and polarization voltage."""

    soc: float
    up_v: float

    def __post_init__(self):
        if not (math.isfinite(self.soc) and 0.0 <= self.soc <= 1.0):
            raise ValueError(f"soc must lie in [0, 1], got {self.soc}")
        if not math.isfinite(self.up_v):
            raise ValueError(f"up_v must be finite, got {self.up_v}")


@dataclass(frozen=True, slots=True)
class DiscreteCoeffs:
    """Bilinear-transform coefficients of the first-order ARX form.

    Valid physical models have -1 < d2 < 1; instances coming out of an
    online identifier may transiently violate that, so no gate here
    (params_from_discrete enforces it).
    """

    d0: float
    d1: float
    d2: float


def _clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else (1.0 if x > 1.0 else x)


def ocv_eval(curve: OcvCurve, soc: float) -> float:
    """Open-circuit voltage at `soc`; input clamped to [0, 1] first.

    Degree-6 polynomials diverge fast outside the fitted range, and
    estimator transients routinely overshoot, hence the clamp.
    """
    z = _clamp01(soc)
    acc = 0.0
    for c in curve.coeffs:
        acc = acc * z + c
    return acc


def ocv_slope(curve: OcvCurve, soc: float) -> float:
    """Analytic dOCV/dSOC at `soc` (same input clamp as ocv_eval)."""
    z = _clamp01(soc)
    k6, k5, k4, k3, k2, k1, _ = curve.coeffs
    return ((((6.0 * k6 * z + 5.0 * k5) * z + 4.0 * k4) * z + 3.0 * k3) * z + 2.0 * k2) * z + k1


def coulomb_step(soc: float, current_a: float, spec: BatterySpec) -> tuple[float, bool]:
    """One ampere-hour-integration step.

    Returns (new_soc, clamped): the unclamped update is
    soc - eta * dt * I / Q; when it leaves [0, 1] the result is clamped
    and the flag is set instead of aborting, because estimator overshoot
    is expected and recoverable.
    """
    raw = soc - (spec.coulombic_efficiency * spec.dt_s * current_a) / spec.capacity_as
    clamped = raw < 0.0 or raw > 1.0
    return _clamp01(raw), clamped


def thevenin_step(
    state: EcmState, params: TheveninParams, current_a: float, spec: BatterySpec
) -> tuple[EcmState, bool]:
    """Exact zero-order-hold propagation of [SOC, Up] over one sample.

    Up' = exp(-dt/tau) * Up + Rp * (1 - exp(-dt/tau)) * I, SOC advances by
    coulomb_step.  Returns (state, clamped) with the coulomb clamp flag.
    """
    soc, clamped = coulomb_step(state.soc, current_a, spec)
    alpha = math.exp(-spec.dt_s / params.tau_s)
    up = alpha * state.up_v + params.rp_ohm * (1.0 - alpha) * current_a
    return EcmState(soc=soc, up_v=up), clamped


def terminal_voltage(
    state: EcmState, params: TheveninParams, current_a: float, curve: OcvCurve
) -> float:
    """Terminal voltage OCV(soc) - Up - R0 * I (discharge-positive)."""
    return ocv_eval(curve, state.soc) - state.up_v - params.r0_ohm * current_a


def discrete_from_params(params: TheveninParams, dt_s: float) -> DiscreteCoeffs:
    """Bilinear-transform coefficients of the (R0, Rp, Cp) circuit at step dt_s.

    Computed in exact rational arithmetic and rounded once at the end:
    the inverse map amplifies coefficient rounding by up to R0*Cp/dt
    (~1e6 at the far end of the physical range), so the coefficients must
    carry no error beyond float representation.  Cold path; the cost is
    irrelevant.
    """
    r0 = Fraction(params.r0_ohm)
    rp = Fraction(params.rp_ohm)
    tau = rp * Fraction(params.cp_f)
    dt = Fraction(dt_s)
    den = 2 * tau + dt
    rsum_dt = (r0 + rp) * dt
    r0tau2 = 2 * r0 * tau
    return DiscreteCoeffs(
        d0=float((rsum_dt + r0tau2) / den),
        d1=float((rsum_dt - r0tau2) / den),
        d2=float((2 * tau - dt) / den),
    )


def params_from_discrete(coeffs: DiscreteCoeffs, dt_s: float) -> TheveninParams:
    """Invert discrete_from_params.

    tau = (dt/2)(1+d2)/(1-d2); R0 = (d0-d1)/(1+d2); Rp and Cp through the
    single cancellation d1 + d0*d2 (algebraically equal to the textbook
    (d0+d1)/(1-d2) - R0 form but with one fewer amplified rounding).

    Raises InvalidCoeffsError when d2 is outside (-1, 1) and
    NonPhysicalParamsError when a recovered parameter is <= 0 (the caller
    decides whether to hold last-good values).
    """
    d0, d1, d2 = coeffs.d0, coeffs.d1, coeffs.d2
    if not (-1.0 < d2 < 1.0 and math.isfinite(d0) and math.isfinite(d1)):
        raise InvalidCoeffsError(f"coefficients invalid: d0={d0} d1={d1} d2={d2}")
    one_m = 1.0 - d2
    one_p = 1.0 + d2
    r0 = (d0 - d1) / one_p
    s = d1 + d0 * d2
    rp = 2.0 * s / (one_m * one_p)
    if not (r0 > 0.0 and rp > 0.0):
        raise NonPhysicalParamsError(
            f"recovered non-physical parameters r0={r0:.4g} rp={rp:.4g}"
        )
    cp = 0.25 * dt_s * one_p * one_p / s
    # invariants hold by construction here; skip the dataclass re-validation
    # (this sits on the per-sample path of the online pipeline)
    out = object.__new__(TheveninParams)
    object.__setattr__(out, "r0_ohm", r0)
    object.__setattr__(out, "rp_ohm", rp)
    object.__setattr__(out, "cp_f", cp)
    return out
