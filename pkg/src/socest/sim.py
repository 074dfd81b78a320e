"""Synthetic ground truth: drive-cycle current profiles, exact Thevenin
integration, and seeded sensor-noise corruption.

Rows are end-of-interval samples: row k holds the state after the
current of interval k has acted for one step, and the voltage a sampler
would read at that instant.  A constant-current 1C discharge of exactly
capacity/current seconds therefore ends the trace at SOC 0.

Everything here is a pure function of its inputs (noise included, via the
seed), so identical calls produce bit-identical traces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .model import (
    BatterySpec,
    EcmState,
    OcvCurve,
    TheveninParams,
    terminal_voltage,
    thevenin_step,
)


class CycleKind(str, Enum):
    DST_LIKE = "dst"
    FUDS_LIKE = "fuds"
    CONSTANT = "constant"
    CUSTOM = "custom"


# discharge ladder: (fraction of period, fraction of peak); mean 0.24,
# variance 0.154 peak^2.  Net discharge with rests and charge pulses;
# adjacent levels never jump more than 0.375 peak, so feedthrough spikes
# at transitions stay bounded for estimators running at high gain
_DST_LADDER = (
    (0.10, 0.125),
    (0.10, 0.375),
    (0.08, 0.625),
    (0.10, 1.0),
    (0.08, 0.625),
    (0.10, 0.25),
    (0.06, 0.0),
    (0.08, -0.25),
    (0.06, -0.5),
    (0.08, -0.125),
    (0.10, 0.25),
    (0.06, 0.0),
)

# incommensurate square-wave periods in seconds; weights sum to 1 so the
# peak is respected, and the summed variance 0.31 peak^2 stays well above
# the ladder's 0.117 (the urban-schedule profile must churn harder)
_FUDS_TRAINS = ((0.45, 17.3), (0.27, 7.9), (0.18, 3.7))
_FUDS_BIAS = 0.10


@dataclass(frozen=True, slots=True)
class DriveCycleSpec:
    """Current profile request.  `segments` is only used by CUSTOM and holds
    (duration_s, current_a) pairs; `repeat_period_s` scales the pulse ladder."""

    kind: CycleKind
    duration_s: float
    peak_a: float = 0.0
    repeat_period_s: float = 360.0
    segments: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if not self.duration_s > 0:
            raise ValueError(f"duration_s must be positive, got {self.duration_s}")
        if self.peak_a < 0:
            raise ValueError(f"peak_a must be >= 0, got {self.peak_a}")
        if self.repeat_period_s <= 0:
            raise ValueError(f"repeat_period_s must be positive, got {self.repeat_period_s}")
        if self.kind is CycleKind.CUSTOM and not self.segments:
            raise ValueError("CUSTOM cycle needs at least one segment")


@dataclass(frozen=True, slots=True)
class NoiseSpec:
    """Additive i.i.d. Gaussian sensor noise with a deterministic seed."""

    v_sigma: float = 0.0
    i_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.v_sigma < 0 or self.i_sigma < 0:
            raise ValueError("noise sigmas must be >= 0")


@dataclass(slots=True)
class TruthTrace:
    """Clean per-step columns plus the generating model."""

    time_s: np.ndarray
    current_a: np.ndarray
    soc_true: np.ndarray
    up_true_v: np.ndarray
    ut_true_v: np.ndarray
    params: TheveninParams
    curve: OcvCurve
    spec: BatterySpec
    cutoff: bool = False
    clamped: bool = False

    def __len__(self) -> int:
        return self.time_s.size


@dataclass(slots=True)
class MeasuredTrace:
    """What a sensor pair would log: noisy current and voltage, with the
    reference SOC carried along when available."""

    time_s: np.ndarray
    current_a: np.ndarray
    voltage_v: np.ndarray
    soc_ref: np.ndarray | None = None

    def __len__(self) -> int:
        return self.time_s.size


def generate_cycle(spec: DriveCycleSpec, dt_s: float) -> np.ndarray:
    """Deterministic current sequence for the requested profile, discharge-positive."""
    if dt_s <= 0:
        raise ValueError(f"dt_s must be positive, got {dt_s}")
    n = max(1, round(spec.duration_s / dt_s))
    t = np.arange(n) * dt_s

    if spec.kind is CycleKind.CONSTANT:
        return np.full(n, spec.peak_a)

    if spec.kind is CycleKind.DST_LIKE:
        phase = np.mod(t, spec.repeat_period_s) / spec.repeat_period_s
        out = np.empty(n)
        lo = 0.0
        for frac, level in _DST_LADDER:
            hi = lo + frac
            out[(phase >= lo) & (phase < hi)] = level * spec.peak_a
            lo = hi
        out[phase >= lo] = 0.0  # guard against float edge at phase ~ 1
        return out

    if spec.kind is CycleKind.FUDS_LIKE:
        acc = np.full(n, _FUDS_BIAS)
        for weight, period in _FUDS_TRAINS:
            acc += weight * np.sign(np.sin(2.0 * math.pi * t / period))
        return acc * spec.peak_a

    # CUSTOM: concatenated constant segments, truncated/padded to duration
    parts = []
    for seg_duration, seg_current in spec.segments:
        parts.append(np.full(max(1, round(seg_duration / dt_s)), seg_current))
    out = np.concatenate(parts)
    if out.size >= n:
        return out[:n]
    return np.concatenate([out, np.zeros(n - out.size)])


def simulate_truth(
    spec: BatterySpec,
    params: TheveninParams,
    curve: OcvCurve,
    cycle: np.ndarray,
    soc_init: float,
) -> TruthTrace:
    """Propagate the exact discrete model over a current sequence.

    Halts early (with the cutoff flag, keeping the crossing row) when the
    terminal voltage leaves the [v_min, v_max] window.  SOC clamping
    during the run latches the `clamped` flag.
    """
    if not 0.0 <= soc_init <= 1.0:
        raise ValueError(f"soc_init must be in [0, 1], got {soc_init}")
    n = len(cycle)
    time_s = np.empty(n)
    soc = np.empty(n)
    up = np.empty(n)
    ut = np.empty(n)
    state = EcmState(soc=soc_init, up_v=0.0)
    clamped_any = False
    cutoff = False
    steps = n
    dt = spec.dt_s
    for k in range(n):
        i_k = float(cycle[k])
        state, clamped = thevenin_step(state, params, i_k, spec)
        clamped_any = clamped_any or clamped
        v = terminal_voltage(state, params, i_k, curve)
        time_s[k] = (k + 1) * dt
        soc[k] = state.soc
        up[k] = state.up_v
        ut[k] = v
        if v < spec.v_min or v > spec.v_max:
            cutoff = True
            steps = k + 1
            break
    return TruthTrace(
        time_s=time_s[:steps],
        current_a=np.asarray(cycle, dtype=float)[:steps].copy(),
        soc_true=soc[:steps],
        up_true_v=up[:steps],
        ut_true_v=ut[:steps],
        params=params,
        curve=curve,
        spec=spec,
        cutoff=cutoff,
        clamped=clamped_any,
    )


def corrupt(truth: TruthTrace, noise: NoiseSpec) -> MeasuredTrace:
    """Overlay seeded Gaussian sensor noise; carries soc_true as soc_ref."""
    rng = np.random.default_rng(noise.seed)
    n = len(truth)
    current = truth.current_a + rng.normal(0.0, noise.i_sigma, n) if noise.i_sigma else truth.current_a.copy()
    voltage = truth.ut_true_v + rng.normal(0.0, noise.v_sigma, n) if noise.v_sigma else truth.ut_true_v.copy()
    return MeasuredTrace(
        time_s=truth.time_s.copy(),
        current_a=current,
        voltage_v=voltage,
        soc_ref=truth.soc_true.copy(),
    )
