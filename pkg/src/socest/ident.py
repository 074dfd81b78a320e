"""Recursive least squares with exponential forgetting, plus its three
battery instantiations: Rint-based OCV extraction, degree-6 OCV(SOC)
polynomial fitting, and online identification of the discrete Thevenin
coefficients.

The recursion is the standard exponentially weighted form with a-priori
residual; the covariance is re-symmetrized every step to stop drift.
State flows in and out as plain values, so steps are pure and safe to
run concurrently on independent instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DegenerateUpdateError, IllConditionedError
from .model import DiscreteCoeffs, OcvCurve


@dataclass(slots=True)
class FfrlsState:
    """Estimator state: parameter vector, information covariance, forgetting factor.

    `trace_cap` is the covariance-windup guard: under poor excitation with
    lambda < 1 the covariance grows without bound, so once trace(cov)
    would exceed the cap the state freezes and `windup` latches.  Build
    instances through new_ffrls_state, which validates.
    """

    theta: tuple[float, ...]
    cov: tuple[tuple[float, ...], ...]
    lam: float
    trace_cap: float = 1e9
    windup: bool = False


class RegressorSample(NamedTuple):
    """One regression pair: data vector phi and scalar observation y."""

    phi: tuple[float, ...]
    y: float


def new_ffrls_state(
    theta0: Sequence[float],
    lam: float,
    cov0_scale: float = 1e6,
    trace_cap: float | None = None,
) -> FfrlsState:
    """Fresh estimator with cov = cov0_scale * identity (large = fast initial adaptation).

    trace_cap defaults to 1e9 but never below 1000x the initial trace, so
    the windup guard measures growth rather than the caller's prior.
    """
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"forgetting factor must be in (0, 1], got {lam}")
    if cov0_scale <= 0:
        raise ValueError("cov0_scale must be positive")
    theta = tuple(float(t) for t in theta0)
    if not theta or not all(math.isfinite(t) for t in theta):
        raise ValueError(f"theta0 must be non-empty and finite, got {theta0}")
    n = len(theta)
    if trace_cap is None:
        trace_cap = max(1e9, 1e3 * n * cov0_scale)
    if trace_cap <= 0:
        raise ValueError("trace_cap must be positive")
    cov = tuple(tuple(cov0_scale if i == j else 0.0 for j in range(n)) for i in range(n))
    return FfrlsState(theta=theta, cov=cov, lam=lam, trace_cap=trace_cap)


def ffrls_step(state: FfrlsState, sample: RegressorSample) -> FfrlsState:
    """One forgetting-factor RLS update.

    gain g = cov phi / (lam + phi' cov phi); theta += g * (y - phi' theta);
    cov = (cov - g phi' cov) / lam, symmetric.  The covariance is carried
    in the algebraically equivalent stabilized (Joseph) arrangement
    cov - g w' - w g' + denom g g', which survives the long ill-conditioned
    runs of the degree-6 fit where the plain subtraction goes indefinite.
    A frozen (windup) state passes through unchanged.
    """
    if state.windup:
        return state
    theta, cov, lam = state.theta, state.cov, state.lam
    phi = sample.phi
    n = len(theta)

    if n == 3:
        # unrolled: this sits on the per-sample path of the online pipeline
        p0, p1, p2 = phi
        t0, t1, t2 = theta
        (c00, c01, c02), (c10, c11, c12), (c20, c21, c22) = cov
        w0 = c00 * p0 + c01 * p1 + c02 * p2
        w1 = c10 * p0 + c11 * p1 + c12 * p2
        w2 = c20 * p0 + c21 * p1 + c22 * p2
        denom = lam + p0 * w0 + p1 * w1 + p2 * w2
        if denom <= 0.0:
            raise DegenerateUpdateError(f"non-positive gain denominator {denom}")
        resid = sample.y - (p0 * t0 + p1 * t1 + p2 * t2)
        g0 = w0 / denom
        g1 = w1 / denom
        g2 = w2 / denom
        inv_lam = 1.0 / lam
        n00 = (c00 - g0 * w0 - w0 * g0 + denom * g0 * g0) * inv_lam
        n01 = (c01 - g0 * w1 - w0 * g1 + denom * g0 * g1) * inv_lam
        n02 = (c02 - g0 * w2 - w0 * g2 + denom * g0 * g2) * inv_lam
        n11 = (c11 - g1 * w1 - w1 * g1 + denom * g1 * g1) * inv_lam
        n12 = (c12 - g1 * w2 - w1 * g2 + denom * g1 * g2) * inv_lam
        n22 = (c22 - g2 * w2 - w2 * g2 + denom * g2 * g2) * inv_lam
        if n00 + n11 + n22 > state.trace_cap:
            return FfrlsState(theta=theta, cov=cov, lam=lam,
                              trace_cap=state.trace_cap, windup=True)
        return FfrlsState(
            theta=(t0 + g0 * resid, t1 + g1 * resid, t2 + g2 * resid),
            cov=((n00, n01, n02), (n01, n11, n12), (n02, n12, n22)),
            lam=lam,
            trace_cap=state.trace_cap,
        )

    if n == 2:
        p0, p1 = phi
        t0, t1 = theta
        (c00, c01), (c10, c11) = cov
        w0 = c00 * p0 + c01 * p1
        w1 = c10 * p0 + c11 * p1
        denom = lam + p0 * w0 + p1 * w1
        if denom <= 0.0:
            raise DegenerateUpdateError(f"non-positive gain denominator {denom}")
        resid = sample.y - (p0 * t0 + p1 * t1)
        g0 = w0 / denom
        g1 = w1 / denom
        inv_lam = 1.0 / lam
        n00 = (c00 - g0 * w0 - w0 * g0 + denom * g0 * g0) * inv_lam
        n01 = (c01 - g0 * w1 - w0 * g1 + denom * g0 * g1) * inv_lam
        n11 = (c11 - g1 * w1 - w1 * g1 + denom * g1 * g1) * inv_lam
        if n00 + n11 > state.trace_cap:
            return FfrlsState(theta=theta, cov=cov, lam=lam,
                              trace_cap=state.trace_cap, windup=True)
        return FfrlsState(
            theta=(t0 + g0 * resid, t1 + g1 * resid),
            cov=((n00, n01), (n01, n11)),
            lam=lam,
            trace_cap=state.trace_cap,
        )

    rng_n = range(n)
    # w = cov @ phi; phi' cov = w' by symmetry
    w = tuple(sum(cov[i][j] * phi[j] for j in rng_n) for i in rng_n)
    denom = lam + sum(phi[i] * w[i] for i in rng_n)
    if denom <= 0.0:
        raise DegenerateUpdateError(f"non-positive gain denominator {denom}")
    resid = sample.y - sum(phi[i] * theta[i] for i in rng_n)
    g = tuple(wi / denom for wi in w)
    new_theta = tuple(theta[i] + g[i] * resid for i in rng_n)
    inv_lam = 1.0 / lam
    rows = [
        [
            (cov[i][j] - g[i] * w[j] - w[i] * g[j] + denom * g[i] * g[j]) * inv_lam
            for j in range(i, n)
        ]
        for i in rng_n
    ]
    new_cov = tuple(
        tuple(rows[i][j - i] if j >= i else rows[j][i - j] for j in rng_n) for i in rng_n
    )
    if sum(new_cov[i][i] for i in rng_n) > state.trace_cap:
        return replace(state, windup=True)
    return replace(state, theta=new_theta, cov=new_cov)


def ocv_ident_step(
    state: FfrlsState, current_a: float, terminal_v: float
) -> tuple[FfrlsState, float]:
    """Rint-model identification step: Ut = OCV - R0 * I.

    theta = [OCV, R0], regressor [1, -I].  Returns the updated state and
    the current OCV estimate.
    """
    out = ffrls_step(state, RegressorSample(phi=(1.0, -current_a), y=terminal_v))
    return out, out.theta[0]


def thevenin_ident_step(
    state: FfrlsState,
    i_k: float,
    i_prev: float,
    ue_k: float,
    ue_prev: float,
) -> tuple[FfrlsState, DiscreteCoeffs]:
    """One step of the ARX identification Ue(k) = d0 I(k) + d1 I(k-1) + d2 Ue(k-1).

    Ue is the voltage sag OCV - Ut.  theta = [d0, d1, d2].
    """
    out = ffrls_step(state, RegressorSample(phi=(i_k, i_prev, ue_prev), y=ue_k))
    d0, d1, d2 = out.theta
    return out, DiscreteCoeffs(d0=d0, d1=d1, d2=d2)


def fit_ocv_polynomial(
    soc_seq: Sequence[float],
    ocv_seq: Sequence[float],
    lam: float = 1.0,
    cov0_scale: float = 1e6,
    min_soc_span: float = 0.3,
    max_condition: float = 1e12,
) -> OcvCurve:
    """Fit the degree-6 OCV(SOC) polynomial by RLS over all (soc, ocv) pairs.

    Degree-6 fits on narrow SOC ranges are meaningless, so the data must
    span at least `min_soc_span` and the plain-power normal matrix must
    have a condition estimate below `max_condition`; otherwise
    IllConditionedError.

    The recursion itself runs on powers of the shifted variable u = 2z - 1
    and the result is converted back to plain powers of z afterwards: the
    monomial basis on [0, 1] is Hilbert-conditioned (~5e8 even for well
    spread data), which both amplifies the RLS prior into the recovered
    coefficients and degrades the covariance recursion over long runs.
    """
    soc = np.asarray(soc_seq, dtype=float)
    ocv = np.asarray(ocv_seq, dtype=float)
    if soc.shape != ocv.shape or soc.ndim != 1:
        raise IllConditionedError("soc and ocv sequences must be 1-d and equally long")
    if soc.size < 7:
        raise IllConditionedError(f"need at least 7 samples, got {soc.size}")
    span = float(soc.max() - soc.min())
    if span < min_soc_span:
        raise IllConditionedError(f"SOC span {span:.3f} below excitation gate {min_soc_span}")
    powers = np.vander(soc, 7)  # columns z^6 .. z^0
    cond = float(np.linalg.cond(powers.T @ powers))
    if not cond < max_condition:
        raise IllConditionedError(f"normal-matrix condition {cond:.3e} exceeds {max_condition:.1e}")
    u_powers = np.vander(2.0 * soc - 1.0, 7)
    state = new_ffrls_state((0.0,) * 7, lam=lam, cov0_scale=cov0_scale)
    for phi_row, y in zip(u_powers, ocv):
        state = ffrls_step(state, RegressorSample(phi=tuple(phi_row), y=float(y)))
    # expand sum_j theta_j * (2z-1)^j back into plain powers of z
    mono = np.zeros(7)
    basis = np.zeros(7)
    basis[6] = 1.0  # (2z-1)^0, stored highest power first
    for j, coeff in enumerate(reversed(state.theta)):
        if j > 0:
            twice_z = np.concatenate((2.0 * basis[1:], [0.0]))
            basis = twice_z - basis
        mono += coeff * basis
    return OcvCurve(tuple(mono))
