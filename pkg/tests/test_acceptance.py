"""Acceptance suite: one test per release criterion, each printing a
pass line with the measured margin (run pytest with -s to see them).

Heavy scenarios are computed once in session fixtures and shared.
"""

import json
import time

import numpy as np
import pytest

from socest.cli import main
from socest.filters import (
    AdaptiveConfig,
    FilterKind,
    FilterState,
    NoiseConfig,
    iahiekf_adapt,
)
from socest.model import (
    OcvCurve,
    TheveninParams,
    default_battery_spec,
    default_ocv_curve,
    discrete_from_params,
    ocv_eval,
    params_from_discrete,
    terminal_voltage,
    thevenin_step,
)
from socest.model import EcmState
from socest.ident import new_ffrls_state, thevenin_ident_step
from socest.pipeline import ReferenceMode, RunConfig, mae_pct, rmse_pct, run_joint
from socest.sim import (
    CycleKind,
    DriveCycleSpec,
    NoiseSpec,
    corrupt,
    generate_cycle,
    simulate_truth,
)

ALL = (FilterKind.EKF, FilterKind.HIEKF, FilterKind.AHIEKF, FilterKind.IAHIEKF)
SPEC = default_battery_spec()

# reference scenario for the convergence/ordering criteria: a low-impedance
# power cell on a steep OCV stretch, pulsed discharge-dominant cycle
STEEP_CURVE = OcvCurve((0.0, 0.0, 0.0, 0.15, -0.1, 1.1, 3.0))
CELL = TheveninParams(r0_ohm=0.02, rp_ohm=0.004, cp_f=1500.0)
CELL_GUESS = TheveninParams(r0_ohm=0.017, rp_ohm=0.0048, cp_f=1050.0)


def scenario_run(seed, v_sigma=0.005, rx_cfg=0.8, n=3000, soc_true0=0.9, soc_est0=0.8):
    cycle = generate_cycle(
        DriveCycleSpec(CycleKind.DST_LIKE, float(n), peak_a=1.5, repeat_period_s=120.0), 1.0
    )
    truth = simulate_truth(SPEC, CELL, STEEP_CURVE, cycle, soc_true0)
    measured = corrupt(truth, NoiseSpec(v_sigma=v_sigma, seed=seed))
    noise = NoiseConfig(qx=((1e-5, 0.0), (0.0, 1e-5)), rx=rx_cfg, p0=((0.035, 0.0), (0.0, 0.25)))
    cfg = RunConfig(
        kinds=ALL,
        battery=SPEC,
        curve=STEEP_CURVE,
        initial_params=CELL_GUESS,
        noise=noise,
        soc_init_estimator=soc_est0,
        ident_warmup_steps=30,
        reference_mode=ReferenceMode.SIM_TRUTH,
    )
    return run_joint(cfg, measured, truth)


@pytest.fixture(scope="session")
def wrong_init_run():
    t0 = time.perf_counter()
    res = scenario_run(seed=1)
    return res, time.perf_counter() - t0


@pytest.fixture(scope="session")
def mismatch_runs():
    # measurement noise 10 mV, configured Rx = 1e-5 = (actual variance) / 10
    t0 = time.perf_counter()
    runs = [scenario_run(seed=s, v_sigma=0.01, rx_cfg=1e-5) for s in range(10)]
    return runs, time.perf_counter() - t0


def test_c01_gamma_zero_equivalence():
    t0 = time.perf_counter()
    n = 1000
    params = TheveninParams(0.05, 0.03, 1000.0)
    curve = default_ocv_curve()
    cycle = generate_cycle(
        DriveCycleSpec(CycleKind.DST_LIKE, float(n), peak_a=1.5, repeat_period_s=120.0), 1.0
    )
    truth = simulate_truth(SPEC, params, curve, cycle, 0.9)
    measured = corrupt(truth, NoiseSpec(v_sigma=0.005, seed=3))
    from socest.filters import HinfConfig

    base = dict(
        battery=SPEC, curve=curve, initial_params=params,
        hinf=HinfConfig(gamma=0.0), soc_init_estimator=0.8,
        reference_mode=ReferenceMode.SIM_TRUTH,
    )
    res_ekf = run_joint(RunConfig(kinds=(FilterKind.EKF,), **base), measured, truth)
    res_hi = run_joint(RunConfig(kinds=(FilterKind.HIEKF,), **base), measured, truth)
    gap = float(np.max(np.abs(
        res_ekf.filters[FilterKind.EKF].soc_est - res_hi.filters[FilterKind.HIEKF].soc_est
    )))
    elapsed = time.perf_counter() - t0
    assert gap < 1e-9
    assert elapsed < 1.0
    print(f"ACCEPTANCE 1 (gamma-zero equivalence): PASS — sup|dsoc| = {gap:.2e}, {elapsed:.2f}s")


def test_c02_discrete_physical_round_trip():
    t0 = time.perf_counter()
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(1000):
        p = TheveninParams(
            r0_ohm=rng.uniform(1e-3, 1.0),
            rp_ohm=rng.uniform(1e-3, 1.0),
            cp_f=10.0 ** rng.uniform(1.0, 5.0),
        )
        dt = float(rng.choice([0.1, 1.0, 10.0]))
        q = params_from_discrete(discrete_from_params(p, dt), dt)
        worst = max(
            worst,
            abs(q.r0_ohm - p.r0_ohm) / p.r0_ohm,
            abs(q.rp_ohm - p.rp_ohm) / p.rp_ohm,
            abs(q.cp_f - p.cp_f) / p.cp_f,
        )
    elapsed = time.perf_counter() - t0
    assert worst < 1e-10
    assert elapsed < 1.0
    print(f"ACCEPTANCE 2 (parameter round trip): PASS — worst rel err {worst:.2e}, {elapsed:.2f}s")


def test_c03_ffrls_recovery():
    t0 = time.perf_counter()
    params = TheveninParams(0.05, 0.03, 3000.0)  # tau = 90 s
    curve = default_ocv_curve()
    rng = np.random.default_rng(33)
    current = rng.uniform(-2.0, 2.0, size=2000)
    state = new_ffrls_state((1e-3, 1e-3, 0.5), lam=0.999)
    ecm = EcmState(soc=0.95, up_v=0.0)
    i_prev = 0.0
    ue_prev = 0.0
    est = None
    for i_k in current:
        i_k = float(i_k)
        ecm, _ = thevenin_step(ecm, params, i_k, SPEC)
        ut = terminal_voltage(ecm, params, i_k, curve)
        ue_k = ocv_eval(curve, ecm.soc) - ut
        state, est = thevenin_ident_step(state, i_k, i_prev, ue_k, ue_prev)
        i_prev = i_k
        ue_prev = ue_k
    rec = params_from_discrete(est, SPEC.dt_s)
    e_r0 = abs(rec.r0_ohm - params.r0_ohm) / params.r0_ohm
    e_rp = abs(rec.rp_ohm - params.rp_ohm) / params.rp_ohm
    e_cp = abs(rec.cp_f - params.cp_f) / params.cp_f
    elapsed = time.perf_counter() - t0
    assert e_r0 < 0.01 and e_rp < 0.01 and e_cp < 0.05
    assert elapsed < 2.0
    print(
        f"ACCEPTANCE 3 (online identification): PASS — "
        f"R0 {e_r0*100:.3f}%, Rp {e_rp*100:.3f}%, Cp {e_cp*100:.3f}%, {elapsed:.2f}s"
    )


def test_c04_ocv_pipeline_round_trip(tmp_path):
    curve = default_ocv_curve()
    assert ocv_eval(curve, 0.0) == 3.3398  # shipped constant term, exact

    # Rint truth with the shipped polynomial: slow down-and-up sweep so the
    # identification lag cancels between passes
    rng = np.random.default_rng(5)
    n_half = 26500
    levels = rng.uniform(-0.8, 0.8, size=n_half // 5 + 1)
    discharge = np.repeat(levels, 5)[:n_half] + 0.25
    current = np.concatenate([discharge, -discharge])
    soc = 1.0
    rows = ["t,current_a,voltage_v"]
    for k, i_k in enumerate(current):
        soc -= SPEC.dt_s * i_k / SPEC.capacity_as
        ut = ocv_eval(curve, soc) - 0.05 * i_k
        rows.append(f"{float(k + 1)!r},{float(i_k)!r},{float(ut)!r}")
    csv_path = tmp_path / "rint.csv"
    csv_path.write_text("\n".join(rows) + "\n")
    out = tmp_path / "coeffs.txt"
    assert main(["fit-ocv", str(csv_path), "--out", str(out)]) == 0
    fitted = OcvCurve(tuple(float(line) for line in out.read_text().split()))
    grid = np.linspace(0.1, 0.9, 321)
    err = max(abs(ocv_eval(fitted, z) - ocv_eval(curve, z)) for z in grid)
    assert err < 5e-3
    print(f"ACCEPTANCE 4 (OCV pipeline round trip): PASS — sup err {err*1000:.2f} mV")


def test_c05_wrong_init_convergence(wrong_init_run):
    res, elapsed = wrong_init_run
    n = res.n_steps
    settle = 600
    worst = {}
    for kind in ALL:
        err = np.abs(res.filters[kind].soc_est - res.reference)
        worst[kind] = float(err[settle:].max())
        assert worst[kind] < 0.02, (kind, worst[kind])
    half = n // 2
    ia = res.filters[FilterKind.IAHIEKF]
    tail_rmse = rmse_pct(ia.soc_est[half:], res.reference[half:])
    assert tail_rmse < 1.0
    assert elapsed < 5.0
    detail = ", ".join(f"{k.value} {v*100:.2f}%" for k, v in worst.items())
    print(
        f"ACCEPTANCE 5 (wrong-init convergence): PASS — post-600 max err {detail}; "
        f"iahiekf last-half rmse {tail_rmse:.3f}%, {elapsed:.2f}s"
    )


def test_c06_accuracy_ordering_under_mismatch(mismatch_runs):
    runs, elapsed = mismatch_runs
    med = {
        kind: float(np.median([r.filters[kind].rmse_pct for r in runs])) for kind in ALL
    }
    assert med[FilterKind.IAHIEKF] <= med[FilterKind.AHIEKF]
    assert med[FilterKind.IAHIEKF] < med[FilterKind.EKF]
    assert abs(med[FilterKind.HIEKF] - med[FilterKind.EKF]) < 0.05
    assert elapsed < 30.0
    print(
        "ACCEPTANCE 6 (noise-mismatch ordering): PASS — median RMSE "
        + ", ".join(f"{k.value} {med[k]:.4f}%" for k in ALL)
        + f", {elapsed:.2f}s"
    )


def test_c07_rx_positivity(wrong_init_run, mismatch_runs):
    res5, _ = wrong_init_run
    runs6, _ = mismatch_runs
    margins = []
    ahiekf_flagged_seeds = 0
    for res in [res5, *runs6]:
        ia = res.filters[FilterKind.IAHIEKF]
        assert ia.negative_rx_count == 0
        assert ia.min_rx_minus_hph >= 0.0
        margins.append(ia.min_rx_minus_hph)
        if res.filters[FilterKind.AHIEKF].negative_rx_count > 0:
            ahiekf_flagged_seeds += 1
    assert ahiekf_flagged_seeds >= 1
    print(
        f"ACCEPTANCE 7 (Rx positivity): PASS — iahiekf min(Rx - hPh') = "
        f"{min(margins):.3e} over {len(margins)} runs; ahiekf flagged NegativeRx in "
        f"{ahiekf_flagged_seeds} of them"
    )


def test_c08_fading_weight_exactness():
    aconf = AdaptiveConfig(window_len=5, b=0.96)

    def weight(k):
        # extract d through the adaptation output: gain (1, 0), M = 1 makes
        # the top-left process-noise entry equal d exactly
        noise_cfg = NoiseConfig(qx=((0.0, 0.0), (0.0, 0.0)), rx=1.0,
                                p0=((1e-150, 0.0), (0.0, 1e-150)))
        fs = FilterState(x=(0.5, 0.0), p=((1e-150, 0.0), (0.0, 1e-150)),
                         noise=noise_cfg, step_index=k)
        out = iahiekf_adapt(fs, (1.0, 0.0), (1.0, -1.0), 1.0, aconf)
        return out.qx[0][0]

    assert weight(1) == 1.0
    assert weight(2) == pytest.approx(0.5102041, abs=1e-7)
    assert abs(weight(10_000) - 0.04) < 1e-6
    print(
        "ACCEPTANCE 8 (fading weight): PASS — d(1) = 1 exact, "
        f"d(2) = {weight(2):.7f}, d(1e4) = {weight(10_000):.7f}"
    )


def test_c09_metric_unit_vectors():
    est = np.array([0.5, 0.52])
    ref = np.array([0.5, 0.5])
    r = rmse_pct(est, ref)
    m = mae_pct(est, ref)
    assert r == pytest.approx(1.4142, abs=1e-4)
    assert m == pytest.approx(1.0, rel=1e-12)
    assert rmse_pct(ref, ref) == 0.0
    assert mae_pct(ref, ref) == 0.0
    print(f"ACCEPTANCE 9 (metrics): PASS — rmse {r:.4f}%, mae {m:.4f}%")


def test_c10_compare_throughput_and_determinism(tmp_path):
    cfg_text = """
cycle.kind = dst
cycle.duration_s = 10000
cycle.peak_a = 1.5
cycle.repeat_period_s = 120
ocv.coeffs = 0.0,0.0,0.0,0.15,-0.1,1.1,3.0
params.r0_ohm = 0.02
params.rp_ohm = 0.004
params.cp_f = 1500.0
sim.soc_init = 0.9
sim.v_sigma = 0.005
sim.seed = 7
run.soc_init = 0.8
run.reference_mode = sim_truth
ident.warmup_steps = 30
"""
    cfg = tmp_path / "config.txt"
    cfg.write_text(cfg_text)
    sim_dir = tmp_path / "sim"
    assert main(["simulate", "--config", str(cfg), "--out", str(sim_dir)]) == 0

    def compare_into(out_dir):
        t0 = time.perf_counter()
        rc = main([
            "compare", str(sim_dir / "truth.csv"), "--config", str(cfg),
            "--out", str(out_dir), "--seeds", "10",
        ])
        return rc, time.perf_counter() - t0

    rc_a, t_a = compare_into(tmp_path / "cmp_a")
    rc_b, t_b = compare_into(tmp_path / "cmp_b")
    assert rc_a == 0 and rc_b == 0
    assert t_a < 10.0 and t_b < 10.0
    names = ["median.json"] + [f"summary_seed{k}.json" for k in range(10)]
    for name in names:
        assert (tmp_path / "cmp_a" / name).read_bytes() == (
            tmp_path / "cmp_b" / name
        ).read_bytes(), name
    median = json.loads((tmp_path / "cmp_a" / "median.json").read_text())
    assert len(median["filters"]) == 4
    print(
        f"ACCEPTANCE 10 (throughput & determinism): PASS — compare runs "
        f"{t_a:.2f}s / {t_b:.2f}s for 4 filters x 10 seeds x 10000 steps, byte-identical"
    )
