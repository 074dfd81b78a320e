"""Plain-text dotted-key configuration.

Format: one `key = value` per line, `#` comments, blank lines ignored.
Unknown keys are a hard error (typo protection) and every value must
satisfy its type invariants before any computation starts.  Unspecified
keys take the shipped defaults.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .filters import AdaptiveConfig, FilterKind, HinfConfig, NoiseConfig
from .model import BatterySpec, OcvCurve, TheveninParams
from .pipeline import ReferenceMode, RunConfig
from .sim import CycleKind, DriveCycleSpec, NoiseSpec

_DEFAULTS: dict[str, str] = {
    "battery.capacity_as": "7337.88",
    "battery.coulombic_efficiency": "1.0",
    "battery.v_max": "4.2",
    "battery.v_min": "2.75",
    "battery.dt_s": "1.0",
    "ocv.coeffs": "-0.5061,11.1208,-27.5840,25.9496,-10.4888,2.3296,3.3398",
    "params.r0_ohm": "0.05",
    "params.rp_ohm": "0.03",
    "params.cp_f": "1000.0",
    "filter.rx": "0.8",
    "filter.qx_diag": "1e-5,1e-5",
    "filter.p0_diag": "0.035,0.25",
    "hinf.gamma": "0.005",
    "hinf.sx_diag": "0.9,0.1",
    "hinf.lx_diag": "1.0,1.0",
    "adaptive.window_len": "5",
    "adaptive.b": "0.96",
    "ident.lambda": "0.999",
    "ident.warmup_steps": "10",
    "ident.theta0": "0.001,0.001,0.5",
    "ident.cov0_scale": "1e6",
    "run.filters": "all",
    "run.soc_init": "0.8",
    "run.reference_mode": "provided",
    "run.reference_init_soc": "1.0",
    "cycle.kind": "dst",
    "cycle.duration_s": "3600.0",
    "cycle.peak_a": "2.0",
    "cycle.repeat_period_s": "360.0",
    "cycle.segments": "",
    "sim.soc_init": "0.9",
    "sim.v_sigma": "0.005",
    "sim.i_sigma": "0.0",
    "sim.seed": "42",
    "fit.lambda": "0.996",
    "fit.ocv_init_v": "4.0",
    "fit.r0_init": "0.01",
    "fit.soc_init": "1.0",
    "fit.skip_initial": "50",
    "fit.poly_lambda": "1.0",
    "fit.min_soc_span": "0.3",
    "fit.max_condition": "1e12",
}

_CYCLE_KINDS = {
    "dst": CycleKind.DST_LIKE,
    "fuds": CycleKind.FUDS_LIKE,
    "constant": CycleKind.CONSTANT,
    "custom": CycleKind.CUSTOM,
}

_REFERENCE_MODES = {
    "provided": ReferenceMode.PROVIDED,
    "coulomb": ReferenceMode.COULOMB,
    "sim_truth": ReferenceMode.SIM_TRUTH,
}


def parse_config_file(path: str | Path | None) -> dict[str, str]:
    """Raw key->string map: defaults overlaid with the file's entries."""
    values = dict(_DEFAULTS)
    if path is None:
        return values
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _DEFAULTS:
            raise ConfigError(f"unknown configuration key '{key}'", key=key)
        values[key] = value.strip()
    return values


def _as_float(values, key) -> float:
    try:
        return float(values[key])
    except ValueError as exc:
        raise ConfigError(f"{key}: not a number: {values[key]!r}", key=key) from exc


def _as_int(values, key) -> int:
    try:
        return int(values[key])
    except ValueError as exc:
        raise ConfigError(f"{key}: not an integer: {values[key]!r}", key=key) from exc


def _as_floats(values, key, count=None) -> tuple[float, ...]:
    raw = values[key]
    try:
        out = tuple(float(part) for part in raw.split(",") if part.strip() != "")
    except ValueError as exc:
        raise ConfigError(f"{key}: not a number list: {raw!r}", key=key) from exc
    if count is not None and len(out) != count:
        raise ConfigError(f"{key}: expected {count} values, got {len(out)}", key=key)
    return out


def _diag2(values, key):
    a, b = _as_floats(values, key, count=2)
    return ((a, 0.0), (0.0, b))


@dataclass(slots=True)
class LoadedConfig:
    """Typed view of a parsed configuration."""

    battery: BatterySpec
    curve: OcvCurve
    initial_params: TheveninParams
    noise: NoiseConfig
    hinf: HinfConfig
    adaptive: AdaptiveConfig
    run: RunConfig
    cycle: DriveCycleSpec
    sim_noise: NoiseSpec
    sim_soc_init: float
    fit_lambda: float
    fit_ocv_init_v: float
    fit_r0_init: float
    fit_soc_init: float
    fit_skip_initial: int
    fit_poly_lambda: float
    fit_min_soc_span: float
    fit_max_condition: float


def _build(section: str, ctor, **kwargs):
    try:
        return ctor(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{section}: {exc}", key=section) from exc


def parse_filter_list(raw: str) -> tuple[FilterKind, ...]:
    if raw.strip().lower() == "all":
        return (FilterKind.EKF, FilterKind.HIEKF, FilterKind.AHIEKF, FilterKind.IAHIEKF)
    kinds = []
    for part in raw.split(","):
        name = part.strip().lower()
        if not name:
            continue
        try:
            kinds.append(FilterKind(name))
        except ValueError as exc:
            raise ConfigError(f"run.filters: unknown filter '{name}'", key="run.filters") from exc
    if not kinds:
        raise ConfigError("run.filters: empty filter list", key="run.filters")
    return tuple(kinds)


def load_config(path: str | Path | None) -> LoadedConfig:
    """Parse and validate; raises ConfigError naming the offending key."""
    v = parse_config_file(path)

    battery = _build(
        "battery", BatterySpec,
        capacity_as=_as_float(v, "battery.capacity_as"),
        coulombic_efficiency=_as_float(v, "battery.coulombic_efficiency"),
        v_max=_as_float(v, "battery.v_max"),
        v_min=_as_float(v, "battery.v_min"),
        dt_s=_as_float(v, "battery.dt_s"),
    )
    curve = _build("ocv.coeffs", OcvCurve, coeffs=_as_floats(v, "ocv.coeffs", count=7))
    initial_params = _build(
        "params", TheveninParams,
        r0_ohm=_as_float(v, "params.r0_ohm"),
        rp_ohm=_as_float(v, "params.rp_ohm"),
        cp_f=_as_float(v, "params.cp_f"),
    )
    noise = _build(
        "filter", NoiseConfig,
        qx=_diag2(v, "filter.qx_diag"),
        rx=_as_float(v, "filter.rx"),
        p0=_diag2(v, "filter.p0_diag"),
    )
    hinf = _build(
        "hinf", HinfConfig,
        sx=_diag2(v, "hinf.sx_diag"),
        lx=_diag2(v, "hinf.lx_diag"),
        gamma=_as_float(v, "hinf.gamma"),
    )
    adaptive = _build(
        "adaptive", AdaptiveConfig,
        window_len=_as_int(v, "adaptive.window_len"),
        b=_as_float(v, "adaptive.b"),
    )

    mode_raw = v["run.reference_mode"].strip().lower()
    if mode_raw not in _REFERENCE_MODES:
        raise ConfigError(
            f"run.reference_mode: unknown mode '{mode_raw}'", key="run.reference_mode"
        )
    run = _build(
        "run", RunConfig,
        kinds=parse_filter_list(v["run.filters"]),
        battery=battery,
        curve=curve,
        initial_params=initial_params,
        noise=noise,
        hinf=hinf,
        adaptive=adaptive,
        ident_lambda=_as_float(v, "ident.lambda"),
        ident_warmup_steps=_as_int(v, "ident.warmup_steps"),
        ident_theta0=_as_floats(v, "ident.theta0", count=3),
        ident_cov0_scale=_as_float(v, "ident.cov0_scale"),
        soc_init_estimator=_as_float(v, "run.soc_init"),
        reference_mode=_REFERENCE_MODES[mode_raw],
        reference_init_soc=_as_float(v, "run.reference_init_soc"),
    )

    kind_raw = v["cycle.kind"].strip().lower()
    if kind_raw not in _CYCLE_KINDS:
        raise ConfigError(f"cycle.kind: unknown kind '{kind_raw}'", key="cycle.kind")
    segments = []
    seg_raw = v["cycle.segments"].strip()
    if seg_raw:
        for part in seg_raw.split(";"):
            part = part.strip()
            if not part:
                continue
            try:
                dur, amps = part.split(":")
                segments.append((float(dur), float(amps)))
            except ValueError as exc:
                raise ConfigError(
                    f"cycle.segments: expected 'dur:amps;...', got {part!r}",
                    key="cycle.segments",
                ) from exc
    cycle = _build(
        "cycle", DriveCycleSpec,
        kind=_CYCLE_KINDS[kind_raw],
        duration_s=_as_float(v, "cycle.duration_s"),
        peak_a=_as_float(v, "cycle.peak_a"),
        repeat_period_s=_as_float(v, "cycle.repeat_period_s"),
        segments=tuple(segments),
    )
    sim_noise = _build(
        "sim", NoiseSpec,
        v_sigma=_as_float(v, "sim.v_sigma"),
        i_sigma=_as_float(v, "sim.i_sigma"),
        seed=_as_int(v, "sim.seed"),
    )
    sim_soc_init = _as_float(v, "sim.soc_init")
    if not 0.0 <= sim_soc_init <= 1.0:
        raise ConfigError("sim.soc_init: must lie in [0, 1]", key="sim.soc_init")

    return LoadedConfig(
        battery=battery,
        curve=curve,
        initial_params=initial_params,
        noise=noise,
        hinf=hinf,
        adaptive=adaptive,
        run=run,
        cycle=cycle,
        sim_noise=sim_noise,
        sim_soc_init=sim_soc_init,
        fit_lambda=_as_float(v, "fit.lambda"),
        fit_ocv_init_v=_as_float(v, "fit.ocv_init_v"),
        fit_r0_init=_as_float(v, "fit.r0_init"),
        fit_soc_init=_as_float(v, "fit.soc_init"),
        fit_skip_initial=_as_int(v, "fit.skip_initial"),
        fit_poly_lambda=_as_float(v, "fit.poly_lambda"),
        fit_min_soc_span=_as_float(v, "fit.min_soc_span"),
        fit_max_condition=_as_float(v, "fit.max_condition"),
    )
