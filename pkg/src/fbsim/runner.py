"""Experiment orchestration: device configs, named runs, artifact output.

Every output file carries a provenance header (seed, config hash, tool
version) and is byte-identical when re-run with the same seed and config.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .binops import EomSpec, Projector, equal_sideband_index, sideband_amplitude, write_recipes
from .correlate import (
    FringeScan,
    InterferenceParams,
    bell_scan,
    entanglement_witness,
    fit_visibility,
    g2_closed_form,
    write_scan,
)
from .errors import ConfigError, InfeasibleConfig, RegimeViolation, ScenarioError
from .pairgen import (
    BinState,
    RateModel,
    emit_state,
    pair_rate,
    psi_sideband_split,
    sample_counts,
    write_records,
)
from .qudit import (
    adjacent_bell_scan,
    noisy_pair_state,
    qudit_emit,
    write_correlation_matrix,
    z_basis_matrix,
)
from .spectra import Coupling, DeviceConfig, Mode, RingSpec, configure, transmission
from .tomo import (
    estimate_metrics,
    forward_simulate,
    mle_reconstruct,
    standard_settings,
    write_density_matrix,
)

DEFAULT_OUT_ENV = "FBSIM_OUT"
_CONFIG_DIR = Path(__file__).parent / "configs"

# Per-arm electro-optic modulator loss at the working drive index; the
# idler modulator of the uneven-spacing layout runs near its bandwidth
# limit and is derated further.
_MOD_LOSS_DB = -20.0 * math.log10(
    abs(sideband_amplitude(EomSpec("amplitude_dsb_sc", 9.5, 1.7), 1))
)
_PSI_IDLER_EXTRA_DB = 3.0


def packaged_config(name: str) -> Path:
    return _CONFIG_DIR / name


def load_device(path: str | Path) -> DeviceConfig:
    """Parse a TOML device file into a DeviceConfig."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no such config file: {path}")
    try:
        raw = tomllib.loads(path.read_text())
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    try:
        rings = []
        for spec in raw.get("rings", []):
            kwargs = dict(
                label=spec["label"],
                radius_um=float(spec.get("radius_um", 30.0)),
                reference_resonance_thz=float(spec["reference_resonance_thz"]),
                q_factor=float(spec["q_factor"]) if "q_factor" in spec else None,
                linewidth_fwhm_ghz=(
                    float(spec["linewidth_fwhm_ghz"])
                    if "linewidth_fwhm_ghz" in spec
                    else None
                ),
                coupling=Coupling(spec.get("coupling", "critical")),
                sfwm_efficiency_hz_per_uw2=float(
                    spec.get("sfwm_efficiency_hz_per_uw2", 0.0)
                ),
            )
            if "fsr_ghz" in spec:
                rings.append(RingSpec(fsr_ghz=float(spec["fsr_ghz"]), **kwargs))
            else:
                rings.append(
                    RingSpec.from_radius(
                        **{k: v for k, v in kwargs.items() if k != "radius_um"},
                        radius_um=kwargs["radius_um"],
                    )
                )
        if not rings:
            raise ConfigError(f"{path}: no [[rings]] tables")
        return DeviceConfig(
            rings=tuple(rings),
            mode=Mode(raw["mode"]),
            pump_frequency_thz=float(raw["pump_frequency_thz"]),
            pump_power_uw=float(raw.get("pump_power_uw", 100.0)),
            pump_linewidth_ghz=float(raw.get("pump_linewidth_ghz", 2e-5)),
            bin_order=int(raw["bin_order"]) if "bin_order" in raw else None,
            loss_signal_db=float(raw.get("loss_signal_db", 6.0)),
            loss_idler_db=float(raw.get("loss_idler_db", 7.0)),
            coincidence_window_s=float(raw.get("coincidence_window_s", 380e-12)),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: bad device config: {exc}") from exc


def validate(path: str | Path) -> list[str]:
    """All invariant violations of a config, without running anything."""
    diagnostics: list[str] = []
    try:
        device = load_device(path)
    except ConfigError as exc:
        return [str(exc)]
    if device.split_power() > 1.0 + 1e-9:
        diagnostics.append(
            f"passive splitter violated: sum |mzi_split|^2 = {device.split_power():.4f} > 1"
        )
    gamma = device.linewidth_fwhm_ghz
    if device.pump_linewidth_ghz >= gamma / 10.0:
        diagnostics.append(
            f"RegimeViolation: pump linewidth {device.pump_linewidth_ghz:.4g} GHz "
            f">= Gamma/10 = {gamma / 10:.4g} GHz (quasi-CW assumption broken)"
        )
    try:
        configure(device)
    except InfeasibleConfig as exc:
        diagnostics.append(f"InfeasibleConfig: {exc}")
    return diagnostics


@dataclass
class ExperimentPlan:
    """A named, reproducible experiment."""

    name: str
    scenario: str
    device_path: Path
    seed: int = 1
    out_dir: Path = Path("fbsim_out")
    overrides: dict = field(default_factory=dict)


@dataclass
class RunResult:
    name: str
    files: list[Path]
    metrics: dict


def _config_hash(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def _provenance(plan: ExperimentPlan) -> list[str]:
    return [
        f"plan={plan.name}",
        f"seed={plan.seed}",
        f"config_sha256={_config_hash(plan.device_path)}",
        f"fbsim_version={__version__}",
    ]


def _write_metrics(path: Path, plan: ExperimentPlan, metrics: dict) -> None:
    lines = [f"# {c}" for c in _provenance(plan)]
    for key, value in metrics.items():
        if isinstance(value, float):
            lines.append(f"{key} = {value:.12g}")
        else:
            lines.append(f"{key} = {value}")
    path.write_text("\n".join(lines) + "\n")


def _device_rates(
    device: DeviceConfig,
    modulated: bool = True,
    car_floor: float | None = None,
    idler_extra_db: float = 0.0,
) -> RateModel:
    """Detected-rate model for the configured pumping, losses included."""
    total = sum(
        pair_rate(r.sfwm_efficiency_hz_per_uw2, abs(a) ** 2 * device.pump_power_uw)
        for r, a in zip(device.rings, device.mzi_split)
    )
    mod_db = _MOD_LOSS_DB if modulated else 0.0
    model = RateModel(
        pair_rate_hz=total,
        loss_signal_db=device.loss_signal_db + mod_db,
        loss_idler_db=device.loss_idler_db + mod_db + idler_extra_db,
        coincidence_window_s=device.coincidence_window_s,
    )
    if car_floor:
        peak = model.pair_rate_hz * model.efficiency_signal * model.efficiency_idler
        model = replace(model, extra_accidental_hz=peak / car_floor)
    return model


def _scenario_spectra(plan: ExperimentPlan, device: DeviceConfig, out: Path) -> RunResult:
    """Transmission spectrum CSV over the pump/signal/idler bands."""
    import csv as _csv

    grid = configure(device)
    files = []
    span = 30.0
    for band, center in (
        ("pump", 0.0),
        ("signal", float(np.mean(grid.signal.centers_ghz))),
        ("idler", float(np.mean(grid.idler.centers_ghz))),
    ):
        f = np.linspace(center - span, center + span, 1201)
        t = np.ones_like(f)
        for ring in device.rings:
            ring_offset = ring.resonance_offset_ghz(0, device.pump_frequency_thz)
            t *= transmission(ring, f - ring_offset)
        path = out / f"{plan.name}_{band}.csv"
        with open(path, "w", newline="") as fh:
            for c in _provenance(plan):
                fh.write(f"# {c}\n")
            w = _csv.writer(fh)
            w.writerow(["frequency_ghz", "transmission"])
            abs0 = device.pump_frequency_thz * 1e3
            for fi, ti in zip(f, t):
                w.writerow([repr(float(abs0 + fi)), repr(float(ti))])
        files.append(path)
    return RunResult(plan.name, files, {"bands": 3, "points_per_band": 1201})


def _scenario_power_scan(plan: ExperimentPlan, device: DeviceConfig, out: Path) -> RunResult:
    """Pair rate and CAR versus pump power, one file per ring."""
    import csv as _csv

    powers = plan.overrides.get("powers_uw") or [20.0 * k for k in range(1, 21)]
    t_acq = float(plan.overrides.get("t_acq_s", 15.0))
    files = []
    metrics = {}
    for ring_idx, ring in enumerate(device.rings):
        rows = []
        for p_idx, p_uw in enumerate(powers):
            rate = pair_rate(ring.sfwm_efficiency_hz_per_uw2, p_uw)
            rates = RateModel(
                pair_rate_hz=rate,
                loss_signal_db=device.loss_signal_db,
                loss_idler_db=device.loss_idler_db,
                coincidence_window_s=device.coincidence_window_s,
            )
            state = BinState.basis(0, 0)
            rec = sample_counts(
                state,
                (Projector.basis(0), Projector.basis(0)),
                rates,
                t_acq,
                plan.seed,
                setting_id=ring_idx * 1000 + p_idx,
            )
            rows.append((p_uw, rate, rec.car()))
        path = out / f"{plan.name}_{ring.label}.csv"
        with open(path, "w", newline="") as fh:
            for c in _provenance(plan):
                fh.write(f"# {c}\n")
            w = _csv.writer(fh)
            w.writerow(["p_uw", "rate_hz", "car"])
            for p_uw, rate, car_v in rows:
                w.writerow([repr(float(p_uw)), repr(float(rate)), repr(float(car_v))])
        files.append(path)
        metrics[f"min_car_{ring.label}"] = min(r[2] for r in rows)
        metrics[f"max_rate_hz_{ring.label}"] = max(r[1] for r in rows)
    return RunResult(plan.name, files, metrics)


def _scenario_fringe_scan(plan: ExperimentPlan, device: DeviceConfig, out: Path) -> RunResult:
    """Coincidences of the mixed bins versus modulation frequency."""
    grid = configure(device)
    if grid.mode is not Mode.PHI:
        raise ScenarioError("fringe scan needs the aligned-pump (PHI) layout")
    theta = float(plan.overrides.get("state_phase_rad", 0.0))
    delay = float(plan.overrides.get("path_delay_s", 8.5e-9))
    points = int(plan.overrides.get("points", 161))
    span = float(plan.overrides.get("span_ghz", 0.15))
    t_acq = float(plan.overrides.get("t_acq_s", 15.0))
    params = InterferenceParams(
        spacing_ghz=grid.spacing_signal_ghz,
        linewidth_fwhm_ghz=grid.linewidth_fwhm_ghz,
        state_phase_rad=theta,
        path_delay_s=delay,
    )
    rates = _device_rates(device, car_floor=float(plan.overrides.get("car_floor", 50.0)))
    base = rates.pair_rate_hz * rates.efficiency_signal * rates.efficiency_idler / 4.0
    half_spacing = grid.spacing_signal_ghz / 2.0
    fms = np.linspace(half_spacing - span / 2.0, half_spacing + span / 2.0, points)
    rng = np.random.default_rng([0x5FB5, plan.seed, 9999])
    ys, sigmas = [], []
    for fm in fms:
        g2 = g2_closed_form(replace(params, f_m_ghz=float(fm)))
        lam = (base * g2 + rates.extra_accidental_hz) * t_acq
        counts = rng.poisson(lam)
        ys.append((counts - rates.extra_accidental_hz * t_acq) / (base * t_acq))
        sigmas.append(math.sqrt(max(counts, 1)) / (base * t_acq))
    scan = FringeScan(axis="f_m_ghz", x=fms, y=np.array(ys), sigma=np.array(sigmas))
    fit = fit_visibility(scan, model="detuning_envelope", params=params)
    path = out / f"{plan.name}.csv"
    write_scan(path, scan, header_comments=_provenance(plan))
    metrics = {
        "visibility": fit.visibility,
        "visibility_sigma": fit.visibility_sigma,
        "fitted_delay_ns": (fit.delay_s or 0.0) * 1e9,
        "fringe_period_mhz": 1e3 / (2.0 * (fit.delay_s or math.inf) * 1e9),
        "g2_peak_model": g2_closed_form(replace(params, f_m_ghz=half_spacing)),
    }
    mpath = out / f"{plan.name}_metrics.txt"
    _write_metrics(mpath, plan, metrics)
    return RunResult(plan.name, [path, mpath], metrics)


def _scenario_bell_scan(plan: ExperimentPlan, device: DeviceConfig, out: Path) -> RunResult:
    """Bell-curve scan of the analyzer phase for a named two-qubit state."""
    state_name = plan.overrides.get("state", "phi+")
    points = int(plan.overrides.get("points", 12))
    t_acq = float(plan.overrides.get("t_acq_s", 15.0))
    prepared = _prepared_device(device, state_name)
    grid = configure(prepared)
    state = emit_state(prepared, grid)
    rates = _device_rates(
        prepared,
        car_floor=float(plan.overrides.get("car_floor", 50.0)),
        idler_extra_db=_PSI_IDLER_EXTRA_DB if grid.mode is Mode.PSI else 0.0,
    )
    alphas = np.linspace(0.0, 2.0 * math.pi, points)
    scan = bell_scan(state, alphas, rates=rates, acquisition_s=t_acq, seed=plan.seed)
    fit = fit_visibility(scan)
    vis = min(max(fit.visibility, 0.0), 1.0)
    path = out / f"{plan.name}.csv"
    write_scan(path, scan, header_comments=_provenance(plan))
    metrics = {
        "state": state_name,
        "visibility": fit.visibility,
        "visibility_sigma": fit.visibility_sigma,
        "entangled_witness": entanglement_witness(vis),
    }
    mpath = out / f"{plan.name}_metrics.txt"
    _write_metrics(mpath, plan, metrics)
    return RunResult(plan.name, [path, mpath], metrics)


def _prepared_device(device: DeviceConfig, state_name: str) -> DeviceConfig:
    """Pump routing that generates the named state on this device."""
    grid = configure(device)
    by_bins = {grid.ring_bin_indices(r.label): r.label for r in device.rings}
    name = state_name.lower()
    if name in {"00", "01", "10", "11"}:
        target = (int(name[0]), int(name[1]))
        if target not in by_bins:
            raise ScenarioError(
                f"state |{name}> is not reachable in {grid.mode.value} mode"
            )
        return device.with_pumped_rings(by_bins[target])
    if name in {"phi+", "phi-"}:
        if grid.mode is not Mode.PHI:
            raise ScenarioError(f"{name} needs the PHI layout")
        theta = 0.0 if name.endswith("+") else math.pi
        # The generation phase sits on the ring producing |11> (the
        # bin pair farther from the pump).
        phases = [0.0] * len(device.rings)
        phases[[grid.ring_bin_indices(r.label) for r in device.rings].index((1, 1))] = theta
        return replace(device, pump_phase_rad=tuple(phases))
    if name in {"psi+", "psi-"}:
        if grid.mode is not Mode.PSI:
            raise ScenarioError(f"{name} needs the PSI layout")
        pump_phase = 0.0 if name.endswith("+") else math.pi / 4.0
        split, phases = psi_sideband_split(1.7, pump_phase)
        return replace(device, mzi_split=split, pump_phase_rad=phases)
    raise ScenarioError(f"unknown state {state_name!r}")


def _scenario_tomography(plan: ExperimentPlan, device: DeviceConfig, out: Path) -> RunResult:
    """Forward-simulate the 16 settings and reconstruct the density matrix."""
    state_name = plan.overrides.get("state", "phi-")
    t_acq = float(plan.overrides.get("t_acq_s", 15.0))
    prepared = _prepared_device(device, state_name)
    grid = configure(prepared)
    state = emit_state(prepared, grid)
    settings = standard_settings(
        grid.spacing_signal_ghz,
        grid.spacing_idler_ghz,
        acquisition_s=t_acq,
        linewidth_fwhm_ghz=grid.linewidth_fwhm_ghz,
    )
    rates = _device_rates(
        prepared,
        car_floor=float(plan.overrides.get("car_floor", 50.0)),
        idler_extra_db=_PSI_IDLER_EXTRA_DB if grid.mode is Mode.PSI else 0.0,
    )
    records = forward_simulate(state, settings, rates, plan.seed)
    est = mle_reconstruct(records, settings)
    metrics_obj = estimate_metrics(est, state)
    rec_path = out / f"{plan.name}_counts.csv"
    write_records(rec_path, records, header_comments=_provenance(plan))
    set_path = out / f"{plan.name}_settings.csv"
    write_recipes(set_path, settings.recipes(), header_comments=_provenance(plan))
    dm_path = out / f"{plan.name}_rho.txt"
    write_density_matrix(dm_path, est, metrics_obj, header_comments=_provenance(plan))
    metrics = {
        "state": state_name,
        "fidelity": metrics_obj.fidelity,
        "purity": metrics_obj.purity,
        "entanglement_of_formation": metrics_obj.entanglement_of_formation,
        "converged": metrics_obj.converged,
    }
    mpath = out / f"{plan.name}_metrics.txt"
    _write_metrics(mpath, plan, metrics)
    return RunResult(plan.name, [rec_path, set_path, dm_path, mpath], metrics)


def _qudit_rates(plan: ExperimentPlan, device: DeviceConfig) -> RateModel:
    total = sum(
        pair_rate(r.sfwm_efficiency_hz_per_uw2, abs(a) ** 2 * device.pump_power_uw)
        for r, a in zip(device.rings, device.mzi_split)
    )
    model = RateModel(
        pair_rate_hz=total,
        loss_signal_db=device.loss_signal_db,
        loss_idler_db=device.loss_idler_db,
        coincidence_window_s=device.coincidence_window_s,
    )
    car_floor = float(plan.overrides.get("z_car_floor", 1200.0))
    peak = model.pair_rate_hz * model.efficiency_signal * model.efficiency_idler
    return replace(model, extra_accidental_hz=peak / car_floor)


def _scenario_qudit_zbasis(plan: ExperimentPlan, device: DeviceConfig, out: Path) -> RunResult:
    t_acq = float(plan.overrides.get("t_acq_s", 15.0))
    grid = configure(device)
    pump = plan.overrides.get("pump", "all")
    labels = [r.label for r in device.rings]
    targets = labels if pump == "all" else [pump]
    files, metrics = [], {}
    for label in targets:
        if label not in labels:
            raise ScenarioError(f"no ring named {label!r}")
        gated = device.with_pumped_rings(label)
        gates = gated.mzi_split
        state = qudit_emit(device, grid, gates)
        rates = _qudit_rates(plan, gated)
        matrix = z_basis_matrix(state, rates, t_acq, plan.seed)
        path = out / f"{plan.name}_{label}.csv"
        write_correlation_matrix(path, matrix, header_comments=_provenance(plan))
        files.append(path)
        metrics[f"ratio_{label}"] = matrix.correlated_uncorrelated_ratio()
    mpath = out / f"{plan.name}_metrics.txt"
    _write_metrics(mpath, plan, metrics)
    return RunResult(plan.name, files + [mpath], metrics)


def _scenario_qudit_bell(plan: ExperimentPlan, device: DeviceConfig, out: Path) -> RunResult:
    t_acq = float(plan.overrides.get("t_acq_s", 15.0))
    grid = configure(device)
    beta = equal_sideband_index()
    pairs = plan.overrides.get("pairs") or [(0, 1), (1, 2), (2, 3)]
    weights = plan.overrides.get("mixture_weights") or {
        (0, 1): 0.831,
        (1, 2): 0.884,
        (2, 3): 0.81,
    }
    points = int(plan.overrides.get("points", 13))
    alphas = np.linspace(0.0, 2.0 * math.pi, points)
    files, metrics = [], {}
    for pair in pairs:
        pair = tuple(pair)
        state = noisy_pair_state(pair, float(weights[pair]))
        gated = device.with_pumped_rings(
            [device.rings[pair[0]].label, device.rings[pair[1]].label]
        )
        rates = _qudit_rates(plan, gated)
        scan = adjacent_bell_scan(
            grid, state, pair, alphas, modulation_index=beta,
            rates=rates, acquisition_s=t_acq, seed=plan.seed,
        )
        fit = fit_visibility(scan)
        vis = min(max(fit.visibility, 0.0), 1.0)
        path = out / f"{plan.name}_{pair[0]}{pair[1]}.csv"
        write_scan(path, scan, header_comments=_provenance(plan))
        files.append(path)
        metrics[f"visibility_{pair[0]}{pair[1]}"] = fit.visibility
        metrics[f"witness_{pair[0]}{pair[1]}"] = entanglement_witness(vis)
    mpath = out / f"{plan.name}_metrics.txt"
    _write_metrics(mpath, plan, metrics)
    return RunResult(plan.name, files + [mpath], metrics)


_SCENARIOS = {
    "spectra": _scenario_spectra,
    "power_scan": _scenario_power_scan,
    "fringe_scan": _scenario_fringe_scan,
    "bell_scan": _scenario_bell_scan,
    "tomography": _scenario_tomography,
    "qudit_zbasis": _scenario_qudit_zbasis,
    "qudit_bell": _scenario_qudit_bell,
}

# Named reproductions; (scenario, default device config, fixed overrides).
PLAN_REGISTRY: dict[str, tuple[str, str, dict]] = {
    "fig1_spectra": ("spectra", "qubit_phi.toml", {}),
    "fig2_power_scan": ("power_scan", "qubit_psi.toml", {}),
    "fig4_fringe_scan": ("fringe_scan", "qubit_phi.toml", {}),
    "supp_bell_phi_plus": ("bell_scan", "qubit_phi.toml", {"state": "phi+"}),
    "supp_bell_phi_minus": ("bell_scan", "qubit_phi.toml", {"state": "phi-"}),
    "fig5_00": ("tomography", "qubit_phi.toml", {"state": "00"}),
    "fig5_11": ("tomography", "qubit_phi.toml", {"state": "11"}),
    "fig5_phi_plus": ("tomography", "qubit_phi.toml", {"state": "phi+"}),
    "fig5_phi_minus": ("tomography", "qubit_phi.toml", {"state": "phi-"}),
    "fig6_01": ("tomography", "qubit_psi.toml", {"state": "01"}),
    "fig6_10": ("tomography", "qubit_psi.toml", {"state": "10"}),
    "fig6_psi_plus": ("tomography", "qubit_psi.toml", {"state": "psi+"}),
    "fig6_psi_minus": ("tomography", "qubit_psi.toml", {"state": "psi-"}),
    "fig7_zbasis": ("qudit_zbasis", "qudit.toml", {}),
    "fig7_qudit_bell": ("qudit_bell", "qudit.toml", {}),
}


def default_out_dir() -> Path:
    return Path(os.environ.get(DEFAULT_OUT_ENV, "fbsim_out"))


def make_plan(
    name: str,
    device_path: str | Path | None = None,
    seed: int = 1,
    out_dir: str | Path | None = None,
    overrides: dict | None = None,
) -> ExperimentPlan:
    if name not in PLAN_REGISTRY:
        raise ConfigError(
            f"unknown plan {name!r}; available: {', '.join(sorted(PLAN_REGISTRY))}"
        )
    scenario, default_cfg, fixed = PLAN_REGISTRY[name]
    merged = dict(fixed)
    merged.update(overrides or {})
    return ExperimentPlan(
        name=name,
        scenario=scenario,
        device_path=Path(device_path) if device_path else packaged_config(default_cfg),
        seed=seed,
        out_dir=Path(out_dir) if out_dir else default_out_dir(),
        overrides=merged,
    )


def run(plan: ExperimentPlan) -> RunResult:
    """Execute one plan; writes artifacts and returns the manifest."""
    if plan.scenario not in _SCENARIOS:
        raise ConfigError(f"unknown scenario {plan.scenario!r}")
    device = load_device(plan.device_path)
    plan.out_dir.mkdir(parents=True, exist_ok=True)
    try:
        return _SCENARIOS[plan.scenario](plan, device, plan.out_dir)
    except ScenarioError:
        raise
    except (InfeasibleConfig, RegimeViolation) as exc:
        raise ScenarioError(str(exc)) from exc


def run_many(plans: list[ExperimentPlan], jobs: int = 1) -> list[RunResult]:
    if jobs <= 1:
        return [run(p) for p in plans]
    with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run, plans))
