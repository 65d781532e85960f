"""Biphoton state construction, generation rates, CAR, and count records.

Pair generation is second order in the pump field, so each ring's
contribution to the emitted state scales with the *square* of the complex
pump amplitude routed into it; a 50/50 state superposition therefore needs
equal pump power per ring.  Double-pair emission is excluded from the state
model and surfaces only as a flat accidental floor.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import special

from .binops import Projector
from .errors import DimensionMismatch, DoublePairRisk, RegimeViolation
from .spectra import BinGrid, DeviceConfig, RingSpec

TWO_PI = 2.0 * math.pi


@dataclass
class BinState:
    """Two-photon state over the discrete frequency-bin basis.

    Either ``amplitudes`` (pure state, length d_s*d_i, joint index
    s*d_i + i) or ``rho`` (Hermitian density matrix) is set.
    """

    dim_signal: int
    dim_idler: int
    amplitudes: np.ndarray | None = None
    rho: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.dim_signal < 2 or self.dim_idler < 2:
            raise ValueError("bin dimensions must be >= 2")
        d = self.dim_signal * self.dim_idler
        if (self.amplitudes is None) == (self.rho is None):
            raise ValueError("exactly one of amplitudes / rho must be given")
        if self.amplitudes is not None:
            v = np.asarray(self.amplitudes, dtype=complex).reshape(d)
            norm2 = float(np.vdot(v, v).real)
            if abs(norm2 - 1.0) > 1e-12:
                raise ValueError(f"pure state norm^2 = {norm2} != 1")
            self.amplitudes = v
        else:
            r = np.asarray(self.rho, dtype=complex).reshape(d, d)
            if not np.allclose(r, r.conj().T, atol=1e-10):
                raise ValueError("density matrix is not Hermitian")
            if abs(np.trace(r).real - 1.0) > 1e-10:
                raise ValueError("density matrix trace != 1")
            if np.linalg.eigvalsh(r).min() < -1e-10:
                raise ValueError("density matrix has negative eigenvalues")
            self.rho = r

    @property
    def dim(self) -> int:
        return self.dim_signal * self.dim_idler

    @property
    def is_pure(self) -> bool:
        return self.amplitudes is not None

    def density(self) -> np.ndarray:
        if self.is_pure:
            return np.outer(self.amplitudes, self.amplitudes.conj())
        return self.rho

    def reduced_signal(self) -> np.ndarray:
        r = self.density().reshape(
            self.dim_signal, self.dim_idler, self.dim_signal, self.dim_idler
        )
        return np.trace(r, axis1=1, axis2=3)

    def reduced_idler(self) -> np.ndarray:
        r = self.density().reshape(
            self.dim_signal, self.dim_idler, self.dim_signal, self.dim_idler
        )
        return np.trace(r, axis1=0, axis2=2)

    @classmethod
    def pure(cls, amplitudes, dim_signal: int = 2, dim_idler: int = 2) -> "BinState":
        v = np.asarray(amplitudes, dtype=complex)
        norm = np.linalg.norm(v)
        if norm == 0.0:
            raise ValueError("zero state vector")
        return cls(dim_signal, dim_idler, amplitudes=v / norm)

    @classmethod
    def from_rho(cls, rho, dim_signal: int = 2, dim_idler: int = 2) -> "BinState":
        return cls(dim_signal, dim_idler, rho=np.asarray(rho, dtype=complex))

    @classmethod
    def basis(cls, s: int, i: int, dim_signal: int = 2, dim_idler: int = 2) -> "BinState":
        v = np.zeros(dim_signal * dim_idler, dtype=complex)
        v[s * dim_idler + i] = 1.0
        return cls(dim_signal, dim_idler, amplitudes=v)

    @classmethod
    def bell(cls, which: str) -> "BinState":
        """Named two-qubit Bell state: phi+, phi-, psi+, psi-."""
        which = which.lower().replace("|", "").replace(">", "")
        table = {
            "phi+": ([1, 0, 0, 1], 1.0),
            "phi-": ([1, 0, 0, -1], 1.0),
            "psi+": ([0, 1, 1, 0], 1.0),
            "psi-": ([0, 1, -1, 0], 1.0),
        }
        if which not in table:
            raise ValueError(f"unknown Bell state {which!r}")
        return cls.pure(np.asarray(table[which][0], dtype=complex))

    @classmethod
    def maximally_mixed(cls, dim_signal: int = 2, dim_idler: int = 2) -> "BinState":
        d = dim_signal * dim_idler
        return cls(dim_signal, dim_idler, rho=np.eye(d, dtype=complex) / d)

    @classmethod
    def werner(cls, which: str, weight: float) -> "BinState":
        """weight * |Bell><Bell| + (1 - weight) * I/4."""
        b = cls.bell(which)
        rho = weight * b.density() + (1.0 - weight) * np.eye(4) / 4.0
        return cls(2, 2, rho=rho)


def named_state(name: str) -> BinState:
    """Resolve a state name: 00, 01, 10, 11, phi+, phi-, psi+, psi-."""
    name = name.strip().lower()
    if name in {"00", "01", "10", "11"}:
        return BinState.basis(int(name[0]), int(name[1]))
    return BinState.bell(name)


def pair_rate(efficiency_hz_per_uw2: float, pump_power_uw: float) -> float:
    """Internal SFWM pair rate R = eta * P^2 (Hz)."""
    if pump_power_uw < 0:
        raise ValueError("pump power must be >= 0")
    return efficiency_hz_per_uw2 * pump_power_uw**2


def emit_state(device: DeviceConfig, grid: BinGrid) -> BinState:
    """Emitted two-photon state of a coherently pumped multi-ring device.

    Each ring contributes amplitude (pump split)^2 * e^{i phase} on its own
    |s_k i_k> bin pair; the result is normalized.  Warns with
    DoublePairRisk when the pair probability per coincidence window
    exceeds 0.1.
    """
    amps = np.zeros(grid.dim * grid.idler.dim, dtype=complex)
    prob_per_window = 0.0
    for ring, split, phase in zip(device.rings, device.mzi_split, device.pump_phase_rad):
        s_idx, i_idx = grid.ring_bin_indices(ring.label)
        amps[s_idx * grid.idler.dim + i_idx] += split**2 * np.exp(1j * phase)
        ring_power = abs(split) ** 2 * device.pump_power_uw
        prob_per_window += (
            pair_rate(ring.sfwm_efficiency_hz_per_uw2, ring_power)
            * device.coincidence_window_s
        )
    norm = np.linalg.norm(amps)
    if norm == 0.0:
        raise ValueError("no ring is pumped")
    if prob_per_window > 0.1:
        warnings.warn(
            f"pair probability per window {prob_per_window:.3f} > 0.1; "
            "single-pair model unreliable",
            DoublePairRisk,
        )
    return BinState(grid.dim, grid.idler.dim, amplitudes=amps / norm)


def psi_sideband_split(
    pump_eom_beta: float, pump_eom_phase_rad: float
) -> tuple[tuple[complex, complex], tuple[float, float]]:
    """Pump split and state phases for sideband pumping of the PSI layout.

    A phase modulator at half the pump-resonance separation feeds ring A
    with its -1 sideband and ring B with its +1 sideband (cosine-drive
    amplitudes i*J1*e^{-+i phi}).  The generated amplitudes go as the
    squared pump amplitudes, so the relative state phase is 4*phi.
    """
    amp = abs(special.j1(pump_eom_beta))
    split = (complex(amp), complex(amp))
    phases = (-2.0 * pump_eom_phase_rad, +2.0 * pump_eom_phase_rad)
    return split, phases


@dataclass(frozen=True)
class BiphotonLineshape:
    """Quasi-CW SFWM joint spectral amplitude of one ring's bin pair.

    g(w1, w2) = G / (w1 - i gamma/2) / (w2 - i gamma/2)
                * sinc((w1 + w2) / pump_width)

    with w1, w2 angular offsets (rad/s) from the bin centers.  The sinc
    factor pins the photon energies to the pump: w1 + w2 ~ 0.
    """

    gamma_rad_s: float
    pump_width_rad_s: float
    normalization: complex = 1.0 + 0j
    signal_center_rad_s: float = 0.0
    idler_center_rad_s: float = 0.0

    def __post_init__(self) -> None:
        if self.gamma_rad_s <= 0:
            raise ValueError("gamma must be positive")
        if self.pump_width_rad_s >= self.gamma_rad_s / 10:
            raise RegimeViolation(
                f"quasi-CW regime violated: pump width {self.pump_width_rad_s:.3e} "
                f">= gamma/10 = {self.gamma_rad_s / 10:.3e} rad/s"
            )

    def amplitude(self, w1, w2):
        """Joint amplitude at angular offsets (w1, w2) from the bin centers."""
        w1 = np.asarray(w1, dtype=float)
        w2 = np.asarray(w2, dtype=float)
        half = self.gamma_rad_s / 2.0
        arg = (w1 + w2) / self.pump_width_rad_s
        return (
            self.normalization
            / (w1 - 1j * half)
            / (w2 - 1j * half)
            * np.sinc(arg / math.pi)  # np.sinc is sin(pi x)/(pi x)
        )


def lineshape(
    ring: RingSpec, pump_linewidth_ghz: float, normalization: complex = 1.0 + 0j
) -> BiphotonLineshape:
    """Joint spectral amplitude of one ring under a quasi-CW pump."""
    return BiphotonLineshape(
        gamma_rad_s=TWO_PI * ring.linewidth_fwhm_ghz * 1e9,
        pump_width_rad_s=TWO_PI * pump_linewidth_ghz * 1e9,
        normalization=normalization,
    )


def car(total_in_window: float, accidental_in_window: float) -> float:
    """Coincidence-to-accidental ratio (total - accidental)/accidental.

    Returns +inf when the accidental estimate is zero (no-floor sentinel).
    """
    if total_in_window < 0 or accidental_in_window < 0:
        raise ValueError("counts must be >= 0")
    if accidental_in_window == 0:
        return math.inf
    return (total_in_window - accidental_in_window) / accidental_in_window


@dataclass(frozen=True)
class RateModel:
    """Detected-rate bookkeeping for count sampling.

    ``pair_rate_hz`` is the internal generated pair rate; channel losses
    are scalar per-arm efficiencies given in dB; accidentals follow the
    flat-floor estimator singles_s * singles_i * tau_c plus an optional
    extra term for unmodeled background.
    """

    pair_rate_hz: float
    loss_signal_db: float = 6.0
    loss_idler_db: float = 7.0
    coincidence_window_s: float = 380e-12
    extra_accidental_hz: float = 0.0

    @property
    def efficiency_signal(self) -> float:
        return 10.0 ** (-self.loss_signal_db / 10.0)

    @property
    def efficiency_idler(self) -> float:
        return 10.0 ** (-self.loss_idler_db / 10.0)


@dataclass
class CountRecord:
    """Simulated (or ingested) counts for one measurement setting."""

    singles_signal: int
    singles_idler: int
    coincidences: int
    accidentals: float
    window_s: float
    acquisition_s: float
    rng_seed: int = 0
    setting_id: int = 0
    label_signal: str = ""
    label_idler: str = ""
    phase_signal_rad: float = 0.0
    phase_idler_rad: float = 0.0

    def __post_init__(self) -> None:
        if min(self.singles_signal, self.singles_idler, self.coincidences) < 0:
            raise ValueError("counts must be >= 0")
        if self.accidentals < 0:
            raise ValueError("accidental estimate must be >= 0")

    def car(self) -> float:
        return car(self.coincidences, self.accidentals)


def _joint_vector(state: BinState, projectors) -> tuple[np.ndarray, Projector | None, Projector | None]:
    if isinstance(projectors, Projector):
        if projectors.dim != state.dim:
            raise DimensionMismatch(
                f"joint projector dim {projectors.dim} != state dim {state.dim}"
            )
        return projectors.vector, None, None
    proj_s, proj_i = projectors
    if proj_s.dim != state.dim_signal or proj_i.dim != state.dim_idler:
        raise DimensionMismatch(
            f"projector dims ({proj_s.dim}, {proj_i.dim}) != state dims "
            f"({state.dim_signal}, {state.dim_idler})"
        )
    return np.kron(proj_s.vector, proj_i.vector), proj_s, proj_i


def born_probability(state: BinState, projectors) -> float:
    """Coincidence probability for a joint or (signal, idler) projector."""
    v, _, _ = _joint_vector(state, projectors)
    return float(np.real(v.conj() @ state.density() @ v))


def sampling_rng(seed: int, setting_id: int) -> np.random.Generator:
    """Per-setting RNG stream derived by counter so ordering never matters."""
    return np.random.default_rng([0x5FB5, seed, setting_id])


def sample_counts(
    state: BinState,
    projectors,
    rates: RateModel,
    acquisition_s: float,
    seed: int,
    setting_id: int = 0,
) -> CountRecord:
    """Poisson-sample a coincidence record for one projector setting.

    Coincidences ~ Poisson(R * eps_s * eps_i * p_joint * T + acc * T),
    singles ~ Poisson of the per-arm marginal detected rates, with the
    accidental rate singles_s * singles_i * tau_c (+ extra floor).
    Deterministic given (seed, setting_id).
    """
    v, proj_s, proj_i = _joint_vector(state, projectors)
    p_joint = float(np.real(v.conj() @ state.density() @ v))
    if proj_s is not None:
        p_s = float(np.real(proj_s.vector.conj() @ state.reduced_signal() @ proj_s.vector))
        p_i = float(np.real(proj_i.vector.conj() @ state.reduced_idler() @ proj_i.vector))
    else:
        # Joint (possibly entangled) projector: marginals from its partial traces.
        joint = np.outer(v, v.conj()).reshape(
            state.dim_signal, state.dim_idler, state.dim_signal, state.dim_idler
        )
        ps_op = np.trace(joint, axis1=1, axis2=3)
        pi_op = np.trace(joint, axis1=0, axis2=2)
        p_s = float(np.real(np.trace(state.reduced_signal() @ ps_op.conj().T)))
        p_i = float(np.real(np.trace(state.reduced_idler() @ pi_op.conj().T)))
    rate_s = rates.pair_rate_hz * rates.efficiency_signal * p_s
    rate_i = rates.pair_rate_hz * rates.efficiency_idler * p_i
    pair_coinc = (
        rates.pair_rate_hz * rates.efficiency_signal * rates.efficiency_idler * p_joint
    )
    acc_rate = rate_s * rate_i * rates.coincidence_window_s + rates.extra_accidental_hz
    rng = sampling_rng(seed, setting_id)
    T = acquisition_s
    # Coupled sampling: every coincidence (true pair or accidental pairing)
    # appears in both singles streams, so coincidences <= min(singles) holds
    # by construction.
    n_pair = int(rng.poisson(pair_coinc * T))
    n_acc = int(rng.poisson(acc_rate * T))
    extra_s = int(rng.poisson(max(0.0, rate_s - pair_coinc - acc_rate) * T))
    extra_i = int(rng.poisson(max(0.0, rate_i - pair_coinc - acc_rate) * T))
    labels = (proj_s.label if proj_s else "joint", proj_i.label if proj_i else "joint")
    return CountRecord(
        singles_signal=n_pair + n_acc + extra_s,
        singles_idler=n_pair + n_acc + extra_i,
        coincidences=n_pair + n_acc,
        accidentals=acc_rate * acquisition_s,
        window_s=rates.coincidence_window_s,
        acquisition_s=acquisition_s,
        rng_seed=seed,
        setting_id=setting_id,
        label_signal=labels[0],
        label_idler=labels[1],
    )


_RECORD_FIELDS = [
    "setting_id",
    "proj_s",
    "proj_i",
    "phase_s_rad",
    "phase_i_rad",
    "singles_s",
    "singles_i",
    "coinc",
    "accidental",
    "t_acq_s",
]


def write_records(
    path: str | Path, records: list[CountRecord], header_comments: list[str] | None = None
) -> None:
    """Write count records as CSV (also the tomography ingestion format)."""
    with open(path, "w", newline="") as fh:
        for line in header_comments or []:
            fh.write(f"# {line}\n")
        if records:
            fh.write(f"# window_s={records[0].window_s!r}\n")
        writer = csv.writer(fh)
        writer.writerow(_RECORD_FIELDS)
        for r in records:
            writer.writerow(
                [
                    r.setting_id,
                    r.label_signal,
                    r.label_idler,
                    repr(float(r.phase_signal_rad)),
                    repr(float(r.phase_idler_rad)),
                    r.singles_signal,
                    r.singles_idler,
                    r.coincidences,
                    repr(float(r.accidentals)),
                    repr(float(r.acquisition_s)),
                ]
            )


def read_records(path: str | Path) -> list[CountRecord]:
    window_s = 380e-12
    rows = []
    with open(path, newline="") as fh:
        for ln in fh:
            if ln.startswith("#"):
                stripped = ln.lstrip("# ").strip()
                if stripped.startswith("window_s="):
                    window_s = float(stripped.split("=", 1)[1])
            else:
                rows.append(ln)
    out = []
    for row in csv.DictReader(rows):
        out.append(
            CountRecord(
                setting_id=int(row["setting_id"]),
                label_signal=row["proj_s"],
                label_idler=row["proj_i"],
                phase_signal_rad=float(row["phase_s_rad"]),
                phase_idler_rad=float(row["phase_i_rad"]),
                singles_signal=int(row["singles_s"]),
                singles_idler=int(row["singles_i"]),
                coincidences=int(row["coinc"]),
                accidentals=float(row["accidental"]),
                acquisition_s=float(row["t_acq_s"]),
                window_s=window_s,
            )
        )
    return out
