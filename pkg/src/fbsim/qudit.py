"""d = 4 frequency-bin states from a four-ring device.

Rings with radii R0 + j*dR give slightly staggered FSRs, so seven orders
from the pump the signal/idler resonances form four near-equidistant bins
(~9 GHz apart for the 30.0-30.3 um family) while the pump resonances stay
overlapped.  Gating the pump per ring selects which |jj> components are
generated; adjacent-bin Bell pairs are interfered with a phase modulator
running at the full bin spacing, whose baseband and first-order sideband
have equal amplitude at the J0 = J1 drive index.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .binops import EomKind, EomSpec, Projector, mix_projector
from .correlate import FringeScan
from .errors import DimensionMismatch, NonAdjacentPair
from .pairgen import BinState, RateModel, emit_state, sample_counts
from .spectra import BinGrid, DeviceConfig, Mode, RingSpec, configure

QUDIT_RADII_UM = (30.0, 30.1, 30.2, 30.3)
RING_NAMES = ("A", "B", "C", "D")


def build_qudit_device(
    radii_um: tuple[float, ...] = QUDIT_RADII_UM,
    pump_frequency_thz: float = 194.0,
    linewidth_fwhm_ghz: float = 1.3,
    sfwm_efficiency_hz_per_uw2: float = 60.0,
    pump_power_uw: float = 100.0,
    bin_order: int = 7,
) -> DeviceConfig:
    """Four-ring qudit device with all pump resonances thermally aligned."""
    rings = tuple(
        RingSpec.from_radius(
            label=RING_NAMES[j],
            radius_um=r,
            reference_resonance_thz=pump_frequency_thz,
            linewidth_fwhm_ghz=linewidth_fwhm_ghz,
            sfwm_efficiency_hz_per_uw2=sfwm_efficiency_hz_per_uw2,
        )
        for j, r in enumerate(radii_um)
    )
    return DeviceConfig(
        rings=rings,
        mode=Mode.QUDIT,
        pump_frequency_thz=pump_frequency_thz,
        pump_power_uw=pump_power_uw,
        bin_order=bin_order,
    )


def qudit_emit(device: DeviceConfig, grid: BinGrid, gate_amplitudes) -> BinState:
    """Emitted ququart state for per-ring add-drop gate amplitudes.

    Component on |jj> goes as gate_j squared (pair generation is second
    order in the ring's pump field); a single open gate yields a basis
    state, equal adjacent gates a two-bin Bell state.
    """
    gates = tuple(complex(g) for g in gate_amplitudes)
    if len(gates) != len(device.rings):
        raise DimensionMismatch("one gate amplitude per ring required")
    gated = replace(device, mzi_split=gates)
    return emit_state(gated, grid)


def pair_bell_state(pair: tuple[int, int], dim: int = 4) -> BinState:
    """(|ll> + |mm>)/sqrt(2) for a bin pair."""
    l, m = pair
    v = np.zeros(dim * dim, dtype=complex)
    v[l * dim + l] = 1.0
    v[m * dim + m] = 1.0
    return BinState.pure(v, dim, dim)


def noisy_pair_state(pair: tuple[int, int], weight: float, dim: int = 4) -> BinState:
    """Bell pair mixed with uniform diagonal noise on the pair subspace.

    A single mixture weight reproduces the observed sub-unit visibilities:
    the noiseless analyzer scan of this state has visibility = weight.
    """
    l, m = pair
    bell = pair_bell_state(pair, dim)
    diag = np.zeros((dim * dim, dim * dim), dtype=complex)
    diag[l * dim + l, l * dim + l] = 0.5
    diag[m * dim + m, m * dim + m] = 0.5
    rho = weight * bell.density() + (1.0 - weight) * diag
    return BinState.from_rho(rho, dim, dim)


@dataclass
class CorrelationMatrix:
    """Z-basis coincidence counts n[l, m] with acquisition metadata."""

    counts: np.ndarray
    accidental_estimate: np.ndarray
    acquisition_s: float
    seed: int

    def __post_init__(self) -> None:
        self.counts = np.asarray(self.counts, dtype=float)
        if self.counts.min() < 0:
            raise ValueError("counts must be >= 0")

    def correlated_uncorrelated_ratio(self) -> float:
        diag = float(np.trace(self.counts))
        off = float(np.sum(self.counts) - diag)
        if off == 0:
            return math.inf
        return diag / off


def z_basis_matrix(
    state: BinState,
    rates: RateModel,
    acquisition_s: float,
    seed: int,
) -> CorrelationMatrix:
    """Poisson-sampled Z-basis correlation matrix of a ququart state."""
    d_s, d_i = state.dim_signal, state.dim_idler
    counts = np.zeros((d_s, d_i))
    acc = np.zeros((d_s, d_i))
    for l in range(d_s):
        for m in range(d_i):
            rec = sample_counts(
                state,
                (Projector.basis(l, d_s), Projector.basis(m, d_i)),
                rates,
                acquisition_s,
                seed,
                setting_id=l * d_i + m,
            )
            counts[l, m] = rec.coincidences
            acc[l, m] = rec.accidentals
    return CorrelationMatrix(
        counts=counts, accidental_estimate=acc, acquisition_s=acquisition_s, seed=seed
    )


def write_correlation_matrix(
    path: str | Path, matrix: CorrelationMatrix, header_comments: list[str] | None = None
) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_comments or []:
            fh.write(f"# {line}\n")
        fh.write(f"# acquisition_s={matrix.acquisition_s!r} seed={matrix.seed}\n")
        writer = csv.writer(fh)
        writer.writerow(["signal_bin"] + [f"idler_{m}" for m in range(matrix.counts.shape[1])])
        for l, row in enumerate(matrix.counts):
            writer.writerow([l] + [int(v) for v in row])


def adjacent_pair_projector(
    arm_centers_ghz: tuple[float, ...],
    pair: tuple[int, int],
    drive_phase_rad: float,
    modulation_index: float,
    match_tol_ghz: float,
) -> Projector:
    """Arm projector for one adjacent bin pair via full-spacing phase mixing.

    The modulator runs at the pair's spectral separation so the selected
    lower-index bin's baseband overlaps the neighbor's first-order
    sideband (J0 and J1 amplitudes, equal at the balanced drive index).
    """
    from .spectra import BinArm

    l, m = pair
    arm = BinArm(
        centers_ghz=tuple(arm_centers_ghz),
        ring_labels=tuple(str(k) for k in range(len(arm_centers_ghz))),
    )
    f_m = abs(arm.centers_ghz[m] - arm.centers_ghz[l])
    eom = EomSpec(
        kind=EomKind.PHASE,
        f_m_ghz=f_m,
        modulation_index=modulation_index,
        drive_phase_rad=drive_phase_rad,
    )
    return mix_projector(arm, eom, arm.centers_ghz[l], match_tol_ghz)


def adjacent_bell_scan(
    grid: BinGrid,
    state: BinState,
    pair: tuple[int, int],
    alphas_rad,
    modulation_index: float,
    rates: RateModel | None = None,
    acquisition_s: float = 15.0,
    seed: int = 0,
    subtract_floor: bool = True,
) -> FringeScan:
    """Coincidence fringe of one adjacent-bin Bell pair.

    x is the signal-modulator drive phase; the idler modulator phase is
    held at zero.  A pure pair Bell state scans with unit visibility when
    the drive index balances baseband and sideband.
    """
    l, m = pair
    if abs(l - m) != 1:
        raise NonAdjacentPair(f"bins {pair} are not adjacent")
    tol = grid.linewidth_fwhm_ghz / 10.0
    alphas = np.asarray(alphas_rad, dtype=float)
    proj_i = adjacent_pair_projector(
        grid.idler.centers_ghz, pair, 0.0, modulation_index, tol
    )
    ys, sigmas = [], []
    for k, alpha in enumerate(alphas):
        proj_s = adjacent_pair_projector(
            grid.signal.centers_ghz, pair, float(alpha), modulation_index, tol
        )
        if rates is None:
            p = float(
                np.real(
                    np.kron(proj_s.vector, proj_i.vector).conj()
                    @ state.density()
                    @ np.kron(proj_s.vector, proj_i.vector)
                )
            )
            ys.append(p)
            sigmas.append(0.0)
        else:
            rec = sample_counts(
                state, (proj_s, proj_i), rates, acquisition_s, seed, setting_id=k
            )
            counts = rec.coincidences - (rec.accidentals if subtract_floor else 0.0)
            ys.append(counts / acquisition_s)
            sigmas.append(math.sqrt(max(rec.coincidences, 1)) / acquisition_s)
    return FringeScan(
        axis="signal_drive_phase", x=alphas, y=np.array(ys), sigma=np.array(sigmas)
    )


def qudit_grid(device: DeviceConfig) -> BinGrid:
    return configure(device)
