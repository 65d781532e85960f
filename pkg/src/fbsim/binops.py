"""Electro-optic sideband physics and the frequency-bin projectors it realizes.

A modulator driven at f_m with index beta redistributes a photon's amplitude
over sidebands spaced by f_m with Bessel-function weights (cosine-drive
convention, so the two first-order sidebands share the same sign).
Narrowband-selecting one output frequency then implements a projective
measurement in the bin basis: the projector components are the conjugated
transfer amplitudes of every bin that can reach the selected frequency.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import optimize, special

from .errors import NoOverlap
from .spectra import BinArm

MAX_SIDEBAND_ORDER = 3


class EomKind(str, enum.Enum):
    AMPLITUDE_DSB_SC = "amplitude_dsb_sc"
    PHASE = "phase"


@dataclass(frozen=True)
class EomSpec:
    """Modulator drive: kind, frequency, index, phase, insertion efficiency."""

    kind: EomKind
    f_m_ghz: float
    modulation_index: float
    drive_phase_rad: float = 0.0
    insertion_efficiency: float = 1.0

    def __post_init__(self) -> None:
        if isinstance(self.kind, str):
            object.__setattr__(self, "kind", EomKind(self.kind))
        if self.f_m_ghz <= 0:
            raise ValueError("modulation frequency must be positive")
        if self.modulation_index < 0:
            raise ValueError("modulation index must be >= 0")
        if not 0.0 <= self.insertion_efficiency <= 1.0:
            raise ValueError("insertion efficiency must be in [0, 1]")


@dataclass(frozen=True)
class Projector:
    """Unit-norm measurement vector over one photon's d-bin basis."""

    vector: np.ndarray
    label: str = ""

    def __post_init__(self) -> None:
        v = np.asarray(self.vector, dtype=complex)
        norm = np.linalg.norm(v)
        if not math.isclose(norm, 1.0, abs_tol=1e-12):
            raise ValueError(f"projector {self.label!r} not unit norm: {norm}")
        v.flags.writeable = False
        object.__setattr__(self, "vector", v)

    @property
    def dim(self) -> int:
        return len(self.vector)

    @classmethod
    def basis(cls, k: int, dim: int = 2) -> "Projector":
        v = np.zeros(dim, dtype=complex)
        v[k] = 1.0
        return cls(v, label=str(k))

    @classmethod
    def superposition(cls, j: int, k: int, alpha_rad: float, dim: int = 2) -> "Projector":
        v = np.zeros(dim, dtype=complex)
        v[j] = 1.0 / math.sqrt(2)
        v[k] = np.exp(1j * alpha_rad) / math.sqrt(2)
        return cls(v, label=f"({j}+e^i{alpha_rad:.3f}|{k})")


def sideband_amplitude(eom: EomSpec, order: int, max_order: int = MAX_SIDEBAND_ORDER) -> complex:
    """Complex transfer amplitude of sideband ``order`` for one photon.

    Phase modulator: i^|n| * J_|n|(beta) * e^{i n phi}.  Null-biased
    amplitude modulator (DSB-SC): even orders including the carrier are
    fully suppressed, odd orders carry (-1)^((|n|-1)/2) * J_|n|(beta)
    * e^{i n phi}.  beta = 0 is the bypass state (unit carrier).
    """
    n = int(order)
    if abs(n) > max_order:
        raise ValueError(f"|order| {abs(n)} exceeds configured maximum {max_order}")
    beta = eom.modulation_index
    scale = math.sqrt(eom.insertion_efficiency)
    if beta == 0.0:
        return scale * (1.0 + 0j) if n == 0 else 0j
    phase = np.exp(1j * n * eom.drive_phase_rad)
    if eom.kind is EomKind.PHASE:
        return scale * (1j ** abs(n)) * special.jn(abs(n), beta) * phase
    if n % 2 == 0:
        return 0j
    sign = (-1.0) ** ((abs(n) - 1) // 2)
    return scale * sign * special.jn(abs(n), beta) * phase


def sideband_power_db(eom: EomSpec, order: int) -> float:
    """Per-sideband power efficiency in dB."""
    amp = abs(sideband_amplitude(eom, order))
    if amp == 0.0:
        return -math.inf
    return 20.0 * math.log10(amp)


def total_sideband_power(eom: EomSpec, max_order: int = 10) -> float:
    """Sum of |amplitude|^2 over orders up to max_order (energy check)."""
    return float(
        sum(
            abs(sideband_amplitude(eom, n, max_order=max_order)) ** 2
            for n in range(-max_order, max_order + 1)
        )
    )


def equal_sideband_index() -> float:
    """Modulation index where the first-order sideband matches the carrier.

    Root of J0(beta) = J1(beta); a phase modulator driven there splits a
    bin into three equal-amplitude lines (used for the qudit Bell scans).
    """
    return float(
        optimize.brentq(lambda b: special.j0(b) - special.j1(b), 1.0, 2.0, xtol=1e-12)
    )


def mix_projector(
    arm: BinArm,
    eom: EomSpec,
    selected_center_ghz: float,
    match_tol_ghz: float,
    max_order: int = 1,
) -> Projector:
    """Projector realized by modulating one arm then narrowband-selecting.

    Every bin whose order-n sideband lands within ``match_tol_ghz`` of the
    selected frequency contributes its conjugated transfer amplitude to the
    measurement vector.  At f_m = spacing/2 the central overlap line gives
    (|0> + e^{i 2 phi}|1>)/sqrt(2) on a signal-ordered arm; an outer
    sideband gives a basis projector.

    Only paths up to ``max_order`` (default: baseband and first-order
    sidebands) enter the projector; higher orders are treated as an
    efficiency loss, never as spurious projector components.
    """
    v = np.zeros(arm.dim, dtype=complex)
    for idx, center in enumerate(arm.centers_ghz):
        for n in range(-max_order, max_order + 1):
            if abs(center + n * eom.f_m_ghz - selected_center_ghz) <= match_tol_ghz:
                v[idx] += np.conj(sideband_amplitude(eom, n, max_order=max_order))
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise NoOverlap(
            f"selected frequency {selected_center_ghz:.3f} GHz matches no sideband"
        )
    return Projector(v / norm, label=f"mix@{selected_center_ghz:.3f}GHz")


def lorentzian_overlap_weight(detuning_ghz: float, width_ghz: float) -> float:
    """Lorentzian overlap weight w^2 / (d^2 + w^2) for scale parameter w.

    This is the amplitude-squared spectral-overlap factor of two lines
    whose separation is detuned by ``detuning_ghz``; ``width_ghz`` is the
    half width at half maximum of the weight itself.
    """
    if width_ghz <= 0:
        raise ValueError("width must be positive")
    return width_ghz**2 / (detuning_ghz**2 + width_ghz**2)


def partial_overlap_weight(
    spacing_ghz: float, linewidth_fwhm_ghz: float, eom: EomSpec
) -> float:
    """Interference envelope weight of a detuned two-bin mixing.

    With both sidebands moving as f_m detunes from spacing/2, the two
    selected lines separate at twice the detuning rate, so the envelope
    half-width equals half the resonance FWHM.
    """
    return lorentzian_overlap_weight(
        eom.f_m_ghz - spacing_ghz / 2.0, linewidth_fwhm_ghz / 2.0
    )


@dataclass(frozen=True)
class ProjectorRecipe:
    """Hardware recipe for one arm's measurement setting."""

    setting_id: int
    arm: str  # "signal" | "idler"
    kind: EomKind
    f_m_ghz: float
    modulation_index: float
    drive_phase_rad: float
    selected_center_ghz: float

    def eom(self, insertion_efficiency: float = 1.0) -> EomSpec:
        return EomSpec(
            kind=self.kind,
            f_m_ghz=self.f_m_ghz,
            modulation_index=self.modulation_index,
            drive_phase_rad=self.drive_phase_rad,
            insertion_efficiency=insertion_efficiency,
        )


_RECIPE_FIELDS = [
    "setting_id",
    "arm",
    "kind",
    "f_m_ghz",
    "beta",
    "phase_rad",
    "selected_center_ghz",
]


def write_recipes(
    path: str | Path,
    recipes: list[ProjectorRecipe],
    header_comments: list[str] | None = None,
) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_comments or []:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(_RECIPE_FIELDS)
        for r in recipes:
            writer.writerow(
                [
                    r.setting_id,
                    r.arm,
                    r.kind.value,
                    repr(float(r.f_m_ghz)),
                    repr(float(r.modulation_index)),
                    repr(float(r.drive_phase_rad)),
                    repr(float(r.selected_center_ghz)),
                ]
            )


def read_recipes(path: str | Path) -> list[ProjectorRecipe]:
    out = []
    with open(path, newline="") as fh:
        rows = [ln for ln in fh if not ln.startswith("#")]
        for row in csv.DictReader(rows):
            out.append(
                ProjectorRecipe(
                    setting_id=int(row["setting_id"]),
                    arm=row["arm"],
                    kind=EomKind(row["kind"]),
                    f_m_ghz=float(row["f_m_ghz"]),
                    modulation_index=float(row["beta"]),
                    drive_phase_rad=float(row["phase_rad"]),
                    selected_center_ghz=float(row["selected_center_ghz"]),
                )
            )
    return out
