"""Linear-optics model of the device.

Ring resonance grids, all-pass transmission spectra, pump routing, and the
frequency-bin layouts realized by the three operating modes (PHI, PSI,
QUDIT).  All frequencies are handled internally as GHz offsets from the
pump laser; absolute THz values appear only at I/O boundaries.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InfeasibleConfig

# FSR scales inversely with ring radius; anchor chosen so that a 30 um ring
# has FSR = 377.2 GHz (measured value for the qubit device's Ring A).
FSR_RADIUS_CONSTANT_GHZ_UM = 30.0 * 377.2


class Coupling(str, enum.Enum):
    CRITICAL = "critical"
    UNDER = "under"
    OVER = "over"


# Default escape efficiency (fraction of intracavity loss through the bus
# coupler) per coupling regime.  Critical coupling means equal internal and
# external rates, i.e. 0.5.
_DEFAULT_ESCAPE = {Coupling.CRITICAL: 0.5, Coupling.UNDER: 0.25, Coupling.OVER: 0.75}


class Mode(str, enum.Enum):
    PHI = "PHI"
    PSI = "PSI"
    QUDIT = "QUDIT"


@dataclass(frozen=True)
class RingSpec:
    """One ring-resonator photon-pair source.

    Parameters
    ----------
    label : str
        Ring name ("A", "B", ...).
    radius_um : float
        Ring radius in micrometers.
    fsr_ghz : float
        Free spectral range in GHz.
    reference_resonance_thz : float
        Absolute frequency of the m = 0 resonance in THz (after thermal
        tuning; tuning is modeled as direct assignment of this value).
    q_factor : float, optional
        Loaded quality factor.  Used to derive the linewidth when
        ``linewidth_fwhm_ghz`` is not given.
    linewidth_fwhm_ghz : float, optional
        Resonance full width at half maximum in GHz.
    coupling : Coupling
        Coupling regime of the bus waveguide.
    escape_efficiency : float, optional
        Fraction of the loaded loss rate owed to the bus coupler, in [0, 1].
        Defaults to a nominal value per coupling regime.
    sfwm_efficiency_hz_per_uw2 : float
        Pair-generation efficiency: internal rate = eta * P_wg**2.
    """

    label: str
    radius_um: float
    fsr_ghz: float
    reference_resonance_thz: float
    q_factor: float | None = None
    linewidth_fwhm_ghz: float | None = None
    coupling: Coupling = Coupling.CRITICAL
    escape_efficiency: float | None = None
    sfwm_efficiency_hz_per_uw2: float = 0.0

    def __post_init__(self) -> None:
        if self.fsr_ghz <= 0:
            raise ValueError(f"ring {self.label}: FSR must be positive")
        if self.q_factor is None and self.linewidth_fwhm_ghz is None:
            raise ValueError(f"ring {self.label}: need q_factor or linewidth")
        if self.linewidth_fwhm_ghz is None:
            derived = 1e3 * self.reference_resonance_thz / self.q_factor
            object.__setattr__(self, "linewidth_fwhm_ghz", derived)
        elif self.q_factor is not None:
            # Gamma = f0/Q must hold within 1% when both are specified.
            derived = 1e3 * self.reference_resonance_thz / self.q_factor
            if abs(derived - self.linewidth_fwhm_ghz) > 0.01 * self.linewidth_fwhm_ghz:
                raise ValueError(
                    f"ring {self.label}: linewidth {self.linewidth_fwhm_ghz:.4f} GHz "
                    f"inconsistent with f0/Q = {derived:.4f} GHz"
                )
        if self.linewidth_fwhm_ghz <= 0:
            raise ValueError(f"ring {self.label}: linewidth must be positive")
        if self.linewidth_fwhm_ghz >= self.fsr_ghz / 10:
            raise ValueError(
                f"ring {self.label}: linewidth {self.linewidth_fwhm_ghz:.3f} GHz "
                f"not << FSR {self.fsr_ghz:.1f} GHz"
            )
        if isinstance(self.coupling, str):
            object.__setattr__(self, "coupling", Coupling(self.coupling))
        if self.escape_efficiency is None:
            object.__setattr__(
                self, "escape_efficiency", _DEFAULT_ESCAPE[self.coupling]
            )
        if not 0.0 <= self.escape_efficiency <= 1.0:
            raise ValueError(f"ring {self.label}: escape efficiency outside [0, 1]")
        if self.sfwm_efficiency_hz_per_uw2 < 0:
            raise ValueError(f"ring {self.label}: SFWM efficiency must be >= 0")

    def resonance_thz(self, m: int) -> float:
        """Absolute frequency of the azimuthal-order-m resonance."""
        return self.reference_resonance_thz + m * self.fsr_ghz * 1e-3

    def resonance_offset_ghz(self, m: int, pump_thz: float) -> float:
        """Resonance position as a GHz offset from the pump frequency."""
        return (self.reference_resonance_thz - pump_thz) * 1e3 + m * self.fsr_ghz

    @classmethod
    def from_radius(
        cls,
        label: str,
        radius_um: float,
        reference_resonance_thz: float,
        **kwargs,
    ) -> "RingSpec":
        """Build a ring whose FSR follows the 1/R scaling of the platform."""
        return cls(
            label=label,
            radius_um=radius_um,
            fsr_ghz=FSR_RADIUS_CONSTANT_GHZ_UM / radius_um,
            reference_resonance_thz=reference_resonance_thz,
            **kwargs,
        )


def bin_spacing(ring_a: RingSpec, ring_b: RingSpec, m: int) -> float:
    """Frequency-bin separation |m| * |FSR_A - FSR_B| in GHz.

    Linear in |m| and symmetric under m -> -m; m = 0 (the pump order)
    is degenerate and returns 0.
    """
    if ring_a.fsr_ghz <= 0 or ring_b.fsr_ghz <= 0:
        raise ValueError("FSRs must be positive")
    return abs(m) * abs(ring_a.fsr_ghz - ring_b.fsr_ghz)


def transmission(
    ring: RingSpec,
    offset_ghz: np.ndarray | float,
    orders: tuple[int, ...] | None = None,
) -> np.ndarray | float:
    """Bus-waveguide power transmission past one all-pass ring.

    ``offset_ghz`` is measured from the ring's m = 0 resonance.  Each
    resonance contributes a Lorentzian dip of FWHM Gamma; the on-resonance
    extinction is (2*eta_esc - 1)**2, which vanishes at critical coupling.
    """
    off = np.asarray(offset_ghz, dtype=float)
    if orders is None:
        lo = math.floor(float(np.min(off)) / ring.fsr_ghz) - 1
        hi = math.ceil(float(np.max(off)) / ring.fsr_ghz) + 1
        orders = tuple(range(lo, hi + 1))
    half = ring.linewidth_fwhm_ghz / 2.0
    depth = 1.0 - (2.0 * ring.escape_efficiency - 1.0) ** 2
    t = np.ones_like(off)
    for m in orders:
        d = off - m * ring.fsr_ghz
        t = t * (1.0 - depth * half**2 / (d**2 + half**2))
    if np.isscalar(offset_ghz):
        return float(t)
    return t


@dataclass(frozen=True)
class DeviceConfig:
    """Full device description: rings, mode, and pump routing.

    ``mzi_split`` holds the per-ring complex pump amplitude fraction set by
    the splitter tree (powers sum to <= 1); ``pump_phase_rad`` the per-ring
    generation phase relative to ring 0 (thermo-optic shifter, taken as a
    direct parameter).  Thermal tuning of the resonance grids is expressed
    through each ring's ``reference_resonance_thz``.
    """

    rings: tuple[RingSpec, ...]
    mode: Mode
    pump_frequency_thz: float
    pump_power_uw: float = 100.0
    mzi_split: tuple[complex, ...] | None = None
    pump_phase_rad: tuple[float, ...] | None = None
    pump_linewidth_ghz: float = 2e-5
    bin_order: int | None = None
    loss_signal_db: float = 6.0
    loss_idler_db: float = 7.0
    coincidence_window_s: float = 380e-12

    def __post_init__(self) -> None:
        if isinstance(self.mode, str):
            object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "rings", tuple(self.rings))
        n = len(self.rings)
        if self.mzi_split is None:
            object.__setattr__(self, "mzi_split", (complex(1 / math.sqrt(n)),) * n)
        else:
            object.__setattr__(
                self, "mzi_split", tuple(complex(a) for a in self.mzi_split)
            )
        if self.pump_phase_rad is None:
            object.__setattr__(self, "pump_phase_rad", (0.0,) * n)
        else:
            object.__setattr__(
                self, "pump_phase_rad", tuple(float(p) for p in self.pump_phase_rad)
            )
        if len(self.mzi_split) != n or len(self.pump_phase_rad) != n:
            raise ValueError("mzi_split and pump_phase_rad must match ring count")
        if self.bin_order is None:
            object.__setattr__(self, "bin_order", 7 if self.mode is Mode.QUDIT else 5)

    @property
    def linewidth_fwhm_ghz(self) -> float:
        return max(r.linewidth_fwhm_ghz for r in self.rings)

    def split_power(self) -> float:
        return float(sum(abs(a) ** 2 for a in self.mzi_split))

    def pump_offsets_ghz(self) -> tuple[float, ...]:
        """m = 0 resonance offsets from the pump laser, per ring."""
        return tuple(
            r.resonance_offset_ghz(0, self.pump_frequency_thz) for r in self.rings
        )

    def with_pumped_rings(self, labels: str | list[str]) -> "DeviceConfig":
        """Route all pump power, split equally, into the named rings."""
        if isinstance(labels, str):
            labels = [labels]
        wanted = set(labels)
        known = {r.label for r in self.rings}
        missing = wanted - known
        if missing:
            raise ValueError(f"unknown ring label(s): {sorted(missing)}")
        amp = 1.0 / math.sqrt(len(wanted))
        split = tuple(
            complex(amp) if r.label in wanted else 0j for r in self.rings
        )
        return replace(self, mzi_split=split)

    def with_ring_phase(self, label: str, theta_rad: float) -> "DeviceConfig":
        """Set one ring's generation phase (thermo-optic shifter)."""
        phases = list(self.pump_phase_rad)
        idx = [r.label for r in self.rings].index(label)
        phases[idx] = float(theta_rad)
        return replace(self, pump_phase_rad=tuple(phases))


@dataclass(frozen=True)
class BinArm:
    """Bin layout for one photon (signal or idler).

    ``centers_ghz[k]`` is the offset of basis state |k> from the pump;
    ``ring_labels[k]`` names the ring whose resonance forms that bin.
    """

    centers_ghz: tuple[float, ...]
    ring_labels: tuple[str, ...]

    @property
    def dim(self) -> int:
        return len(self.centers_ghz)

    def index_of(self, ring_label: str) -> int:
        return self.ring_labels.index(ring_label)

    def adjacent_spacings_ghz(self) -> tuple[float, ...]:
        c = sorted(self.centers_ghz)
        return tuple(c[k + 1] - c[k] for k in range(len(c) - 1))


@dataclass(frozen=True)
class BinGrid:
    """Frequency-bin layout of a configured device."""

    order_m: int
    signal: BinArm
    idler: BinArm
    spacing_signal_ghz: float
    spacing_idler_ghz: float
    linewidth_fwhm_ghz: float
    pump_offsets_ghz: tuple[float, ...]
    mode: Mode = Mode.PHI

    @property
    def dim(self) -> int:
        return self.signal.dim

    def ring_bin_indices(self, ring_label: str) -> tuple[int, int]:
        """(signal, idler) basis indices of one ring's bin pair."""
        return self.signal.index_of(ring_label), self.idler.index_of(ring_label)


def _arm_by_pump_proximity(
    offsets: list[tuple[str, float]],
) -> BinArm:
    """Label bins by proximity to the pump: |0> is the closest bin."""
    ordered = sorted(offsets, key=lambda lo: abs(lo[1]))
    return BinArm(
        centers_ghz=tuple(o for _, o in ordered),
        ring_labels=tuple(l for l, _ in ordered),
    )


def configure(device: DeviceConfig) -> BinGrid:
    """Resolve a device configuration into its frequency-bin grid.

    PHI / PSI label bins by pump proximity (bin |0> nearer the pump);
    QUDIT labels bins by ring order.  Raises InfeasibleConfig when the
    resonance assignment violates a separation or alignment invariant.
    """
    rings = device.rings
    gamma = device.linewidth_fwhm_ghz
    m = device.bin_order
    pump = device.pump_frequency_thz
    pump_offsets = device.pump_offsets_ghz()
    if device.split_power() > 1.0 + 1e-9:
        raise InfeasibleConfig("pump splitter is passive: sum |split|^2 must be <= 1")

    sig = [(r.label, r.resonance_offset_ghz(+m, pump)) for r in rings]
    idl = [(r.label, r.resonance_offset_ghz(-m, pump)) for r in rings]

    if device.mode is Mode.PHI:
        if len(rings) != 2:
            raise InfeasibleConfig("PHI mode requires exactly 2 rings")
        span = max(pump_offsets) - min(pump_offsets)
        if span > gamma / 10:
            raise InfeasibleConfig(
                f"PHI mode: pump resonances misaligned by {span:.3f} GHz "
                f"(> Gamma/10 = {gamma / 10:.3f} GHz)"
            )
        signal, idler = _arm_by_pump_proximity(sig), _arm_by_pump_proximity(idl)
    elif device.mode is Mode.PSI:
        if len(rings) != 2:
            raise InfeasibleConfig("PSI mode requires exactly 2 rings")
        sep = abs(pump_offsets[0] - pump_offsets[1])
        if sep <= gamma:
            raise InfeasibleConfig(
                f"PSI mode: pump resonances separated by {sep:.3f} GHz (<= Gamma)"
            )
        signal, idler = _arm_by_pump_proximity(sig), _arm_by_pump_proximity(idl)
    else:
        span = max(pump_offsets) - min(pump_offsets)
        if span > gamma:
            raise InfeasibleConfig(
                f"QUDIT mode: pump resonances spread over {span:.3f} GHz (> Gamma)"
            )
        signal = BinArm(
            centers_ghz=tuple(o for _, o in sig),
            ring_labels=tuple(l for l, _ in sig),
        )
        idler = BinArm(
            centers_ghz=tuple(o for _, o in idl),
            ring_labels=tuple(l for l, _ in idl),
        )

    for arm_name, arm in (("signal", signal), ("idler", idler)):
        spacings = arm.adjacent_spacings_ghz()
        if min(spacings) <= gamma:
            raise InfeasibleConfig(
                f"{arm_name} bins not distinguishable: minimum separation "
                f"{min(spacings):.3f} GHz <= Gamma {gamma:.3f} GHz"
            )
        if device.mode is Mode.QUDIT:
            if (max(spacings) - min(spacings)) > 0.05 * np.mean(spacings):
                raise InfeasibleConfig(
                    f"{arm_name} bins not equidistant within 5%: {spacings}"
                )

    return BinGrid(
        order_m=m,
        signal=signal,
        idler=idler,
        spacing_signal_ghz=float(np.mean(signal.adjacent_spacings_ghz())),
        spacing_idler_ghz=float(np.mean(idler.adjacent_spacings_ghz())),
        linewidth_fwhm_ghz=gamma,
        pump_offsets_ghz=pump_offsets,
        mode=device.mode,
    )


def psi_pump_detuning_ghz(ring_a: RingSpec, ring_b: RingSpec, m: int) -> float:
    """Ring-B reference-resonance shift that realizes the PSI layout.

    Shifting ring B by twice the order-m spacing interleaves the grids so
    that the signal bins sit one spacing apart and the idler bins three
    spacings apart, matching the uneven-spacing configuration.
    """
    return 2.0 * m * (ring_a.fsr_ghz - ring_b.fsr_ghz)
