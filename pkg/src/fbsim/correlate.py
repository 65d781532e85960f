"""Two-photon interference: closed-form cross-correlation, an independent
numerical-integration oracle, Bell-curve scans, and visibility fitting.

Geometry convention (matches the aligned-pump qubit layout): signal bins
at offsets {0, +spacing}, idler bins at {0, -spacing}, bin |0> nearer the
pump on both arms, and the |11> pathway carrying the generation phase
theta.  Both modulators run at f_m; the inner first-order sidebands
overlap when f_m = spacing/2.

The closed form is

    G2 = 1 + (G/2)^2 / (d^2 + (G/2)^2)
           * cos(4 pi d dT + 2 phi_s - 2 phi_i - theta),

with d = f_m - spacing/2 and G the resonance FWHM.  Note the envelope
scale is the resonance *half*-width: both selected lines move as f_m
detunes, so their separation grows at twice the detuning rate.  The
numerical oracle below integrates the sideband-shifted joint spectral
amplitudes directly and confirms this, as well as the cosine argument.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import optimize

from .binops import Projector, lorentzian_overlap_weight
from .errors import DimensionMismatch, FitDiverged, ResolutionTooCoarse
from .pairgen import BinState, BiphotonLineshape, RateModel, born_probability, sample_counts

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class InterferenceParams:
    """Inputs of the two-bin interference law."""

    spacing_ghz: float
    linewidth_fwhm_ghz: float
    state_phase_rad: float = 0.0
    path_delay_s: float = 0.0
    phase_signal_rad: float = 0.0
    phase_idler_rad: float = 0.0
    f_m_ghz: float = 0.0

    def __post_init__(self) -> None:
        if self.linewidth_fwhm_ghz <= 0:
            raise ValueError("linewidth must be positive")
        if self.spacing_ghz < 0:
            raise ValueError("bin spacing must be >= 0")


def g2_closed_form(p: InterferenceParams) -> float:
    """Normalized coincidence rate of the frequency-mixed bins."""
    detuning = p.f_m_ghz - p.spacing_ghz / 2.0
    envelope = lorentzian_overlap_weight(detuning, p.linewidth_fwhm_ghz / 2.0)
    arg = (
        4.0 * math.pi * detuning * 1e9 * p.path_delay_s
        + 2.0 * p.phase_signal_rad
        - 2.0 * p.phase_idler_rad
        - p.state_phase_rad
    )
    return 1.0 + envelope * math.cos(arg)


def _reduced_profiles(p: InterferenceParams, gammas_rad_ns: tuple[float, float], x: np.ndarray):
    """Joint amplitudes of the two pathways along the energy-pinned line.

    x is the signal angular offset (rad/ns) with the idler pinned at -x;
    each pathway's product of complex Lorentzians collapses to a real
    profile centered on its selected line.
    """
    s = TWO_PI * p.spacing_ghz
    w_m = TWO_PI * p.f_m_ghz
    g0, g1 = gammas_rad_ns
    f0 = -1.0 / ((x - w_m) ** 2 + g0**2 / 4.0)
    f1 = -1.0 / ((x - (s - w_m)) ** 2 + g1**2 / 4.0)
    return f0, f1


def _cross_phase_rad(p: InterferenceParams) -> float:
    # Pathway |00> uses the +1 signal / -1 idler sidebands, pathway |11>
    # (carrying e^{i theta}) the opposite pair; the idler delay factor
    # e^{i (w2 - center) dT} contributes (s - 2 w_m) dT to the cross term.
    s = TWO_PI * p.spacing_ghz
    w_m = TWO_PI * p.f_m_ghz
    dt_ns = p.path_delay_s * 1e9
    return (
        p.state_phase_rad
        - 2.0 * p.phase_signal_rad
        + 2.0 * p.phase_idler_rad
        + (s - 2.0 * w_m) * dt_ns
    )


def g2_numerical_oracle(
    p: InterferenceParams,
    lineshapes: tuple[BiphotonLineshape, BiphotonLineshape] | None = None,
    n_points: int = 8001,
    window_gammas: float = 40.0,
    error_tol: float = 1e-4,
) -> float:
    """Numerically integrated counterpart of ``g2_closed_form``.

    Integrates |path0 + path1|^2 over the detected frequency plane after
    reducing the pump-pinned sum coordinate (the narrow-pump sinc^2 acts
    as a delta function there), normalized so the incoherent term is 1.
    Richardson step-halving estimates the quadrature error and raises
    ResolutionTooCoarse above ``error_tol``.
    """
    if window_gammas < 20.0:
        raise ValueError("integration window must span at least 20 linewidths")
    if lineshapes is not None:
        gammas = tuple(ls.gamma_rad_s * 1e-9 for ls in lineshapes)
    else:
        g = TWO_PI * p.linewidth_fwhm_ghz
        gammas = (g, g)
    gmax = max(gammas)
    s = TWO_PI * p.spacing_ghz
    w_m = TWO_PI * p.f_m_ghz
    lo = min(w_m, s - w_m) - window_gammas * gmax
    hi = max(w_m, s - w_m) + window_gammas * gmax

    def evaluate(n: int) -> float:
        x = np.linspace(lo, hi, n)
        f0, f1 = _reduced_profiles(p, gammas, x)
        n0 = np.trapezoid(f0 * f0, x)
        n1 = np.trapezoid(f1 * f1, x)
        cross = np.trapezoid(f0 * f1, x)
        return float(
            (n0 + n1 + 2.0 * math.cos(_cross_phase_rad(p)) * cross) / (n0 + n1)
        )

    coarse = evaluate(n_points)
    fine = evaluate(2 * n_points - 1)
    err = abs(fine - coarse) / 3.0
    if err > error_tol * max(1.0, abs(fine)):
        raise ResolutionTooCoarse(
            f"quadrature error estimate {err:.2e} exceeds {error_tol:.0e}"
        )
    return (4.0 * fine - coarse) / 3.0


def g2_numerical_2d(
    p: InterferenceParams,
    lineshapes: tuple[BiphotonLineshape, BiphotonLineshape],
    n_sum: int = 6001,
    n_diff: int = 3001,
    sum_window_pump_widths: float = 1200.0,
    diff_window_gammas: float = 25.0,
) -> float:
    """Slow cross-check: full 2-D integral with the exact sinc pump factor.

    Keeps every frequency-dependent phase factor verbatim (the idler delay
    phases enter per pathway and their plane-dependence must cancel in the
    cross term); used to validate the reduced oracle, not for production.
    """
    g0 = lineshapes[0].gamma_rad_s * 1e-9
    g1 = lineshapes[1].gamma_rad_s * 1e-9
    dw = lineshapes[0].pump_width_rad_s * 1e-9
    gmax = max(g0, g1)
    s = TWO_PI * p.spacing_ghz
    w_m = TWO_PI * p.f_m_ghz
    dt_ns = p.path_delay_s * 1e9

    # Selected-line centers: pathway 0 at (w_m, -w_m), pathway 1 at
    # (s - w_m, -(s - w_m)).  Rotated coordinates u = w1 + w2 (pump-pinned),
    # v = signal offset from the mid-separation point.
    c0, c1 = w_m, s - w_m
    mid = 0.5 * (c0 + c1)
    U = sum_window_pump_widths * dw
    W = diff_window_gammas * gmax + abs(c1 - c0) / 2.0
    u = np.linspace(-U, U, n_sum)
    v = np.linspace(-W, W, n_diff)

    mod0 = np.exp(1j * (p.phase_signal_rad - p.phase_idler_rad))
    mod1 = np.exp(1j * (p.state_phase_rad - p.phase_signal_rad + p.phase_idler_rad))

    total = 0.0
    incoh = 0.0
    chunk = max(1, int(2e6 // n_diff))
    for start in range(0, n_sum, chunk):
        uu = u[start : start + chunk, None]
        w1 = mid + uu / 2.0 + v[None, :]
        w2 = -mid + uu / 2.0 - v[None, :]
        sinc = np.sinc((w1 + w2) / dw / math.pi)
        path0 = (
            mod0
            * sinc
            / ((w1 - c0) - 1j * g0 / 2.0)
            / ((w2 + c0) - 1j * g0 / 2.0)
            * np.exp(1j * (w2 + c0) * dt_ns)
        )
        path1 = (
            mod1
            * sinc
            / ((w1 - c1) - 1j * g1 / 2.0)
            / ((w2 + c1) - 1j * g1 / 2.0)
            * np.exp(1j * (w2 + c1) * dt_ns)
        )
        wts = np.ones(len(uu))
        if start == 0:
            wts[0] = 0.5
        if start + chunk >= n_sum:
            wts[-1] = 0.5
        wv = np.ones(n_diff)
        wv[0] = wv[-1] = 0.5
        weight = wts[:, None] * wv[None, :]
        total += float(np.sum(weight * np.abs(path0 + path1) ** 2))
        incoh += float(np.sum(weight * (np.abs(path0) ** 2 + np.abs(path1) ** 2)))
    return total / incoh


@dataclass
class FringeScan:
    """Sampled interference curve: (x, rate-or-G2, sigma) triples."""

    axis: str
    x: np.ndarray
    y: np.ndarray
    sigma: np.ndarray

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        if not (len(self.x) == len(self.y) == len(self.sigma)):
            raise ValueError("scan arrays must share a length")
        if np.any(np.diff(self.x) <= 0):
            raise ValueError("scan x values must be strictly increasing")
        if np.any(self.sigma < 0):
            raise ValueError("uncertainties must be >= 0")


def write_scan(path: str | Path, scan: FringeScan, header_comments: list[str] | None = None) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_comments or []:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["x_value", "rate_hz_or_g2", "sigma"])
        for xv, yv, sv in zip(scan.x, scan.y, scan.sigma):
            writer.writerow([repr(float(xv)), repr(float(yv)), repr(float(sv))])


def read_scan(path: str | Path, axis: str = "") -> FringeScan:
    xs, ys, ss = [], [], []
    with open(path, newline="") as fh:
        rows = [ln for ln in fh if not ln.startswith("#")]
    for row in csv.DictReader(rows):
        xs.append(float(row["x_value"]))
        ys.append(float(row["rate_hz_or_g2"]))
        ss.append(float(row["sigma"]))
    return FringeScan(axis=axis, x=np.array(xs), y=np.array(ys), sigma=np.array(ss))


def bell_scan(
    state: BinState,
    alphas_rad,
    rates: RateModel | None = None,
    acquisition_s: float = 15.0,
    seed: int = 0,
    subtract_floor: bool = True,
    idler_alpha_rad: float = 0.0,
) -> FringeScan:
    """Coincidence rate versus analyzer phase for a two-qubit state.

    Each point projects both arms onto (|0> + e^{i alpha}|1>)/sqrt(2)
    (signal phase scanned, idler fixed), the product-POVM realization of
    the Bell-curve measurement.  Without a rate model the exact Born
    probability is returned; with one, Poisson counts are sampled and the
    known accidental floor subtracted (kept if ``subtract_floor=False``).
    """
    if state.dim_signal != 2 or state.dim_idler != 2:
        raise DimensionMismatch("bell_scan needs a two-qubit state")
    alphas = np.asarray(alphas_rad, dtype=float)
    proj_i = Projector.superposition(0, 1, idler_alpha_rad)
    ys, sigmas = [], []
    for k, alpha in enumerate(alphas):
        proj_s = Projector.superposition(0, 1, float(alpha))
        if rates is None:
            ys.append(born_probability(state, (proj_s, proj_i)))
            sigmas.append(0.0)
        else:
            rec = sample_counts(state, (proj_s, proj_i), rates, acquisition_s, seed, k)
            counts = rec.coincidences - (rec.accidentals if subtract_floor else 0.0)
            ys.append(counts / acquisition_s)
            sigmas.append(math.sqrt(max(rec.coincidences, 1)) / acquisition_s)
    return FringeScan(axis="analyzer_phase", x=alphas, y=np.array(ys), sigma=np.array(sigmas))


@dataclass(frozen=True)
class VisibilityFit:
    """Least-squares fringe fit A (1 + V cos(x - x0))."""

    visibility: float
    phase_rad: float
    amplitude: float
    visibility_sigma: float
    phase_sigma: float
    chi2_dof: float
    delay_s: float | None = None
    delay_sigma: float | None = None


def fit_visibility(
    scan: FringeScan,
    model: str = "bell_cosine",
    params: InterferenceParams | None = None,
    chi2_dof_bound: float = 10.0,
) -> VisibilityFit:
    """Weighted least-squares visibility of a fringe scan.

    ``bell_cosine`` fits A (1 + V cos(x - x0)) via its linear form;
    ``detuning_envelope`` fits the closed-form interference law with free
    amplitude, visibility, path delay, and phase offset (needs ``params``
    for the spacing and linewidth).  Raises FitDiverged when chi^2/dof
    exceeds ``chi2_dof_bound`` (only evaluated for noisy scans).
    """
    x, y, sig = scan.x, scan.y, scan.sigma
    if len(x) < 8:
        raise ValueError("need at least 8 samples")
    has_sigma = bool(np.all(sig > 0))
    w = 1.0 / sig**2 if has_sigma else np.ones_like(y)

    if model == "bell_cosine":
        if x[-1] - x[0] < TWO_PI * 0.999:
            raise ValueError("scan must span at least one period")
        X = np.column_stack([np.ones_like(x), np.cos(x), np.sin(x)])
        XtW = X.T * w
        cov = np.linalg.inv(XtW @ X)
        beta = cov @ (XtW @ y)
        a0, a, b = beta
        r = math.hypot(a, b)
        vis = r / a0
        phase = math.atan2(b, a)
        grad_v = np.array([-r / a0**2, a / (r * a0), b / (r * a0)]) if r > 0 else np.array([0.0, 1 / a0, 1 / a0])
        grad_p = np.array([0.0, -b / r**2, a / r**2]) if r > 0 else np.zeros(3)
        resid = y - X @ beta
        chi2 = float(np.sum(w * resid**2))
        dof = max(len(x) - 3, 1)
        if has_sigma:
            v_sig = float(math.sqrt(max(grad_v @ cov @ grad_v, 0.0)))
            p_sig = float(math.sqrt(max(grad_p @ cov @ grad_p, 0.0)))
            if chi2 / dof > chi2_dof_bound:
                raise FitDiverged(f"chi2/dof = {chi2 / dof:.2f} > {chi2_dof_bound}")
        else:
            v_sig = p_sig = 0.0
        return VisibilityFit(
            visibility=float(vis),
            phase_rad=float(phase),
            amplitude=float(a0),
            visibility_sigma=v_sig,
            phase_sigma=p_sig,
            chi2_dof=chi2 / dof if has_sigma else 0.0,
        )

    if model == "detuning_envelope":
        if params is None:
            raise ValueError("detuning_envelope model needs InterferenceParams")
        half = params.linewidth_fwhm_ghz / 2.0
        delta0 = params.spacing_ghz / 2.0

        def model_fn(fm, amp, vis, delay_ns, x0):
            d = fm - delta0
            env = half**2 / (d**2 + half**2)
            return amp * (1.0 + vis * env * np.cos(4.0 * math.pi * d * delay_ns + x0))

        p0 = (
            float(np.mean(y)),
            1.0,
            params.path_delay_s * 1e9 if params.path_delay_s else 1.0,
            0.0,
        )
        sigma_arg = sig if has_sigma else None
        with warnings.catch_warnings():
            if not has_sigma:
                # A perfect noiseless fit has no estimable covariance.
                warnings.simplefilter("ignore", optimize.OptimizeWarning)
            popt, pcov = optimize.curve_fit(
                model_fn, x, y, p0=p0, sigma=sigma_arg, absolute_sigma=has_sigma,
                maxfev=20000,
            )
        resid = y - model_fn(x, *popt)
        chi2 = float(np.sum(w * resid**2))
        dof = max(len(x) - 4, 1)
        if has_sigma and chi2 / dof > chi2_dof_bound:
            raise FitDiverged(f"chi2/dof = {chi2 / dof:.2f} > {chi2_dof_bound}")
        perr = np.sqrt(np.clip(np.diag(pcov), 0.0, None))
        perr = np.where(np.isfinite(perr), perr, 0.0)
        return VisibilityFit(
            visibility=float(popt[1]),
            phase_rad=float(popt[3]),
            amplitude=float(popt[0]),
            visibility_sigma=float(perr[1]),
            phase_sigma=float(perr[3]),
            chi2_dof=chi2 / dof if has_sigma else 0.0,
            delay_s=float(popt[2]) * 1e-9,
            delay_sigma=float(perr[2]) * 1e-9,
        )

    raise ValueError(f"unknown fit model {model!r}")


def entanglement_witness(visibility: float) -> bool:
    """True iff the fringe visibility strictly exceeds 1/sqrt(2)."""
    if not 0.0 <= visibility <= 1.0 + 1e-9:
        raise ValueError("visibility must lie in [0, 1]")
    return visibility > 1.0 / math.sqrt(2.0)
