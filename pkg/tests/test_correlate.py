import math
from dataclasses import replace

import numpy as np
import pytest

from fbsim.correlate import (
    FringeScan,
    InterferenceParams,
    bell_scan,
    entanglement_witness,
    fit_visibility,
    g2_closed_form,
    g2_numerical_2d,
    g2_numerical_oracle,
    read_scan,
    write_scan,
)
from fbsim.errors import DimensionMismatch, FitDiverged, ResolutionTooCoarse
from fbsim.pairgen import BinState, BiphotonLineshape, RateModel

REF = InterferenceParams(spacing_ghz=19.0, linewidth_fwhm_ghz=1.2933)


def at(fm, theta=0.0, delay=0.0, phi_s=0.0, phi_i=0.0):
    return replace(
        REF,
        f_m_ghz=fm,
        state_phase_rad=theta,
        path_delay_s=delay,
        phase_signal_rad=phi_s,
        phase_idler_rad=phi_i,
    )


class TestClosedForm:
    def test_maximum_two_at_half_spacing(self):
        assert g2_closed_form(at(9.5)) == pytest.approx(2.0, abs=1e-12)
        # 2 phi_s - 2 phi_i = theta keeps the maximum.
        assert g2_closed_form(at(9.5, theta=0.5, phi_s=0.25)) == pytest.approx(2.0, abs=1e-12)

    def test_far_detuning_flattens_to_one(self):
        assert g2_closed_form(at(9.5 + 1e5)) == pytest.approx(1.0, abs=1e-8)
        assert g2_closed_form(at(9.5 - 1e5, theta=1.0)) == pytest.approx(1.0, abs=1e-8)

    def test_destructive_zero(self):
        assert g2_closed_form(at(9.5, theta=math.pi)) == pytest.approx(0.0, abs=1e-12)

    def test_fringe_period_matches_delay(self):
        # cos factor repeats every 1/(2 dT) in f_m; extract it from the
        # envelope-normalized curve.
        delay = 8.5e-9
        period_ghz = 1.0 / (2.0 * delay * 1e9)
        assert period_ghz * 1e3 == pytest.approx(58.8235, abs=0.001)
        hw = REF.linewidth_fwhm_ghz / 2.0
        for fm in (9.5, 9.52, 9.61):
            for k in (1, 2, 5):
                a, b = at(fm, delay=delay), at(fm + k * period_ghz, delay=delay)
                cos_a = (g2_closed_form(a) - 1.0) / (hw**2 / ((a.f_m_ghz - 9.5) ** 2 + hw**2))
                cos_b = (g2_closed_form(b) - 1.0) / (hw**2 / ((b.f_m_ghz - 9.5) ** 2 + hw**2))
                assert cos_a == pytest.approx(cos_b, abs=1e-9)

    def test_common_phase_shift_invariance(self):
        for shift in (0.3, 1.7):
            a = g2_closed_form(at(9.7, theta=0.4, delay=8.5e-9, phi_s=0.2, phi_i=0.9))
            b = g2_closed_form(
                at(9.7, theta=0.4, delay=8.5e-9, phi_s=0.2 + shift, phi_i=0.9 + shift)
            )
            assert a == pytest.approx(b, abs=1e-12)

    def test_envelope_half_weight_at_half_linewidth(self):
        # Both sidebands move as f_m detunes, so the coherent envelope
        # reaches 1/2 at detuning Gamma/2 (resonance half width).
        g = REF.linewidth_fwhm_ghz
        assert g2_closed_form(at(9.5 + g / 2)) == pytest.approx(1.5, abs=1e-12)


class TestNumericalOracle:
    def test_perfect_overlap_constructive(self):
        assert g2_numerical_oracle(at(9.5)) == pytest.approx(2.0, abs=1e-3)

    def test_perfect_overlap_destructive(self):
        assert g2_numerical_oracle(at(9.5, theta=math.pi)) == pytest.approx(0.0, abs=1e-3)

    @pytest.mark.parametrize("theta", [0.0, math.pi / 2, math.pi])
    @pytest.mark.parametrize("delay", [0.0, 8.5e-9])
    def test_matches_closed_form_over_scan(self, theta, delay):
        g = REF.linewidth_fwhm_ghz
        for fm in np.linspace(9.5 - 5 * g, 9.5 + 5 * g, 21):
            p = at(float(fm), theta=theta, delay=delay)
            diff = abs(g2_numerical_oracle(p) - g2_closed_form(p))
            assert diff <= 1e-3 * max(1.0, abs(g2_closed_form(p)))

    def test_modulator_phases_enter_as_twice_difference(self):
        p = at(9.6, theta=0.3, delay=8.5e-9, phi_s=0.45, phi_i=0.1)
        assert g2_numerical_oracle(p) == pytest.approx(g2_closed_form(p), abs=1e-4)

    def test_resolution_guard(self):
        # At perfect overlap all three integrals coincide and the ratio is
        # grid-exact, so probe a detuned point.
        with pytest.raises(ResolutionTooCoarse):
            g2_numerical_oracle(at(9.8), n_points=61)

    def test_accepts_explicit_lineshapes(self):
        gam = 2 * math.pi * REF.linewidth_fwhm_ghz * 1e9
        ls = BiphotonLineshape(gamma_rad_s=gam, pump_width_rad_s=gam / 50)
        p = at(9.8, theta=0.7, delay=8.5e-9)
        assert g2_numerical_oracle(p, lineshapes=(ls, ls)) == pytest.approx(
            g2_closed_form(p), abs=1e-3
        )


class TestExactSincCrossCheck:
    # Full 2-D integral with the exact pump sinc and all plane-dependent
    # phase factors kept verbatim; slow, so only spot points.
    @pytest.mark.parametrize(
        "fm,theta,delay",
        [(9.5, 0.0, 0.0), (9.8, math.pi / 2, 8.5e-9), (10.8, math.pi, 8.5e-9)],
    )
    def test_spot_points(self, fm, theta, delay):
        gam = 2 * math.pi * REF.linewidth_fwhm_ghz * 1e9
        ls = BiphotonLineshape(gamma_rad_s=gam, pump_width_rad_s=gam / 50)
        p = at(fm, theta=theta, delay=delay)
        got = g2_numerical_2d(p, (ls, ls))
        assert got == pytest.approx(g2_closed_form(p), abs=5e-3)


class TestBellScan:
    def test_pure_state_extremes(self):
        state = BinState.bell("phi+")
        scan = bell_scan(state, np.linspace(0, 2 * math.pi, 9))
        assert scan.y[0] == pytest.approx(0.5, abs=1e-12)  # alpha = 0: maximum
        assert scan.y[4] == pytest.approx(0.0, abs=1e-12)  # alpha = pi: dark

    def test_maximally_mixed_is_flat(self):
        state = BinState.maximally_mixed()
        scan = bell_scan(state, np.linspace(0, 2 * math.pi, 16))
        assert np.ptp(scan.y) == pytest.approx(0.0, abs=1e-12)
        fit = fit_visibility(scan)
        assert fit.visibility == pytest.approx(0.0, abs=1e-9)

    @pytest.mark.parametrize("weight", [0.25, 0.5, 0.8, 0.97, 1.0])
    def test_werner_visibility_equals_weight(self, weight):
        state = BinState.werner("phi-", weight)
        scan = bell_scan(state, np.linspace(0, 2 * math.pi, 25))
        fit = fit_visibility(scan)
        assert fit.visibility == pytest.approx(weight, abs=1e-9)

    def test_psi_states_scan_identically(self):
        scan = bell_scan(BinState.bell("psi+"), np.linspace(0, 2 * math.pi, 25))
        fit = fit_visibility(scan)
        assert fit.visibility == pytest.approx(1.0, abs=1e-9)

    def test_needs_two_qubits(self):
        state = BinState.maximally_mixed(4, 4)
        with pytest.raises(DimensionMismatch):
            bell_scan(state, np.linspace(0, 2 * math.pi, 9))

    def test_poisson_scan_visibility_floor(self):
        # 20-seed slice of the acceptance Monte Carlo.
        state = BinState.bell("phi-")
        eff = 10 ** -0.6 * 10 ** -0.7
        rates = RateModel(
            pair_rate_hz=2 * 2000.0 / eff,
            extra_accidental_hz=2000.0 / 50.0,
        )
        alphas = np.linspace(0, 2 * math.pi, 12)
        good = 0
        for seed in range(20):
            scan = bell_scan(state, alphas, rates=rates, acquisition_s=15.0, seed=seed)
            if fit_visibility(scan).visibility >= 0.96:
                good += 1
        assert good >= 19


class TestFitVisibility:
    def test_noiseless_unit_visibility(self):
        scan = bell_scan(BinState.bell("phi+"), np.linspace(0, 2 * math.pi, 12))
        fit = fit_visibility(scan)
        assert fit.visibility == pytest.approx(1.0, abs=1e-6)
        assert math.cos(fit.phase_rad) == pytest.approx(1.0, abs=1e-9)

    def test_recovers_phase_offset(self):
        scan = bell_scan(BinState.bell("phi-"), np.linspace(0, 2 * math.pi, 16))
        fit = fit_visibility(scan)
        assert math.cos(fit.phase_rad - math.pi) == pytest.approx(1.0, abs=1e-9)

    def test_needs_enough_samples(self):
        with pytest.raises(ValueError, match="8 samples"):
            fit_visibility(
                FringeScan("a", np.linspace(0, 7, 5), np.ones(5), np.zeros(5))
            )

    def test_needs_full_period(self):
        x = np.linspace(0, math.pi, 12)
        with pytest.raises(ValueError, match="period"):
            fit_visibility(FringeScan("a", x, np.ones(12), np.zeros(12)))

    def test_diverged_fit_raises(self):
        x = np.linspace(0, 2 * math.pi, 24)
        y = 1.0 + np.abs(np.sin(3.3 * x))
        sig = np.full_like(x, 1e-3)
        with pytest.raises(FitDiverged):
            fit_visibility(FringeScan("a", x, y, sig))

    def test_self_consistency_three_sigma(self):
        # Injected fringe recovered within 3 sigma in >= 99% of seeds.
        x = np.linspace(0, 2 * math.pi, 16)
        truth = 800.0 * (1.0 + 0.9 * np.cos(x - 0.7))
        hits = 0
        n_seeds = 100
        for seed in range(n_seeds):
            rng = np.random.default_rng(seed)
            counts = rng.poisson(truth)
            sig = np.sqrt(np.maximum(counts, 1))
            fit = fit_visibility(FringeScan("a", x, counts.astype(float), sig))
            if abs(fit.visibility - 0.9) <= 3 * fit.visibility_sigma:
                hits += 1
        assert hits >= 99

    def test_envelope_model_recovers_injected_visibility(self):
        # Reference-parameter synthetic scan, injected V = 0.987; the
        # recovered value must sit within the fit's own 1 sigma.
        params = InterferenceParams(
            spacing_ghz=19.0, linewidth_fwhm_ghz=1.3, path_delay_s=8.5e-9
        )
        fms = np.linspace(9.35, 9.65, 161)
        v_true = 0.987
        base = 15000.0
        rng = np.random.default_rng(0)
        lam = np.array(
            [
                base * (1.0 + v_true * (g2_closed_form(replace(params, f_m_ghz=float(f))) - 1.0))
                for f in fms
            ]
        )
        counts = rng.poisson(lam)
        scan = FringeScan(
            "f_m_ghz", fms, counts / base, np.sqrt(np.maximum(counts, 1)) / base
        )
        fit = fit_visibility(scan, model="detuning_envelope", params=params)
        assert abs(fit.visibility - v_true) <= fit.visibility_sigma
        assert fit.delay_s == pytest.approx(8.5e-9, rel=2e-3)


class TestWitness:
    def test_high_visibility_passes(self):
        assert entanglement_witness(0.997) is True

    def test_below_threshold(self):
        assert entanglement_witness(0.70) is False

    def test_boundary_is_strict(self):
        assert entanglement_witness(1.0 / math.sqrt(2.0)) is False

    def test_domain_checked(self):
        with pytest.raises(ValueError):
            entanglement_witness(1.2)


class TestFringeScanType:
    def test_monotone_axis_required(self):
        with pytest.raises(ValueError, match="increasing"):
            FringeScan("a", np.array([0.0, 0.0, 1.0]), np.zeros(3), np.zeros(3))

    def test_nonnegative_sigma(self):
        with pytest.raises(ValueError, match=">= 0"):
            FringeScan("a", np.arange(3.0), np.zeros(3), np.array([0.0, -1.0, 0.0]))

    def test_csv_roundtrip(self, tmp_path):
        scan = FringeScan("f_m_ghz", np.array([1.0, 2.0]), np.array([0.5, 1.5]),
                          np.array([0.01, 0.02]))
        path = tmp_path / "scan.csv"
        write_scan(path, scan, header_comments=["seed=1"])
        back = read_scan(path, axis="f_m_ghz")
        assert np.array_equal(back.x, scan.x)
        assert np.array_equal(back.y, scan.y)
        assert np.array_equal(back.sigma, scan.sigma)
