import math
from dataclasses import replace

import numpy as np
import pytest

from fbsim.binops import EomKind
from fbsim.errors import DimensionMismatch
from fbsim.pairgen import (
    BinState,
    CountRecord,
    RateModel,
    born_probability,
    read_records,
    write_records,
)
from fbsim.tomo import (
    ARM_KINDS,
    DensityMatrixEstimate,
    concurrence,
    entanglement_of_formation,
    estimate_metrics,
    fidelity,
    forward_simulate,
    mle_reconstruct,
    purity,
    read_density_matrix,
    rho_from_t,
    standard_settings,
    write_density_matrix,
)

BELLS = ["phi+", "phi-", "psi+", "psi-"]
BASES = ["00", "01", "10", "11"]

# Detected-rate model reproducing the working statistics: ~2 kHz peak
# coincidences through 6/7 dB losses with a CAR ~ 50 accidental floor.
NOISY_RATES = RateModel(
    pair_rate_hz=2 * 2000.0 / (10 ** -0.6 * 10 ** -0.7),
    loss_signal_db=6.0,
    loss_idler_db=7.0,
    extra_accidental_hz=2000.0 / 50.0,
)


def exact_records(state, settings, scale=2.0e6):
    """Noiseless records: expected counts under the Born rule."""
    recs = []
    for s in settings:
        p = born_probability(state, (s.projector_signal, s.projector_idler))
        recs.append(
            CountRecord(
                singles_signal=int(scale),
                singles_idler=int(scale),
                coincidences=int(round(scale * p)),
                accidentals=0.0,
                window_s=380e-12,
                acquisition_s=settings.acquisition_s,
                setting_id=s.setting_id,
                label_signal=s.label_signal,
                label_idler=s.label_idler,
            )
        )
    return recs


class TestStandardSettings:
    def test_sixteen_informationally_complete(self):
        settings = standard_settings(19.0, 19.0)
        assert len(settings) == 16
        assert settings.gram_rank() == 16

    def test_phi_layout_runs_both_arms_at_9p5(self):
        settings = standard_settings(19.0, 19.0)
        assert {r.f_m_ghz for r in settings.recipes()} == {9.5}

    def test_psi_layout_uses_half_spacing_per_arm(self):
        settings = standard_settings(19.0, 57.0)
        f_signal = {r.f_m_ghz for r in settings.recipes() if r.arm == "signal"}
        f_idler = {r.f_m_ghz for r in settings.recipes() if r.arm == "idler"}
        assert f_signal == {9.5}
        assert f_idler == {28.5}

    def test_projectors_match_targets(self):
        settings = standard_settings(19.0, 57.0)
        targets = {
            "0": np.array([1.0, 0.0]),
            "1": np.array([0.0, 1.0]),
            "+": np.array([1.0, 1.0]) / math.sqrt(2),
            "+i": np.array([1.0, 1j]) / math.sqrt(2),
        }
        for s in settings:
            for proj, label in (
                (s.projector_signal, s.label_signal),
                (s.projector_idler, s.label_idler),
            ):
                overlap = abs(np.vdot(targets[label], proj.vector))
                assert overlap == pytest.approx(1.0, abs=1e-12)

    def test_kinds_cover_grid(self):
        settings = standard_settings(19.0, 19.0)
        labels = {(s.label_signal, s.label_idler) for s in settings}
        assert labels == {(a, b) for a in ARM_KINDS for b in ARM_KINDS}

    def test_phase_kind_also_complete(self):
        settings = standard_settings(19.0, 19.0, eom_kind=EomKind.PHASE, modulation_index=1.4347)
        assert settings.gram_rank() == 16


class TestMetrics:
    def test_fidelity_pure_and_mixed(self):
        phi = BinState.bell("phi+")
        assert fidelity(phi.density(), phi) == pytest.approx(1.0)
        assert fidelity(np.eye(4) / 4, phi) == pytest.approx(0.25)

    def test_fidelity_werner_095(self):
        w = BinState.werner("phi+", 0.95)
        assert fidelity(w.rho, BinState.bell("phi+")) == pytest.approx(0.9625, abs=1e-12)

    def test_fidelity_dimension_guard(self):
        with pytest.raises(DimensionMismatch):
            fidelity(np.eye(4) / 4, np.ones(3) / math.sqrt(3))

    def test_purity(self):
        assert purity(BinState.bell("psi-").density()) == pytest.approx(1.0)
        assert purity(np.eye(4) / 4) == pytest.approx(0.25)
        # Direct evaluation: p^2 + p(1-p)/2 + (1-p)^2/4 at p = 0.9.
        w = BinState.werner("phi+", 0.9)
        assert purity(w.rho) == pytest.approx(0.8575, abs=1e-12)

    def test_concurrence_closed_form_werner(self):
        # Eigen-oracle against C = max(0, (3p-1)/2).
        for p in (0.0, 0.2, 1.0 / 3.0, 0.5, 0.8, 1.0):
            w = BinState.werner("phi+", p)
            assert concurrence(w.rho) == pytest.approx(
                max(0.0, (3 * p - 1) / 2), abs=1e-9
            )

    def test_ef_extremes(self):
        assert entanglement_of_formation(BinState.bell("phi+").density()) == pytest.approx(
            1.0, abs=1e-9
        )
        assert entanglement_of_formation(BinState.basis(0, 0).density()) == 0.0

    def test_ef_werner_08(self):
        # Frozen from the eigen-decomposition oracle: C = 0.7 gives
        # h((1 + sqrt(0.51))/2).
        w = BinState.werner("phi+", 0.8)
        assert entanglement_of_formation(w.rho) == pytest.approx(
            0.5918574071706767, abs=1e-11
        )

    def test_ef_bounds_and_separable_mixtures(self, rng):
        for _ in range(50):
            # Random convex mixture of product states is separable: EF = 0.
            rho = np.zeros((4, 4), dtype=complex)
            weights = rng.dirichlet(np.ones(4))
            for w in weights:
                a = rng.normal(size=2) + 1j * rng.normal(size=2)
                b = rng.normal(size=2) + 1j * rng.normal(size=2)
                v = np.kron(a / np.linalg.norm(a), b / np.linalg.norm(b))
                rho += w * np.outer(v, v.conj())
            ef = entanglement_of_formation(rho)
            assert 0.0 <= ef < 1e-7

    def test_ef_range_on_random_states(self, rng):
        for _ in range(25):
            x = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
            rho = x @ x.conj().T
            rho /= np.trace(rho).real
            assert 0.0 <= entanglement_of_formation(rho) <= 1.0


class TestMleReconstruct:
    def test_noiseless_closed_loop_all_states(self):
        settings = standard_settings(19.0, 19.0)
        for name in BELLS + BASES:
            target = BinState.bell(name) if name in BELLS else BinState.basis(
                int(name[0]), int(name[1])
            )
            est = mle_reconstruct(exact_records(target, settings), settings)
            assert fidelity(est.rho, target) >= 0.999, name

    def test_equal_counts_give_maximally_mixed(self):
        settings = standard_settings(19.0, 19.0)
        recs = [
            CountRecord(
                singles_signal=4000, singles_idler=4000, coincidences=1000,
                accidentals=0.0, window_s=380e-12, acquisition_s=15.0,
                setting_id=s.setting_id, label_signal=s.label_signal,
                label_idler=s.label_idler,
            )
            for s in settings
        ]
        est = mle_reconstruct(recs, settings)
        assert purity(est.rho) <= 0.26
        assert fidelity(est.rho, BinState.bell("phi+")) == pytest.approx(0.25, abs=0.02)

    def test_estimate_always_physical(self, rng):
        # Adversarial count vectors must still produce a PSD, unit-trace,
        # Hermitian estimate (enforced by the estimate's own validation).
        settings = standard_settings(19.0, 19.0)
        for trial in range(8):
            counts = rng.integers(0, 5000, size=16)
            if trial == 0:
                counts = np.zeros(16, dtype=int)
                counts[5] = 1
            recs = [
                CountRecord(
                    singles_signal=int(max(counts[k], 1)), singles_idler=int(max(counts[k], 1)),
                    coincidences=int(counts[k]), accidentals=0.0, window_s=380e-12,
                    acquisition_s=15.0, setting_id=s.setting_id,
                    label_signal=s.label_signal, label_idler=s.label_idler,
                )
                for k, s in enumerate(settings)
            ]
            est = mle_reconstruct(recs, settings)
            evals = np.linalg.eigvalsh(est.rho)
            assert evals.min() >= -1e-9
            assert np.trace(est.rho).real == pytest.approx(1.0, abs=1e-9)
            assert np.allclose(est.rho, est.rho.conj().T, atol=1e-9)

    def test_gradient_matches_finite_differences(self):
        # The optimizer's analytic gradient against central differences of
        # the same Poisson objective, at a generic interior point.
        import fbsim.tomo as tomo_mod

        settings = standard_settings(19.0, 19.0)
        target = BinState.werner("phi-", 0.9)
        recs = forward_simulate(target, settings, NOISY_RATES, seed=4)
        by_id = {r.setting_id: r for r in recs}
        vecs = np.array([s.joint_vector() for s in settings])
        n = np.array([float(by_id[s.setting_id].coincidences) for s in settings])
        acc = np.array([float(by_id[s.setting_id].accidentals) for s in settings])
        scale = float(np.sum(n))
        rate = 3000.0

        def nll(t):
            T = tomo_mod._t_matrix(t)
            s_tr = float(np.sum(np.abs(T) ** 2))
            Tv = T @ vecs.T
            p = np.sum(np.abs(Tv) ** 2, axis=0) / s_tr
            lam = np.clip(rate * 15.0 * p + acc, 1e-12, None)
            return float(np.sum(lam - n * np.log(lam))) / scale

        t0 = np.linspace(0.2, 0.9, 16)
        T = tomo_mod._t_matrix(t0)
        s_tr = float(np.sum(np.abs(T) ** 2))
        Tv = T @ vecs.T
        p = np.sum(np.abs(Tv) ** 2, axis=0) / s_tr
        lam = np.clip(rate * 15.0 * p + acc, 1e-12, None)
        c = rate * 15.0 * (1.0 - n / lam) / scale
        W = (Tv * c) @ vecs.conj() / s_tr - (np.dot(c, p) / s_tr) * T
        g = np.zeros(16)
        for k, (r_, c_) in enumerate(tomo_mod._DIAG):
            g[k] = 2.0 * W[r_, c_].real
        for k, (r_, c_) in enumerate(tomo_mod._LOWER):
            g[4 + 2 * k] = 2.0 * W[r_, c_].real
            g[5 + 2 * k] = 2.0 * W[r_, c_].imag
        num = np.zeros(16)
        h = 1e-6
        for k in range(16):
            up, dn = t0.copy(), t0.copy()
            up[k] += h
            dn[k] -= h
            num[k] = (nll(up) - nll(dn)) / (2 * h)
        assert np.allclose(g, num, rtol=1e-5, atol=1e-8)

    def test_noisy_closed_loop_fidelity(self):
        settings = standard_settings(19.0, 19.0)
        target = BinState.bell("phi-")
        fids = []
        for seed in range(6):
            recs = forward_simulate(target, settings, NOISY_RATES, seed)
            est = mle_reconstruct(recs, settings)
            fids.append(fidelity(est.rho, target))
        assert np.median(fids) >= 0.99

    def test_monotone_consistency_with_counts(self):
        # 100x the statistics must not lower the median fidelity.
        settings = standard_settings(19.0, 19.0)
        target = BinState.bell("psi+")
        med = {}
        for factor in (0.01, 1.0):
            rates = replace(
                NOISY_RATES,
                pair_rate_hz=NOISY_RATES.pair_rate_hz * factor,
                extra_accidental_hz=NOISY_RATES.extra_accidental_hz * factor,
            )
            fids = [
                fidelity(
                    mle_reconstruct(forward_simulate(target, settings, rates, s), settings).rho,
                    target,
                )
                for s in range(6)
            ]
            med[factor] = float(np.median(fids))
        assert med[1.0] >= med[0.01]

    def test_relabeling_symmetry_smoke(self):
        # The pipeline treats |Phi+> and its both-arm relabeled partner
        # |Psi+> equivalently within statistical error.
        settings = standard_settings(19.0, 19.0)
        meds = {}
        for name in ("phi+", "psi+"):
            target = BinState.bell(name)
            fids = [
                fidelity(
                    mle_reconstruct(
                        forward_simulate(target, settings, NOISY_RATES, s), settings
                    ).rho,
                    target,
                )
                for s in range(6)
            ]
            meds[name] = float(np.median(fids))
        assert abs(meds["phi+"] - meds["psi+"]) < 0.01

    def test_likelihood_never_decreases_at_accepted_iterates(self):
        settings = standard_settings(19.0, 19.0)
        target = BinState.bell("phi+")
        recs = forward_simulate(target, settings, NOISY_RATES, 11)
        trace: list = []
        est = mle_reconstruct(recs, settings, iterate_log=trace)
        assert sum(len(seg) for seg in trace) > 3
        for segment in trace:
            assert np.all(np.diff(np.asarray(segment)) <= 1e-12)
        # And the estimate beats the I/4 starting point outright.
        by_id = {r.setting_id: r for r in recs}
        n = np.array([by_id[s.setting_id].coincidences for s in settings], float)
        acc = np.array([by_id[s.setting_id].accidentals for s in settings])
        basis = np.array([s.is_basis for s in settings])
        rate = float(np.sum((n[basis] - acc[basis]) / 15.0))
        lam0 = rate * 15.0 * 0.25 + acc
        ll0 = float(np.sum(n * np.log(lam0) - lam0))
        assert est.log_likelihood >= ll0

    def test_deterministic_given_records(self):
        settings = standard_settings(19.0, 19.0)
        recs = forward_simulate(BinState.bell("phi-"), settings, NOISY_RATES, 3)
        a = mle_reconstruct(recs, settings)
        b = mle_reconstruct(recs, settings)
        assert np.array_equal(a.rho, b.rho)

    def test_record_mismatch_rejected(self):
        settings = standard_settings(19.0, 19.0)
        recs = exact_records(BinState.bell("phi+"), settings)[:-1]
        with pytest.raises(DimensionMismatch):
            mle_reconstruct(recs, settings)


class TestRoundTrips:
    def test_density_matrix_file(self, tmp_path):
        settings = standard_settings(19.0, 19.0)
        target = BinState.werner("phi-", 0.93)
        recs = forward_simulate(target, settings, NOISY_RATES, 5)
        est = mle_reconstruct(recs, settings)
        metrics = estimate_metrics(est, BinState.bell("phi-"))
        path = tmp_path / "rho.txt"
        write_density_matrix(path, est, metrics, header_comments=["seed=5"])
        back = read_density_matrix(path)
        assert np.allclose(back, est.rho, atol=1e-11)
        text = path.read_text()
        assert "fidelity =" in text and "converged =" in text

    def test_reconstruction_from_csv(self, tmp_path):
        settings = standard_settings(19.0, 19.0)
        target = BinState.bell("phi+")
        recs = forward_simulate(target, settings, NOISY_RATES, 9)
        path = tmp_path / "counts.csv"
        write_records(path, recs)
        est = mle_reconstruct(read_records(path), settings)
        assert fidelity(est.rho, target) >= 0.98

    def test_estimate_validation(self):
        with pytest.raises(ValueError):
            DensityMatrixEstimate(
                rho=np.diag([0.7, 0.4, 0.0, -0.1]).astype(complex),
                log_likelihood=0.0,
                iterations=1,
                converged=True,
            )

    def test_rho_from_t_always_physical(self, rng):
        for _ in range(20):
            rho = rho_from_t(rng.normal(size=16))
            assert np.linalg.eigvalsh(rho).min() >= -1e-12
            assert np.trace(rho).real == pytest.approx(1.0)
