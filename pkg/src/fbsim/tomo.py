"""Quantum state tomography over the frequency-bin basis.

Sixteen product-projector settings ({|0>, |1>, |+>, |+i>} per arm, each
realized by a half-spacing modulator setting plus narrowband selection)
feed a Poisson maximum-likelihood reconstruction of the two-qubit density
matrix, parameterized as rho = T^dag T / tr(T^dag T) with T lower
triangular.  State metrics: fidelity, purity, and entanglement of
formation via the concurrence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import optimize

from .binops import EomKind, EomSpec, Projector, ProjectorRecipe, mix_projector
from .errors import DimensionMismatch, InfeasibleConfig, NumericalFailure
from .pairgen import BinState, CountRecord, RateModel, sample_counts
from .spectra import BinArm

ARM_KINDS = ("0", "1", "+", "+i")
_ALPHA = {"+": 0.0, "+i": math.pi / 2.0}


@dataclass(frozen=True)
class TomoSetting:
    """One of the 16 coincidence measurements."""

    setting_id: int
    label_signal: str
    label_idler: str
    projector_signal: Projector
    projector_idler: Projector
    recipe_signal: ProjectorRecipe
    recipe_idler: ProjectorRecipe

    def joint_vector(self) -> np.ndarray:
        return np.kron(self.projector_signal.vector, self.projector_idler.vector)

    @property
    def is_basis(self) -> bool:
        return self.label_signal in ("0", "1") and self.label_idler in ("0", "1")


@dataclass
class TomographySettings:
    settings: list[TomoSetting]
    acquisition_s: float = 15.0
    efficiency_signal: float = 1.0
    efficiency_idler: float = 1.0

    def __iter__(self):
        return iter(self.settings)

    def __len__(self) -> int:
        return len(self.settings)

    def gram_rank(self, tol: float = 1e-9) -> int:
        """Rank of the measurement-operator span (16 = informationally complete)."""
        vecs = np.array(
            [
                np.outer(s.joint_vector(), s.joint_vector().conj()).reshape(-1)
                for s in self.settings
            ]
        )
        return int(np.linalg.matrix_rank(vecs, tol=tol))

    def recipes(self) -> list[ProjectorRecipe]:
        out = []
        for s in self.settings:
            out.extend([s.recipe_signal, s.recipe_idler])
        return out


def _arm_recipe(
    arm: BinArm,
    kind: str,
    spacing_ghz: float,
    arm_name: str,
    setting_id: int,
    eom_kind: EomKind,
    modulation_index: float,
    match_tol_ghz: float,
) -> tuple[Projector, ProjectorRecipe]:
    """Modulator recipe + realized projector for one arm's target state.

    Basis states select an outer first-order sideband; superpositions
    select the central overlap line at f_m = spacing/2 with the drive
    phase chosen for the target relative phase (alpha = +-2 phi depending
    on the arm's frequency ordering).
    """
    f_m = spacing_ghz / 2.0
    c0, c1 = arm.centers_ghz
    sign = 1.0 if c1 > c0 else -1.0
    if kind == "0":
        selected = c0 - sign * f_m
        phase = 0.0
    elif kind == "1":
        selected = c1 + sign * f_m
        phase = 0.0
    elif kind in _ALPHA:
        selected = 0.5 * (c0 + c1)
        phase = sign * _ALPHA[kind] / 2.0
    else:
        raise InfeasibleConfig(f"unknown projector kind {kind!r}")
    eom = EomSpec(
        kind=eom_kind, f_m_ghz=f_m, modulation_index=modulation_index, drive_phase_rad=phase
    )
    proj = mix_projector(arm, eom, selected, match_tol_ghz)
    recipe = ProjectorRecipe(
        setting_id=setting_id,
        arm=arm_name,
        kind=eom_kind,
        f_m_ghz=f_m,
        modulation_index=modulation_index,
        drive_phase_rad=phase,
        selected_center_ghz=selected,
    )
    return Projector(proj.vector, label=kind), recipe


def standard_settings(
    spacing_signal_ghz: float,
    spacing_idler_ghz: float,
    eom_kind: EomKind | str = EomKind.AMPLITUDE_DSB_SC,
    modulation_index: float = 1.7,
    acquisition_s: float = 15.0,
    linewidth_fwhm_ghz: float = 1.3,
    efficiency_signal: float = 1.0,
    efficiency_idler: float = 1.0,
) -> TomographySettings:
    """The 16-setting product tomography set.

    Arm states {|0>, |1>, |+>, |+i>} tensor-paired; the signal and idler
    modulators run independently at half the respective bin spacing
    (identical for the aligned-pump layout, different for the uneven one).
    """
    eom_kind = EomKind(eom_kind)
    signal_arm = BinArm(centers_ghz=(0.0, spacing_signal_ghz), ring_labels=("b0", "b1"))
    idler_arm = BinArm(centers_ghz=(0.0, -spacing_idler_ghz), ring_labels=("b0", "b1"))
    tol = linewidth_fwhm_ghz / 10.0
    settings = []
    sid = 0
    for ks in ARM_KINDS:
        for ki in ARM_KINDS:
            ps, rs = _arm_recipe(
                signal_arm, ks, spacing_signal_ghz, "signal", sid, eom_kind,
                modulation_index, tol,
            )
            pi, ri = _arm_recipe(
                idler_arm, ki, spacing_idler_ghz, "idler", sid, eom_kind,
                modulation_index, tol,
            )
            settings.append(
                TomoSetting(
                    setting_id=sid,
                    label_signal=ks,
                    label_idler=ki,
                    projector_signal=ps,
                    projector_idler=pi,
                    recipe_signal=rs,
                    recipe_idler=ri,
                )
            )
            sid += 1
    out = TomographySettings(
        settings=settings,
        acquisition_s=acquisition_s,
        efficiency_signal=efficiency_signal,
        efficiency_idler=efficiency_idler,
    )
    if out.gram_rank() != 16:
        raise InfeasibleConfig("tomography settings not informationally complete")
    return out


def forward_simulate(
    state: BinState,
    settings: TomographySettings,
    rates: RateModel,
    seed: int,
) -> list[CountRecord]:
    """Sample the 16 coincidence records the device would produce."""
    from dataclasses import replace as _replace

    if settings.efficiency_signal != 1.0 or settings.efficiency_idler != 1.0:
        rates = _replace(
            rates,
            loss_signal_db=rates.loss_signal_db
            - 10.0 * math.log10(settings.efficiency_signal),
            loss_idler_db=rates.loss_idler_db
            - 10.0 * math.log10(settings.efficiency_idler),
        )
    records = []
    for s in settings:
        rec = sample_counts(
            state,
            (s.projector_signal, s.projector_idler),
            rates,
            settings.acquisition_s,
            seed,
            setting_id=s.setting_id,
        )
        rec.label_signal = s.label_signal
        rec.label_idler = s.label_idler
        rec.phase_signal_rad = s.recipe_signal.drive_phase_rad
        rec.phase_idler_rad = s.recipe_idler.drive_phase_rad
        records.append(rec)
    return records


@dataclass
class DensityMatrixEstimate:
    rho: np.ndarray
    log_likelihood: float
    iterations: int
    converged: bool

    def __post_init__(self) -> None:
        r = np.asarray(self.rho, dtype=complex)
        if not np.allclose(r, r.conj().T, atol=1e-9):
            raise ValueError("estimate not Hermitian")
        if abs(np.trace(r).real - 1.0) > 1e-9:
            raise ValueError("estimate trace != 1")
        if np.linalg.eigvalsh(r).min() < -1e-9:
            raise ValueError("estimate not PSD")
        self.rho = r


_DIAG = [(0, 0), (1, 1), (2, 2), (3, 3)]
_LOWER = [(1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2)]


def _t_matrix(t: np.ndarray) -> np.ndarray:
    T = np.zeros((4, 4), dtype=complex)
    for k, (r, c) in enumerate(_DIAG):
        T[r, c] = t[k]
    for k, (r, c) in enumerate(_LOWER):
        T[r, c] = t[4 + 2 * k] + 1j * t[5 + 2 * k]
    return T


def _t_params(T: np.ndarray) -> np.ndarray:
    t = np.zeros(16)
    for k, (r, c) in enumerate(_DIAG):
        t[k] = T[r, c].real
    for k, (r, c) in enumerate(_LOWER):
        t[4 + 2 * k] = T[r, c].real
        t[5 + 2 * k] = T[r, c].imag
    return t


def rho_from_t(t: np.ndarray) -> np.ndarray:
    T = _t_matrix(t)
    M = T.conj().T @ T
    return M / np.trace(M).real


def mle_reconstruct(
    records: list[CountRecord],
    settings: TomographySettings,
    max_iterations: int = 10_000,
    iterate_log: list | None = None,
) -> DensityMatrixEstimate:
    """Maximum-likelihood density matrix from 16 coincidence records.

    Minimizes the Poisson negative log-likelihood sum(lambda_k - n_k ln
    lambda_k) with lambda_k = N * <P_k> + accidental_k, over the 16 real
    parameters of the Cholesky factor.  The rate scale N is calibrated
    from the accidental-corrected counts of the four basis settings
    (their Born probabilities always sum to one).  Deterministic given
    the records: fixed start at rho = I/4 plus one seeded restart if the
    first pass fails the convergence thresholds.
    """
    by_id = {r.setting_id: r for r in records}
    if set(by_id) != {s.setting_id for s in settings}:
        raise DimensionMismatch("records do not match the settings' ids")
    vecs = np.array([s.joint_vector() for s in settings])  # (16, 4)
    n = np.array([float(by_id[s.setting_id].coincidences) for s in settings])
    acc = np.array([float(by_id[s.setting_id].accidentals) for s in settings])
    t_acq = np.array([float(by_id[s.setting_id].acquisition_s) for s in settings])
    if np.any(n < 0):
        raise ValueError("counts must be >= 0")

    basis = np.array([s.is_basis for s in settings])
    if not np.any(basis):
        raise InfeasibleConfig("need basis (Z x Z) settings to calibrate the scale")
    rate_scale = float(np.sum((n[basis] - acc[basis]) / t_acq[basis]))
    rate_scale = max(rate_scale, 1e-9)
    scale = max(float(np.sum(n)), 1.0)

    def objective(t: np.ndarray):
        T = _t_matrix(t)
        s_tr = float(np.sum(np.abs(T) ** 2))
        if s_tr == 0.0:
            return 1e30, np.zeros_like(t)
        Tv = T @ vecs.T  # (4, 16)
        p = np.sum(np.abs(Tv) ** 2, axis=0) / s_tr
        lam = np.clip(rate_scale * t_acq * p + acc, 1e-12, None)
        nll = float(np.sum(lam - n * np.log(lam))) / scale
        c = rate_scale * t_acq * (1.0 - n / lam) / scale
        # dp_k/dT* = (T P_k - p_k T)/s with P_k = v v^dag
        W = (Tv * c) @ vecs.conj() / s_tr - (np.dot(c, p) / s_tr) * T
        g = np.zeros(16)
        for k, (r, c_) in enumerate(_DIAG):
            g[k] = 2.0 * W[r, c_].real
        for k, (r, c_) in enumerate(_LOWER):
            g[4 + 2 * k] = 2.0 * W[r, c_].real
            g[5 + 2 * k] = 2.0 * W[r, c_].imag
        return nll, g

    def solve(t0: np.ndarray):
        steps = []
        last = [t0]
        segment: list[float] = []
        if iterate_log is not None:
            # One segment per descent; restarts begin a fresh segment.
            iterate_log.append(segment)

        def cb(tk):
            steps.append(float(np.linalg.norm(tk - last[0])))
            last[0] = tk.copy()
            if iterate_log is not None:
                segment.append(objective(tk)[0])

        res = optimize.minimize(
            objective,
            t0,
            jac=True,
            method="L-BFGS-B",
            callback=cb,
            options={"maxiter": max_iterations, "maxfun": 5 * max_iterations,
                     "ftol": 0.0, "gtol": 1e-10},
        )
        gnorm = float(np.linalg.norm(objective(res.x)[1]))
        small_step = bool(steps and steps[-1] < 1e-10)
        return res, gnorm < 1e-8 or small_step, gnorm

    t0 = _t_params(np.eye(4, dtype=complex) / 2.0)
    res, ok, _ = solve(t0)
    total_iter = int(res.nit)
    # L-BFGS line searches can stall near rank-deficient optima; resuming
    # with fresh curvature memory usually finishes the descent.
    for _ in range(2):
        if ok:
            break
        res_r, ok_r, _ = solve(res.x)
        total_iter += int(res_r.nit)
        if res_r.fun <= res.fun:
            res, ok = res_r, ok_r
    if not ok:
        rng = np.random.default_rng(int(np.sum(n)) % (2**32))
        t_r = rng.normal(scale=0.5, size=16)
        res2, ok2, _ = solve(t_r)
        total_iter += int(res2.nit)
        if res2.fun < res.fun:
            res, ok = res2, ok2
    return DensityMatrixEstimate(
        rho=rho_from_t(res.x),
        log_likelihood=float(-res.fun * scale),
        iterations=total_iter,
        converged=bool(ok),
    )


def _as_density(rho) -> np.ndarray:
    if isinstance(rho, BinState):
        return rho.density()
    if isinstance(rho, DensityMatrixEstimate):
        return rho.rho
    return np.asarray(rho, dtype=complex)


def _as_vector(state) -> np.ndarray:
    if isinstance(state, BinState):
        if not state.is_pure:
            raise ValueError("target must be a pure state")
        return state.amplitudes
    v = np.asarray(state, dtype=complex).reshape(-1)
    return v / np.linalg.norm(v)


def fidelity(rho, target) -> float:
    """<psi| rho |psi> against a pure target."""
    r = _as_density(rho)
    v = _as_vector(target)
    if r.shape != (len(v), len(v)):
        raise DimensionMismatch(f"rho {r.shape} vs target dim {len(v)}")
    return float(np.real(v.conj() @ r @ v))


def purity(rho) -> float:
    """Tr(rho^2)."""
    r = _as_density(rho)
    return float(np.real(np.trace(r @ r)))


_SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]])
_YY = np.kron(_SIGMA_Y, _SIGMA_Y)


def concurrence(rho) -> float:
    """Two-qubit concurrence max(0, l1 - l2 - l3 - l4)."""
    r = _as_density(rho)
    if r.shape != (4, 4):
        raise DimensionMismatch("concurrence needs a two-qubit state")
    R = r @ _YY @ r.conj() @ _YY
    vals, vecs = np.linalg.eig(R)
    resid = float(np.linalg.norm(R @ vecs - vecs * vals)) / max(
        1e-30, float(np.linalg.norm(R))
    )
    if resid > 1e-8:
        raise NumericalFailure(f"eigensolve residual {resid:.2e}")
    lam = np.sqrt(np.clip(np.sort(vals.real)[::-1], 0.0, None))
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def _binary_entropy(x: float) -> float:
    total = 0.0
    for v in (x, 1.0 - x):
        if v > 0.0:
            total -= v * math.log2(v)
    return total


def entanglement_of_formation(rho) -> float:
    """Wootters entanglement of formation h((1 + sqrt(1 - C^2))/2)."""
    c = concurrence(rho)
    return _binary_entropy((1.0 + math.sqrt(max(0.0, 1.0 - c * c))) / 2.0)


@dataclass(frozen=True)
class StateMetrics:
    fidelity: float
    purity: float
    entanglement_of_formation: float
    converged: bool
    iterations: int
    log_likelihood: float


def estimate_metrics(est: DensityMatrixEstimate, target) -> StateMetrics:
    return StateMetrics(
        fidelity=fidelity(est.rho, target),
        purity=purity(est.rho),
        entanglement_of_formation=entanglement_of_formation(est.rho),
        converged=est.converged,
        iterations=est.iterations,
        log_likelihood=est.log_likelihood,
    )


def write_density_matrix(
    path: str | Path,
    est: DensityMatrixEstimate,
    metrics: StateMetrics | None = None,
    header_comments: list[str] | None = None,
) -> None:
    """Structured-text output: real and imaginary parts, then metrics."""
    lines = []
    for c in header_comments or []:
        lines.append(f"# {c}")
    lines.append("real:")
    for row in est.rho.real:
        lines.append(" ".join(f"{v:.12g}" for v in row))
    lines.append("imag:")
    for row in est.rho.imag:
        lines.append(" ".join(f"{v:.12g}" for v in row))
    lines.append("metrics:")
    if metrics is not None:
        lines.append(f"fidelity = {metrics.fidelity:.12g}")
        lines.append(f"purity = {metrics.purity:.12g}")
        lines.append(f"entanglement_of_formation = {metrics.entanglement_of_formation:.12g}")
    lines.append(f"converged = {str(est.converged).lower()}")
    lines.append(f"iterations = {est.iterations}")
    lines.append(f"log_likelihood = {est.log_likelihood:.12g}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_density_matrix(path: str | Path) -> np.ndarray:
    """Read back the real/imag blocks of a density-matrix file."""
    real_rows, imag_rows = [], []
    section = None
    for ln in Path(path).read_text().splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        if ln == "real:":
            section = real_rows
            continue
        if ln == "imag:":
            section = imag_rows
            continue
        if ln == "metrics:":
            section = None
            continue
        if section is not None:
            section.append([float(v) for v in ln.split()])
    return np.array(real_rows) + 1j * np.array(imag_rows)
