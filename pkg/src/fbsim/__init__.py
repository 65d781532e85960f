"""fbsim: simulator for a programmable frequency-bin entangled-photon source.

End-to-end desk-scale model of a multi-ring silicon photonic pair source:
ring spectra and pump routing, biphoton states and coincidence statistics,
electro-optic bin mixing, two-photon interference, maximum-likelihood
state tomography, and the four-ring qudit generalization.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DimensionMismatch,
    DoublePairRisk,
    FbsimError,
    FitDiverged,
    InfeasibleConfig,
    NoOverlap,
    NonAdjacentPair,
    NumericalFailure,
    RegimeViolation,
    ResolutionTooCoarse,
    ScenarioError,
)
from .spectra import (
    BinArm,
    BinGrid,
    Coupling,
    DeviceConfig,
    Mode,
    RingSpec,
    bin_spacing,
    configure,
    transmission,
)
from .binops import (
    EomKind,
    EomSpec,
    Projector,
    ProjectorRecipe,
    equal_sideband_index,
    lorentzian_overlap_weight,
    mix_projector,
    partial_overlap_weight,
    sideband_amplitude,
    sideband_power_db,
)
from .pairgen import (
    BinState,
    BiphotonLineshape,
    CountRecord,
    RateModel,
    born_probability,
    car,
    emit_state,
    lineshape,
    named_state,
    pair_rate,
    sample_counts,
)
from .correlate import (
    FringeScan,
    InterferenceParams,
    VisibilityFit,
    bell_scan,
    entanglement_witness,
    fit_visibility,
    g2_closed_form,
    g2_numerical_2d,
    g2_numerical_oracle,
)
from .tomo import (
    DensityMatrixEstimate,
    TomographySettings,
    concurrence,
    entanglement_of_formation,
    fidelity,
    forward_simulate,
    mle_reconstruct,
    purity,
    standard_settings,
)
from .qudit import (
    CorrelationMatrix,
    adjacent_bell_scan,
    build_qudit_device,
    noisy_pair_state,
    pair_bell_state,
    qudit_emit,
    z_basis_matrix,
)
