"""Generative mirror models of a stochastic cantilever beam.

Three model families target the same quantity, the distribution of tip
displacement conditioned on load level: a spectral stochastic finite element
model (white box), a conditional GAN trained on simulated data (black box),
and a hybrid GAN whose latent input is drawn from the calibrated spectral
model (grey box). All are scored against Monte Carlo reference data with
distribution-level mirror criteria.
"""

from .beam import (
    BeamModel,
    LoadCase,
    SofteningLaw,
    assemble_stiffness,
    consistent_load_vector,
    solve_linear,
    solve_linear_batch,
    solve_nonlinear,
    tip_deflection,
)
from .cgan import (
    CganModel,
    ExtrapolationResult,
    TrainConfig,
    TrainOutcome,
    extrapolation_protocol,
    sample_model,
    train,
)
from .dataset import (
    SampleSet,
    ScalingSpec,
    SplitSpec,
    apply_scaling,
    extrapolation_fit_split,
    extrapolation_held_out_codes,
    fit_scaling,
    generate_linear,
    generate_nonlinear,
    invert_scaling,
    linear_reference_split,
    nonlinear_reference_split,
    record_seed,
    split,
)
from .distributions import (
    Kde,
    MirrorReport,
    Virtualisation,
    alpha_curve,
    build_mirror_report,
    epsilon_mirror,
    kde_fit,
    kl_divergence,
    kl_per_code,
)
from .errors import (
    CalibrationError,
    ConvergenceError,
    DatasetError,
    GalerkinSingularError,
    MirrorforgeError,
    NoViableModelError,
    TrainingDivergedError,
)
from .mlp import Adam, Mlp, Sgd
from .random_field import FieldSpec, GermSample, KLField, covariance, decompose, realize
from .sfem import (
    CalibrationConfig,
    PCSolution,
    PceBasis,
    SfemCalibration,
    calibrate,
    default_parameter_grid,
    expand_stiffness,
    sample_tip,
    solve_galerkin,
    triple_products,
)

__version__ = "0.1.0"
