"""
wgfm - single-mode multi-frequency sampling methods for acoustic waveguides.
"""
from .modal import (
    BoundaryKind,
    GroupWavenumber,
    Regime,
    Waveguide,
    dispersion,
    far_field_offset,
    green_p,
    green_tail_bound,
    lambda_n,
    mode_profile,
    mu_n,
    passband,
    psi_n,
    psi_sup,
)
from .synth import (
    DataSet,
    FrequencyGrid,
    MeasurementConfig,
    NoiseSpec,
    QuadratureRule,
    Side,
    SourceSpec,
    SynthesisError,
    add_noise,
    block_dataset,
    disc,
    forward_field,
    l_shape,
    rectangle,
    rhombus,
    synthesize_alpha_dataset,
    synthesize_dataset,
)
from .mfop import (
    DiscreteFactors,
    FarFieldMatrix,
    OperatorError,
    OperatorKind,
    assemble_alpha,
    assemble_backscatter,
    assemble_block,
    assemble_two_sided,
    discrete_factors,
    omega,
    omega_alpha,
    verify_factorization,
)
from .imaging import (
    Eigensystem,
    ImageField,
    ImagingError,
    IndicatorKind,
    Probe,
    SamplingGrid,
    fbsm_indicator,
    hermitian_sqrt,
    picard_indicator,
    probe_eval,
    psf,
    scan,
    support_metrics,
)
from .media import MediaError

__version__ = "0.1.0"

__all__ = [
    "BoundaryKind",
    "GroupWavenumber",
    "Regime",
    "Waveguide",
    "dispersion",
    "far_field_offset",
    "green_p",
    "green_tail_bound",
    "lambda_n",
    "mode_profile",
    "mu_n",
    "passband",
    "psi_n",
    "psi_sup",
    "DataSet",
    "FrequencyGrid",
    "MeasurementConfig",
    "NoiseSpec",
    "QuadratureRule",
    "Side",
    "SourceSpec",
    "SynthesisError",
    "add_noise",
    "block_dataset",
    "disc",
    "forward_field",
    "l_shape",
    "rectangle",
    "rhombus",
    "synthesize_alpha_dataset",
    "synthesize_dataset",
    "DiscreteFactors",
    "FarFieldMatrix",
    "OperatorError",
    "OperatorKind",
    "assemble_alpha",
    "assemble_backscatter",
    "assemble_block",
    "assemble_two_sided",
    "discrete_factors",
    "omega",
    "omega_alpha",
    "verify_factorization",
    "Eigensystem",
    "ImageField",
    "ImagingError",
    "IndicatorKind",
    "Probe",
    "SamplingGrid",
    "fbsm_indicator",
    "hermitian_sqrt",
    "picard_indicator",
    "probe_eval",
    "psf",
    "scan",
    "support_metrics",
    "MediaError",
]
