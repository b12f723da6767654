"""Fourier-Walsh statistics for noisy random-circuit samples."""

__version__ = "0.1.0"

from .errors import DegenerateEstimate, FormatError, FwxebError, InvariantViolation, ValidationError
from .walsh import (
    ProbabilityTable,
    SpectralTable,
    apply_noise_operator,
    convolve,
    degree_energies,
    wht_forward,
    wht_inverse,
)
from .noise import (
    AsymmetricReadout,
    GoogleNoise,
    SampleSet,
    SpectralScaling,
    SymmetricReadout,
    apply_noise_model,
    draw_samples,
    generate_porter_thomas,
    parse_noise_spec,
)
from .estimators import (
    EstimatorReport,
    alt_phi,
    estimate_all,
    formula77,
    mle_phi,
    phi_ro_corr,
    phi_ro_from_phi,
    phi_ro_mle,
    s_estimator,
    secondary_signal,
    t_estimator,
    xeb_u,
    xeb_v,
)
from .analysis import (
    DegreeProfile,
    SQFit,
    coefficient_histogram,
    fit_sq,
    lambda_profile,
    reference_curve,
    split_half_drift,
)
