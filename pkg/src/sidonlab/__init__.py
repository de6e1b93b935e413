"""Numerical laboratory for Sidon, Rademacher-Sidon and psi2 orthonormal systems."""

from .measure_core import (
    EnumerationCapError,
    ProbSpace,
    SampledFunction,
    cube,
    fwht,
    inner,
    lp_norm,
    product_space,
    psi2_norm,
    reweight,
    walsh_synthesis,
)
from .systems import (
    OrthoSystem,
    bent_signs,
    build_counterexample,
    ce_decay_curve,
    ce_sup_norm,
    rademacher_system,
    rudin_shapiro_signs,
    tensor_system,
    walsh_system,
)
from .martingale import coefficient_select, mds_extract, mds_extract_blocked
from .riesz_cert import (
    bessel_check,
    compare_averages,
    five_fold_lower_bound,
    l2_linfty_bridge,
    rademacher_sidon_estimate,
    tensor_metric_check,
    truncate_system,
)
from .sidon_solver import (
    lambda_p_probe,
    proportional_subsystem,
    psi2_probe,
    sidon_constant_bruteforce,
    sidon_constant_exact,
)

__version__ = "0.1.0"
