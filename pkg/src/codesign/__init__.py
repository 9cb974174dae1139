"""D-efficient treatment/control allocation for multiple controlled experiments
run on a shared subject pool with covariates."""
from ._backend import BACKEND
from .designs import DesignRequest, design
from .errors import CodesignError
from .model import (
    AllocationSet,
    CovariateMatrix,
    NoiseSpec,
    closed_form_benchmarks,
    d_efficiency,
    hadamard_upper_bound,
    precision_matrix,
    precision_oracle,
    projection_complement,
    treatment_variances,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AllocationSet",
    "CodesignError",
    "CovariateMatrix",
    "DesignRequest",
    "NoiseSpec",
    "closed_form_benchmarks",
    "d_efficiency",
    "design",
    "hadamard_upper_bound",
    "precision_matrix",
    "precision_oracle",
    "projection_complement",
    "treatment_variances",
]
