"""Multiple cut-point phase-type distributions."""

from .errors import (
    CutpointError,
    DomainError,
    FitError,
    NumericError,
    StructureError,
    TailUnderflowError,
)
from .model import (
    ContinuousCutpointModel,
    DiscreteCutpointModel,
    exit_vector_continuous,
    exit_vector_discrete,
    interval_index,
    load_model,
    matrix_exponential,
    save_model,
    validate,
)

__version__ = "0.1.0"
