"""Minimal dense tensors with reverse-mode autodiff, backed by numpy."""

from . import functional
from .functional import InvalidMaskError, VocabIndexError
from .gradcheck import GradCheckReport, grad_check, relative_error
from .tensor import (
    ShapeError,
    Tensor,
    as_tensor,
    default_dtype,
    get_default_dtype,
    set_default_dtype,
    tensor,
    topological_order,
)

__all__ = [
    "functional",
    "GradCheckReport",
    "InvalidMaskError",
    "ShapeError",
    "Tensor",
    "VocabIndexError",
    "as_tensor",
    "default_dtype",
    "get_default_dtype",
    "grad_check",
    "relative_error",
    "set_default_dtype",
    "tensor",
    "topological_order",
]
