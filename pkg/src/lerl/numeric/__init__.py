"""Differentiation, sampling and gradient-checking kernel."""

from lerl.numeric import autodiff as ad
from lerl.numeric.autodiff import GradTape, Tensor, stop_gradient
from lerl.numeric.core import LOG_2PI, gaussian_log_density, gaussian_sample, softmax
from lerl.numeric.gradcheck import GradCheckReport, finite_diff_check, relative_error
from lerl.numeric.random import RngStream, as_generator

__all__ = [
    "ad",
    "GradTape",
    "Tensor",
    "stop_gradient",
    "LOG_2PI",
    "gaussian_log_density",
    "gaussian_sample",
    "softmax",
    "GradCheckReport",
    "finite_diff_check",
    "relative_error",
    "RngStream",
    "as_generator",
]
