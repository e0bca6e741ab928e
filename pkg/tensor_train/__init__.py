"""Tensor trains, TT-cross and the squared-TT base distribution."""
from tensor_train.basis_quad import Basis, Quadrature, gauss_legendre, legendre_eval, weight_matrix
from tensor_train.sampler import (
    CoefficientTT,
    SampleBatch,
    build_coefficient_tt,
    draw_samples,
    load_coefficient_tt,
    q0_eval,
)
from tensor_train.tt_core import OrthoTensorTrain, TensorTrain, frobenius_norm, tt_eval
from tensor_train.tt_cross import CrossConfig, GridOracle, cross_approximate, reference_cross

__all__ = [
    "Basis",
    "CoefficientTT",
    "CrossConfig",
    "GridOracle",
    "OrthoTensorTrain",
    "Quadrature",
    "SampleBatch",
    "TensorTrain",
    "build_coefficient_tt",
    "cross_approximate",
    "draw_samples",
    "frobenius_norm",
    "gauss_legendre",
    "legendre_eval",
    "load_coefficient_tt",
    "q0_eval",
    "reference_cross",
    "tt_eval",
    "weight_matrix",
]
