"""Orthonormal Legendre basis, Gauss-Legendre quadrature and the weight matrix W."""
from dataclasses import dataclass
from typing import Union

import numpy as np
from numpy.polynomial import legendre

from errors import DomainError

DOMAIN_TOL = 1e-12

ArrayLike = Union[float, np.ndarray]


def legendre_eval(n: int, x: ArrayLike) -> np.ndarray:
    """Return [phi_1(x), ..., phi_n(x)] along a trailing axis.

    phi_k(x) = sqrt((2k - 1) / 2) * P_{k-1}(x), orthonormal on [-1, 1].
    """
    x = np.asarray(x, dtype=np.float64)
    if np.any(np.abs(x) > 1.0 + DOMAIN_TOL):
        raise DomainError(f"Legendre basis evaluated outside [-1, 1]: max |x| = {np.max(np.abs(x))}")
    scale = np.sqrt((2.0 * np.arange(n) + 1.0) / 2.0)
    return legendre.legvander(x, n - 1) * scale


@dataclass(frozen=True)
class Basis:
    """The first n orthonormal Legendre polynomials."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"Basis size must be >= 1, got {self.n}")

    def __call__(self, x: ArrayLike) -> np.ndarray:
        return legendre_eval(self.n, x)


@dataclass(frozen=True)
class Quadrature:
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def m(self) -> int:
        return len(self.nodes)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))


def gauss_legendre(m: int) -> Quadrature:
    """Gauss-Legendre rule on [-1, 1], exact up to degree 2m - 1."""
    if m < 1:
        raise ValueError(f"Quadrature needs m >= 1 nodes, got {m}")
    nodes, weights = legendre.leggauss(m)
    order = np.argsort(nodes)
    return Quadrature(nodes=nodes[order], weights=weights[order])


def weight_matrix(basis: Basis, quad: Quadrature) -> np.ndarray:
    """W[i, j] = phi_i(x_j) * w_j, shape (n, m)."""
    return basis(quad.nodes).T * quad.weights[None, :]
