"""Target energies U(x) and the affine map between their bounding box and [-1, 1]^d.

All energies are batched torch functions of native coordinates, shape (N, d) -> (N,),
so the VI loss can differentiate through them. ``EnergyModel.numpy_energy`` wraps
them for the grid oracle.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from torch.distributions import MultivariateNormal

from errors import ConfigError, DomainError

logger = logging.getLogger(__name__)

BOX_TOL = 1e-9
Array = Union[np.ndarray, torch.Tensor]


@dataclass(frozen=True)
class DomainMap:
    """Affine bijection x = scale * y + shift between [-1, 1]^d and a box."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=np.float64)
        upper = np.asarray(self.upper, dtype=np.float64)
        if lower.shape != upper.shape or np.any(upper <= lower):
            raise ConfigError(f"Invalid bounding box: lower={lower}, upper={upper}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def cube(cls, d: int, half_width: float) -> "DomainMap":
        return cls(np.full(d, -half_width), np.full(d, half_width))

    @property
    def d(self) -> int:
        return len(self.lower)

    @property
    def scale(self) -> np.ndarray:
        return (self.upper - self.lower) / 2.0

    @property
    def shift(self) -> np.ndarray:
        return (self.upper + self.lower) / 2.0

    @property
    def log_jacobian(self) -> float:
        return float(np.sum(np.log(self.scale)))

    @staticmethod
    def _like(values: np.ndarray, x: Array) -> Array:
        if isinstance(x, torch.Tensor):
            return torch.as_tensor(values, dtype=x.dtype, device=x.device)
        return values

    @staticmethod
    def _check(x: Array, lower, upper, what: str) -> None:
        outside = (x < lower - BOX_TOL) | (x > upper + BOX_TOL)
        if bool(outside.any()):
            raise DomainError(f"Point outside the {what}")

    def to_cube(self, x: Array, check: bool = True) -> Array:
        if check:
            self._check(x, self._like(self.lower, x), self._like(self.upper, x), "bounding box")
        return (x - self._like(self.shift, x)) / self._like(self.scale, x)

    def from_cube(self, y: Array, check: bool = True) -> Array:
        if check:
            self._check(y, -1.0, 1.0, "cube [-1, 1]^d")
        return y * self._like(self.scale, y) + self._like(self.shift, y)


# -- Gaussian mixture --------------------------------------------------------

@dataclass(frozen=True)
class GaussianMixtureSpec:
    """Five equally weighted Gaussians; all structure sits in the last two coordinates."""

    d: int = 30
    separation: float = 2.0
    scale: float = 0.4
    correlation: float = 0.95

    def __post_init__(self):
        if self.d < 2:
            raise ConfigError(f"Mixture needs d >= 2, got {self.d}")
        if not 0.0 <= abs(self.correlation) < 1.0:
            raise ConfigError(f"Correlation must lie in (-1, 1), got {self.correlation}")

    def means(self) -> np.ndarray:
        s = self.separation
        tails = np.array([[s, s], [s, -s], [-s, s], [-s, -s], [0.0, 0.0]])
        means = np.zeros((5, self.d))
        means[:, -2:] = tails
        return means

    def covariances(self) -> np.ndarray:
        rho = self.correlation
        covs = np.tile(np.eye(self.d), (5, 1, 1))
        for i, sign in enumerate([1.0, -1.0, -1.0, 1.0]):
            covs[i, -2, -1] = covs[i, -1, -2] = sign * rho
        return self.scale * covs

    def distribution(self, dtype=torch.float64) -> MultivariateNormal:
        return MultivariateNormal(
            torch.as_tensor(self.means(), dtype=dtype),
            covariance_matrix=torch.as_tensor(self.covariances(), dtype=dtype),
        )

    def energy(self, x: torch.Tensor) -> torch.Tensor:
        return mixture_energy(self, x)


def mixture_energy(spec: GaussianMixtureSpec, x: torch.Tensor) -> torch.Tensor:
    """U = -log sum_i (1/5) N(x; mu_i, 0.4 Sigma_i), via log-sum-exp."""
    log_probs = spec.distribution(x.dtype).log_prob(x[:, None, :])
    return -(torch.logsumexp(log_probs, dim=1) + math.log(1.0 / 5.0))


# -- Ginzburg-Landau ---------------------------------------------------------

@dataclass(frozen=True)
class GL1DSpec:
    """Antiferromagnetic chain with zero Dirichlet ends."""

    d: int = 35
    delta: float = 0.04
    beta: float = 6.25e-2
    h: Optional[float] = None

    def __post_init__(self):
        if self.h is None:
            object.__setattr__(self, "h", 1.0 / (self.d + 1))
        if self.h <= 0 or self.delta <= 0 or self.beta < 0:
            raise ConfigError(f"GL1D needs h > 0, delta > 0, beta >= 0: {self}")

    def energy(self, u: torch.Tensor) -> torch.Tensor:
        return gl1d_energy(self, u)

    def gradient(self, u: torch.Tensor) -> torch.Tensor:
        padded = torch.nn.functional.pad(u, (1, 1))
        lap = 2.0 * u - padded[:, :-2] - padded[:, 2:]
        return -(self.delta / self.h ** 2) * lap - u * (1.0 - u ** 2) / self.delta


def gl1d_energy(spec: GL1DSpec, u: torch.Tensor) -> torch.Tensor:
    padded = torch.nn.functional.pad(u, (1, 1))
    diffs = (padded[:, 1:] - padded[:, :-1]) / spec.h
    coupling = -(spec.delta / 2.0) * torch.sum(diffs ** 2, dim=1)
    wells = torch.sum((1.0 - u ** 2) ** 2, dim=1) / (4.0 * spec.delta)
    return coupling + wells


@dataclass(frozen=True)
class GL2DSpec:
    """Ferromagnetic L x L interior with fixed boundary rows and columns."""

    L: int = 8
    delta: float = 0.04
    beta: float = 0.2
    h: Optional[float] = None
    row_boundary: float = 1.0
    col_boundary: float = -1.0

    def __post_init__(self):
        if self.h is None:
            object.__setattr__(self, "h", 1.0 / (self.L + 1))
        if self.L < 1 or self.h <= 0 or self.delta <= 0 or self.beta < 0:
            raise ConfigError(f"GL2D needs L >= 1, h > 0, delta > 0, beta >= 0: {self}")

    @property
    def d(self) -> int:
        return self.L * self.L

    def padded(self, u: torch.Tensor) -> torch.Tensor:
        if u.shape[-1] != self.d:
            raise ValueError(f"GL2D field has {u.shape[-1]} sites, expected {self.d} = {self.L}^2")
        grid = torch.full((u.shape[0], self.L + 2, self.L + 2), self.col_boundary,
                          dtype=u.dtype, device=u.device)
        grid[:, 0, :] = self.row_boundary
        grid[:, -1, :] = self.row_boundary
        grid[:, 1:-1, 1:-1] = u.reshape(-1, self.L, self.L)
        return grid

    def energy(self, u: torch.Tensor) -> torch.Tensor:
        return gl2d_energy(self, u)

    def gradient(self, u: torch.Tensor) -> torch.Tensor:
        grid = self.padded(u)
        inner = grid[:, 1:-1, 1:-1]
        lap = (4.0 * inner - grid[:, :-2, 1:-1] - grid[:, 2:, 1:-1]
               - grid[:, 1:-1, :-2] - grid[:, 1:-1, 2:])
        grad = (self.delta / self.h ** 2) * lap - inner * (1.0 - inner ** 2) / self.delta
        return grad.reshape(u.shape[0], -1)


def gl2d_energy(spec: GL2DSpec, u: torch.Tensor) -> torch.Tensor:
    """Sum over lattice edges with at least one interior endpoint."""
    grid = spec.padded(u)
    horizontal = (grid[:, 1:-1, 1:] - grid[:, 1:-1, :-1]) / spec.h
    vertical = (grid[:, 1:, 1:-1] - grid[:, :-1, 1:-1]) / spec.h
    coupling = (spec.delta / 2.0) * (torch.sum(horizontal ** 2, dim=(1, 2))
                                     + torch.sum(vertical ** 2, dim=(1, 2)))
    wells = torch.sum((1.0 - u ** 2) ** 2, dim=1) / (4.0 * spec.delta)
    return coupling + wells


# -- analytic test targets ---------------------------------------------------

@dataclass(frozen=True)
class DoubleWellSpec:
    """Separable double well, U = beta * sum (1 - x^2)^2 / (4 delta)."""

    d: int = 2
    delta: float = 0.5
    beta: float = 1.0

    def energy(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sum((1.0 - x ** 2) ** 2, dim=1) / (4.0 * self.delta)

    def gradient(self, x: torch.Tensor) -> torch.Tensor:
        return -x * (1.0 - x ** 2) / self.delta


@dataclass(frozen=True)
class GaussianSpec:
    """Normalized isotropic Gaussian, so log Z = 0 up to box truncation."""

    d: int = 3
    sigma: float = 0.5
    mean: float = 0.0

    def energy(self, x: torch.Tensor) -> torch.Tensor:
        z = (x - self.mean) / self.sigma
        return 0.5 * torch.sum(z ** 2, dim=1) + 0.5 * self.d * math.log(2.0 * math.pi * self.sigma ** 2)

    def gradient(self, x: torch.Tensor) -> torch.Tensor:
        return (x - self.mean) / self.sigma ** 2


def boltzmann_energy(spec, u: torch.Tensor) -> torch.Tensor:
    """beta * E(u); the U fed to the VI loss."""
    return spec.beta * spec.energy(u)


# -- model assembly ----------------------------------------------------------

Spec = Union[GaussianMixtureSpec, GL1DSpec, GL2DSpec, DoubleWellSpec, GaussianSpec]

DEFAULT_BOXES = {
    "mixture": 6.0,
    "gl1d": 3.0,
    "gl2d": 2.0,
    "double_well": 2.0,
    "gaussian": 3.0,
}


@dataclass(frozen=True)
class EnergyModel:
    name: str
    spec: Spec
    domain: DomainMap
    potential: Callable[[torch.Tensor], torch.Tensor] = field(repr=False)
    gradient: Optional[Callable[[torch.Tensor], torch.Tensor]] = field(default=None, repr=False)

    @property
    def d(self) -> int:
        return self.domain.d

    @property
    def box(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.domain.lower, self.domain.upper

    def energy(self, x: torch.Tensor) -> torch.Tensor:
        return self.potential(x)

    def numpy_energy(self, x: np.ndarray) -> np.ndarray:
        with torch.no_grad():
            return self.potential(torch.as_tensor(np.atleast_2d(x), dtype=torch.float64)).numpy()

    def cube_energy(self, y: torch.Tensor, check: bool = False) -> torch.Tensor:
        """U(from_cube(y)); the density correction sum(log s_k) is applied by the caller."""
        return self.potential(self.domain.from_cube(y, check=check))


def _with_beta(spec) -> Tuple[Callable, Optional[Callable]]:
    beta = spec.beta

    def potential(x: torch.Tensor) -> torch.Tensor:
        return boltzmann_energy(spec, x)

    def gradient(x: torch.Tensor) -> torch.Tensor:
        return beta * spec.gradient(x)

    return potential, gradient


def make_energy_model(name: str, d: int, box: Optional[Sequence] = None, **params) -> EnergyModel:
    """Build a target from its config keys (``model``, ``d``, ``beta``, ``delta``, ``box``...)."""
    params = {k: v for k, v in params.items() if v is not None}
    try:
        if name == "mixture":
            spec = GaussianMixtureSpec(d=d, **params)
            potential, gradient = spec.energy, None
        elif name == "gl1d":
            spec = GL1DSpec(d=d, **params)
            potential, gradient = _with_beta(spec)
        elif name == "gl2d":
            side = math.isqrt(d)
            if side * side != d:
                raise ConfigError(f"GL2D dimension must be a perfect square, got {d}")
            spec = GL2DSpec(L=side, **params)
            potential, gradient = _with_beta(spec)
        elif name == "double_well":
            spec = DoubleWellSpec(d=d, **params)
            potential, gradient = _with_beta(spec)
        elif name == "gaussian":
            spec = GaussianSpec(d=d, **params)
            potential, gradient = spec.energy, spec.gradient
        else:
            raise ConfigError(f"Unknown model '{name}'")
    except TypeError as e:
        raise ConfigError(f"Bad parameters for model '{name}': {e}") from e

    if box is None:
        domain = DomainMap.cube(d, DEFAULT_BOXES[name])
    elif np.isscalar(box):
        domain = DomainMap.cube(d, float(box))
    else:
        lower, upper = np.asarray(box, dtype=np.float64).reshape(2, -1)
        if lower.size == 1:
            lower, upper = np.full(d, lower[0]), np.full(d, upper[0])
        domain = DomainMap(lower, upper)
    if domain.d != d:
        raise ConfigError(f"Bounding box has {domain.d} dimensions, model has {d}")
    logger.debug(f"Energy model {name}: d={d}, box=[{domain.lower.min()}, {domain.upper.max()}]")
    return EnergyModel(name=name, spec=spec, domain=domain, potential=potential, gradient=gradient)
