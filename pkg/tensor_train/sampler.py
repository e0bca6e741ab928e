"""Squared tensor-train density p0 = q0^2 and its exact autoregressive sampler.

q0(x) = sum_I C[I] phi_I(x) with C a unit-norm coefficient train in right-left
orthogonal form. Orthogonality of cores 2..d means the marginal over the
trailing coordinates is a plain contraction, so each conditional is the
quadratic form f_k(x) = |phi(x)^T B_k|^2 with B_k = <v, C_k>.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Union

import numpy as np
import pandas as pd

from errors import DegenerateConditionalError, DegenerateDensityError, SerializationError
from tensor_train.basis_quad import Basis
from tensor_train.tt_core import (
    OrthoTensorTrain,
    TensorTrain,
    frobenius_norm,
    gram_deviation,
    load_tt,
    right_left_orthogonalize,
    save_tt,
    scale_first_core,
)

logger = logging.getLogger(__name__)

DEFAULT_GRID_SIZE = 1024
MIN_CONDITIONAL_MASS = 1e-300
BLOCK_BUDGET = 2 ** 21
ORTHO_TOL = 1e-8
CHECK_POINTS = 8
DENSITY_CHECK_TOL = 1e-8


@dataclass(frozen=True)
class CoefficientTT:
    ortho: OrthoTensorTrain
    basis: Basis
    unit_norm: bool = True

    @property
    def d(self) -> int:
        return self.ortho.d

    @property
    def ranks(self) -> tuple:
        return self.ortho.ranks

    def norm(self) -> float:
        return frobenius_norm(self.ortho)


@dataclass(frozen=True)
class SampleBatch:
    """Points in [-1, 1]^d with their base log-densities log p0."""

    points: np.ndarray
    log_density: np.ndarray
    seed: int

    def __len__(self) -> int:
        return len(self.points)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def subset(self, index) -> "SampleBatch":
        return SampleBatch(self.points[index], self.log_density[index], self.seed)


@dataclass(frozen=True)
class ConditionalState:
    v: np.ndarray
    k: int

    @classmethod
    def initial(cls) -> "ConditionalState":
        return cls(v=np.ones(1), k=0)


@dataclass(frozen=True)
class UnivariateDensity:
    """f_k(x) = sum_b (phi(x)^T B)_b^2 for the coordinate ``k``."""

    B: np.ndarray
    basis: Basis
    k: int

    @property
    def A(self) -> np.ndarray:
        return self.B @ self.B.T

    def __call__(self, x) -> np.ndarray:
        return np.sum((self.basis(x) @ self.B) ** 2, axis=-1)

    def mass(self) -> float:
        # integral over [-1, 1] is trace(A) by orthonormality of the basis
        return float(np.sum(self.B ** 2))

    def advance(self, x_star: float) -> ConditionalState:
        return ConditionalState(v=self.basis(x_star) @ self.B, k=self.k + 1)


def build_coefficient_tt(S: TensorTrain, W: np.ndarray) -> CoefficientTT:
    """Project grid values of q~ onto the basis and normalize to unit Frobenius norm."""
    W = np.asarray(W, dtype=np.float64)
    for k, m in enumerate(S.shape):
        if m != W.shape[1]:
            raise ValueError(f"Core {k} has {m} grid points but W has {W.shape[1]} columns")
    projected = TensorTrain(tuple(np.einsum("ajb,ij->aib", core, W) for core in S.cores))
    ortho = right_left_orthogonalize(projected)
    norm = frobenius_norm(ortho)
    if not np.isfinite(norm) or norm == 0.0:
        raise DegenerateDensityError(f"Coefficient tensor has Frobenius norm {norm}")
    logger.debug(f"Coefficient train ranks={ortho.ranks}, pre-normalization norm={norm:.6e}")
    return CoefficientTT(ortho=scale_first_core(ortho, 1.0 / norm), basis=Basis(W.shape[0]))


def q0_eval(c: CoefficientTT, x: np.ndarray) -> Union[float, np.ndarray]:
    """q0 at a point of shape (d,) or a batch of shape (N, d)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    vec = np.ones((x.shape[0], 1))
    for k, core in enumerate(c.ortho.cores):
        vec = np.einsum("na,ni,aib->nb", vec, c.basis(x[:, k]), core)
    values = vec[:, 0]
    return float(values[0]) if single else values


def next_conditional(c: CoefficientTT, state: ConditionalState) -> UnivariateDensity:
    B = np.einsum("a,aib->ib", state.v, c.ortho.cores[state.k])
    return UnivariateDensity(B=B, basis=c.basis, k=state.k)


def _trapezoid_quantiles(values: np.ndarray, grid: np.ndarray, u: np.ndarray,
                         offset: int = 0) -> np.ndarray:
    """Row-wise inverse of the trapezoidal CDF built from ``values`` on a uniform grid."""
    values = np.maximum(values, 0.0)
    dx = grid[1] - grid[0]
    steps = 0.5 * (values[:, 1:] + values[:, :-1]) * dx
    cdf = np.concatenate([np.zeros((len(values), 1)), np.cumsum(steps, axis=1)], axis=1)
    mass = cdf[:, -1]
    bad = np.flatnonzero(~(mass > MIN_CONDITIONAL_MASS))
    if bad.size:
        raise DegenerateConditionalError(
            f"Conditional mass {mass[bad[0]]:.3e} is numerically zero", offset + int(bad[0])
        )
    target = u * mass
    upper = np.clip(np.sum(cdf < target[:, None], axis=1), 1, len(grid) - 1)
    rows = np.arange(len(values))
    lo = cdf[rows, upper - 1]
    width = cdf[rows, upper] - lo
    safe = np.where(width > 0, width, 1.0)
    frac = np.where(width > 0, (target - lo) / safe, 0.0)
    return grid[upper - 1] + np.clip(frac, 0.0, 1.0) * dx


def inverse_cdf_sample(f: Callable[[np.ndarray], np.ndarray], u: float,
                       grid_size: int = DEFAULT_GRID_SIZE) -> float:
    """Quantile of a nonnegative univariate density on [-1, 1] at level ``u``."""
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"Uniform variate must lie in [0, 1], got {u}")
    grid = np.linspace(-1.0, 1.0, grid_size)
    values = np.asarray(f(grid), dtype=np.float64)[None, :]
    return float(_trapezoid_quantiles(values, grid, np.array([u]))[0])


def _sample_block(c: CoefficientTT, uniforms: np.ndarray, grid: np.ndarray,
                  phi_grid: np.ndarray, offset: int) -> tuple:
    count, d = uniforms.shape
    points = np.empty((count, d))
    vec = np.ones((count, 1))
    for k, core in enumerate(c.ortho.cores):
        B = np.einsum("na,aib->nib", vec, core)
        values = np.sum(np.einsum("gi,nib->ngb", phi_grid, B) ** 2, axis=2)
        points[:, k] = _trapezoid_quantiles(values, grid, uniforms[:, k], offset)
        vec = np.einsum("ni,nib->nb", c.basis(points[:, k]), B)
    with np.errstate(divide="ignore"):
        log_density = 2.0 * np.log(np.abs(vec[:, 0]))
    return points, log_density


def draw_samples(c: CoefficientTT, count: int, seed: int, grid_size: int = DEFAULT_GRID_SIZE,
                 workers: int = 1, chunk_size: Optional[int] = None) -> SampleBatch:
    """Draw ``count`` exact samples from p0.

    Work is cut into fixed-size chunks, each with its own RNG stream spawned
    from ``seed``, so the result does not depend on ``workers``.
    """
    if count < 0:
        raise ValueError(f"Sample count must be >= 0, got {count}")
    grid = np.linspace(-1.0, 1.0, grid_size)
    phi_grid = c.basis(grid)
    if chunk_size is None:
        chunk_size = max(1, BLOCK_BUDGET // (grid_size * c.ortho.max_rank))
    starts = list(range(0, count, chunk_size))
    streams = np.random.SeedSequence(seed).spawn(len(starts))

    def run_chunk(i: int) -> tuple:
        size = min(chunk_size, count - starts[i])
        uniforms = np.random.default_rng(streams[i]).random((size, c.d))
        return _sample_block(c, uniforms, grid, phi_grid, starts[i])

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts: List[tuple] = list(pool.map(run_chunk, range(len(starts))))
    else:
        parts = [run_chunk(i) for i in range(len(starts))]

    if parts and len(parts[0][0]) and logger.isEnabledFor(logging.DEBUG):
        head_points, head_log = parts[0][0][:CHECK_POINTS], parts[0][1][:CHECK_POINTS]
        with np.errstate(divide="ignore"):
            direct = 2.0 * np.log(np.abs(q0_eval(c, head_points)))
        gap = float(np.max(np.abs(head_log - direct)))
        logger.debug(f"Sampler density check on first chunk: max |log f_d - log q0^2| = {gap:.3e}")
        if not gap <= DENSITY_CHECK_TOL:
            logger.warning(f"⚠️  Sampler log-density disagrees with q0^2 by {gap:.3e}")

    if parts:
        points = np.concatenate([p for p, _ in parts])
        log_density = np.concatenate([l for _, l in parts])
    else:
        points, log_density = np.empty((0, c.d)), np.empty(0)
    logger.debug(f"Drew {count} samples from p0 (d={c.d}, G={grid_size}, chunks={len(starts)})")
    return SampleBatch(points=points, log_density=log_density, seed=seed)


def save_samples_csv(batch: SampleBatch, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = [f"x{k + 1}" for k in range(batch.d)]
    frame = pd.DataFrame(batch.points, columns=columns)
    frame["logp0"] = batch.log_density
    frame.to_csv(path, index=False, float_format="%.17g")
    return path


def save_coefficient_tt(c: CoefficientTT, path: Union[str, Path]) -> Path:
    return save_tt(c.ortho, path)


def load_coefficient_tt(path: Union[str, Path]) -> CoefficientTT:
    """Reload a cached coefficient train exactly as it was saved.

    The cores are used as stored, so a cached base draws the same samples as
    the one that wrote it. Files that are not unit-norm right-left orthogonal
    trains are rejected.
    """
    tt = load_tt(path)
    deviation = gram_deviation(tt)
    if not deviation <= ORTHO_TOL:
        raise SerializationError(f"{path} is not in right-left orthogonal form "
                                 f"(Gram deviation {deviation:.3e})")
    ortho = OrthoTensorTrain(tt.cores)
    norm = frobenius_norm(ortho)
    if norm == 0.0 or not np.isfinite(norm):
        raise DegenerateDensityError(f"Coefficient tensor in {path} has norm {norm}")
    if abs(norm - 1.0) > ORTHO_TOL:
        raise SerializationError(f"Coefficient tensor in {path} has norm {norm:.12f}, expected 1")
    return CoefficientTT(ortho=ortho, basis=Basis(ortho.shape[0]))
