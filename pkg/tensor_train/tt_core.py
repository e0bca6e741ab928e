"""Tensor-train data structure: evaluation, norm, rescaling, right-left orthogonalization.

Cores are stored as (left rank, physical, right rank) arrays in C order.
"""
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np

from errors import BoundsError, NumericError, SerializationError

logger = logging.getLogger(__name__)

TT_MAGIC = b"TTV1"


def _freeze(core: np.ndarray) -> np.ndarray:
    arr = np.array(core, dtype=np.float64, order="C", copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TensorTrain:
    """A d-dimensional tensor as a chain of order-3 cores."""

    cores: Tuple[np.ndarray, ...]

    def __post_init__(self):
        cores = tuple(_freeze(c) for c in self.cores)
        if not cores:
            raise ValueError("A tensor train needs at least one core")
        for k, core in enumerate(cores):
            if core.ndim != 3:
                raise ValueError(f"Core {k} has {core.ndim} dimensions, expected 3")
            if min(core.shape) < 1:
                raise ValueError(f"Core {k} has an empty mode: {core.shape}")
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ValueError("Boundary ranks r_0 and r_d must both be 1")
        for k in range(len(cores) - 1):
            if cores[k].shape[2] != cores[k + 1].shape[0]:
                raise ValueError(
                    f"Bond mismatch between cores {k} and {k + 1}: "
                    f"{cores[k].shape[2]} != {cores[k + 1].shape[0]}"
                )
        object.__setattr__(self, "cores", cores)

    @property
    def d(self) -> int:
        return len(self.cores)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def ranks(self) -> Tuple[int, ...]:
        return (1,) + tuple(c.shape[2] for c in self.cores)

    @property
    def max_rank(self) -> int:
        return max(self.ranks)

    @property
    def is_right_left_orthogonal(self) -> bool:
        return False

    def with_cores(self, cores: Sequence[np.ndarray]) -> "TensorTrain":
        return type(self)(tuple(cores))


class OrthoTensorTrain(TensorTrain):
    """Tensor train whose cores 2..d have orthonormal rows (right-left form).

    Only the first core is unconstrained, so the Frobenius norm of the whole
    tensor is the norm of that core.
    """

    @property
    def is_right_left_orthogonal(self) -> bool:
        return True


def tt_eval(tt: TensorTrain, idx: Sequence[int]) -> float:
    """Evaluate a single entry as a product of core slices."""
    if len(idx) != tt.d:
        raise BoundsError(f"Expected {tt.d} indices, got {len(idx)}")
    vec = np.ones(1)
    for k, (core, i) in enumerate(zip(tt.cores, idx)):
        i = int(i)
        if not 0 <= i < core.shape[1]:
            raise BoundsError(f"Index {i} out of range for mode {k} of size {core.shape[1]}")
        vec = vec @ core[:, i, :]
    return float(vec[0])


def tt_eval_batch(tt: TensorTrain, indices: np.ndarray) -> np.ndarray:
    """Evaluate many entries at once; ``indices`` has shape (N, d)."""
    indices = np.asarray(indices, dtype=np.int64)
    if indices.ndim != 2 or indices.shape[1] != tt.d:
        raise BoundsError(f"Expected an (N, {tt.d}) index array, got shape {indices.shape}")
    if np.any(indices < 0) or np.any(indices >= np.array(tt.shape)):
        raise BoundsError("Index array has entries outside the tensor shape")
    vec = np.ones((indices.shape[0], 1))
    for k, core in enumerate(tt.cores):
        vec = np.einsum("na,nab->nb", vec, core[:, indices[:, k], :].transpose(1, 0, 2))
    return vec[:, 0]


def tt_full(tt: TensorTrain) -> np.ndarray:
    """Dense reconstruction. Only sensible for small trains."""
    full = tt.cores[0]
    for core in tt.cores[1:]:
        full = np.tensordot(full, core, axes=([-1], [0]))
    return full.reshape(tt.shape)


def right_left_orthogonalize(tt: TensorTrain) -> OrthoTensorTrain:
    """Sweep d -> 2 with a QR of each core's right unfolding.

    The R factor is pushed into the left neighbour, so the tensor is unchanged
    and cores 2..d end up with orthonormal rows.
    """
    cores: List[np.ndarray] = [np.array(c) for c in tt.cores]
    for k in range(tt.d - 1, 0, -1):
        r_left, n, r_right = cores[k].shape
        q, r = np.linalg.qr(cores[k].reshape(r_left, n * r_right).T)
        new_rank = q.shape[1]
        cores[k] = q.T.reshape(new_rank, n, r_right)
        cores[k - 1] = np.einsum("aib,cb->aic", cores[k - 1], r)
    if not all(np.all(np.isfinite(c)) for c in cores):
        raise NumericError("Non-finite values produced during orthogonalization")
    return OrthoTensorTrain(tuple(cores))


def gram_deviation(tt: TensorTrain) -> float:
    """Largest deviation of any core k >= 2 from the row-orthonormality identity."""
    worst = 0.0
    for core in tt.cores[1:]:
        mat = core.reshape(core.shape[0], -1)
        worst = max(worst, float(np.max(np.abs(mat @ mat.T - np.eye(core.shape[0])))))
    return worst


def frobenius_norm(tt: TensorTrain) -> float:
    """sqrt of the sum of squared entries."""
    if tt.is_right_left_orthogonal:
        return float(np.linalg.norm(tt.cores[0]))
    gram = np.ones((1, 1))
    for core in tt.cores:
        gram = np.einsum("ab,aic,bid->cd", gram, core, core)
    return float(np.sqrt(max(gram[0, 0], 0.0)))


def scale_first_core(tt: TensorTrain, c: float) -> TensorTrain:
    cores = list(tt.cores)
    cores[0] = cores[0] * float(c)
    return tt.with_cores(cores)


def save_tt(tt: TensorTrain, path: Union[str, Path]) -> Path:
    """Write the TTV1 binary format (little-endian u64 header, f64 cores)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = [tt.d]
    for core in tt.cores:
        header.extend(core.shape)
    with open(path, "wb") as fh:
        fh.write(TT_MAGIC)
        fh.write(np.asarray(header, dtype="<u8").tobytes())
        for core in tt.cores:
            fh.write(np.ascontiguousarray(core, dtype="<f8").tobytes())
    logger.debug(f"Saved tensor train d={tt.d} ranks={tt.ranks} to {path}")
    return path


def load_tt(path: Union[str, Path]) -> TensorTrain:
    data = Path(path).read_bytes()
    if data[:4] != TT_MAGIC:
        raise SerializationError(f"{path} is not a TTV1 file")
    offset = 4
    try:
        (d,) = struct.unpack_from("<Q", data, offset)
        offset += 8
        dims = np.frombuffer(data, dtype="<u8", count=3 * d, offset=offset).reshape(d, 3)
        offset += 24 * d
        cores = []
        for r_left, n, r_right in dims:
            count = int(r_left * n * r_right)
            flat = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
            cores.append(flat.reshape(int(r_left), int(n), int(r_right)))
            offset += 8 * count
    except (struct.error, ValueError) as e:
        raise SerializationError(f"Truncated TTV1 file {path}: {e}") from e
    return TensorTrain(tuple(cores))


def random_tt(shape: Iterable[int], rank: int, rng: np.random.Generator) -> TensorTrain:
    """Gaussian random train with bond ranks capped at ``rank``."""
    shape = list(shape)
    ranks = [1] + [rank] * (len(shape) - 1) + [1]
    return TensorTrain(tuple(
        rng.standard_normal((ranks[k], n, ranks[k + 1])) for k, n in enumerate(shape)
    ))
