"""TT-cross: build a tensor train from a limited number of black-box grid queries.

The sweep is a one-site alternating cross. Each core is rebuilt from the
fiber T[I_k, :, J_{k+1}], its column space is orthonormalized by QR, and maxvol
picks the rows that become the next nested index set. Ranks stay fixed at the
configured cap, which keeps the oracle budget predictable.
"""
import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.linalg import lu

from errors import DegeneracyError, OracleDataError
from tensor_train.tt_core import TensorTrain, tt_eval_batch

logger = logging.getLogger(__name__)

MAXVOL_DELTA = 0.01
MAXVOL_RANK_TOL = 1e-12


class GridOracle:
    """Black-box tensor T[J] = f(x^(j_1), ..., x^(j_d)) over per-dimension grids.

    ``function`` maps an (N, d) array of points to N values and must be safe
    to call from several threads at once.
    """

    def __init__(self, function: Callable[[np.ndarray], np.ndarray],
                 grids: Sequence[np.ndarray], threads: int = 1, chunk_size: int = 16384):
        self.function = function
        self.grids = [np.asarray(g, dtype=np.float64) for g in grids]
        self.threads = max(1, int(threads))
        self.chunk_size = chunk_size
        self._eval_count = 0
        self._lock = threading.Lock()

    @property
    def d(self) -> int:
        return len(self.grids)

    @property
    def shape(self) -> tuple:
        return tuple(len(g) for g in self.grids)

    @property
    def eval_count(self) -> int:
        return self._eval_count

    def points(self, indices: np.ndarray) -> np.ndarray:
        indices = np.asarray(indices, dtype=np.int64)
        return np.stack([self.grids[k][indices[:, k]] for k in range(self.d)], axis=1)

    def _evaluate_chunk(self, indices: np.ndarray) -> np.ndarray:
        values = np.asarray(self.function(self.points(indices)), dtype=np.float64).reshape(-1)
        with self._lock:
            self._eval_count += len(indices)
        return values

    def __call__(self, indices: np.ndarray) -> np.ndarray:
        indices = np.asarray(indices, dtype=np.int64).reshape(-1, self.d)
        chunks = [indices[s:s + self.chunk_size] for s in range(0, len(indices), self.chunk_size)]
        if self.threads > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                parts = list(pool.map(self._evaluate_chunk, chunks))
        else:
            parts = [self._evaluate_chunk(c) for c in chunks]
        values = np.concatenate(parts) if parts else np.empty(0)
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            raise OracleDataError(indices[bad[0]], float(values[bad[0]]))
        return values


@dataclass(frozen=True)
class CrossConfig:
    max_rank: int = 2
    n_sweeps: int = 4
    rel_tol: float = 1e-10
    seed: int = 0
    probe_count: int = 1000

    def __post_init__(self):
        if self.max_rank < 1:
            raise ValueError(f"max_rank must be >= 1, got {self.max_rank}")
        if self.n_sweeps < 1:
            raise ValueError(f"n_sweeps must be >= 1, got {self.n_sweeps}")
        if self.rel_tol <= 0:
            raise ValueError(f"rel_tol must be positive, got {self.rel_tol}")


def maxvol(A: np.ndarray, delta: float = MAXVOL_DELTA, sweep: Optional[int] = None,
           max_iters: Optional[int] = None) -> np.ndarray:
    """Rows of a tall p x r matrix whose r x r submatrix is quasi-dominant.

    Starts from the LU pivot rows and swaps rows until every entry of
    A @ inv(A[rows]) is bounded by 1 + delta. Ties go to the lowest row index.
    """
    A = np.asarray(A, dtype=np.float64)
    p, r = A.shape
    if p < r:
        raise ValueError(f"maxvol needs a tall matrix, got {p} x {r}")
    scale = np.linalg.norm(A, 2) if A.size else 0.0
    if scale == 0.0:
        raise DegeneracyError("maxvol received a zero matrix", sweep)
    perm, _, _ = lu(A)
    rows = np.argmax(perm, axis=0)[:r].astype(np.int64)
    sub_sv = np.linalg.svd(A[rows], compute_uv=False)
    if sub_sv[-1] <= MAXVOL_RANK_TOL * scale:
        raise DegeneracyError(
            f"maxvol matrix is rank deficient (smallest pivot singular value {sub_sv[-1]:.3e})", sweep
        )
    coeffs = np.linalg.solve(A[rows].T, A.T).T
    for _ in range(max_iters or 100 * r):
        flat = int(np.argmax(np.abs(coeffs)))
        i, j = divmod(flat, r)
        if abs(coeffs[i, j]) <= 1.0 + delta:
            break
        unit = np.zeros(r)
        unit[j] = 1.0
        coeffs -= np.outer(coeffs[:, j], coeffs[i, :] - unit) / coeffs[i, j]
        rows[j] = i
    return rows


def _bond_ranks(shape: Sequence[int], max_rank: int) -> List[int]:
    d = len(shape)
    ranks = [1]
    for k in range(1, d):
        left = math.prod(shape[:k])
        right = math.prod(shape[k:])
        ranks.append(int(min(max_rank, left, right)))
    ranks.append(1)
    return ranks


@dataclass
class SweepRecord:
    sweep: int
    max_rank: int
    eval_count: int
    rel_change: float


class TTCross:
    """Fixed-rank alternating cross on a GridOracle."""

    def __init__(self, oracle: GridOracle, cfg: CrossConfig):
        self.oracle = oracle
        self.cfg = cfg
        self.shape = oracle.shape
        self.d = oracle.d
        self.ranks = _bond_ranks(self.shape, cfg.max_rank)
        self.rng = np.random.default_rng(cfg.seed)
        self.left_sets: List[np.ndarray] = [np.zeros((1, 0), dtype=np.int64)] + [None] * self.d
        self.right_sets: List[np.ndarray] = [None] * self.d + [np.zeros((1, 0), dtype=np.int64)]
        self.history: List[SweepRecord] = []
        self._init_right_sets()
        self.probes = np.stack(
            [self.rng.integers(0, n, size=cfg.probe_count) for n in self.shape], axis=1
        )

    def _init_right_sets(self) -> None:
        for k in range(self.d - 1, 0, -1):
            nxt = self.right_sets[k + 1]
            n_k = self.shape[k]
            picks = self.rng.choice(n_k * len(nxt), size=self.ranks[k], replace=False)
            self.right_sets[k] = np.hstack([(picks // len(nxt))[:, None], nxt[picks % len(nxt)]])

    def _fiber(self, k: int, left: np.ndarray, right: np.ndarray) -> np.ndarray:
        r_left, r_right, n_k = len(left), len(right), self.shape[k]
        idx = np.empty((r_left, n_k, r_right, self.d), dtype=np.int64)
        idx[..., :k] = left[:, None, None, :]
        idx[..., k] = np.arange(n_k)[None, :, None]
        idx[..., k + 1:] = right[None, None, :, :]
        return self.oracle(idx.reshape(-1, self.d)).reshape(r_left, n_k, r_right)

    def _left_to_right(self, cores: List[np.ndarray], sweep: int) -> None:
        for k in range(self.d - 1):
            fiber = self._fiber(k, self.left_sets[k], self.right_sets[k + 1])
            r_left, n_k, _ = fiber.shape
            q, _ = np.linalg.qr(fiber.reshape(r_left * n_k, -1))
            rows = maxvol(q, sweep=sweep)
            cores[k] = np.linalg.solve(q[rows].T, q.T).T.reshape(r_left, n_k, len(rows))
            self.left_sets[k + 1] = np.hstack(
                [self.left_sets[k][rows // n_k], (rows % n_k)[:, None]]
            )
        k = self.d - 1
        cores[k] = self._fiber(k, self.left_sets[k], self.right_sets[k + 1])

    def _right_to_left(self, cores: List[np.ndarray], sweep: int) -> None:
        for k in range(self.d - 1, 0, -1):
            fiber = self._fiber(k, self.left_sets[k], self.right_sets[k + 1])
            r_left, n_k, r_right = fiber.shape
            q, _ = np.linalg.qr(fiber.reshape(r_left, n_k * r_right).T)
            cols = maxvol(q, sweep=sweep)
            cores[k] = np.linalg.solve(q[cols].T, q.T).reshape(len(cols), n_k, r_right)
            self.right_sets[k] = np.hstack(
                [(cols // r_right)[:, None], self.right_sets[k + 1][cols % r_right]]
            )
        cores[0] = self._fiber(0, self.left_sets[0], self.right_sets[1])

    def run(self) -> TensorTrain:
        if self.d == 1:
            return TensorTrain((self._fiber(0, self.left_sets[0], self.right_sets[1]),))
        cores: List[np.ndarray] = [None] * self.d
        previous: Optional[np.ndarray] = None
        tt = None
        for sweep in range(1, self.cfg.n_sweeps + 1):
            self._left_to_right(cores, sweep)
            self._right_to_left(cores, sweep)
            tt = TensorTrain(tuple(cores))
            current = tt_eval_batch(tt, self.probes)
            change = float("inf")
            if previous is not None:
                denom = max(float(np.max(np.abs(current))), np.finfo(float).tiny)
                change = float(np.max(np.abs(current - previous))) / denom
            self.history.append(SweepRecord(sweep, tt.max_rank, self.oracle.eval_count, change))
            logger.debug(
                f"Cross sweep {sweep}: ranks={tt.ranks} evals={self.oracle.eval_count} change={change:.3e}"
            )
            if change <= self.cfg.rel_tol:
                break
            previous = current
        return tt


def cross_approximate(oracle: GridOracle, cfg: CrossConfig) -> TensorTrain:
    """Fixed-rank TT approximation of the oracle tensor."""
    tt = TTCross(oracle, cfg).run()
    logger.info(f"TT-cross finished: d={tt.d} ranks={tt.ranks} oracle calls={oracle.eval_count}")
    return tt


@dataclass
class ReferenceCross:
    tt: TensorTrain
    rel_err: float
    max_rank: int
    cap_reached: bool
    warnings: List[str] = field(default_factory=list)


def sampled_rel_error(oracle: GridOracle, tt: TensorTrain, probes: np.ndarray) -> float:
    exact = oracle(probes)
    approx = tt_eval_batch(tt, probes)
    denom = max(float(np.max(np.abs(exact))), np.finfo(float).tiny)
    return float(np.max(np.abs(exact - approx))) / denom


def reference_cross(oracle: GridOracle, rel_tol: float = 1e-10, rank_cap: int = 200,
                    n_sweeps: int = 4, seed: int = 0, probe_count: int = 200) -> ReferenceCross:
    """Rank-adaptive cross: grow the rank until held-out entries match to ``rel_tol``.

    Each rank restarts from the seeded random index sets.
    """
    rng = np.random.default_rng(seed + 1)
    probes = np.stack([rng.integers(0, n, size=probe_count) for n in oracle.shape], axis=1)
    full_ranks = tuple(_bond_ranks(oracle.shape, math.prod(oracle.shape)))
    rank = 1
    best: Optional[ReferenceCross] = None
    while True:
        cfg = CrossConfig(max_rank=rank, n_sweeps=n_sweeps, rel_tol=rel_tol, seed=seed)
        tt = TTCross(oracle, cfg).run()
        err = sampled_rel_error(oracle, tt, probes)
        logger.debug(f"Reference cross rank {rank}: sampled rel err {err:.3e}")
        if best is None or err < best.rel_err:
            best = ReferenceCross(tt=tt, rel_err=err, max_rank=tt.max_rank, cap_reached=False)
        if err <= rel_tol or tuple(tt.ranks) == full_ranks:
            break
        if rank >= rank_cap:
            msg = f"Reference cross hit the rank cap {rank_cap} with sampled rel err {best.rel_err:.3e}"
            logger.warning(f"⚠️  {msg}")
            best.cap_reached = True
            best.warnings.append(msg)
            break
        rank = min(rank_cap, rank + max(1, rank // 2))
    logger.info(f"Reference cross: max rank {best.max_rank}, sampled rel err {best.rel_err:.3e}")
    return best
