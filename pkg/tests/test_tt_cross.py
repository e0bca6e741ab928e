"""Unit tests for maxvol and TT-cross."""
import itertools

import numpy as np
import pytest

from errors import DegeneracyError, OracleDataError
from tensor_train.basis_quad import gauss_legendre
from tensor_train.tt_core import tt_full
from tensor_train.tt_cross import (
    CrossConfig,
    GridOracle,
    TTCross,
    _bond_ranks,
    cross_approximate,
    maxvol,
    reference_cross,
)


def dense(oracle: GridOracle) -> np.ndarray:
    idx = np.array(list(itertools.product(*[range(n) for n in oracle.shape])))
    return oracle(idx).reshape(oracle.shape)


def separable(points: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * np.sum(points ** 2, axis=1))


def rank_two(points: np.ndarray) -> np.ndarray:
    x, y, z = points.T
    return np.exp(-(x - 0.3) ** 2 - (y + 0.2) ** 2 - z ** 2) + 0.5 * np.exp(-2 * (x + 0.4) ** 2 - (y - 0.5) ** 2 - 3 * (z - 0.1) ** 2)


class TestMaxvol:
    """Test suite for dominant-submatrix row selection."""

    def test_identity_on_top(self):
        """Test stacked identity picks the identity rows."""
        A = np.vstack([np.eye(3), np.zeros((4, 3))])
        rows = maxvol(A)
        assert sorted(rows.tolist()) == [0, 1, 2]
        assert np.max(np.abs(A @ np.linalg.inv(A[rows]))) == pytest.approx(1.0)

    def test_single_column(self):
        """Test a column vector selects its largest entry."""
        assert maxvol(np.array([[1.0], [10.0], [3.0]])).tolist() == [1]

    def test_dominance(self):
        """Test every coefficient is bounded by 1 + delta."""
        A = np.random.default_rng(3).standard_normal((60, 6))
        rows = maxvol(A)
        assert len(set(rows.tolist())) == 6
        assert np.max(np.abs(A @ np.linalg.inv(A[rows]))) <= 1.01 + 1e-10

    def test_volume_beats_random_subsets(self):
        """Test the selected submatrix is at least as large as random picks."""
        rng = np.random.default_rng(11)
        A = rng.standard_normal((40, 5))
        best = abs(np.linalg.det(A[maxvol(A)]))
        random_best = max(abs(np.linalg.det(A[rng.choice(40, 5, replace=False)])) for _ in range(1000))
        assert best >= random_best / 1.01 ** 5

    def test_zero_matrix(self):
        """Test a zero matrix is degenerate."""
        with pytest.raises(DegeneracyError):
            maxvol(np.zeros((5, 2)))

    def test_rank_deficient_names_sweep(self):
        """Test a rank-deficient matrix reports the sweep."""
        A = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        with pytest.raises(DegeneracyError, match="sweep 3") as info:
            maxvol(A, sweep=3)
        assert info.value.sweep == 3

    def test_wide_matrix(self):
        """Test a wide matrix is rejected."""
        with pytest.raises(ValueError):
            maxvol(np.ones((2, 3)))


class TestGridOracle:
    """Test suite for the grid oracle."""

    def test_counts_evaluations(self):
        """Test every queried entry is counted."""
        oracle = GridOracle(separable, [np.linspace(-1, 1, 4)] * 2)
        oracle(np.array([[0, 1], [2, 3], [3, 3]]))
        assert oracle.eval_count == 3

    def test_threads_agree(self):
        """Test chunked threaded evaluation matches serial evaluation."""
        grids = [np.linspace(-1, 1, 6)] * 3
        serial = GridOracle(separable, grids)
        threaded = GridOracle(separable, grids, threads=3, chunk_size=7)
        np.testing.assert_array_equal(dense(serial), dense(threaded))
        assert threaded.eval_count == 216

    def test_non_finite_value(self):
        """Test a NaN from the function reports its grid index."""
        def bad(points):
            values = np.ones(len(points))
            values[(points[:, 0] > 0.9) & (points[:, 1] < -0.9)] = np.nan
            return values

        oracle = GridOracle(bad, [np.linspace(-1, 1, 3)] * 2)
        with pytest.raises(OracleDataError) as info:
            dense(oracle)
        assert info.value.index == (2, 0)


class TestCross:
    """Test suite for fixed-rank and rank-adaptive cross."""

    def test_bond_ranks_capped(self):
        """Test bond ranks never exceed the unfolding sizes."""
        assert _bond_ranks((2, 3, 4), 10) == [1, 2, 4, 1]
        assert _bond_ranks((5, 5, 5), 2) == [1, 2, 2, 1]

    def test_invalid_config(self):
        """Test non-positive ranks and sweeps are rejected."""
        with pytest.raises(ValueError):
            CrossConfig(max_rank=0)
        with pytest.raises(ValueError):
            CrossConfig(n_sweeps=0)

    def test_separable_rank_one_exact(self):
        """Test a product function is recovered exactly at rank 1."""
        nodes = gauss_legendre(10).nodes
        oracle = GridOracle(lambda p: np.exp(p[:, 0]) * (2 + np.sin(p[:, 1])) * (1 + p[:, 2] ** 2),
                            [nodes] * 3)
        tt = cross_approximate(oracle, CrossConfig(max_rank=1))
        truth = dense(oracle)
        assert tt.ranks == (1, 1, 1, 1)
        assert np.max(np.abs(tt_full(tt) - truth)) / np.max(np.abs(truth)) <= 1e-10

    def test_constant(self):
        """Test a constant oracle gives a constant train."""
        oracle = GridOracle(lambda p: np.full(len(p), 2.5), [np.linspace(-1, 1, 5)] * 4)
        tt = cross_approximate(oracle, CrossConfig(max_rank=1))
        np.testing.assert_allclose(tt_full(tt), 2.5, rtol=1e-12)

    def test_gaussian_five_dims(self):
        """Test a 5-d Gaussian on 9 nodes is resolved to 1e-3."""
        oracle = GridOracle(separable, [gauss_legendre(9).nodes] * 5)
        tt = cross_approximate(oracle, CrossConfig(max_rank=4, n_sweeps=4))
        truth = dense(oracle)
        assert np.max(np.abs(tt_full(tt) - truth)) / np.max(np.abs(truth)) <= 1e-3

    def test_rank_two_sum(self):
        """Test a sum of two products is recovered at rank 2."""
        oracle = GridOracle(rank_two, [gauss_legendre(8).nodes] * 3)
        tt = cross_approximate(oracle, CrossConfig(max_rank=2, n_sweeps=4))
        truth = dense(oracle)
        assert np.max(np.abs(tt_full(tt) - truth)) / np.max(np.abs(truth)) <= 1e-8

    def test_oracle_budget(self):
        """Test the query count stays within 4 d sweeps m r^2."""
        d, m, r, sweeps = 4, 7, 3, 3
        oracle = GridOracle(separable, [gauss_legendre(m).nodes] * d)
        cross_approximate(oracle, CrossConfig(max_rank=r, n_sweeps=sweeps, rel_tol=1e-300))
        assert oracle.eval_count <= 4 * d * sweeps * m * r ** 2

    def test_reproducible(self):
        """Test the same seed gives bitwise identical cores."""
        grids = [gauss_legendre(8).nodes] * 3
        a = cross_approximate(GridOracle(rank_two, grids), CrossConfig(max_rank=2, seed=5))
        b = cross_approximate(GridOracle(rank_two, grids), CrossConfig(max_rank=2, seed=5))
        for x, y in zip(a.cores, b.cores):
            np.testing.assert_array_equal(x, y)

    def test_one_dimension(self):
        """Test a one-dimensional oracle is read as a vector."""
        nodes = np.linspace(-1, 1, 6)
        oracle = GridOracle(lambda p: 1 + p[:, 0] ** 2, [nodes])
        tt = TTCross(oracle, CrossConfig()).run()
        np.testing.assert_allclose(tt_full(tt), 1 + nodes ** 2)

    def test_history_recorded(self):
        """Test each sweep is logged with its query count."""
        oracle = GridOracle(rank_two, [gauss_legendre(6).nodes] * 3)
        cross = TTCross(oracle, CrossConfig(max_rank=2, n_sweeps=3, rel_tol=1e-300))
        cross.run()
        assert [h.sweep for h in cross.history] == [1, 2, 3]
        counts = [h.eval_count for h in cross.history]
        assert counts == sorted(counts)


class TestReferenceCross:
    """Test suite for the rank-adaptive reference cross."""

    def test_separable_stops_at_rank_one(self):
        """Test a product function needs no rank growth."""
        oracle = GridOracle(separable, [gauss_legendre(10).nodes] * 3)
        result = reference_cross(oracle, rel_tol=1e-10)
        assert result.max_rank == 1
        assert result.rel_err <= 1e-10
        assert not result.cap_reached

    def test_rank_two_converges(self):
        """Test the rank grows until held-out entries match."""
        oracle = GridOracle(rank_two, [gauss_legendre(8).nodes] * 3)
        result = reference_cross(oracle, rel_tol=1e-10)
        assert result.rel_err <= 1e-10
        assert result.max_rank >= 2

    def test_cap_reached(self):
        """Test hitting the rank cap returns the best result with a warning."""
        oracle = GridOracle(rank_two, [gauss_legendre(8).nodes] * 3)
        result = reference_cross(oracle, rel_tol=1e-14, rank_cap=1)
        assert result.cap_reached
        assert result.max_rank == 1
        assert result.warnings and "rank cap" in result.warnings[0]

    def test_each_rank_restarts(self):
        """Test the train kept at a rank equals a fresh fixed-rank cross at that rank."""
        nodes = [gauss_legendre(8).nodes] * 3
        result = reference_cross(GridOracle(rank_two, nodes), rel_tol=1e-14, rank_cap=2, n_sweeps=4, seed=3)
        cfg = CrossConfig(max_rank=2, n_sweeps=4, rel_tol=1e-14, seed=3)
        direct = TTCross(GridOracle(rank_two, nodes), cfg).run()
        for kept, fresh in zip(result.tt.cores, direct.cores):
            np.testing.assert_array_equal(kept, fresh)


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
