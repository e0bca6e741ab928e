"""Unit tests for the tensor-train core."""
import numpy as np
import pytest

from errors import BoundsError, SerializationError
from tensor_train.tt_core import (
    OrthoTensorTrain,
    TensorTrain,
    frobenius_norm,
    gram_deviation,
    load_tt,
    random_tt,
    right_left_orthogonalize,
    save_tt,
    scale_first_core,
    tt_eval,
    tt_eval_batch,
    tt_full,
)


@pytest.fixture
def tt():
    return random_tt((4, 3, 5, 2), rank=3, rng=np.random.default_rng(7))


class TestTensorTrain:
    """Test suite for construction and evaluation."""

    def test_shape_and_ranks(self, tt):
        """Test shape and bond ranks are read from the cores."""
        assert tt.d == 4
        assert tt.shape == (4, 3, 5, 2)
        assert tt.ranks == (1, 3, 3, 3, 1)
        assert tt.max_rank == 3

    def test_boundary_ranks_enforced(self):
        """Test r_0 and r_d must be 1."""
        with pytest.raises(ValueError, match="Boundary"):
            TensorTrain((np.ones((2, 3, 1)),))

    def test_bond_mismatch(self):
        """Test adjacent cores must agree on their shared rank."""
        with pytest.raises(ValueError, match="Bond mismatch"):
            TensorTrain((np.ones((1, 2, 2)), np.ones((3, 2, 1))))

    def test_cores_are_read_only(self, tt):
        """Test stored cores cannot be mutated in place."""
        with pytest.raises(ValueError):
            tt.cores[0][0, 0, 0] = 1.0

    def test_eval_matches_dense(self, tt):
        """Test single-entry evaluation agrees with the dense tensor."""
        full = tt_full(tt)
        for idx in [(0, 0, 0, 0), (3, 2, 4, 1), (1, 0, 2, 1)]:
            assert tt_eval(tt, idx) == pytest.approx(full[idx], rel=1e-12, abs=1e-12)

    def test_batch_eval_matches_dense(self, tt):
        """Test batched evaluation agrees with the dense tensor."""
        rng = np.random.default_rng(0)
        idx = np.stack([rng.integers(0, n, size=50) for n in tt.shape], axis=1)
        full = tt_full(tt)
        expected = full[tuple(idx.T)]
        np.testing.assert_allclose(tt_eval_batch(tt, idx), expected, rtol=1e-12, atol=1e-12)

    def test_eval_out_of_range(self, tt):
        """Test out-of-range indices raise BoundsError."""
        with pytest.raises(BoundsError):
            tt_eval(tt, (4, 0, 0, 0))
        with pytest.raises(IndexError):
            tt_eval(tt, (0, 0, 0))

    def test_batch_eval_bad_shape(self, tt):
        """Test a batch with the wrong width is rejected."""
        with pytest.raises(BoundsError):
            tt_eval_batch(tt, np.zeros((3, 2), dtype=int))

    def test_single_core(self):
        """Test a one-dimensional train is a vector."""
        vec = np.array([1.0, -2.0, 3.0])
        tt = TensorTrain((vec.reshape(1, 3, 1),))
        np.testing.assert_allclose(tt_full(tt), vec)
        assert frobenius_norm(tt) == pytest.approx(np.linalg.norm(vec))


class TestOrthogonalization:
    """Test suite for right-left orthogonalization and norms."""

    def test_preserves_tensor(self, tt):
        """Test orthogonalization leaves every entry unchanged."""
        ortho = right_left_orthogonalize(tt)
        np.testing.assert_allclose(tt_full(ortho), tt_full(tt), rtol=1e-10, atol=1e-12)

    def test_rows_orthonormal(self, tt):
        """Test cores 2..d have orthonormal rows."""
        ortho = right_left_orthogonalize(tt)
        assert isinstance(ortho, OrthoTensorTrain)
        assert ortho.is_right_left_orthogonal
        assert gram_deviation(ortho) < 1e-12

    def test_norm_from_first_core(self, tt):
        """Test the orthogonal form's norm equals the dense Frobenius norm."""
        dense = np.linalg.norm(tt_full(tt))
        assert frobenius_norm(tt) == pytest.approx(dense, rel=1e-12)
        assert frobenius_norm(right_left_orthogonalize(tt)) == pytest.approx(dense, rel=1e-12)

    def test_oversized_ranks_shrink(self):
        """Test a bond wider than its unfolding is reduced."""
        rng = np.random.default_rng(1)
        tt = TensorTrain((rng.standard_normal((1, 2, 5)), rng.standard_normal((5, 2, 1))))
        ortho = right_left_orthogonalize(tt)
        assert ortho.ranks == (1, 2, 1)
        np.testing.assert_allclose(tt_full(ortho), tt_full(tt), atol=1e-12)

    def test_scale_first_core(self, tt):
        """Test rescaling multiplies every entry."""
        scaled = scale_first_core(tt, -2.5)
        np.testing.assert_allclose(tt_full(scaled), -2.5 * tt_full(tt))

    def test_scale_keeps_orthogonal_type(self, tt):
        """Test rescaling an orthogonal train keeps it orthogonal."""
        ortho = right_left_orthogonalize(tt)
        scaled = scale_first_core(ortho, 1.0 / frobenius_norm(ortho))
        assert isinstance(scaled, OrthoTensorTrain)
        assert frobenius_norm(scaled) == pytest.approx(1.0, abs=1e-12)


class TestSerialization:
    """Test suite for the TTV1 file format."""

    def test_round_trip(self, tt, tmp_path):
        """Test a saved train loads back bit for bit."""
        path = save_tt(tt, tmp_path / "a.ttv1")
        loaded = load_tt(path)
        assert loaded.ranks == tt.ranks
        for a, b in zip(loaded.cores, tt.cores):
            np.testing.assert_array_equal(a, b)

    def test_header_layout(self, tmp_path):
        """Test the header is magic, d, then (r_left, n, r_right) triples."""
        tt = TensorTrain((np.ones((1, 2, 1)),))
        data = save_tt(tt, tmp_path / "b.ttv1").read_bytes()
        assert data[:4] == b"TTV1"
        header = np.frombuffer(data, dtype="<u8", count=4, offset=4)
        assert header.tolist() == [1, 1, 2, 1]
        assert len(data) == 4 + 8 * 4 + 8 * 2

    def test_bad_magic(self, tmp_path):
        """Test a foreign file is rejected."""
        path = tmp_path / "c.ttv1"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(SerializationError):
            load_tt(path)

    def test_truncated(self, tt, tmp_path):
        """Test a cut-off file is rejected."""
        path = save_tt(tt, tmp_path / "d.ttv1")
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(SerializationError):
            load_tt(path)


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
