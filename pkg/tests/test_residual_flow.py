"""Unit tests for residual flow layers and log-determinants."""
import math

import numpy as np
import pytest
import torch

from errors import NumericError, SerializationError, SingularityError
from flows.residual_flow import (
    FlowModel,
    LogdetConfig,
    ResidualLayer,
    flow_forward,
    init_flow,
    layer_forward,
    lipschitz_bounds,
    load_checkpoint,
    logdet_exact,
    logdet_series,
    save_checkpoint,
)


def zero_weights(model: torch.nn.Module) -> None:
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, torch.nn.Linear):
                module.weight.zero_()
                module.bias.zero_()


def batch(n=8, d=3, seed=0) -> torch.Tensor:
    return torch.rand((n, d), generator=torch.Generator().manual_seed(seed), dtype=torch.float64) * 2 - 1


class TestInit:
    """Test suite for flow construction."""

    def test_reproducible(self):
        """Test a fixed seed gives identical parameters."""
        a, b = init_flow(3, 8, 2, 2, seed=4), init_flow(3, 8, 2, 2, seed=4)
        for p, q in zip(a.parameters(), b.parameters()):
            assert torch.equal(p, q)

    def test_seeds_differ(self):
        """Test different seeds give different parameters."""
        a, b = init_flow(3, 8, 2, 2, seed=1), init_flow(3, 8, 2, 2, seed=2)
        assert not torch.equal(a.layers[0].linears[0].weight, b.layers[0].linears[0].weight)

    def test_uniform_range_and_dtype(self):
        """Test MLP weights lie in [-0.25, 0.25] and are float64."""
        model = init_flow(4, 16, 3, 2, seed=0)
        for layer in model.layers:
            assert len(layer.linears) == 4
            for linear in layer.linears:
                assert linear.weight.dtype == torch.float64
                assert float(linear.weight.abs().max()) <= 0.25
                assert float(linear.bias.abs().max()) <= 0.25

    def test_invalid_sizes(self):
        """Test non-positive sizes are rejected."""
        with pytest.raises(ValueError):
            FlowModel(3, 8, 2, 0)


class TestLayerForward:
    """Test suite for single residual layers."""

    def test_zero_weights_identity(self):
        """Test a zeroed MLP leaves the input unchanged."""
        layer = init_flow(3, 8, 2, 1, seed=0).layers[0]
        zero_weights(layer)
        x = batch()
        assert torch.equal(layer_forward(layer, x, "eval"), x)

    def test_hand_computed(self):
        """Test a depth-1 layer against a hand computation."""
        layer = ResidualLayer(2, 2, 1).double()
        first, last = layer.linears
        with torch.no_grad():
            first.weight.copy_(torch.eye(2, dtype=torch.float64))
            first.bias.copy_(torch.tensor([0.0, -1.0], dtype=torch.float64))
            last.weight.copy_(torch.tensor([[1.0, 2.0], [0.0, 1.0]], dtype=torch.float64))
            last.bias.copy_(torch.tensor([0.5, 0.0], dtype=torch.float64))
        x = torch.tensor([[1.0, 3.0]], dtype=torch.float64)
        expected = x + torch.tensor([[5.5, 2.0]], dtype=torch.float64) / math.sqrt(1 + 1e-5)
        torch.testing.assert_close(layer_forward(layer, x, "eval"), expected, rtol=1e-12, atol=1e-12)

    def test_eval_does_not_mutate(self):
        """Test inference twice gives identical outputs and statistics."""
        layer = init_flow(3, 8, 2, 1, seed=3).layers[0]
        x = batch()
        before = layer.bn.running_mean.clone()
        assert torch.equal(layer_forward(layer, x, "eval"), layer_forward(layer, x, "eval"))
        assert torch.equal(layer.bn.running_mean, before)

    def test_train_mode_updates_stats(self):
        """Test a train-mode pass moves the running statistics and restores the flag."""
        layer = init_flow(3, 8, 2, 1, seed=3).layers[0]
        layer.eval()
        before = layer.bn.running_mean.clone()
        layer_forward(layer, batch(), "train")
        assert not torch.equal(layer.bn.running_mean, before)
        assert not layer.training

    def test_train_mode_needs_batch(self):
        """Test train-mode batch norm rejects a single sample."""
        layer = init_flow(3, 8, 2, 1, seed=0).layers[0]
        with pytest.raises(ValueError):
            layer_forward(layer, batch(n=1), "train")

    def test_non_finite_names_layer(self):
        """Test NaN activations raise NumericError with the layer index."""
        layer = init_flow(3, 8, 2, 1, seed=0).layers[0]
        x = batch()
        x[2, 1] = float("nan")
        with pytest.raises(NumericError) as info:
            layer_forward(layer, x, "eval", index=5)
        assert info.value.layer == 5


class TestLogdet:
    """Test suite for series and exact log-determinants."""

    def test_zero_branch(self):
        """Test G = 0 gives log det 0 exactly."""
        out = logdet_series(lambda x: torch.zeros_like(x), batch(), order=10, probes=3)
        assert torch.equal(out, torch.zeros(8, dtype=torch.float64))

    def test_zero_weight_layer(self):
        """Test a zeroed layer has zero series and exact log-dets."""
        layer = init_flow(3, 8, 2, 1, seed=0).layers[0]
        zero_weights(layer)
        layer.eval()
        x = batch(n=4)
        assert torch.all(logdet_series(layer, x) == 0)
        assert torch.allclose(logdet_exact(layer, x), torch.zeros(4, dtype=torch.float64))

    def test_scaled_identity(self):
        """Test G(x) = 0.1 x gives 3 log 1.1 for any probe."""
        gen = torch.Generator().manual_seed(0)
        out = logdet_series(lambda x: 0.1 * x, batch(), order=20, probes=2, generator=gen)
        np.testing.assert_allclose(out.numpy(), 3 * math.log(1.1), atol=1e-10)

    def test_diagonal_linear(self):
        """Test a diagonal linear branch matches the closed form."""
        scale = torch.tensor([0.2, -0.3], dtype=torch.float64)
        x = batch(d=2)
        expected = math.log(1.2) + math.log(0.7)
        series = logdet_series(lambda v: v * scale, x, order=30, probes=1)
        np.testing.assert_allclose(series.numpy(), expected, atol=1e-10)
        np.testing.assert_allclose(logdet_exact(lambda v: v * scale, x).numpy(), expected, atol=1e-12)

    def test_singular(self):
        """Test G(x) = -x is a singular layer."""
        with pytest.raises(SingularityError):
            logdet_exact(lambda x: -x, batch(n=2))

    def test_series_estimates_exact(self):
        """Test many probes bring the series close to the exact value."""
        layer = init_flow(3, 8, 2, 1, seed=7).layers[0]
        layer.eval()
        x = batch(n=4, seed=2)
        gen = torch.Generator().manual_seed(1)
        series = logdet_series(layer, x, order=20, probes=4000, generator=gen)
        np.testing.assert_allclose(series.numpy(), logdet_exact(layer, x).numpy(), atol=0.05)

    def test_create_graph_keeps_gradient(self):
        """Test the series is differentiable with respect to the weights."""
        layer = init_flow(3, 8, 2, 1, seed=0).layers[0]
        layer.eval()
        out = logdet_series(layer, batch(), order=4, probes=1,
                            generator=torch.Generator().manual_seed(0), create_graph=True)
        assert out.requires_grad
        out.sum().backward()
        assert layer.linears[0].weight.grad is not None


class TestFlowForward:
    """Test suite for composing layers."""

    def test_zero_flow_is_identity(self):
        """Test K zero layers give x = z and log det 0."""
        model = init_flow(3, 8, 2, 3, seed=0)
        zero_weights(model)
        z = batch()
        x, logdet = flow_forward(model, z, "eval", LogdetConfig(5, 2))
        assert torch.equal(x, z)
        assert torch.all(logdet == 0)

    def test_restores_mode(self):
        """Test the training flag is restored after a pass."""
        model = init_flow(3, 8, 2, 2, seed=0)
        model.train()
        flow_forward(model, batch(), "eval")
        assert model.training

    def test_exact_matches_composition(self):
        """Test the exact log-det equals the log-det of the composed map."""
        model = init_flow(2, 6, 2, 2, seed=3)
        model.eval()
        z = batch(n=3, d=2)
        x, logdet = flow_forward(model, z, "eval", exact=True)
        for i in range(3):
            jac = torch.autograd.functional.jacobian(lambda p: model(p[None, :])[0], z[i])
            assert float(logdet[i]) == pytest.approx(float(torch.linalg.slogdet(jac)[1]), abs=1e-10)
        torch.testing.assert_close(x, model(z))

    def test_lipschitz_bounds(self):
        """Test one positive bound per layer."""
        bounds = lipschitz_bounds(init_flow(3, 8, 2, 4, seed=0))
        assert len(bounds) == 4
        assert all(b > 0 for b in bounds)


class TestCheckpoint:
    """Test suite for the TFV1 checkpoint format."""

    def test_round_trip(self, tmp_path):
        """Test weights and running statistics survive a save and load."""
        model = init_flow(3, 8, 2, 2, seed=5)
        model.train()
        model(batch(n=16))
        model.eval()
        loaded = load_checkpoint(save_checkpoint(model, tmp_path / "flow.tfv1"))
        assert (loaded.d, loaded.width, loaded.depth, loaded.K) == (3, 8, 2, 2)
        assert not loaded.training
        z = batch(seed=9)
        torch.testing.assert_close(loaded(z), model(z), rtol=0, atol=0)

    def test_bad_magic(self, tmp_path):
        """Test a foreign file is rejected."""
        path = tmp_path / "x.tfv1"
        path.write_bytes(b"TTV1" + b"\x00" * 40)
        with pytest.raises(SerializationError):
            load_checkpoint(path)

    def test_truncated(self, tmp_path):
        """Test a cut-off checkpoint is rejected."""
        path = save_checkpoint(init_flow(3, 8, 2, 1, seed=0), tmp_path / "y.tfv1")
        path.write_bytes(path.read_bytes()[:100])
        with pytest.raises(SerializationError):
            load_checkpoint(path)


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
