"""Residual flow layers y = x + BN(MLP(x)) with truncated-series log-determinants."""
import logging
import struct
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from errors import NumericError, SerializationError, SingularityError

logger = logging.getLogger(__name__)

FLOW_MAGIC = b"TFV1"
INIT_RANGE = 0.25
BN_MOMENTUM = 0.1
BN_EPS = 1e-5

Stats = Tuple[torch.Tensor, torch.Tensor]


@dataclass(frozen=True)
class LogdetConfig:
    """Truncation order M and Hutchinson probe count P."""

    order: int = 10
    probes: int = 1

    def __post_init__(self):
        if self.order < 1 or self.probes < 1:
            raise ValueError(f"Log-det series needs order >= 1 and probes >= 1, got {self}")


TRAIN_LOGDET = LogdetConfig(order=10, probes=1)
EVAL_LOGDET = LogdetConfig(order=20, probes=64)


class ResidualLayer(nn.Module):
    """One flow map F(x) = x + G(x), with G = BatchNorm(MLP(x))."""

    def __init__(self, d: int, width: int, depth: int):
        super().__init__()
        blocks: List[nn.Module] = [nn.Linear(d, width), nn.ReLU()]
        for _ in range(depth - 1):
            blocks += [nn.Linear(width, width), nn.ReLU()]
        blocks.append(nn.Linear(width, d))
        self.mlp = nn.Sequential(*blocks)
        self.bn = nn.BatchNorm1d(d, momentum=BN_MOMENTUM, eps=BN_EPS)

    @property
    def linears(self) -> List[nn.Linear]:
        return [m for m in self.mlp if isinstance(m, nn.Linear)]

    def norm_stats(self, x: torch.Tensor) -> Stats:
        """Statistics the branch normalizes with.

        In train mode these are the batch moments and stay attached to the
        parameters, so a log-det built on them differentiates the same map the
        forward pass applies. The per-sample Jacobian treats them as constants.
        """
        if not self.training:
            return self.bn.running_mean, self.bn.running_var
        h = self.mlp(x)
        return h.mean(0), h.var(0, unbiased=False)

    def branch(self, x: torch.Tensor, stats: Optional[Stats] = None) -> torch.Tensor:
        """G(x). With ``stats`` given, batch norm is the per-sample affine map they define."""
        h = self.mlp(x)
        if stats is None:
            return self.bn(h)
        mean, var = stats
        return F.batch_norm(h, mean, var, self.bn.weight, self.bn.bias, training=False, eps=self.bn.eps)

    def forward_with_stats(self, x: torch.Tensor) -> Tuple[torch.Tensor, Stats]:
        if self.training and x.shape[0] < 2:
            raise ValueError("Train-mode batch norm needs a batch of at least 2 samples")
        h = self.mlp(x)
        g = self.bn(h)
        if self.training:
            stats = (h.mean(0), h.var(0, unbiased=False))
        else:
            stats = (self.bn.running_mean, self.bn.running_var)
        return x + g, stats

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.forward_with_stats(x)[0]


class FlowModel(nn.Module):
    """Composition T = F_K o ... o F_1 of residual layers."""

    def __init__(self, d: int, width: int, depth: int, K: int):
        super().__init__()
        if min(d, width, depth, K) < 1:
            raise ValueError(f"Flow sizes must be positive: d={d} width={width} depth={depth} K={K}")
        self.d, self.width, self.depth = d, width, depth
        self.layers = nn.ModuleList([ResidualLayer(d, width, depth) for _ in range(K)])

    @property
    def K(self) -> int:
        return len(self.layers)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        for layer in self.layers:
            z = layer(z)
        return z


def init_flow(d: int, width: int, depth: int, K: int, seed: int) -> FlowModel:
    """Float64 flow with every MLP weight and bias uniform on [-0.25, 0.25]."""
    model = FlowModel(d, width, depth, K).double()
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for layer in model.layers:
            for linear in layer.linears:
                for param in (linear.weight, linear.bias):
                    param.copy_(torch.rand(param.shape, generator=gen, dtype=param.dtype)
                                * (2 * INIT_RANGE) - INIT_RANGE)
    return model


def layer_forward(layer: ResidualLayer, x: torch.Tensor, mode: str = "eval",
                  index: Optional[int] = None) -> torch.Tensor:
    was_training = layer.training
    layer.train(mode == "train")
    try:
        y = layer(x)
    finally:
        layer.train(was_training)
    if not torch.isfinite(y).all():
        raise NumericError("Non-finite activations in residual layer", layer=index)
    return y


def _rademacher(shape, generator: Optional[torch.Generator], dtype) -> torch.Tensor:
    return torch.randint(0, 2, shape, generator=generator).to(dtype) * 2 - 1


def logdet_series(branch: Union[ResidualLayer, Callable[[torch.Tensor], torch.Tensor]],
                  x: torch.Tensor, order: int = 10, probes: int = 1,
                  generator: Optional[torch.Generator] = None,
                  create_graph: bool = False) -> torch.Tensor:
    """Per-sample estimate of log det(I + DG) from a truncated power series.

    Each power term v^T (DG)^m v is a chain of vector-Jacobian products with
    Rademacher probes v, so DG is never materialized. Probe averages are taken
    per sample, returning shape (N,).
    """
    if isinstance(branch, ResidualLayer):
        branch = partial(branch.branch, stats=branch.norm_stats(x))
    n = x.shape[0]
    with torch.enable_grad():
        xs = x.repeat(probes, 1)
        if not xs.requires_grad:
            xs.requires_grad_(True)
        g = branch(xs)
        estimate = torch.zeros(xs.shape[0], dtype=x.dtype, device=x.device)
        if not g.requires_grad:
            return estimate[:n]
        v = _rademacher(xs.shape, generator, x.dtype)
        w = v
        for m in range(1, order + 1):
            (w,) = torch.autograd.grad(g, xs, grad_outputs=w, retain_graph=True,
                                       create_graph=create_graph, allow_unused=True)
            if w is None:
                break
            estimate = estimate + ((-1) ** (m + 1) / m) * torch.sum(w * v, dim=1)
    estimate = estimate.view(probes, n).mean(0)
    return estimate if create_graph else estimate.detach()


def logdet_exact(branch: Union[ResidualLayer, Callable[[torch.Tensor], torch.Tensor]],
                 x: torch.Tensor) -> torch.Tensor:
    """log |det(I + DG)| per sample from the dense Jacobian. Meant for small d."""
    if isinstance(branch, ResidualLayer):
        branch = partial(branch.branch, stats=branch.norm_stats(x))
    eye = torch.eye(x.shape[1], dtype=x.dtype)
    out = []
    for i in range(x.shape[0]):
        jac = torch.autograd.functional.jacobian(lambda p: branch(p[None, :])[0], x[i].detach())
        sign, logabs = torch.linalg.slogdet(eye + jac)
        if sign == 0 or not torch.isfinite(logabs):
            raise SingularityError(f"Residual layer Jacobian is singular at sample {i}")
        out.append(logabs)
    return torch.stack(out)


def flow_forward(model: FlowModel, z: torch.Tensor, mode: str = "eval",
                 cfg: LogdetConfig = EVAL_LOGDET, generator: Optional[torch.Generator] = None,
                 create_graph: bool = False, exact: bool = False) -> Tuple[torch.Tensor, torch.Tensor]:
    """Push ``z`` through the flow, returning (x, sum of per-layer log-dets)."""
    was_training = model.training
    model.train(mode == "train")
    try:
        x = z
        total = torch.zeros(z.shape[0], dtype=z.dtype, device=z.device)
        for i, layer in enumerate(model.layers):
            y, stats = layer.forward_with_stats(x)
            if not torch.isfinite(y).all():
                raise NumericError("Non-finite activations in residual layer", layer=i)
            branch = partial(layer.branch, stats=stats)
            if exact:
                total = total + logdet_exact(branch, x)
            else:
                total = total + logdet_series(branch, x, cfg.order, cfg.probes, generator, create_graph)
            x = y
    finally:
        model.train(was_training)
    return x, total


def lipschitz_bounds(model: FlowModel) -> List[float]:
    """Per-layer upper bound on Lip(G): product of weight spectral norms times max BN scale."""
    bounds = []
    with torch.no_grad():
        for layer in model.layers:
            bound = 1.0
            for linear in layer.linears:
                bound *= float(torch.linalg.matrix_norm(linear.weight, ord=2))
            bn = layer.bn
            scale = torch.abs(bn.weight) / torch.sqrt(bn.running_var + bn.eps)
            bounds.append(bound * float(scale.max()))
    return bounds


def _checkpoint_tensors(model: FlowModel):
    return [(name, t) for name, t in model.state_dict().items() if not name.endswith("num_batches_tracked")]


def save_checkpoint(model: FlowModel, path: Union[str, Path]) -> Path:
    """TFV1: magic, u64 header (d, width, depth, K), then every tensor as f64 in state order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(FLOW_MAGIC)
        fh.write(np.asarray([model.d, model.width, model.depth, model.K], dtype="<u8").tobytes())
        for _, tensor in _checkpoint_tensors(model):
            fh.write(tensor.detach().cpu().numpy().astype("<f8").tobytes())
    return path


def load_checkpoint(path: Union[str, Path]) -> FlowModel:
    data = Path(path).read_bytes()
    if data[:4] != FLOW_MAGIC:
        raise SerializationError(f"{path} is not a TFV1 checkpoint")
    try:
        d, width, depth, K = struct.unpack_from("<4Q", data, 4)
    except struct.error as e:
        raise SerializationError(f"Truncated TFV1 header in {path}") from e
    model = FlowModel(d, width, depth, K).double()
    offset = 4 + 32
    state = {}
    for name, tensor in _checkpoint_tensors(model):
        count = tensor.numel()
        if offset + 8 * count > len(data):
            raise SerializationError(f"Truncated TFV1 checkpoint {path} at {name}")
        flat = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
        state[name] = torch.from_numpy(flat.copy()).reshape(tensor.shape)
        offset += 8 * count
    model.load_state_dict(state, strict=False)
    model.eval()
    return model
