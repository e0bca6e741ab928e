"""Empirical VI loss, its gradient, and the Adam training loop."""
import copy
import logging
import time
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from tqdm import tqdm

from energy_models import EnergyModel
from errors import NumericError
from flows.residual_flow import (
    EVAL_LOGDET,
    TRAIN_LOGDET,
    FlowModel,
    LogdetConfig,
    flow_forward,
    lipschitz_bounds,
)
from tensor_train.sampler import SampleBatch

logger = logging.getLogger(__name__)

EVAL_PROBE_OFFSET = 1_000_003


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    learning_rate: float = 5e-4
    epochs: int = 200
    flow_length: int = 12
    width: int = 32
    depth: int = 5
    lr_decay: float = 0.9999
    clip: float = 1e4
    s_train: int = 10_000
    s_holdout: int = 10_000
    seed: int = 0
    eval_chunk: int = 1024
    train_logdet: LogdetConfig = TRAIN_LOGDET
    eval_logdet: LogdetConfig = EVAL_LOGDET

    def __post_init__(self):
        for name in ("batch_size", "learning_rate", "flow_length", "width", "depth",
                     "lr_decay", "clip", "s_train", "s_holdout", "eval_chunk"):
            if getattr(self, name) <= 0:
                raise ValueError(f"TrainConfig.{name} must be positive, got {getattr(self, name)}")
        if self.epochs < 0:
            raise ValueError(f"TrainConfig.epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 2:
            raise ValueError("Batch norm needs batch_size >= 2")

    @property
    def steps_per_epoch(self) -> int:
        return max(1, self.s_train // self.batch_size)


def _tensors(batch: SampleBatch) -> Tuple[torch.Tensor, torch.Tensor]:
    return (torch.as_tensor(batch.points, dtype=torch.float64),
            torch.as_tensor(batch.log_density, dtype=torch.float64))


def vi_loss_terms(model: Optional[FlowModel], batch: SampleBatch, energy: EnergyModel,
                  logdet_cfg: LogdetConfig = EVAL_LOGDET, mode: str = "eval",
                  generator: Optional[torch.Generator] = None,
                  create_graph: bool = False) -> torch.Tensor:
    """Per-sample log p0(z) - log|det DT(z)| + U(T(z)), in native coordinates.

    ``model=None`` is the identity flow.
    """
    z, log_p0 = _tensors(batch)
    if model is None:
        x, logdet = z, torch.zeros_like(log_p0)
    else:
        x, logdet = flow_forward(model, z, mode, logdet_cfg, generator, create_graph)
    terms = log_p0 - logdet + energy.cube_energy(x) - energy.domain.log_jacobian
    bad = torch.nonzero(~torch.isfinite(terms))
    if len(bad):
        raise NumericError("Non-finite VI loss term", sample_index=int(bad[0, 0]))
    return terms


def vi_loss(model: Optional[FlowModel], batch: SampleBatch, energy: EnergyModel,
            logdet_cfg: LogdetConfig = EVAL_LOGDET, mode: str = "eval",
            generator: Optional[torch.Generator] = None, create_graph: bool = False) -> torch.Tensor:
    return vi_loss_terms(model, batch, energy, logdet_cfg, mode, generator, create_graph).mean()


def loss_gradient(model: FlowModel, batch: SampleBatch, energy: EnergyModel,
                  logdet_cfg: LogdetConfig = TRAIN_LOGDET, probe_seed: int = 0,
                  mode: str = "train") -> Dict[str, torch.Tensor]:
    """Gradient of the probe-fixed, truncated loss with respect to every flow parameter."""
    gen = torch.Generator().manual_seed(probe_seed)
    loss = vi_loss(model, batch, energy, logdet_cfg, mode, gen, create_graph=True)
    names, params = zip(*model.named_parameters())
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    return {n: (g if g is not None else torch.zeros_like(p)) for n, p, g in zip(names, params, grads)}


def adam_step(params: Sequence[torch.Tensor], grads: Sequence[torch.Tensor],
              optimizer: torch.optim.Optimizer, clip: float = 1e4) -> None:
    """Entrywise clip to [-clip, clip], then one Adam update."""
    for p, g in zip(params, grads):
        p.grad = g.detach().clone()
    torch.nn.utils.clip_grad_value_(params, clip)
    optimizer.step()


def make_optimizer(model: FlowModel, cfg: TrainConfig):
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate, betas=(0.9, 0.999), eps=1e-8)
    scheduler = torch.optim.lr_scheduler.ExponentialLR(optimizer, gamma=cfg.lr_decay)
    return optimizer, scheduler


@dataclass
class RunReport:
    """One training run (one arm, one seed)."""

    arm: str
    seed: int
    start_loss: float = float("nan")
    start_stderr: float = float("nan")
    holdout_losses: List[float] = field(default_factory=list)
    holdout_stderrs: List[float] = field(default_factory=list)
    train_losses: List[float] = field(default_factory=list)
    best_loss: float = float("nan")
    best_epoch: int = -1
    lipschitz: List[float] = field(default_factory=list)
    seconds: float = 0.0
    failure: Optional[str] = None
    failure_step: Optional[int] = None
    best_state: Optional[dict] = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.failure is None

    @property
    def final_loss(self) -> float:
        return self.holdout_losses[-1] if self.holdout_losses else self.start_loss

    def to_dict(self, timing: bool = False) -> dict:
        """JSON-ready fields. Wall time is included only with ``timing=True``."""
        data = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "best_state"}
        data["final_loss"] = self.final_loss
        if not timing:
            data.pop("seconds")
        return data


def evaluate_holdout(model: FlowModel, holdout: SampleBatch, energy: EnergyModel,
                     cfg: TrainConfig) -> Tuple[float, float]:
    """Holdout mean loss and its standard error, inference mode, fixed probes."""
    gen = torch.Generator().manual_seed(cfg.seed + EVAL_PROBE_OFFSET)
    parts = []
    for start in range(0, len(holdout), cfg.eval_chunk):
        chunk = holdout.subset(slice(start, start + cfg.eval_chunk))
        with torch.no_grad():
            terms = vi_loss_terms(model, chunk, energy, cfg.eval_logdet, "eval", gen)
        parts.append(terms.detach().numpy())
    values = np.concatenate(parts)
    stderr = float(values.std(ddof=1) / np.sqrt(len(values))) if len(values) > 1 else 0.0
    return float(values.mean()), stderr


def train(model: FlowModel, corpus: SampleBatch, energy: EnergyModel, cfg: TrainConfig,
          arm: str = "tf", progress: bool = True) -> RunReport:
    """Train on the first S_train corpus points, validate on the next S_holdout each epoch."""
    if len(corpus) < cfg.s_train + cfg.s_holdout:
        raise ValueError(f"Corpus has {len(corpus)} points, need {cfg.s_train + cfg.s_holdout}")
    report = RunReport(arm=arm, seed=cfg.seed)
    started = time.perf_counter()
    train_set = corpus.subset(slice(0, cfg.s_train))
    holdout = corpus.subset(slice(cfg.s_train, cfg.s_train + cfg.s_holdout))
    rng = np.random.default_rng(cfg.seed)
    probe_gen = torch.Generator().manual_seed(cfg.seed)
    optimizer, scheduler = make_optimizer(model, cfg)
    params = list(model.parameters())
    step = 0
    try:
        report.start_loss, report.start_stderr = evaluate_holdout(model, holdout, energy, cfg)
        report.best_loss, report.best_epoch = report.start_loss, 0
        report.best_state = copy.deepcopy(model.state_dict())
        for epoch in tqdm(range(1, cfg.epochs + 1), desc=f"{arm} seed {cfg.seed}", disable=not progress):
            order = rng.permutation(cfg.s_train)
            epoch_losses = []
            for b in range(cfg.steps_per_epoch):
                batch = train_set.subset(order[b * cfg.batch_size:(b + 1) * cfg.batch_size])
                loss = vi_loss(model, batch, energy, cfg.train_logdet, "train", probe_gen, create_graph=True)
                grads = torch.autograd.grad(loss, params, allow_unused=True)
                grads = [g if g is not None else torch.zeros_like(p) for p, g in zip(params, grads)]
                adam_step(params, grads, optimizer, cfg.clip)
                scheduler.step()
                step += 1
                epoch_losses.append(float(loss.detach()))
            mean, stderr = evaluate_holdout(model, holdout, energy, cfg)
            report.train_losses.append(float(np.mean(epoch_losses)))
            report.holdout_losses.append(mean)
            report.holdout_stderrs.append(stderr)
            if mean < report.best_loss:
                report.best_loss, report.best_epoch = mean, epoch
                report.best_state = copy.deepcopy(model.state_dict())
            logger.debug(f"[{arm} seed {cfg.seed}] epoch {epoch}: train {epoch_losses[-1]:.4f} holdout {mean:.4f}")
    except NumericError as e:
        report.failure = str(e)
        report.failure_step = step
        logger.warning(f"⚠️  Run {arm} seed {cfg.seed} failed at step {step}: {e}")
    report.lipschitz = lipschitz_bounds(model)
    report.seconds = time.perf_counter() - started
    return report


@dataclass
class ExperimentReport:
    """Seed-averaged view of one arm; per-run reports are kept."""

    arm: str
    seeds: List[int]
    holdout_losses: List[float]
    start_loss: float
    final_loss: float
    final_losses: List[float]
    final_stderr: float
    lipschitz: List[float]
    seconds: float
    failures: List[dict] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    runs: List[RunReport] = field(default_factory=list, repr=False)
    logz_true: Optional[float] = None
    logz_true_stderr: Optional[float] = None
    error_ratio: Optional[float] = None
    moments: Optional[dict] = None

    @property
    def logz_estimate(self) -> float:
        return -self.final_loss

    def to_dict(self, timing: bool = False) -> dict:
        data = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "runs"}
        data["logz_estimate"] = self.logz_estimate
        data["runs"] = [r.to_dict(timing) for r in self.runs]
        if not timing:
            data.pop("seconds")
        return data


def merge_reports(arm: str, runs: Sequence[RunReport]) -> ExperimentReport:
    """Average the holdout curves of the surviving runs, ordered by seed."""
    runs = sorted(runs, key=lambda r: r.seed)
    ok = [r for r in runs if r.ok]
    failures = [{"seed": r.seed, "step": r.failure_step, "error": r.failure} for r in runs if not r.ok]
    if not ok:
        raise NumericError(f"No surviving runs in arm '{arm}'")
    curves = np.array([r.holdout_losses for r in ok], dtype=np.float64)
    finals = [r.final_loss for r in ok]
    return ExperimentReport(
        arm=arm,
        seeds=[r.seed for r in runs],
        holdout_losses=curves.mean(axis=0).tolist() if curves.size else [],
        start_loss=float(np.mean([r.start_loss for r in ok])),
        final_loss=float(np.mean(finals)),
        final_losses=finals,
        final_stderr=float(np.std(finals, ddof=1) / np.sqrt(len(finals))) if len(finals) > 1 else 0.0,
        lipschitz=[max(r.lipschitz) if r.lipschitz else 0.0 for r in ok],
        seconds=float(sum(r.seconds for r in runs)),
        failures=failures,
        runs=list(runs),
    )
