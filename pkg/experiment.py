"""Experiment harness: build and cache TT bases, train TF and NF arms, compute metrics, write outputs."""
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import torch

from config import Config, ExperimentConfig
from database.db_manager import DatabaseManager, file_sha256
from energy_models import EnergyModel, make_energy_model
from errors import (
    ConfigError,
    DegeneracyError,
    NumericError,
    OrderingViolation,
    TensorizingFlowError,
)
from flows.residual_flow import FlowModel, LogdetConfig, init_flow, save_checkpoint
from flows.training import ExperimentReport, RunReport, TrainConfig, merge_reports, train, vi_loss_terms
from tensor_train.basis_quad import Basis, gauss_legendre, weight_matrix
from tensor_train.sampler import (
    CoefficientTT,
    SampleBatch,
    build_coefficient_tt,
    draw_samples,
    load_coefficient_tt,
    save_coefficient_tt,
    save_samples_csv,
)
from tensor_train.tt_cross import CrossConfig, GridOracle, cross_approximate, reference_cross

logger = logging.getLogger(__name__)

ARMS = {"tt": "tf", "gaussian": "nf"}
MIN_SURVIVORS = 3


# -- metrics -----------------------------------------------------------------

def error_ratio(logz_true: float, logz_tf: float, logz_nf: float) -> float:
    """(logZ_true - logZ_TF) / (logZ_true - logZ_NF); both differences must be positive."""
    numerator = logz_true - logz_tf
    denominator = logz_true - logz_nf
    if numerator == denominator and numerator > 0:
        return 1.0
    if numerator <= 0 or denominator <= 0:
        raise OrderingViolation(numerator, denominator)
    return numerator / denominator


def draw_gaussian_corpus(d: int, count: int, variance: float, seed: int) -> SampleBatch:
    """N(0, variance * I) base corpus for the NF arm, with exact log-densities."""
    rng = np.random.default_rng(seed)
    points = rng.standard_normal((count, d)) * math.sqrt(variance)
    log_density = (-0.5 * np.sum(points ** 2, axis=1) / variance
                   - 0.5 * d * math.log(2.0 * math.pi * variance))
    return SampleBatch(points=points, log_density=log_density, seed=seed)


def push_samples(model: Optional[FlowModel], batch: SampleBatch, energy: EnergyModel) -> np.ndarray:
    """Map base samples through the flow and back to native coordinates."""
    z = torch.as_tensor(batch.points, dtype=torch.float64)
    with torch.no_grad():
        if model is not None:
            was_training = model.training
            model.eval()
            z = model(z)
            model.train(was_training)
        return energy.domain.from_cube(z, check=False).numpy()


def moment_map(samples: np.ndarray, side: int,
               reference: Optional[np.ndarray] = None) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Per-site sample mean as a side x side grid, plus |mean - reference| when given."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape[1] != side * side:
        raise ValueError(f"Moment map needs {side * side} sites, samples have {samples.shape[1]}")
    mean = samples.mean(axis=0).reshape(side, side)
    error = None if reference is None else np.abs(mean - np.asarray(reference).reshape(side, side))
    return mean, error


def emit_marginal_hist(samples: np.ndarray, dims: Sequence[int], bins: int,
                       bounds: Sequence[Tuple[float, float]],
                       path: Optional[Union[str, Path]] = None) -> pd.DataFrame:
    """2-D histogram density of two coordinates, normalized to integrate to one over ``bounds``."""
    i, j = dims
    density, x_edges, y_edges = np.histogram2d(
        samples[:, i], samples[:, j], bins=bins, range=[list(bounds[0]), list(bounds[1])], density=True
    )
    x_mid = 0.5 * (x_edges[1:] + x_edges[:-1])
    y_mid = 0.5 * (y_edges[1:] + y_edges[:-1])
    xx, yy = np.meshgrid(x_mid, y_mid, indexing="ij")
    frame = pd.DataFrame({f"x{i + 1}": xx.ravel(), f"x{j + 1}": yy.ravel(), "density": density.ravel()})
    frame.attrs["cell_area"] = float((x_edges[1] - x_edges[0]) * (y_edges[1] - y_edges[0]))
    if path is not None:
        frame.to_csv(path, index=False, float_format="%.12g")
    return frame


def mode_coverage(samples: np.ndarray, means: np.ndarray, dims: Sequence[int] = (-2, -1)) -> np.ndarray:
    """Fraction of samples whose nearest projected mean is each mode."""
    proj = samples[:, list(dims)]
    centers = means[:, list(dims)]
    nearest = np.argmin(((proj[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2), axis=1)
    return np.bincount(nearest, minlength=len(centers)) / max(len(samples), 1)


def energy_for(cfg: ExperimentConfig) -> EnergyModel:
    return make_energy_model(cfg.model.name, cfg.model.d, cfg.model.box, **cfg.model.energy_kwargs())


def oracle_from_energy(energy: EnergyModel, nodes: np.ndarray, threads: int = 1) -> GridOracle:
    """Grid oracle for q~ = exp(-U/2), shifted by U at the cube center to keep values in range."""
    offset = float(energy.numpy_energy(energy.domain.from_cube(np.zeros((1, energy.d))))[0])

    def q_tilde(points: np.ndarray) -> np.ndarray:
        return np.exp(-(energy.numpy_energy(energy.domain.from_cube(points)) - offset) / 2.0)

    return GridOracle(q_tilde, [nodes] * energy.d, threads=threads)


def train_config(cfg: ExperimentConfig, seed: int) -> TrainConfig:
    t = cfg.training
    return TrainConfig(
        batch_size=t.batch_size,
        learning_rate=t.learning_rate,
        epochs=t.epochs,
        flow_length=t.flow_length,
        width=t.width,
        depth=t.depth,
        lr_decay=t.lr_decay,
        clip=t.clip,
        s_train=t.s_train,
        s_holdout=t.s_holdout,
        seed=seed,
        train_logdet=LogdetConfig(t.train_order, t.train_probes),
        eval_logdet=LogdetConfig(t.eval_order, t.eval_probes),
    )


@dataclass
class BaseResult:
    coeff: CoefficientTT
    path: Path
    cache_hit: bool
    oracle_calls: int = 0


@dataclass
class ReferenceResult:
    coeff: CoefficientTT
    logz: float
    stderr: float
    max_rank: int
    rel_err: float
    cap_reached: bool
    warnings: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "logz": self.logz,
            "neg_logz": -self.logz,
            "stderr": self.stderr,
            "max_rank": self.max_rank,
            "rel_err": self.rel_err,
            "cap_reached": self.cap_reached,
            "warnings": self.warnings,
        }


@dataclass
class ComparisonResult:
    tf: ExperimentReport
    nf: ExperimentReport
    reference: Optional[ReferenceResult]
    error_ratio: Optional[float]
    violation: Optional[OrderingViolation]
    files: Dict[str, Path]


class ExperimentHarness:
    """Runs one experiment config against an output directory, cache and ledger."""

    def __init__(self, cfg: ExperimentConfig, db: Optional[DatabaseManager] = None,
                 threads: Optional[int] = None, cache_dir: Optional[Union[str, Path]] = None,
                 progress: bool = True):
        self.cfg = cfg
        self.db = db
        self.threads = max(1, threads or Config.THREADS)
        self.out_dir = Path(cfg.output_dir)
        self.cache_dir = Path(cache_dir or Config.CACHE_DIR)
        self.progress = progress
        self.energy = energy_for(cfg)
        self.manifest: List[dict] = []

    def initialize(self) -> bool:
        """Validate the config, prepare directories and the ledger."""
        if not self.cfg.validate():
            logger.error("❌ Experiment config validation failed")
            return False
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        if self.db is not None:
            self.db.init_db()
        logger.info(f"✅ Experiment '{self.cfg.name}' ready: d={self.cfg.model.d}, out={self.out_dir}")
        return True

    # -- bookkeeping ---------------------------------------------------------

    def _emit(self, path: Path, kind: str, config_hash: Optional[str] = None) -> Path:
        """Record an emitted file in the manifest (and ledger).

        manifest.txt is rewritten from this run's entries, one line per path.
        """
        config_hash = config_hash or self.cfg.config_hash()
        content_hash = file_sha256(path)
        self.manifest = [e for e in self.manifest if e["path"] != str(path)]
        self.manifest.append({"path": str(path), "content_hash": content_hash, "config_hash": config_hash})
        lines = [f"{e['path']},{e['content_hash']},{e['config_hash']}\n" for e in self.manifest]
        (self.out_dir / "manifest.txt").write_text("".join(lines))
        if self.db is not None:
            self.db.record_artifact(kind, path, config_hash, content_hash)
        return path

    def _event(self, severity: str, title: str, message: str = None, arm: str = None, seed: int = None):
        if self.db is not None:
            self.db.record_event(self.cfg.name, severity, title, message, arm, seed)

    def _cached(self, kind: str, key: str, path: Path) -> Optional[Path]:
        if self.db is not None:
            artifact = self.db.find_artifact(kind, key)
            return Path(artifact.path) if artifact else None
        return path if path.is_file() else None

    # -- base distributions ----------------------------------------------------

    def build_base(self, force: bool = False) -> BaseResult:
        """Cross-approximate q~ on the quadrature grid and normalize it into C, cached by config hash."""
        key = self.cfg.base_hash()
        path = self.cache_dir / f"base_{key[:16]}.ttv1"
        cached = None if force else self._cached("tt_base", key, path)
        if cached is not None:
            logger.info(f"✅ Base cache hit: {cached}")
            return BaseResult(coeff=load_coefficient_tt(cached), path=cached, cache_hit=True)

        base = self.cfg.base
        quad = gauss_legendre(base.m)
        oracle = oracle_from_energy(self.energy, quad.nodes, self.threads)
        cross_cfg = CrossConfig(max_rank=base.rank, n_sweeps=base.sweeps, seed=self.cfg.seed)
        try:
            S = cross_approximate(oracle, cross_cfg)
        except DegeneracyError as e:
            raise DegeneracyError(f"Building base for '{self.cfg.name}' (d={self.cfg.model.d}, "
                                  f"rank={base.rank}): {e}") from e
        coeff = build_coefficient_tt(S, weight_matrix(Basis(base.n), quad))
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        save_coefficient_tt(coeff, path)
        if self.db is not None:
            self.db.record_artifact("tt_base", path, key)
        logger.info(f"✅ Built TT base: ranks={coeff.ranks}, oracle calls={oracle.eval_count}")
        return BaseResult(coeff=coeff, path=path, cache_hit=False, oracle_calls=oracle.eval_count)

    def estimate_logz_true(self, samples: Optional[int] = None) -> ReferenceResult:
        """High-accuracy reference C_true and the identity-flow loss estimate of -log Z."""
        ref = self.cfg.reference
        n = ref.n or self.cfg.base.n
        m = ref.m or self.cfg.base.m
        quad = gauss_legendre(m)
        key = self.cfg.reference_hash()
        path = self.cache_dir / f"reference_{key[:16]}.ttv1"
        cached = self._cached("tt_reference", key, path)
        warnings: List[str] = []
        if cached is not None:
            coeff = load_coefficient_tt(cached)
            rel_err, cap_reached, warnings = _read_reference_meta(cached)
        else:
            oracle = oracle_from_energy(self.energy, quad.nodes, self.threads)
            result = reference_cross(oracle, rel_tol=ref.rel_tol, rank_cap=ref.rank_cap,
                                     n_sweeps=self.cfg.base.sweeps, seed=self.cfg.seed)
            coeff = build_coefficient_tt(result.tt, weight_matrix(Basis(n), quad))
            rel_err, cap_reached, warnings = result.rel_err, result.cap_reached, list(result.warnings)
            self.cache_dir.mkdir(parents=True, exist_ok=True)
            save_coefficient_tt(coeff, path)
            _write_reference_meta(path, rel_err, cap_reached, warnings)
            if self.db is not None:
                self.db.record_artifact("tt_reference", path, key)
            for w in warnings:
                self._event("warning", "Reference cross rank cap reached", w)

        count = samples or ref.samples
        batch = draw_samples(coeff, count, self.cfg.seed + 7919, self.cfg.base.grid_size, self.threads)
        with torch.no_grad():
            terms = vi_loss_terms(None, batch, self.energy).numpy()
        neg_logz = float(terms.mean())
        stderr = float(terms.std(ddof=1) / math.sqrt(len(terms))) if len(terms) > 1 else 0.0
        logger.info(f"Reference -log Z = {neg_logz:.6f} ± {stderr:.2e} (max rank {coeff.ortho.max_rank})")
        return ReferenceResult(coeff=coeff, logz=-neg_logz, stderr=stderr, max_rank=coeff.ortho.max_rank,
                               rel_err=rel_err, cap_reached=cap_reached, warnings=warnings)

    def corpus(self, baseline: str, base: Optional[BaseResult] = None) -> SampleBatch:
        t = self.cfg.training
        count = t.s_train + t.s_holdout
        if baseline == "tt":
            base = base or self.build_base()
            return draw_samples(base.coeff, count, self.cfg.seed, self.cfg.base.grid_size, self.threads)
        return draw_gaussian_corpus(self.cfg.model.d, count, self.cfg.gaussian_variance, self.cfg.seed)

    # -- training ----------------------------------------------------------------

    def _train_one(self, arm: str, corpus: SampleBatch, seed: int) -> Tuple[RunReport, Optional[FlowModel]]:
        t = self.cfg.training
        model = init_flow(self.cfg.model.d, t.width, t.depth, t.flow_length, seed)
        try:
            report = train(model, corpus, self.energy, train_config(self.cfg, seed), arm,
                           progress=self.progress and self.threads == 1)
        except TensorizingFlowError as e:
            logger.warning(f"⚠️  Run {arm} seed {seed} failed: {e}")
            return RunReport(arm=arm, seed=seed, failure=str(e)), None
        if report.best_state is not None:
            model.load_state_dict(report.best_state)
        return report, model

    def run_arm(self, baseline: str, corpus: SampleBatch,
                runs: Optional[int] = None) -> Tuple[ExperimentReport, Dict[int, FlowModel]]:
        """Train ``runs`` seeds on one corpus; abort unless enough of them survive."""
        arm = ARMS[baseline]
        seeds = [self.cfg.seed + i for i in range(runs or self.cfg.runs)]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            results = list(pool.map(lambda s: self._train_one(arm, corpus, s), seeds))

        models: Dict[int, FlowModel] = {}
        reports = []
        ckpt_dir = self.out_dir / "checkpoints"
        for report, model in results:
            reports.append(report)
            if self.db is not None:
                self.db.record_run(self.cfg.name, report, self.cfg.config_hash())
            if not report.ok:
                self._event("warning", f"Run failed ({arm})", report.failure, arm, report.seed)
                continue
            models[report.seed] = model
            ckpt_dir.mkdir(parents=True, exist_ok=True)
            self._emit(save_checkpoint(model, ckpt_dir / f"{arm}_seed{report.seed}.tfv1"), "checkpoint")

        required = min(MIN_SURVIVORS, len(seeds))
        if len(models) < required:
            msg = f"Only {len(models)} of {len(seeds)} {arm.upper()} runs survived (need {required})"
            self._event("error", "Comparison aborted", msg, arm)
            raise NumericError(msg)
        return merge_reports(arm, reports), models

    def _write_curves(self, reports: Dict[str, ExperimentReport], path: Path) -> Path:
        frame = pd.DataFrame({"epoch": np.arange(0, len(next(iter(reports.values())).holdout_losses) + 1)})
        for arm, report in reports.items():
            column = "loss" if len(reports) == 1 else f"loss_{arm}"
            frame[column] = [report.start_loss] + list(report.holdout_losses)
        frame.to_csv(path, index=False, float_format="%.10g")
        return self._emit(path, "csv")

    def _write_json(self, data: dict, path: Path) -> Path:
        path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default))
        return self._emit(path, "json")

    def train_single(self, runs: Optional[int] = None) -> ExperimentReport:
        """Train only the arm selected by ``baseline``."""
        corpus = self.corpus(self.cfg.baseline)
        report, _ = self.run_arm(self.cfg.baseline, corpus, runs)
        arm = ARMS[self.cfg.baseline]
        self._write_curves({arm: report}, self.out_dir / f"curves_{arm}.csv")
        self._write_json(report.to_dict(), self.out_dir / f"report_{arm}.json")
        return report

    def run_comparison(self, runs: Optional[int] = None) -> ComparisonResult:
        """Train TF and NF under identical conditions and compare them against the reference."""
        tf_cfg = self.cfg.with_overrides(baseline="tt")
        nf_cfg = self.cfg.with_overrides(baseline="gaussian")
        if tf_cfg.conditions_hash() != nf_cfg.conditions_hash():
            raise ConfigError("TF and NF configs differ in more than the baseline")

        logger.info("=" * 50)
        logger.info(f"Comparison: {self.cfg.name} (conditions {tf_cfg.conditions_hash()[:12]})")
        logger.info("=" * 50)

        base = self.build_base()
        tf_corpus = self.corpus("tt", base)
        nf_corpus = self.corpus("gaussian")
        tf, tf_models = self.run_arm("tt", tf_corpus, runs)
        nf, nf_models = self.run_arm("gaussian", nf_corpus, runs)

        reference = None
        ratio, violation = None, None
        if self.cfg.reference.enabled:
            reference = self.estimate_logz_true()
            for report in (tf, nf):
                report.logz_true = reference.logz
                report.logz_true_stderr = reference.stderr
                report.warnings.extend(reference.warnings)
            try:
                ratio = error_ratio(reference.logz, tf.logz_estimate, nf.logz_estimate)
                tf.error_ratio = nf.error_ratio = ratio
                logger.info(f"✅ Error ratio: {ratio:.4f}")
            except OrderingViolation as e:
                violation = e
                logger.warning(f"⚠️  {e}")
                self._event("warning", "Error ratio ordering violation", str(e))

        files = {"curves": self._write_curves({"tf": tf, "nf": nf}, self.out_dir / "curves.csv")}
        for arm, report in (("tf", tf), ("nf", nf)):
            files[f"curves_{arm}"] = self._write_curves({arm: report}, self.out_dir / f"curves_{arm}.csv")
        files.update(self._analysis(tf_corpus, nf_corpus, tf, nf, tf_models, nf_models, reference))

        summary = {
            "experiment": self.cfg.name,
            "config_hash": self.cfg.config_hash(),
            "conditions_hash": tf_cfg.conditions_hash(),
            "tf": tf.to_dict(),
            "nf": nf.to_dict(),
            "reference": reference.to_dict() if reference else None,
            "error_ratio": ratio,
            "ordering_violation": None if violation is None else {
                "numerator": violation.numerator, "denominator": violation.denominator},
        }
        files["summary"] = self._write_json(summary, self.out_dir / "summary.json")
        logger.info(f"TF final {tf.final_loss:.4f} | NF final {nf.final_loss:.4f}")
        return ComparisonResult(tf=tf, nf=nf, reference=reference, error_ratio=ratio,
                                violation=violation, files=files)

    # -- analysis ----------------------------------------------------------------

    def _best_model(self, report: ExperimentReport, models: Dict[int, FlowModel]) -> FlowModel:
        best = min((r for r in report.runs if r.ok), key=lambda r: r.best_loss)
        return models[best.seed]

    def _analysis(self, tf_corpus, nf_corpus, tf, nf, tf_models, nf_models,
                  reference: Optional[ReferenceResult]) -> Dict[str, Path]:
        a = self.cfg.analysis
        files: Dict[str, Path] = {}
        pushed = {
            "tf": push_samples(self._best_model(tf, tf_models), tf_corpus, self.energy),
            "nf": push_samples(self._best_model(nf, nf_models), nf_corpus, self.energy),
        }
        ref_samples = None
        if reference is not None and (a.moment_samples or a.histogram_dims or a.coverage_samples):
            count = max(a.moment_samples, a.coverage_samples, len(tf_corpus))
            ref_batch = draw_samples(reference.coeff, count, self.cfg.seed + 104729,
                                     self.cfg.base.grid_size, self.threads)
            ref_samples = push_samples(None, ref_batch, self.energy)

        if a.moment_samples and self.cfg.model.name == "gl2d":
            side = math.isqrt(self.cfg.model.d)
            truth = None
            if ref_samples is not None:
                truth, _ = moment_map(ref_samples[:a.moment_samples], side)
                files["moments_true"] = self._grid_csv(truth, "moments_true.csv")
            for arm, samples in pushed.items():
                mean, err = moment_map(samples[:a.moment_samples], side, truth)
                files[f"moments_{arm}"] = self._grid_csv(mean, f"moments_{arm}.csv")
                if err is not None:
                    files[f"moments_error_{arm}"] = self._grid_csv(err, f"moments_error_{arm}.csv")

        if a.histogram_dims:
            lower, upper = self.energy.box
            bounds = [(lower[k], upper[k]) for k in a.histogram_dims]
            sets = dict(pushed)
            if ref_samples is not None:
                sets["true"] = ref_samples
            for name, samples in sets.items():
                path = self.out_dir / f"hist_{name}.csv"
                emit_marginal_hist(samples, a.histogram_dims, a.histogram_bins, bounds, path)
                files[f"hist_{name}"] = self._emit(path, "csv")

        if a.coverage_samples and self.cfg.model.name == "mixture":
            means = self.energy.spec.means()
            for arm, report in (("tf", tf), ("nf", nf)):
                fractions = mode_coverage(pushed[arm][:a.coverage_samples], means)
                report.moments = {"mode_coverage": fractions.tolist()}
                logger.info(f"{arm.upper()} mode coverage: {np.round(fractions, 3).tolist()}")
        return files

    def _grid_csv(self, grid: np.ndarray, name: str) -> Path:
        path = self.out_dir / name
        pd.DataFrame(grid).to_csv(path, header=False, index=False, float_format="%.10g")
        return self._emit(path, "csv")

    # -- ledger ----------------------------------------------------------------

    def sample(self, count: int, path: Optional[Union[str, Path]] = None) -> SampleBatch:
        base = self.build_base()
        batch = draw_samples(base.coeff, count, self.cfg.seed, self.cfg.base.grid_size, self.threads)
        self._emit(save_samples_csv(batch, path or self.out_dir / "samples.csv"), "csv")
        return batch

    def report(self) -> dict:
        """Summarize what the ledger holds for this experiment."""
        if self.db is None:
            raise ConfigError("The report command needs a ledger database")
        runs = self.db.get_runs(self.cfg.name)
        summary = {"experiment": self.cfg.name, "arms": {}, "events": []}
        for arm in sorted({r.arm for r in runs}):
            arm_runs = [r for r in runs if r.arm == arm]
            finals = [r.final_loss for r in arm_runs if r.final_loss is not None and r.failure is None]
            summary["arms"][arm] = {
                "runs": len(arm_runs),
                "failed": sum(1 for r in arm_runs if r.failure is not None),
                "mean_final_loss": float(np.mean(finals)) if finals else None,
                "seeds": [r.seed for r in arm_runs],
            }
        summary["events"] = [e.to_dict() for e in self.db.get_events(self.cfg.name)]
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.out_dir / "ledger_report.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
        return summary


def _json_default(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


def _reference_meta_path(path: Path) -> Path:
    return Path(path).with_suffix(".json")


def _write_reference_meta(path: Path, rel_err: float, cap_reached: bool, warnings: List[str]) -> Path:
    """Store the reference cross diagnostics beside its cached train."""
    meta = _reference_meta_path(path)
    data = {"rel_err": float(rel_err), "cap_reached": bool(cap_reached), "warnings": list(warnings)}
    meta.write_text(json.dumps(data, indent=2, sort_keys=True))
    return meta


def _read_reference_meta(path: Path) -> Tuple[float, bool, List[str]]:
    meta = _reference_meta_path(path)
    if not meta.is_file():
        logger.warning(f"⚠️  No diagnostics stored beside cached reference {path}")
        return float("nan"), False, []
    data = json.loads(meta.read_text())
    return float(data["rel_err"]), bool(data["cap_reached"]), list(data["warnings"])
