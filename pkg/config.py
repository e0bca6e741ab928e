"""Environment settings, logging setup and JSON experiment configuration."""
import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from dotenv import load_dotenv

from errors import ConfigError

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

# Load environment variables
load_dotenv()


class Config:
    """Process-level settings read from the environment (or a .env file)."""

    OUTPUT_DIR: str = os.getenv('TF_OUTPUT_DIR', 'output')
    CACHE_DIR: str = os.getenv('TF_CACHE_DIR', 'cache')
    DATABASE_URL: str = os.getenv('TF_DATABASE_URL', 'sqlite:///tensorizing_flow.db')
    THREADS: int = int(os.getenv('TF_THREADS', '1'))
    LOG_LEVEL: str = os.getenv('TF_LOG_LEVEL', 'INFO')
    LOG_FILE: Optional[str] = os.getenv('TF_LOG_FILE', 'tensorizing_flow.log')
    SAMPLER_GRID: int = int(os.getenv('TF_SAMPLER_GRID', '1024'))

    @classmethod
    def validate(cls) -> bool:
        """Check the settings are usable; every problem is logged."""
        problems = []
        if cls.THREADS < 1:
            problems.append(f"TF_THREADS must be >= 1 (got {cls.THREADS})")
        if cls.SAMPLER_GRID < 2:
            problems.append(f"TF_SAMPLER_GRID must be >= 2 (got {cls.SAMPLER_GRID})")
        if logging.getLevelName(str(cls.LOG_LEVEL).upper()) not in (
                logging.DEBUG, logging.INFO, logging.WARNING, logging.ERROR, logging.CRITICAL):
            problems.append(f"TF_LOG_LEVEL is not a logging level: {cls.LOG_LEVEL}")
        if not cls.DATABASE_URL:
            problems.append("TF_DATABASE_URL is empty")

        if problems:
            for problem in problems:
                logger.error(problem)
            logger.error("Fix the environment or the .env file")
            return False
        return True

    @classmethod
    def log_config(cls) -> None:
        logger.info("=" * 50)
        logger.info("Tensorizing Flow Configuration")
        logger.info("=" * 50)
        logger.info(f"Output dir: {cls.OUTPUT_DIR}")
        logger.info(f"Cache dir: {cls.CACHE_DIR}")
        logger.info(f"Database: {cls.DATABASE_URL}")
        logger.info(f"Threads: {cls.THREADS}")
        logger.info(f"Sampler grid: {cls.SAMPLER_GRID}")
        logger.info("=" * 50)

        if cls.THREADS == 1:
            logger.warning("⚠️  Running single-threaded - set TF_THREADS to parallelize seeds and sampling")


def configure_logging(level: Optional[str] = None, log_file: Optional[str] = None) -> None:
    """Stream handler always, plus a file handler when a log file is configured."""
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    log_file = Config.LOG_FILE if log_file is None else log_file
    if log_file:
        handlers.insert(0, logging.FileHandler(log_file))
    logging.basicConfig(
        level=getattr(logging, str(level or Config.LOG_LEVEL).upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )


# -- experiment configuration ------------------------------------------------

MODELS = ("mixture", "gl1d", "gl2d", "double_well", "gaussian")
BASELINES = ("tt", "gaussian")


@dataclass(frozen=True)
class ModelConfig:
    name: str
    d: int
    beta: Optional[float] = None
    delta: Optional[float] = None
    h: Optional[float] = None
    box: Optional[Any] = None
    params: Dict[str, Any] = field(default_factory=dict)

    def energy_kwargs(self) -> Dict[str, Any]:
        kwargs = {"beta": self.beta, "delta": self.delta, "h": self.h}
        kwargs.update(self.params)
        return kwargs


@dataclass(frozen=True)
class BaseConfig:
    """Squared-TT base: n basis functions, m quadrature nodes, cross rank and sweeps.

    ``grid_size`` is the inverse-CDF grid of the sampler; TF_SAMPLER_GRID when unset.
    """

    n: int = 30
    m: int = 60
    rank: int = 2
    sweeps: int = 4
    grid_size: int = field(default_factory=lambda: Config.SAMPLER_GRID)


@dataclass(frozen=True)
class ReferenceConfig:
    enabled: bool = True
    n: Optional[int] = None
    m: Optional[int] = None
    rel_tol: float = 1e-10
    rank_cap: int = 200
    samples: int = 10_000


@dataclass(frozen=True)
class TrainingSection:
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
    train_order: int = 10
    train_probes: int = 1
    eval_order: int = 20
    eval_probes: int = 64


@dataclass(frozen=True)
class AnalysisConfig:
    """Optional post-training outputs."""

    moment_samples: int = 0
    histogram_dims: Optional[List[int]] = None
    histogram_bins: int = 60
    coverage_samples: int = 0


SECTIONS = {
    "model": ModelConfig,
    "base": BaseConfig,
    "reference": ReferenceConfig,
    "training": TrainingSection,
    "analysis": AnalysisConfig,
}


def _build(cls, data: Dict[str, Any], where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"Unknown keys in '{where}': {', '.join(sorted(unknown))}")
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigError(f"Bad '{where}' section: {e}") from e


def _canonical_hash(data: Dict[str, Any]) -> str:
    text = json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    model: ModelConfig
    base: BaseConfig = field(default_factory=BaseConfig)
    reference: ReferenceConfig = field(default_factory=ReferenceConfig)
    training: TrainingSection = field(default_factory=TrainingSection)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    baseline: str = "tt"
    gaussian_variance: float = 0.2
    seed: int = 0
    runs: int = 10
    output_dir: str = "output"

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        data = dict(data)
        if "model" not in data:
            raise ConfigError("Experiment config needs a 'model' section")
        for key, section in SECTIONS.items():
            if key in data:
                if not isinstance(data[key], dict):
                    raise ConfigError(f"Section '{key}' must be an object")
                data[key] = _build(section, data[key], key)
        data.setdefault("name", data["model"].name)
        cfg = _build(cls, data, "experiment")
        if cfg.model.name not in MODELS:
            raise ConfigError(f"Unknown model '{cfg.model.name}' (expected one of {', '.join(MODELS)})")
        return cfg

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError as e:
            raise ConfigError(f"Config file not found: {path}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"Malformed JSON in {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"{path} must hold a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def with_overrides(self, **changes) -> "ExperimentConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        return replace(self, **changes)

    def validate(self) -> bool:
        problems = []
        if self.model.d < 1:
            problems.append(f"model.d must be >= 1 (got {self.model.d})")
        if self.base.rank < 1:
            problems.append(f"base.rank must be >= 1 (got {self.base.rank})")
        if self.base.n < 1 or self.base.m < 1:
            problems.append("base.n and base.m must be >= 1")
        if self.base.grid_size < 2:
            problems.append("base.grid_size must be >= 2")
        if self.baseline not in BASELINES:
            problems.append(f"baseline must be one of {BASELINES} (got '{self.baseline}')")
        if self.gaussian_variance <= 0:
            problems.append("gaussian_variance must be positive")
        if self.runs < 1:
            problems.append("runs must be >= 1")
        t = self.training
        if t.batch_size < 2 or t.batch_size > t.s_train:
            problems.append(f"training.batch_size must lie in [2, s_train] (got {t.batch_size})")
        if t.epochs < 0 or t.learning_rate <= 0 or t.clip <= 0:
            problems.append("training needs epochs >= 0, learning_rate > 0 and clip > 0")
        if self.analysis.histogram_dims is not None:
            dims = self.analysis.histogram_dims
            if len(dims) != 2 or not all(0 <= k < self.model.d for k in dims):
                problems.append(f"analysis.histogram_dims must be two valid coordinates (got {dims})")

        for problem in problems:
            logger.error(problem)
        return not problems

    def config_hash(self) -> str:
        return _canonical_hash(self.to_dict())

    def conditions_hash(self) -> str:
        """Hash of everything the TF and NF arms must share."""
        data = self.to_dict()
        data.pop("baseline")
        return _canonical_hash(data)

    def _base_fields(self) -> Dict[str, Any]:
        base = asdict(self.base)
        base.pop("grid_size")  # sampling only
        return base

    def base_hash(self) -> str:
        """Hash of the fields that determine the TT base."""
        return _canonical_hash({"model": asdict(self.model), "base": self._base_fields(), "seed": self.seed})

    def reference_hash(self) -> str:
        return _canonical_hash({"model": asdict(self.model), "base": self._base_fields(),
                                "reference": asdict(self.reference), "seed": self.seed})
