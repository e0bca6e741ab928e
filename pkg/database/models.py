"""Database models for the experiment ledger: runs, loss curves, artifacts and events."""
from sqlalchemy import Column, Integer, String, Float, DateTime, Text, Enum, ForeignKey
from sqlalchemy.orm import declarative_base, relationship
from datetime import datetime
import enum

Base = declarative_base()


class RunStatus(enum.Enum):
    """Training run outcome."""
    COMPLETED = "completed"
    FAILED = "failed"


class EventSeverity(enum.Enum):
    INFO = "info"
    WARNING = "warning"
    ERROR = "error"


class ExperimentRun(Base):
    """One trained flow (one arm, one seed)."""
    __tablename__ = 'experiment_runs'

    id = Column(Integer, primary_key=True, autoincrement=True)
    timestamp = Column(DateTime, default=datetime.utcnow, nullable=False, index=True)
    experiment = Column(String(100), nullable=False, index=True)
    arm = Column(String(20), nullable=False)  # 'tf' or 'nf'
    seed = Column(Integer, nullable=False)
    config_hash = Column(String(64), nullable=False, index=True)
    status = Column(Enum(RunStatus), default=RunStatus.COMPLETED, nullable=False)

    start_loss = Column(Float)
    final_loss = Column(Float)
    best_loss = Column(Float)
    best_epoch = Column(Integer)
    max_lipschitz = Column(Float)
    seconds = Column(Float)

    failure_step = Column(Integer)
    failure = Column(Text)

    epochs = relationship("EpochLoss", back_populates="run", cascade="all, delete-orphan",
                          order_by="EpochLoss.epoch")

    def __repr__(self):
        return f"<ExperimentRun(id={self.id}, {self.experiment}/{self.arm} seed={self.seed} {self.status.value})>"

    def to_dict(self):
        return {
            'id': self.id,
            'timestamp': self.timestamp.isoformat() if self.timestamp else None,
            'experiment': self.experiment,
            'arm': self.arm,
            'seed': self.seed,
            'config_hash': self.config_hash,
            'status': self.status.value,
            'start_loss': self.start_loss,
            'final_loss': self.final_loss,
            'best_loss': self.best_loss,
            'best_epoch': self.best_epoch,
            'max_lipschitz': self.max_lipschitz,
            'seconds': self.seconds,
            'failure_step': self.failure_step,
            'failure': self.failure
        }


class EpochLoss(Base):
    """Per-epoch losses of a run."""
    __tablename__ = 'epoch_losses'

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(Integer, ForeignKey('experiment_runs.id'), nullable=False, index=True)
    epoch = Column(Integer, nullable=False)
    train_loss = Column(Float)
    holdout_loss = Column(Float, nullable=False)
    holdout_stderr = Column(Float)

    run = relationship("ExperimentRun", back_populates="epochs")

    def __repr__(self):
        return f"<EpochLoss(run={self.run_id}, epoch={self.epoch}, holdout={self.holdout_loss:.4f})>"

    def to_dict(self):
        return {
            'run_id': self.run_id,
            'epoch': self.epoch,
            'train_loss': self.train_loss,
            'holdout_loss': self.holdout_loss,
            'holdout_stderr': self.holdout_stderr
        }


class Artifact(Base):
    """Manifest entry for an emitted file."""
    __tablename__ = 'artifacts'

    id = Column(Integer, primary_key=True, autoincrement=True)
    timestamp = Column(DateTime, default=datetime.utcnow, nullable=False)
    kind = Column(String(30), nullable=False, index=True)  # tt_base, tt_reference, checkpoint, csv, json
    path = Column(String(500), nullable=False)
    content_hash = Column(String(64), nullable=False)
    config_hash = Column(String(64), nullable=False, index=True)

    def __repr__(self):
        return f"<Artifact({self.kind} {self.path} sha256={self.content_hash[:12]})>"

    def to_dict(self):
        return {
            'id': self.id,
            'timestamp': self.timestamp.isoformat() if self.timestamp else None,
            'kind': self.kind,
            'path': self.path,
            'content_hash': self.content_hash,
            'config_hash': self.config_hash
        }


class RunEvent(Base):
    """Warnings and failures raised while running an experiment."""
    __tablename__ = 'run_events'

    id = Column(Integer, primary_key=True, autoincrement=True)
    timestamp = Column(DateTime, default=datetime.utcnow, nullable=False, index=True)
    experiment = Column(String(100), nullable=False, index=True)
    severity = Column(Enum(EventSeverity), nullable=False)
    title = Column(String(200), nullable=False)
    message = Column(Text)
    arm = Column(String(20))
    seed = Column(Integer)

    def __repr__(self):
        return f"<RunEvent({self.severity.value}: {self.title})>"

    def to_dict(self):
        return {
            'id': self.id,
            'timestamp': self.timestamp.isoformat() if self.timestamp else None,
            'experiment': self.experiment,
            'severity': self.severity.value,
            'title': self.title,
            'message': self.message,
            'arm': self.arm,
            'seed': self.seed
        }
