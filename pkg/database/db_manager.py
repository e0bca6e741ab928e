"""Database manager for the experiment ledger."""
from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker, scoped_session
from sqlalchemy.pool import StaticPool
from contextlib import contextmanager
from pathlib import Path
from typing import List, Optional, Union
import hashlib
import logging

from database.models import Base, ExperimentRun, EpochLoss, Artifact, RunEvent, RunStatus, EventSeverity

logger = logging.getLogger(__name__)


def file_sha256(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


class DatabaseManager:
    """Manages database connections and ledger operations."""

    def __init__(self, database_url: str = "sqlite:///tensorizing_flow.db"):
        """Initialize database manager.

        Args:
            database_url: SQLAlchemy database URL. ``sqlite://`` gives a
                private in-memory ledger shared across threads.
        """
        if database_url in ("sqlite://", "sqlite:///:memory:"):
            self.engine = create_engine(
                database_url,
                connect_args={"check_same_thread": False},
                poolclass=StaticPool
            )
        else:
            self.engine = create_engine(database_url, echo=False, pool_pre_ping=True)
        self.Session = scoped_session(sessionmaker(bind=self.engine, expire_on_commit=False))

    def init_db(self):
        """Create all tables."""
        Base.metadata.create_all(self.engine)
        logger.info("Database tables created")

    @contextmanager
    def session_scope(self):
        """Provide a transactional scope for database operations."""
        session = self.Session()
        try:
            yield session
            session.commit()
        except Exception as e:
            session.rollback()
            logger.error(f"Database error: {str(e)}")
            raise
        finally:
            session.close()

    # Run operations
    def record_run(self, experiment: str, report, config_hash: str) -> ExperimentRun:
        """Record a finished (or failed) training run and its loss curve.

        Args:
            experiment: Experiment name
            report: RunReport produced by flows.training.train
            config_hash: Hash of the producing experiment config

        Returns:
            ExperimentRun object
        """
        with self.session_scope() as session:
            run = ExperimentRun(
                experiment=experiment,
                arm=report.arm,
                seed=report.seed,
                config_hash=config_hash,
                status=RunStatus.COMPLETED if report.ok else RunStatus.FAILED,
                start_loss=report.start_loss,
                final_loss=report.final_loss,
                best_loss=report.best_loss,
                best_epoch=report.best_epoch,
                max_lipschitz=max(report.lipschitz) if report.lipschitz else None,
                seconds=report.seconds,
                failure_step=report.failure_step,
                failure=report.failure
            )
            for epoch, holdout in enumerate(report.holdout_losses, start=1):
                run.epochs.append(EpochLoss(
                    epoch=epoch,
                    train_loss=report.train_losses[epoch - 1] if epoch <= len(report.train_losses) else None,
                    holdout_loss=holdout,
                    holdout_stderr=report.holdout_stderrs[epoch - 1] if epoch <= len(report.holdout_stderrs) else None
                ))
            session.add(run)
            session.flush()
            logger.info(f"Recorded run: {run}")
            return run

    def get_runs(self, experiment: str = None, arm: str = None) -> List[ExperimentRun]:
        """Get recorded runs, oldest first.

        Args:
            experiment: Filter by experiment name (optional)
            arm: Filter by arm (optional)
        """
        with self.session_scope() as session:
            query = session.query(ExperimentRun)
            if experiment:
                query = query.filter(ExperimentRun.experiment == experiment)
            if arm:
                query = query.filter(ExperimentRun.arm == arm)
            return query.order_by(ExperimentRun.id.asc()).all()

    def get_epoch_losses(self, run_id: int) -> List[EpochLoss]:
        with self.session_scope() as session:
            return session.query(EpochLoss).filter(
                EpochLoss.run_id == run_id
            ).order_by(EpochLoss.epoch.asc()).all()

    # Artifact operations
    def record_artifact(self, kind: str, path: Union[str, Path], config_hash: str,
                        content_hash: str = None) -> Artifact:
        """Add a manifest entry for an emitted file.

        Args:
            kind: Artifact kind (tt_base, tt_reference, checkpoint, csv, json)
            path: File path
            config_hash: Hash of the producing config
            content_hash: sha256 of the file (computed when omitted)

        Returns:
            Artifact object
        """
        with self.session_scope() as session:
            artifact = Artifact(
                kind=kind,
                path=str(path),
                content_hash=content_hash or file_sha256(path),
                config_hash=config_hash
            )
            session.add(artifact)
            session.flush()
            logger.debug(f"Recorded artifact: {artifact}")
            return artifact

    def find_artifact(self, kind: str, config_hash: str) -> Optional[Artifact]:
        """Latest artifact of a kind for a config whose file is still on disk."""
        with self.session_scope() as session:
            candidates = session.query(Artifact).filter(
                Artifact.kind == kind,
                Artifact.config_hash == config_hash
            ).order_by(Artifact.id.desc()).all()
        for artifact in candidates:
            if Path(artifact.path).is_file():
                return artifact
        return None

    def get_artifacts(self, config_hash: str = None) -> List[Artifact]:
        with self.session_scope() as session:
            query = session.query(Artifact)
            if config_hash:
                query = query.filter(Artifact.config_hash == config_hash)
            return query.order_by(Artifact.id.asc()).all()

    # Event operations
    def record_event(self, experiment: str, severity: str, title: str, message: str = None,
                     arm: str = None, seed: int = None) -> RunEvent:
        """Record a warning or failure.

        Args:
            experiment: Experiment name
            severity: info, warning or error
            title: Short title
            message: Details (optional)
            arm: Related arm (optional)
            seed: Related seed (optional)
        """
        with self.session_scope() as session:
            event = RunEvent(
                experiment=experiment,
                severity=EventSeverity(severity.lower()),
                title=title,
                message=message,
                arm=arm,
                seed=seed
            )
            session.add(event)
            session.flush()
            logger.info(f"Recorded event: {event}")
            return event

    def get_events(self, experiment: str = None, severity: str = None) -> List[RunEvent]:
        with self.session_scope() as session:
            query = session.query(RunEvent)
            if experiment:
                query = query.filter(RunEvent.experiment == experiment)
            if severity:
                query = query.filter(RunEvent.severity == EventSeverity(severity.lower()))
            return query.order_by(RunEvent.id.asc()).all()

