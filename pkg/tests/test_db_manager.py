"""Unit tests for the experiment ledger."""
import pytest

from database.db_manager import DatabaseManager, file_sha256
from database.models import EventSeverity, RunStatus
from flows.training import RunReport


@pytest.fixture
def ledger():
    manager = DatabaseManager("sqlite://")
    manager.init_db()
    return manager


def finished_run(arm="tf", seed=0) -> RunReport:
    return RunReport(arm=arm, seed=seed, start_loss=3.0, holdout_losses=[2.0, 1.5],
                     holdout_stderrs=[0.1, 0.05], train_losses=[2.2, 1.6], best_loss=1.5,
                     best_epoch=2, lipschitz=[0.4, 0.9], seconds=1.25)


class TestRuns:
    """Test suite for run records."""

    def test_record_completed_run(self, ledger):
        """Test a finished run is stored with its loss curve."""
        run = ledger.record_run("smoke", finished_run(), "abc")
        assert run.status == RunStatus.COMPLETED
        assert run.final_loss == 1.5
        assert run.max_lipschitz == 0.9

        epochs = ledger.get_epoch_losses(run.id)
        assert [e.epoch for e in epochs] == [1, 2]
        assert [e.holdout_loss for e in epochs] == [2.0, 1.5]
        assert epochs[0].train_loss == 2.2
        assert epochs[1].holdout_stderr == 0.05

    def test_record_failed_run(self, ledger):
        """Test a failed run keeps its failure step and message."""
        report = RunReport(arm="nf", seed=4, failure="non-finite loss", failure_step=17)
        run = ledger.record_run("smoke", report, "abc")
        assert run.status == RunStatus.FAILED
        assert run.failure_step == 17
        assert run.to_dict()["status"] == "failed"
        assert ledger.get_epoch_losses(run.id) == []

    def test_filters(self, ledger):
        """Test runs filter by experiment and arm, oldest first."""
        ledger.record_run("a", finished_run("tf", 1), "h")
        ledger.record_run("a", finished_run("nf", 2), "h")
        ledger.record_run("b", finished_run("tf", 3), "h")
        assert [r.seed for r in ledger.get_runs()] == [1, 2, 3]
        assert [r.seed for r in ledger.get_runs(experiment="a")] == [1, 2]
        assert [r.seed for r in ledger.get_runs(experiment="a", arm="tf")] == [1]


class TestArtifacts:
    """Test suite for the artifact manifest."""

    def test_hash_computed(self, ledger, tmp_path):
        """Test the content hash defaults to the file's sha256."""
        path = tmp_path / "curves.csv"
        path.write_text("epoch,loss\n0,1.0\n")
        artifact = ledger.record_artifact("csv", path, "cfg")
        assert artifact.content_hash == file_sha256(path)
        assert len(artifact.content_hash) == 64

    def test_find_latest_existing(self, ledger, tmp_path):
        """Test lookup returns the newest entry whose file still exists."""
        old, new = tmp_path / "old.ttv1", tmp_path / "new.ttv1"
        old.write_bytes(b"old")
        new.write_bytes(b"new")
        ledger.record_artifact("tt_base", old, "cfg")
        ledger.record_artifact("tt_base", new, "cfg")
        assert ledger.find_artifact("tt_base", "cfg").path == str(new)

        new.unlink()
        assert ledger.find_artifact("tt_base", "cfg").path == str(old)
        assert ledger.find_artifact("tt_base", "other") is None
        assert ledger.find_artifact("checkpoint", "cfg") is None

    def test_get_by_config(self, ledger, tmp_path):
        """Test artifacts filter by config hash."""
        path = tmp_path / "a.json"
        path.write_text("{}")
        ledger.record_artifact("json", path, "one")
        ledger.record_artifact("json", path, "two")
        assert len(ledger.get_artifacts()) == 2
        assert [a.config_hash for a in ledger.get_artifacts("two")] == ["two"]


class TestEvents:
    """Test suite for run events."""

    def test_record_and_filter(self, ledger):
        """Test events are stored with severity and filtered case-insensitively."""
        ledger.record_event("smoke", "WARNING", "rank cap reached", "max rank 8", arm="tt")
        ledger.record_event("smoke", "error", "run failed", seed=3)
        events = ledger.get_events("smoke")
        assert [e.severity for e in events] == [EventSeverity.WARNING, EventSeverity.ERROR]
        assert [e.title for e in ledger.get_events(severity="Error")] == ["run failed"]
        assert events[1].seed == 3

    def test_unknown_severity(self, ledger):
        """Test an unknown severity is rejected."""
        with pytest.raises(ValueError):
            ledger.record_event("smoke", "fatal", "x")


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
