import json

import pytest

from src.core.lab_core import LabCore
from src.core.pipeline_manager import (
    DEFAULT_PIPELINES,
    Artifact,
    ArtifactPipeline,
    PipelineManager,
    PlotPanel,
    PlotSeries,
)
from src.pipelines.csv_writer.pipeline import format_cell, render_csv
from src.utils.errors import ArtifactWriteError
from src.utils.provenance import config_hash, provenance_record


class _Recorder(ArtifactPipeline):
    def __init__(self, name, calls, priority, result="pass"):
        super().__init__({})
        self.name, self.calls, self.priority, self.result = name, calls, priority, result

    def process(self, artifact):
        self.calls.append(self.name)
        if self.result == "raise":
            raise RuntimeError("boom")
        if self.result == "drop":
            return None
        return artifact


def _artifact(tmp_path, name="demo"):
    return Artifact(
        name=name,
        seed=7,
        config={"general": {"seed": 7}, "params": {"widths": [2, 2]}},
        columns=["depth", "p_hat", "ok"],
        rows=[[1, 0.1, True], [2, 0.25, False]],
        document={"value": 1.5},
        panels=[PlotPanel(title="p", series=[PlotSeries("mc", [1, 2], [0.1, 0.25], "points")])],
        output_dir=str(tmp_path),
    )


class TestManager:
    def test_runs_in_priority_order(self, tmp_path):
        calls = []
        manager = PipelineManager()
        manager.register_pipeline(_Recorder("late", calls, 300))
        manager.register_pipeline(_Recorder("early", calls, 10))
        manager.register_pipeline(_Recorder("middle", calls, 100))
        manager.process(_artifact(tmp_path))
        assert calls == ["early", "middle", "late"]

    def test_error_in_one_pipeline_does_not_stop_the_chain(self, tmp_path):
        calls = []
        manager = PipelineManager()
        manager.register_pipeline(_Recorder("bad", calls, 1, result="raise"))
        manager.register_pipeline(_Recorder("good", calls, 2))
        artifact = _artifact(tmp_path)
        assert manager.process(artifact) is not None
        assert calls == ["bad", "good"]
        assert artifact.failures == ["_Recorder: boom"]

    def test_none_drops_the_artifact(self, tmp_path):
        calls = []
        manager = PipelineManager()
        manager.register_pipeline(_Recorder("drop", calls, 1, result="drop"))
        manager.register_pipeline(_Recorder("never", calls, 2))
        assert manager.process(_artifact(tmp_path)) is None
        assert calls == ["drop"]

    def test_default_chain(self):
        manager = PipelineManager()
        assert manager.load_pipelines() == len(DEFAULT_PIPELINES)
        names = [p.__class__.__name__ for p in manager.pipelines]
        assert names == ["ProvenancePipeline", "CsvWriterPipeline", "JsonReportPipeline", "SvgPlotPipeline"]

    def test_section_controls_loading(self):
        manager = PipelineManager()
        loaded = manager.load_pipelines(
            root_config_pipelines_section={
                "csv_writer": {"priority": 5, "header_prefix": "## "},
                "json_report": {"priority": "high"},
                "svg_plot": {},
                "no_such_pipeline": {"priority": 1},
            }
        )
        assert loaded == 1
        (only,) = manager.pipelines
        assert only.priority == 5
        assert only.header_prefix == "## "


class TestWriters:
    def test_format_cell(self):
        assert format_cell(0.1) == "0.1"
        assert format_cell(True) == "true"
        assert format_cell(None) == ""
        assert format_cell(3) == "3"

    def test_csv_has_provenance_header(self, tmp_path):
        artifact = _artifact(tmp_path)
        artifact.provenance = provenance_record(7, artifact.config)
        lines = render_csv(artifact).splitlines()
        assert lines[0].startswith("# config_hash: ")
        assert "# seed: 7" in lines
        assert lines[-3:] == ["depth,p_hat,ok", "1,0.1,true", "2,0.25,false"]

    def test_full_chain_writes_all_files(self, tmp_path):
        manager = PipelineManager()
        manager.load_pipelines()
        artifact = manager.process(_artifact(tmp_path))
        assert set(artifact.written) == {"csv", "json", "svg"}
        doc = json.loads((tmp_path / "demo.json").read_text(encoding="utf-8"))
        assert doc["value"] == 1.5
        assert doc["provenance"]["seed"] == 7
        assert doc["provenance"]["config_hash"] == config_hash(artifact.config)
        assert doc["resolved_config"]["params"]["widths"] == [2, 2]
        assert (tmp_path / "demo.svg").read_text(encoding="utf-8").lstrip().startswith("<?xml")

    def test_outputs_are_byte_identical(self, tmp_path):
        manager = PipelineManager()
        manager.load_pipelines()
        a = manager.process(_artifact(tmp_path / "a"))
        b = manager.process(_artifact(tmp_path / "b"))
        for ext in ("csv", "json", "svg"):
            with open(a.written[ext], "rb") as fa, open(b.written[ext], "rb") as fb:
                assert fa.read() == fb.read(), ext

    def test_ragged_rows_skip_csv(self, tmp_path):
        manager = PipelineManager()
        manager.load_pipelines()
        artifact = _artifact(tmp_path)
        artifact.rows.append([1])
        artifact = manager.process(artifact)
        assert "csv" not in artifact.written
        assert "json" in artifact.written


class TestLabCore:
    def test_resolved_config_drops_pipelines(self, lab_config):
        core = LabCore({**lab_config, "pipelines": {"csv_writer": {"priority": 1}}}, seed=11)
        resolved = core.resolved_config("prob bound", {"widths": [3]})
        assert "pipelines" not in resolved
        assert resolved["general"]["seed"] == 11
        assert resolved["params"] == {"widths": [3]}

    def test_samples_override(self, lab_config):
        assert LabCore(lab_config, seed=0, samples=123).mc_samples(10) == 123
        assert LabCore(lab_config, seed=0).mc_samples(10) == 10

    def test_emit_without_pipelines_keeps_artifact(self, lab_config, tmp_path):
        core = LabCore(lab_config, seed=0, output_dir=str(tmp_path))
        artifact = core.emit(core.make_artifact("x", "test", {}, columns=["a"], rows=[[1]]))
        assert artifact.written == {}
        assert core.emitted == [artifact]

    def test_emit_raises_after_a_failed_write(self, lab_config, tmp_path):
        blocker = tmp_path / "not_a_dir"
        blocker.write_text("", encoding="utf-8")
        manager = PipelineManager()
        manager.load_pipelines()
        core = LabCore(lab_config, seed=0, output_dir=str(blocker), pipeline_manager=manager)
        with pytest.raises(ArtifactWriteError, match="CsvWriterPipeline"):
            core.emit(core.make_artifact("x", "test", {}, columns=["a"], rows=[[1]]))
        assert core.emitted == []

    def test_config_hash_is_order_independent(self):
        assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
        assert config_hash({"a": 1}) != config_hash({"a": 2})

