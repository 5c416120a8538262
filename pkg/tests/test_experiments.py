import csv

import pytest

from src.core.experiment_manager import ExperimentManager
from src.utils.errors import UnsupportedError

ALL_EXPERIMENTS = [
    "collapse_gallery",
    "fig5a_curves",
    "fig5b_safe_region",
    "fig6_orthogonal",
    "loss_comparison",
    "normalization_study",
]

SMALL = {
    "fig5a_curves": {"widths": [2, 3], "depths": [1, 2, 3], "samples": 400},
    "fig5b_safe_region": {"widths": [1, 2, 10], "p": [0.01, 0.5], "mc_widths": [10], "samples": 300},
    "fig6_orthogonal": {"widths": [2], "depths": [1, 2], "samples": 300},
    "collapse_gallery": {"targets": ["abs1d", "abs2d"], "runs": 1, "depth": 3, "widths": {"abs1d": 2, "abs2d": 3}, "steps": 5},
    "loss_comparison": {"targets": ["stepsin"], "runs": 1, "depth": 3, "steps": 5},
    "normalization_study": {"modes": ["none", "selu"], "runs": 2, "depth": 3, "steps": 5},
}


def _rows(path):
    with open(path, encoding="utf-8") as f:
        lines = [line for line in f if not line.startswith("#")]
    return list(csv.DictReader(lines))


@pytest.fixture
def manager(core):
    return ExperimentManager(core, SMALL)


def test_available(manager):
    assert manager.available() == ALL_EXPERIMENTS
    described = manager.describe()
    assert sorted(described) == ALL_EXPERIMENTS
    assert all(described.values())


def test_unknown_experiment(manager):
    with pytest.raises(UnsupportedError):
        manager.run("fig99")


def test_root_overrides_component_template(manager):
    config = manager.config_for("fig6_orthogonal")
    assert config["samples"] == 300
    assert config["symmetric_scheme"] == "he_normal"


def test_fig5a_curves(manager):
    mc, theory = manager.run("fig5a_curves")
    assert len(_rows(mc.written["csv"])) == 6
    rows = _rows(theory.written["csv"])
    exact = {(r["width"], r["depth"]): r["exact"] for r in rows}
    assert exact[("2", "2")] == "0.15625"
    assert exact[("3", "2")] == ""
    assert "svg" in theory.written


def test_fig5b_safe_region(manager):
    region, check = manager.run("fig5b_safe_region")
    rows = _rows(region.written["csv"])
    depth = {(r["width"], r["p"]): int(r["max_depth"]) for r in rows}
    assert depth[("10", "0.01")] == 10
    assert depth[("1", "0.5")] == 1
    assert len(_rows(check.written["csv"])) == 2


def test_fig6_orthogonal(manager):
    (artifact,) = manager.run("fig6_orthogonal")
    schemes = {r["scheme"] for r in _rows(artifact.written["csv"])}
    assert schemes == {"he_normal", "orthogonal"}
    assert len(artifact.rows) == 4


def test_collapse_gallery(manager):
    (artifact,) = manager.run("collapse_gallery")
    rows = _rows(artifact.written["csv"])
    assert [r["target"] for r in rows] == ["abs1d", "abs2d"]
    assert "json" in artifact.written and "svg" in artifact.written


def test_loss_comparison(manager):
    (artifact,) = manager.run("loss_comparison")
    rows = _rows(artifact.written["csv"])
    assert {r["loss"] for r in rows} == {"mse", "mae"}
    assert float(rows[0]["mean"]) == pytest.approx(0.5, abs=1e-6)


def test_normalization_study(manager):
    runs, summary = manager.run("normalization_study")
    assert len(_rows(runs.written["csv"])) == 4
    rows = _rows(summary.written["csv"])
    assert [r["mode"] for r in rows] == ["none", "selu"]
    assert all(0.0 <= float(r["collapsed_fraction"]) <= 1.0 for r in rows)


def test_same_seed_same_files(core, tmp_path):
    first = ExperimentManager(core, SMALL).run("fig6_orthogonal")[0]
    with open(first.written["csv"], "rb") as f:
        a = f.read()
    core.output_dir = str(tmp_path / "again")
    second = ExperimentManager(core, SMALL).run("fig6_orthogonal")[0]
    with open(second.written["csv"], "rb") as f:
        assert f.read() == a
