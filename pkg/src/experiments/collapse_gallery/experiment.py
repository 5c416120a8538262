# src/experiments/collapse_gallery/experiment.py

from typing import List

import numpy as np

from src.analysis.collapse import default_grid
from src.core.experiment_manager import BaseExperiment
from src.core.initializers import InitializerSpec, parse_scheme
from src.core.network import predict
from src.core.pipeline_manager import Artifact, PlotPanel, PlotSeries
from src.core.rng import STREAM_RUNS, spawn_seeds
from src.core.targets import SQRT3, get_target, target_function
from src.training.trainer import TrainJob, TrainReport, hidden_architecture, train_config_from_section, train_many

GALLERY_COLUMNS = ["target", "run", "seed", "kind", "zero_layer", "constant", "reference", "final_loss", "diverged"]


def _first(values):
    return values[0] if values else None


def summary_row(target_id: str, run: int, seed: int, report: TrainReport) -> list:
    c = report.collapse
    return [
        target_id,
        run,
        seed,
        c.kind.value,
        c.zero_layer,
        _first(c.constant_value),
        _first(c.reference_value),
        report.final_loss,
        report.diverged,
    ]


class CollapseGalleryExperiment(BaseExperiment):
    """四个目标函数上的训练结果：每次运行的 N(x) 叠加在 y(x) 上。"""

    description = "训练后的 N(x) 与 y(x) 叠加图 (四个目标函数)"

    def run(self) -> List[Artifact]:
        targets = list(self.get("targets", ["abs1d", "xsin5x", "stepsin", "abs2d"]))
        runs = int(self.get("runs", 4))
        depth = int(self.get("depth", 10))
        widths = dict(self.get("widths", {"abs1d": 2, "xsin5x": 2, "stepsin": 2, "abs2d": 4}))
        scheme = parse_scheme(self.get("scheme", "he_normal"))
        config = train_config_from_section(self.core.section("training"), steps=self.get("steps"), loss=self.get("loss"))
        params = {"targets": targets, "runs": runs, "depth": depth, "widths": widths, "scheme": scheme.value, "train": config.model_dump(mode="json")}

        seeds = spawn_seeds(self.core.seed, runs, STREAM_RUNS)
        jobs, labels = [], []
        for target_id in targets:
            arch = hidden_architecture(depth, int(widths.get(target_id, 2)), target_id)
            for run, seed in enumerate(seeds):
                jobs.append(
                    TrainJob(
                        arch=arch,
                        init=InitializerSpec(scheme=scheme, seed=seed),
                        target_id=target_id,
                        config=config.model_copy(update={"seed": seed}),
                    )
                )
                labels.append((target_id, run, seed))
        self.logger.info(f"collapse_gallery: {len(jobs)} 次训练 (depth={depth}, steps={config.steps})")
        reports = train_many(jobs, workers=int(self.get("workers", self.core.train_workers)))

        rows = [summary_row(t, run, seed, rep) for (t, run, seed), rep in zip(labels, reports)]
        panels = [self._panel(t, [rep for (lt, _, _), rep in zip(labels, reports) if lt == t]) for t in targets]
        document = {"runs": [{"target": t, "run": run, "seed": seed, "report": rep.model_dump(mode="json", exclude={"network"})} for (t, run, seed), rep in zip(labels, reports)]}
        artifact = self.core.make_artifact(
            "collapse_gallery", "experiment", params, columns=GALLERY_COLUMNS, rows=rows, document=document, panels=panels
        )
        return [self.core.emit(artifact)]

    def _panel(self, target_id: str, reports: List[TrainReport]) -> PlotPanel:
        spec = get_target(target_id)
        if spec.d_in == 1:
            X = default_grid(1, 512)
            xs = X[:, 0]
        else:
            # 二维目标画 x2 = 0 的切片
            xs = np.linspace(-SQRT3, SQRT3, 512)
            X = np.stack([xs, np.zeros_like(xs)], axis=1)
        panel = PlotPanel(title=target_id, xlabel="x" if spec.d_in == 1 else "x1 (x2 = 0)", ylabel="y")
        y = target_function(target_id)(X)
        for j in range(spec.d_out):
            panel.series.append(PlotSeries(f"y{'' if spec.d_out == 1 else j + 1}", xs.tolist(), y[:, j].tolist(), "dashed"))
        for k, rep in enumerate(reports):
            out = predict(rep.final_network(), X)
            for j in range(spec.d_out):
                panel.series.append(PlotSeries(f"run {k} ({rep.collapse.kind.value})" if j == 0 else "", xs.tolist(), out[:, j].tolist(), "line"))
        return panel


experiment_entrypoint = CollapseGalleryExperiment
