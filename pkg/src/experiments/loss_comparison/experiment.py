# src/experiments/loss_comparison/experiment.py

from typing import List

from src.analysis.collapse import CollapseKind, target_statistics
from src.core.experiment_manager import BaseExperiment
from src.core.initializers import InitializerSpec, parse_scheme
from src.core.pipeline_manager import Artifact, PlotPanel, PlotSeries
from src.core.rng import STREAM_RUNS, spawn_seeds
from src.training.losses import LossKind, parse_loss
from src.training.trainer import TrainJob, hidden_architecture, train_config_from_section, train_many

COLUMNS = ["target", "loss", "run", "seed", "kind", "constant", "mean", "median_lo", "median_hi", "final_loss"]


class LossComparisonExperiment(BaseExperiment):
    """MSE 与 MAE 下塌缩常数的对比：MSE 塌缩到均值，MAE 塌缩到中位数。"""

    description = "MSE vs MAE：塌缩常数是均值还是中位数"

    def run(self) -> List[Artifact]:
        targets = list(self.get("targets", ["abs1d", "xsin5x", "stepsin"]))
        losses = [parse_loss(v) for v in self.get("losses", ["mse", "mae"])]
        runs = int(self.get("runs", 6))
        depth = int(self.get("depth", 10))
        width = int(self.get("width", 2))
        scheme = parse_scheme(self.get("scheme", "he_normal"))
        base = train_config_from_section(self.core.section("training"), steps=self.get("steps"))
        params = {
            "targets": targets, "losses": [l.value for l in losses], "runs": runs, "depth": depth,
            "width": width, "scheme": scheme.value, "train": base.model_dump(mode="json"),
        }

        seeds = spawn_seeds(self.core.seed, runs, STREAM_RUNS)
        jobs, labels = [], []
        for target_id in targets:
            arch = hidden_architecture(depth, width, target_id)
            for loss in losses:
                for run, seed in enumerate(seeds):
                    config = base.model_copy(update={"seed": seed, "loss": loss})
                    jobs.append(TrainJob(arch=arch, init=InitializerSpec(scheme=scheme, seed=seed), target_id=target_id, config=config))
                    labels.append((target_id, loss, run, seed))
        self.logger.info(f"loss_comparison: {len(jobs)} 次训练")
        reports = train_many(jobs, workers=int(self.get("workers", self.core.train_workers)))

        rows, panels = [], {}
        for (target_id, loss, run, seed), rep in zip(labels, reports):
            stats = target_statistics(target_id)
            constant = rep.collapse.constant_value[0] if rep.collapse.kind == CollapseKind.FULL_COLLAPSE else None
            lo, hi = stats.median_set[0]
            rows.append([target_id, loss.value, run, seed, rep.collapse.kind.value, constant, stats.mean[0], lo, hi, rep.final_loss])
            panel = panels.setdefault(target_id, PlotPanel(title=target_id, xlabel="run", ylabel="collapsed constant"))
            if constant is not None:
                panel.series.append(PlotSeries(loss.value if run == 0 else "", [run], [constant], "points" if loss == LossKind.MSE else "open_points"))

        for target_id, panel in panels.items():
            stats = target_statistics(target_id)
            lo, hi = stats.median_set[0]
            panel.series.append(PlotSeries("mean", [0, runs - 1], [stats.mean[0]] * 2, "dashed"))
            panel.series.append(PlotSeries("median", [0, runs - 1], [0.5 * (lo + hi)] * 2, "line"))

        artifact = self.core.make_artifact(
            "loss_comparison", "experiment", params, columns=COLUMNS, rows=rows, panels=list(panels.values())
        )
        return [self.core.emit(artifact)]


experiment_entrypoint = LossComparisonExperiment
