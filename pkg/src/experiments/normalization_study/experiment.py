# src/experiments/normalization_study/experiment.py

from typing import List

from src.analysis.collapse import CollapseKind
from src.core.experiment_manager import BaseExperiment
from src.core.initializers import InitializerSpec, parse_scheme
from src.core.layers import parse_normalization
from src.core.pipeline_manager import Artifact, PlotPanel, PlotSeries
from src.core.rng import STREAM_RUNS, spawn_seeds
from src.training.trainer import TrainJob, hidden_architecture, train_config_from_section, train_many

RUN_COLUMNS = ["mode", "run", "seed", "kind", "final_loss", "diverged"]
SUMMARY_COLUMNS = ["mode", "runs", "collapsed_fraction", "fitted_fraction", "low_loss_fraction"]


class NormalizationStudyExperiment(BaseExperiment):
    """不同归一化方式下的塌缩比例：batchnorm / selu 能避免塌缩，weightnorm / dropout 不能。"""

    description = "归一化方式对塌缩的影响 (none / batchnorm / weightnorm / selu / dropout)"

    def run(self) -> List[Artifact]:
        modes = [parse_normalization(m) for m in self.get("modes", ["none", "batchnorm", "weightnorm", "selu", "dropout"])]
        target_id = self.get("target", "abs1d")
        runs = int(self.get("runs", 5))
        depth = int(self.get("depth", 10))
        width = int(self.get("width", 2))
        dropout_rate = float(self.get("dropout_rate", 0.1))
        loss_threshold = float(self.get("loss_threshold", 0.05))
        scheme = parse_scheme(self.get("scheme", "he_normal"))
        base = train_config_from_section(self.core.section("training"), steps=self.get("steps"))
        params = {
            "modes": [m.value for m in modes], "target": target_id, "runs": runs, "depth": depth, "width": width,
            "dropout_rate": dropout_rate, "loss_threshold": loss_threshold, "scheme": scheme.value, "train": base.model_dump(mode="json"),
        }

        arch = hidden_architecture(depth, width, target_id)
        seeds = spawn_seeds(self.core.seed, runs, STREAM_RUNS)
        jobs, labels = [], []
        for mode in modes:
            for run, seed in enumerate(seeds):
                config = base.model_copy(update={"seed": seed, "normalization": mode, "dropout_rate": dropout_rate if mode.value == "dropout" else 0.0})
                jobs.append(TrainJob(arch=arch, init=InitializerSpec(scheme=scheme, seed=seed), target_id=target_id, config=config))
                labels.append((mode, run, seed))
        self.logger.info(f"normalization_study: {len(jobs)} 次训练 (target={target_id}, steps={base.steps})")
        reports = train_many(jobs, workers=int(self.get("workers", self.core.train_workers)))

        run_rows = [
            [mode.value, run, seed, rep.collapse.kind.value, rep.final_loss, rep.diverged]
            for (mode, run, seed), rep in zip(labels, reports)
        ]
        summary_rows = []
        for mode in modes:
            mine = [rep for (m, _, _), rep in zip(labels, reports) if m == mode]
            collapsed = sum(rep.collapse.kind in (CollapseKind.FULL_COLLAPSE, CollapseKind.PARTIAL_COLLAPSE) for rep in mine)
            fitted = sum(rep.collapse.kind == CollapseKind.FITTED for rep in mine)
            low = sum(rep.final_loss is not None and rep.final_loss < loss_threshold for rep in mine)
            summary_rows.append([mode.value, len(mine), collapsed / len(mine), fitted / len(mine), low / len(mine)])
            self.logger.info(f"{mode.value}: 塌缩 {collapsed}/{len(mine)}, loss < {loss_threshold}: {low}/{len(mine)}")

        xs = list(range(len(modes)))
        panel = PlotPanel(title=f"normalization ({target_id}); x = " + ", ".join(m.value for m in modes), xlabel="mode index", ylabel="fraction")
        panel.series.append(PlotSeries("collapsed", xs, [r[2] for r in summary_rows], "points"))
        panel.series.append(PlotSeries(f"loss < {loss_threshold}", xs, [r[4] for r in summary_rows], "open_points"))

        runs_artifact = self.core.make_artifact("normalization_runs", "experiment", params, columns=RUN_COLUMNS, rows=run_rows)
        summary = self.core.make_artifact(
            "normalization_study", "experiment", params, columns=SUMMARY_COLUMNS, rows=summary_rows, panels=[panel]
        )
        return [self.core.emit(runs_artifact), self.core.emit(summary)]


experiment_entrypoint = NormalizationStudyExperiment
