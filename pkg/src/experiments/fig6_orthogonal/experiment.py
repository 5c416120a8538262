# src/experiments/fig6_orthogonal/experiment.py

from typing import List

from src.analysis.montecarlo import SWEEP_COLUMNS, sweep
from src.core.experiment_manager import BaseExperiment
from src.core.initializers import InitializerSpec, InitScheme, parse_scheme
from src.core.pipeline_manager import Artifact, PlotPanel, PlotSeries


class Fig6OrthogonalExperiment(BaseExperiment):
    """对称初始化与正交初始化在同一网格上的塌缩概率对比。"""

    description = "正交初始化 vs 对称初始化的初始化塌缩概率"

    def run(self) -> List[Artifact]:
        widths = [int(w) for w in self.get("widths", [2, 3, 4, 5])]
        depths = [int(d) for d in self.get("depths", list(range(1, 11)))]
        symmetric = parse_scheme(self.get("symmetric_scheme", "he_normal"))
        n = self.core.mc_samples(self.get("samples", 100_000))
        specs = [InitializerSpec(scheme=symmetric, seed=self.core.seed), InitializerSpec(scheme=InitScheme.ORTHOGONAL, seed=self.core.seed)]
        params = {"widths": widths, "depths": depths, "schemes": [s.scheme.value for s in specs], "samples": n}

        rows = sweep(
            widths, depths, specs, n, seed=self.core.seed, last_layer_relu=True,
            chunk_size=self.core.mc_chunk_size, workers=self.core.mc_workers,
        )

        by_cell = {(r.width, r.depth, r.scheme): r.estimate for r in rows}
        max_gap = 0.0
        for w in widths:
            for d in depths:
                gap = by_cell[(w, d, symmetric.value)].p_hat - by_cell[(w, d, InitScheme.ORTHOGONAL.value)].p_hat
                max_gap = max(max_gap, abs(gap))
        self.logger.info(f"对称与正交初始化的最大概率差: {max_gap:.4f}")

        panels = []
        for w in widths:
            panel = PlotPanel(title=f"width {w}", xlabel="depth L", ylabel="P(N ≡ 0)")
            for spec, style in zip(specs, ("points", "open_points")):
                cell = [r for r in rows if r.width == w and r.scheme == spec.scheme.value]
                panel.series.append(PlotSeries(spec.scheme.value, [r.depth for r in cell], [r.estimate.p_hat for r in cell], style))
            panels.append(panel)

        artifact = self.core.make_artifact(
            "fig6_orthogonal", "experiment", params, columns=SWEEP_COLUMNS, rows=[r.as_csv_row() for r in rows], panels=panels
        )
        return [self.core.emit(artifact)]


experiment_entrypoint = Fig6OrthogonalExperiment
