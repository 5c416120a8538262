# src/experiments/fig5a_curves/experiment.py

from typing import List

from src.analysis.exact import collapse_probability_bound, exact_constant_trajectory, rational_to_float
from src.analysis.montecarlo import SWEEP_COLUMNS, sweep
from src.core.experiment_manager import BaseExperiment
from src.core.initializers import InitializerSpec, parse_scheme
from src.core.pipeline_manager import Artifact, PlotPanel, PlotSeries


class Fig5aCurvesExperiment(BaseExperiment):
    """初始化塌缩概率随深度的变化：Monte Carlo 点 + 宽 2 精确链 + 各宽度的上界曲线。"""

    description = "初始化为零函数的概率 vs 层数 (MC / 精确链 / 上界)"

    def run(self) -> List[Artifact]:
        widths = [int(w) for w in self.get("widths", list(range(2, 11)))]
        depths = [int(d) for d in self.get("depths", list(range(1, 21)))]
        last_relu = bool(self.get("last_layer_relu", True))
        scheme = parse_scheme(self.get("scheme", "he_normal"))
        n = self.core.mc_samples(self.get("samples", 100_000))
        params = {"widths": widths, "depths": depths, "last_layer_relu": last_relu, "scheme": scheme.value, "samples": n}

        self.logger.info(f"fig5a: widths={widths}, depths={depths[0]}..{depths[-1]}, n={n}")
        rows = sweep(
            widths,
            depths,
            [InitializerSpec(scheme=scheme, seed=self.core.seed)],
            n,
            seed=self.core.seed,
            last_layer_relu=last_relu,
            chunk_size=self.core.mc_chunk_size,
            workers=self.core.mc_workers,
        )
        mc = self.core.make_artifact(
            "fig5a_curves", "experiment", params, columns=SWEEP_COLUMNS, rows=[r.as_csv_row() for r in rows]
        )

        max_depth = max(depths)
        chain = [rational_to_float(v) for v in exact_constant_trajectory(max_depth, last_layer_relu=last_relu)]
        theory_rows = []
        for w in widths:
            for d in range(1, max_depth + 1):
                bound = collapse_probability_bound((w,) * d, last_layer_relu=last_relu)
                exact = chain[d - 1] if w == 2 else None
                theory_rows.append([w, d, exact, bound])

        panel = PlotPanel(title="collapse probability at initialization", xlabel="depth L", ylabel="P(N ≡ 0)")
        for w in widths:
            cell = [r for r in rows if r.width == w]
            panel.series.append(PlotSeries(f"MC width {w}", [r.depth for r in cell], [r.estimate.p_hat for r in cell], "points"))
            bound = [row[3] for row in theory_rows if row[0] == w]
            panel.series.append(PlotSeries("", list(range(1, max_depth + 1)), bound, "dashed"))
        if 2 in widths:
            panel.series.append(PlotSeries("exact (width 2)", list(range(1, max_depth + 1)), chain, "line"))

        theory = self.core.make_artifact(
            "fig5a_theory",
            "experiment",
            params,
            columns=["width", "depth", "exact", "bound"],
            rows=theory_rows,
            panels=[panel],
        )
        return [self.core.emit(mc), self.core.emit(theory)]


experiment_entrypoint = Fig5aCurvesExperiment
