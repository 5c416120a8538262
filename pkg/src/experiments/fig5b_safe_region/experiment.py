# src/experiments/fig5b_safe_region/experiment.py

from typing import List

from src.analysis.exact import safe_region
from src.analysis.montecarlo import estimate_zero_function
from src.core.experiment_manager import BaseExperiment
from src.core.initializers import InitializerSpec, parse_scheme
from src.core.network import Architecture
from src.core.pipeline_manager import Artifact, PlotPanel, PlotSeries


class Fig5bSafeRegionExperiment(BaseExperiment):
    """安全区域图：塌缩概率上界不超过 p 的最大深度，外加少量宽度上的 Monte Carlo 核对。"""

    description = "安全设计区域 (width, p) -> 最大深度"

    def run(self) -> List[Artifact]:
        widths = [int(w) for w in self.get("widths", list(range(1, 65)))]
        ps = [float(p) for p in self.get("p", [0.01, 0.1])]
        params = {"widths": widths, "p": ps}
        rows = safe_region(widths, ps)

        panel = PlotPanel(title="safe operating region", xlabel="width N", ylabel="max depth L")
        for p in ps:
            cell = [r for r in rows if r[1] == p]
            panel.series.append(PlotSeries(f"bound p={p}", [r[0] for r in cell], [r[2] for r in cell], "dashed"))

        artifacts = []
        mc_widths = [int(w) for w in self.get("mc_widths", [])]
        if mc_widths:
            artifacts.append(self._mc_check(mc_widths, ps, rows, panel))

        region = self.core.make_artifact(
            "fig5b_safe_region", "experiment", params, columns=["width", "p", "max_depth"], rows=[list(r) for r in rows], panels=[panel]
        )
        return [self.core.emit(region)] + artifacts

    def _mc_check(self, mc_widths, ps, rows, panel) -> Artifact:
        """在 (width, max_depth) 上估计实际塌缩概率，应不超过 p (在置信区间意义下)"""
        scheme = parse_scheme(self.get("scheme", "he_normal"))
        n = self.core.mc_samples(self.get("samples", 20_000))
        spec = InitializerSpec(scheme=scheme, seed=self.core.seed)
        depth_of = {(r[0], r[1]): r[2] for r in rows}
        check_rows = []
        for k, p in enumerate(ps):
            xs, ys = [], []
            for w in mc_widths:
                depth = depth_of.get((w, p)) or 0
                if depth < 1:
                    continue
                arch = Architecture(widths=(w,) * depth, last_layer_relu=True, bias_free=True)
                est = estimate_zero_function(
                    arch, spec, n, seed=self.core.seed, cell=(w, depth, k), chunk_size=self.core.mc_chunk_size, workers=self.core.mc_workers
                )
                check_rows.append([w, p, depth, est.n, est.p_hat, est.ci_low, est.ci_high, est.seed])
                xs.append(w)
                ys.append(depth)
                if est.ci_low > p:
                    self.logger.warning(f"width={w}, depth={depth}: MC 估计 {est.p_hat:.4f} 的置信下界超过 p={p}")
            panel.series.append(PlotSeries(f"MC checked p={p}", xs, ys, "points"))
        return self.core.emit(
            self.core.make_artifact(
                "fig5b_mc_check",
                "experiment",
                {"mc_widths": mc_widths, "p": ps, "scheme": scheme.value, "samples": n},
                columns=["width", "p", "max_depth", "n", "p_hat", "ci_low", "ci_high", "seed"],
                rows=check_rows,
            )
        )


experiment_entrypoint = Fig5bSafeRegionExperiment
