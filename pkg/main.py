import argparse
import json
import os
import sys
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from src.analysis.collapse import classify_state, default_grid
from src.analysis.exact import (
    collapse_probability_bound,
    exact_constant_trajectory,
    rational_to_float,
    safe_region,
)
from src.analysis.length_map import LengthMapParams, empirical_length_trajectory, length_map_general, length_map_relu
from src.analysis.montecarlo import (
    MCEvent,
    estimate_bias_output,
    estimate_zero_at_point,
    estimate_zero_function,
)
from src.core.experiment_manager import ExperimentManager
from src.core.initializers import BiasMode, InitializerSpec, parse_scheme
from src.core.lab_core import LabCore
from src.core.layers import ActivationKind, parse_activation, parse_normalization
from src.core.network import Architecture, load_network, parse_widths, predict, save_network
from src.core.pipeline_manager import PipelineManager, PlotPanel, PlotSeries
from src.core.targets import TARGETS, get_target, target_function
from src.pipelines.csv_writer.pipeline import format_cell
from src.training.losses import parse_loss
from src.training.trainer import hidden_architecture, train, train_config_from_section
from src.utils.config import initialize_configurations, resolve_seed
from src.utils.errors import CollapseLabError
from src.utils.io import atomic_write
from src.utils.logger import configure_logging, get_logger
from src.utils.provenance import __version__

logger = get_logger("Main")

# main.py 所在目录 (项目根目录)
_BASE_DIR = os.path.dirname(os.path.abspath(__file__))

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class UsageError(Exception):
    """参数组合不合法，按 argparse 的约定以退出码 2 结束"""


def _rows_to_stdout(columns: List[str], rows: List[list]) -> None:
    print(",".join(columns))
    for row in rows:
        print(",".join(format_cell(v) for v in row))


# --- prob ---


def _cmd_prob_exact(args, core: LabCore) -> int:
    last_relu = True if args.last_layer_relu is None else args.last_layer_relu
    values = exact_constant_trajectory(args.depth, last_layer_relu=last_relu)
    rows = []
    for L, value in enumerate(values, start=1):
        bound = collapse_probability_bound((2,) * L, last_layer_relu=last_relu)
        rows.append([L, str(value), rational_to_float(value), bound])
    params = {"depth": args.depth, "last_layer_relu": last_relu}
    core.emit(core.make_artifact("prob_exact", "prob exact", params, columns=["depth", "exact", "exact_float", "bound"], rows=rows))
    value = values[-1]
    print(f"{value} {rational_to_float(value)!r}")
    return EXIT_OK


def _cmd_prob_bound(args, core: LabCore) -> int:
    widths = parse_widths(args.widths)
    last_relu = bool(args.last_layer_relu)
    value = collapse_probability_bound(widths, last_layer_relu=last_relu, biases_nonzero=args.biases_nonzero)
    params = {"widths": list(widths), "last_layer_relu": last_relu, "biases_nonzero": args.biases_nonzero}
    core.emit(core.make_artifact("prob_bound", "prob bound", params, columns=["widths", "last_layer_relu", "biases_nonzero", "bound"], rows=[[args.widths, last_relu, args.biases_nonzero, value]]))
    print(repr(value))
    return EXIT_OK


def _cmd_prob_mc(args, core: LabCore) -> int:
    widths = parse_widths(args.widths)
    event = MCEvent(args.event)
    d_in = args.d_in if args.point is None else len(args.point)
    bias_mode = BiasMode.SYMMETRIC if event == MCEvent.BIAS_OUTPUT else BiasMode(args.bias_mode)
    if event == MCEvent.ZERO_FUNCTION and bias_mode != BiasMode.ZERO:
        raise UsageError("--event function 只适用于无偏置网络 (--bias-mode zero)")
    last_relu = (event == MCEvent.ZERO_FUNCTION) if args.last_layer_relu is None else args.last_layer_relu
    arch = Architecture(widths=widths, d_in=d_in, last_layer_relu=last_relu, bias_free=bias_mode == BiasMode.ZERO)
    spec = InitializerSpec(scheme=parse_scheme(args.init), sigma_b2=args.sigma_b2, bias_mode=bias_mode, seed=core.seed)
    n = core.mc_samples(core.section("montecarlo").get("samples", 100_000))
    point = args.point or [1.0] * d_in
    options = dict(seed=core.seed, chunk_size=core.mc_chunk_size, workers=core.mc_workers)
    if event == MCEvent.ZERO_FUNCTION:
        est = estimate_zero_function(arch, spec, n, **options)
    elif event == MCEvent.ZERO_AT_POINT:
        est = estimate_zero_at_point(arch, spec, point, n, **options)
    else:
        est = estimate_bias_output(arch, spec, point, n, **options)
    params = {"widths": list(widths), "event": event.value, "init": spec.model_dump(mode="json"), "point": point, "last_layer_relu": last_relu, "samples": n}
    row = [args.widths, event.value, spec.scheme.value, est.n, est.successes, est.p_hat, est.ci_low, est.ci_high, est.seed]
    core.emit(core.make_artifact("prob_mc", "prob mc", params, columns=["widths", "event", "scheme", "n", "successes", "p_hat", "ci_low", "ci_high", "seed"], rows=[row]))
    print(f"p_hat={est.p_hat!r} ci=[{est.ci_low!r}, {est.ci_high!r}] n={est.n}")
    return EXIT_OK


# --- safe-region / lengthmap ---


def _cmd_safe_region(args, core: LabCore) -> int:
    widths = list(parse_widths(args.widths)) if args.widths else list(range(1, args.max_width + 1))
    ps = args.p or [0.01, 0.1]
    rows = [list(r) for r in safe_region(widths, ps)]
    panel = PlotPanel(title="safe operating region", xlabel="width N", ylabel="max depth L")
    for p in ps:
        cell = [r for r in rows if r[1] == p]
        panel.series.append(PlotSeries(f"p={p}", [r[0] for r in cell], [r[2] for r in cell], "dashed"))
    columns = ["width", "p", "max_depth"]
    core.emit(core.make_artifact("safe_region", "safe-region", {"widths": widths, "p": ps}, columns=columns, rows=rows, panels=[panel]))
    _rows_to_stdout(columns, rows)
    return EXIT_OK


def _cmd_lengthmap(args, core: LabCore) -> int:
    activation = parse_activation(args.activation)
    params = LengthMapParams(sigma_w2=args.sigma_w2, sigma_b2=args.sigma_b2, q0=args.q0, depth=args.depth, activation=activation)
    nodes = int(core.section("analysis").get("quadrature_nodes", 64))
    general = length_map_general(params, nodes=nodes)
    closed = length_map_relu(params).values if activation == ActivationKind.RELU else [None] * args.depth
    empirical = [None] * args.depth
    if args.empirical_width:
        empirical = empirical_length_trajectory(
            args.empirical_width, args.depth, args.sigma_w2, args.sigma_b2, n_nets=args.n_nets, q0=args.q0, seed=core.seed, activation=activation
        ).values
    rows = [[l + 1, closed[l], general.values[l], empirical[l]] for l in range(args.depth)]
    layers = list(range(1, args.depth + 1))
    panel = PlotPanel(title=f"length map ({activation.value})", xlabel="layer l", ylabel="E[q^l]")
    panel.series.append(PlotSeries("quadrature", layers, list(general.values), "line"))
    if args.empirical_width:
        panel.series.append(PlotSeries(f"empirical (width {args.empirical_width})", layers, list(empirical), "points"))
    run_params = params.model_dump(mode="json") | {"empirical_width": args.empirical_width, "n_nets": args.n_nets, "nodes": nodes}
    columns = ["layer", "closed_form", "quadrature", "empirical"]
    core.emit(core.make_artifact("lengthmap", "lengthmap", run_params, columns=columns, rows=rows, panels=[panel]))
    _rows_to_stdout(columns, rows)
    return EXIT_OK


# --- train / classify ---


def _report_target(path: Optional[str], default_name: str, core: LabCore):
    """--report 指定的路径决定产物的目录与文件名"""
    if not path:
        return default_name, core.output_dir
    base = os.path.basename(path)
    name = base[:-5] if base.endswith(".json") else base
    return name, os.path.dirname(os.path.abspath(path))


def _fit_panel(net, target_id: str) -> PlotPanel:
    spec = get_target(target_id)
    X = default_grid(spec.d_in, 512 if spec.d_in == 1 else 32)
    xs = X[:, 0].tolist() if spec.d_in == 1 else list(range(X.shape[0]))
    panel = PlotPanel(title=f"N(x) vs y(x): {target_id}", xlabel="x" if spec.d_in == 1 else "grid index", ylabel="y")
    y, out = target_function(target_id)(X), predict(net, X)
    for j in range(spec.d_out):
        panel.series.append(PlotSeries(f"y{j + 1}" if spec.d_out > 1 else "y", xs, y[:, j].tolist(), "dashed"))
        panel.series.append(PlotSeries(f"N{j + 1}" if spec.d_out > 1 else "N", xs, out[:, j].tolist(), "line"))
    return panel


def _cmd_train(args, core: LabCore) -> int:
    arch = hidden_architecture(args.depth, args.width, args.target)
    section = core.section("training")
    section.setdefault("classification_tol", core.section("analysis").get("classification_tol", 2e-2))
    config = train_config_from_section(
        section,
        optimizer=args.opt,
        lr=args.lr,
        steps=args.steps,
        batch_size=args.batch,
        loss=args.loss,
        normalization=parse_normalization(args.norm) if args.norm else None,
        dropout_rate=args.dropout_rate,
        seed=core.seed,
    )
    spec = InitializerSpec(scheme=parse_scheme(args.init), seed=core.seed)
    report = train(arch, spec, args.target, config)

    name, out_dir = _report_target(args.report, f"train_{args.target}", core)
    steps = [s for s, _ in report.loss_trajectory]
    losses = [v for _, v in report.loss_trajectory]
    loss_panel = PlotPanel(title="training loss", xlabel="step", ylabel=config.loss.value, logy=bool(losses) and min(losses) > 0)
    loss_panel.series.append(PlotSeries("batch loss", steps, losses, "line"))
    params = {"target": args.target, "architecture": arch.model_dump(mode="json"), "init": spec.model_dump(mode="json"), "train": config.model_dump(mode="json")}
    artifact = core.make_artifact(
        name,
        "train",
        params,
        columns=["step", "loss"],
        rows=[list(p) for p in report.loss_trajectory],
        document=report.model_dump(mode="json"),
        panels=[loss_panel, _fit_panel(report.final_network(), args.target)],
    )
    artifact.output_dir = out_dir
    core.emit(artifact)
    if args.save_network:
        save_network(report.final_network(), args.save_network)
    print(
        f"target={args.target} steps={report.steps_run} final_loss={report.final_loss!r} "
        f"diverged={report.diverged} collapse={report.collapse.kind.value}"
    )
    return EXIT_OK


def _cmd_classify(args, core: LabCore) -> int:
    net = load_network(args.network)
    tol = args.tol if args.tol is not None else float(core.section("analysis").get("classification_tol", 2e-2))
    report = classify_state(net, args.target, loss=parse_loss(args.loss), tol=tol)
    name, out_dir = _report_target(args.report, "collapse_report", core)
    params = {"network": os.path.basename(args.network), "target": args.target, "loss": args.loss, "tol": tol}
    artifact = core.make_artifact(name, "classify", params, document={"target_id": args.target, "collapse": report.model_dump(mode="json")}, panels=[_fit_panel(net, args.target)])
    artifact.output_dir = out_dir
    core.emit(artifact)
    constant = "" if report.constant_value is None else f" constant={report.constant_value}"
    print(f"kind={report.kind.value}{constant} max_abs_error={report.max_abs_error!r}")
    return EXIT_OK


# --- experiment ---


def _cmd_experiment(args, core: LabCore) -> int:
    manager = ExperimentManager(core, core.section("experiments"))
    if args.fig_id == "list":
        for fig_id, description in manager.describe().items():
            print(f"{fig_id}\t{description}")
        return EXIT_OK
    artifacts = manager.run(args.fig_id)
    for artifact in artifacts:
        for kind in sorted(artifact.written):
            print(artifact.written[kind])
    return EXIT_OK


# --- 参数解析 ---


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="collapselab", description="深而窄 ReLU 网络塌缩实验室")
    parser.add_argument("--debug", action="store_true", help="启用 DEBUG 级别日志输出")
    parser.add_argument(
        "--filter",
        nargs="+",
        metavar="MODULE_NAME",
        help="仅显示指定模块的 INFO/DEBUG 级别日志 (WARNING 及以上级别总是显示)",
    )
    parser.add_argument("--log-file", help="额外写一份 DEBUG 级别的日志文件")
    parser.add_argument("--config", help="主配置文件路径 (默认使用项目根目录的 config.toml)")
    parser.add_argument("--seed", type=int, default=None, help="全局种子 (覆盖环境变量与配置)")
    parser.add_argument("--out", help="产物输出目录 (默认 [general].output_dir)")
    parser.add_argument("--error-report", help="失败时把 JSON 错误报告写到该路径")
    parser.add_argument("--samples", type=int, default=None, help="Monte Carlo 每单元样本数 (覆盖配置)")

    # 子命令也接受 --seed，SUPPRESS 保证不覆盖全局参数
    seed_parent = argparse.ArgumentParser(add_help=False)
    seed_parent.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="全局种子")

    sub = parser.add_subparsers(dest="command", required=True)

    prob = sub.add_parser("prob", help="初始化塌缩概率: exact | bound | mc")
    prob_sub = prob.add_subparsers(dest="prob_command", required=True)
    p_exact = prob_sub.add_parser("exact", parents=[seed_parent], help="宽度 2 的精确概率 (有理数)")
    p_exact.add_argument("--depth", type=int, required=True)
    p_exact.add_argument("--last-layer-relu", action=argparse.BooleanOptionalAction, default=None, help="默认最后一层带 ReLU")
    p_exact.set_defaults(handler=_cmd_prob_exact)
    p_bound = prob_sub.add_parser("bound", parents=[seed_parent], help="概率上界 1 - Π(1 - 2^{-N^l})")
    p_bound.add_argument("--widths", required=True, help="'3x10' 或 '2,3,4'")
    p_bound.add_argument("--last-layer-relu", action="store_true")
    p_bound.add_argument("--biases-nonzero", action="store_true")
    p_bound.set_defaults(handler=_cmd_prob_bound)
    p_mc = prob_sub.add_parser("mc", parents=[seed_parent], help="Monte Carlo 估计")
    p_mc.add_argument("--widths", required=True)
    p_mc.add_argument("--event", choices=[e.value for e in MCEvent], default=MCEvent.ZERO_FUNCTION.value)
    p_mc.add_argument("--init", default="he_normal")
    p_mc.add_argument("--bias-mode", choices=[m.value for m in BiasMode], default=BiasMode.ZERO.value)
    p_mc.add_argument("--sigma-b2", type=float, default=1.0)
    p_mc.add_argument("--point", type=float, nargs="+", default=None)
    p_mc.add_argument("--d-in", type=int, default=1)
    p_mc.add_argument("--last-layer-relu", action=argparse.BooleanOptionalAction, default=None, help="function 事件默认带，其余默认不带")
    p_mc.set_defaults(handler=_cmd_prob_mc)

    p_safe = sub.add_parser("safe-region", parents=[seed_parent], help="安全区域 (width, p, max_depth)")
    p_safe.add_argument("--p", type=float, action="append", help="可重复，默认 0.01 与 0.1")
    p_safe.add_argument("--widths", default=None)
    p_safe.add_argument("--max-width", type=int, default=64)
    p_safe.set_defaults(handler=_cmd_safe_region)

    p_len = sub.add_parser("lengthmap", parents=[seed_parent], help="长度映射 E[q^l]")
    p_len.add_argument("--sigma-w2", type=float, default=2.0)
    p_len.add_argument("--sigma-b2", type=float, default=0.0)
    p_len.add_argument("--q0", type=float, default=1.0)
    p_len.add_argument("--depth", type=int, default=100)
    p_len.add_argument("--activation", choices=[a.value for a in ActivationKind], default="relu")
    p_len.add_argument("--empirical-width", type=int, default=0, help="> 0 时同时测量随机网络的经验值")
    p_len.add_argument("--n-nets", type=int, default=1000)
    p_len.set_defaults(handler=_cmd_lengthmap)

    p_train = sub.add_parser("train", parents=[seed_parent], help="训练一个网络并判定塌缩")
    p_train.add_argument("--target", choices=sorted(TARGETS), default="abs1d")
    p_train.add_argument("--depth", type=int, default=10)
    p_train.add_argument("--width", type=int, default=2)
    p_train.add_argument("--init", default="he_normal")
    p_train.add_argument("--loss", choices=["mse", "mae"], default=None)
    p_train.add_argument("--opt", default=None)
    p_train.add_argument("--lr", type=float, default=None)
    p_train.add_argument("--steps", type=int, default=None)
    p_train.add_argument("--batch", type=int, default=None)
    p_train.add_argument("--norm", default=None, help="none | batchnorm | weightnorm | selu | dropout")
    p_train.add_argument("--dropout-rate", type=float, default=None)
    p_train.add_argument("--report", default=None, help="TrainReport JSON 路径")
    p_train.add_argument("--save-network", default=None, help="另存最终网络 (JSON)")
    p_train.set_defaults(handler=_cmd_train)

    p_cls = sub.add_parser("classify", parents=[seed_parent], help="对已保存的网络判定塌缩状态")
    p_cls.add_argument("--network", required=True)
    p_cls.add_argument("--target", choices=sorted(TARGETS), required=True)
    p_cls.add_argument("--loss", choices=["mse", "mae"], default="mse")
    p_cls.add_argument("--tol", type=float, default=None)
    p_cls.add_argument("--report", default=None)
    p_cls.set_defaults(handler=_cmd_classify)

    p_exp = sub.add_parser("experiment", parents=[seed_parent], help="复现图表 (<fig_id> 或 list)")
    p_exp.add_argument("fig_id")
    p_exp.set_defaults(handler=_cmd_experiment)
    return parser


def _command_name(args) -> str:
    if getattr(args, "command", None) == "prob":
        return f"prob {args.prob_command}"
    return getattr(args, "command", "") or ""


def _write_error_report(error: BaseException, command: str, path: Optional[str]) -> None:
    doc: Dict[str, Any] = {"error": type(error).__name__, "message": str(error), "command": command, "version": __version__}
    text = json.dumps(doc, ensure_ascii=False, sort_keys=True)
    print(text, file=sys.stderr)
    if path:
        try:
            atomic_write(path, text + "\n")
        except OSError as e:
            logger.error(f"写出错误报告失败: {e}")


def _build_core(args) -> LabCore:
    config, copied = initialize_configurations(base_dir=_BASE_DIR, config_path=args.config)
    if copied:
        logger.info("已根据模板创建 config.toml，继续运行。")
    seed = resolve_seed(config, args.seed)
    output_dir = args.out or config.get("general", {}).get("output_dir", "output")
    pipelines = PipelineManager()
    pipelines.load_pipelines(root_config_pipelines_section=config.get("pipelines"))
    return LabCore(config, seed, output_dir=output_dir, pipeline_manager=pipelines, samples=args.samples)


def run_command(argv: Optional[List[str]] = None) -> int:
    """解析参数并执行一个子命令，返回退出码。"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    configure_logging(args.debug, args.filter, args.log_file)
    command = _command_name(args)
    logger.debug(f"collapselab {__version__}: {command}")
    try:
        core = _build_core(args)
        return args.handler(args, core)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (CollapseLabError, ValidationError, ValueError, OSError) as e:
        logger.error(f"{command} 失败: {e}")
        _write_error_report(e, command, args.error_report)
        return EXIT_FAILURE
    except Exception as e:
        logger.critical(f"{command} 发生未预期的错误: {e}", exc_info=True)
        _write_error_report(e, command, args.error_report)
        return EXIT_FAILURE


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
