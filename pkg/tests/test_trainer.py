import math

import numpy as np
import pytest

from src.analysis.collapse import CollapseKind
from src.core.initializers import InitializerSpec, InitScheme, init_network
from src.core.layers import ActivationKind, NormalizationMode
from src.core.network import Architecture, predict, reference_network
from src.training.losses import LossKind
from src.training.optimizers import OPTIMIZERS, OptimizerConfig
from src.training.trainer import (
    TRAJECTORY_POINTS,
    TrainConfig,
    TrainJob,
    build_initial_network,
    hidden_architecture,
    train,
    train_config_from_section,
    train_many,
    train_network,
)
from src.utils.errors import ShapeError


def _config(**kw):
    base = dict(optimizer=OptimizerConfig(name="adam", lr=0.01), steps=30, batch_size=16, seed=1)
    base.update(kw)
    return TrainConfig(**base)


def test_hidden_architecture():
    arch = hidden_architecture(4, 3, "abs2d")
    assert arch.widths == (3, 3, 3, 2)
    assert arch.d_in == 2
    assert not arch.last_layer_relu


class TestTrain:
    def test_same_seed_same_run(self):
        arch = hidden_architecture(3, 4, "xsin5x")
        spec = InitializerSpec(seed=2)
        a = train(arch, spec, "xsin5x", _config())
        b = train(arch, spec, "xsin5x", _config())
        assert a.loss_trajectory == b.loss_trajectory
        assert a.network == b.network
        assert a.collapse == b.collapse

    def test_trajectory_sampling(self):
        arch = hidden_architecture(2, 3, "abs1d")
        short = train(arch, InitializerSpec(seed=0), "abs1d", _config(steps=50))
        assert [s for s, _ in short.loss_trajectory] == list(range(1, 51))
        long = train(arch, InitializerSpec(seed=0), "abs1d", _config(steps=450, batch_size=8))
        assert len(long.loss_trajectory) <= TRAJECTORY_POINTS
        assert long.loss_trajectory[-1][0] == 450
        assert long.steps_run == 450

    def test_divergence_is_recorded(self):
        arch = Architecture(widths=(1,), d_in=1)
        config = _config(optimizer=OptimizerConfig(name="sgd", lr=1e6), steps=200)
        report = train(arch, InitializerSpec(seed=3), "abs1d", config)
        assert report.diverged
        assert 1 <= report.divergence_step <= 200
        assert report.steps_run == report.divergence_step - 1
        assert report.final_loss is None
        final = report.final_network()
        assert all(np.all(np.isfinite(a)) for a in final.params.arrays())

    @pytest.mark.parametrize("name", ["sgd", "adam"])
    def test_fitting_the_reference_network_stays_fitted(self, name):
        config = _config(optimizer=OptimizerConfig(name=name, lr=1e-3), steps=1000)
        report = train_network(reference_network("abs1d"), "abs1d", config)
        assert report.steps_run == 1000
        assert max(loss for _, loss in report.loss_trajectory) < 1e-6
        assert report.collapse.kind == CollapseKind.FITTED
        assert report.final_loss < 1e-6

    def test_dead_network_does_not_move(self):
        arch = hidden_architecture(3, 2, "abs1d")
        net = init_network(arch, InitializerSpec(seed=0))
        zero = [np.zeros_like(a) for a in net.params.arrays()]
        net = net.with_params(net.params.rebuild(zero))
        report = train_network(net, "abs1d", _config(steps=40, optimizer=OptimizerConfig(name="sgd", lr=0.05)))
        final = report.final_network()
        for l in (1, 2):
            assert np.all(final.params.layer_arrays(l)[0] == 0.0)
        assert report.collapse.kind == CollapseKind.FULL_COLLAPSE
        assert report.collapse.zero_layer == 1

    @pytest.mark.parametrize("name", sorted(OPTIMIZERS))
    def test_dead_prefix_stays_frozen(self, name):
        arch = hidden_architecture(3, 2, "abs1d")
        net = init_network(arch, InitializerSpec(seed=4))
        # 定义域上第一层预激活恒为负
        dead = {("weights", 1): np.array([[0.5], [-0.7]]), ("biases", 1): np.array([-3.0, -3.0])}
        net = net.with_params(net.params.rebuild([dead.get((n, l), a) for n, l, a in net.params.named_arrays()]))
        report = train_network(net, "abs1d", _config(steps=1000, optimizer=OptimizerConfig(name=name, lr=0.01)))
        final = report.final_network()
        assert report.steps_run == 1000
        np.testing.assert_array_equal(final.params.weights[0], dead[("weights", 1)])
        np.testing.assert_array_equal(final.params.biases[0], dead[("biases", 1)])
        np.testing.assert_array_equal(final.params.weights[1], net.params.weights[1])

    def test_mae_run(self):
        arch = hidden_architecture(2, 8, "stepsin")
        report = train(arch, InitializerSpec(seed=5), "stepsin", _config(loss=LossKind.MAE, steps=20))
        assert report.config.loss == LossKind.MAE
        assert math.isfinite(report.final_loss)

    @pytest.mark.parametrize("mode", ["batchnorm", "weightnorm", "selu", "dropout"])
    def test_normalized_runs_finish(self, mode):
        arch = hidden_architecture(3, 4, "abs1d")
        config = _config(normalization=NormalizationMode(mode), dropout_rate=0.1 if mode == "dropout" else 0.0, steps=15)
        report = train(arch, InitializerSpec(seed=6), "abs1d", config)
        assert report.steps_run == 15
        assert report.final_network().normalization.mode.value == mode

    def test_batchnorm_running_stats_move(self):
        arch = hidden_architecture(3, 4, "abs1d")
        report = train(arch, InitializerSpec(seed=6), "abs1d", _config(normalization=NormalizationMode.BATCHNORM, steps=10))
        net = report.final_network()
        assert not np.allclose(net.running_mean[0], 0.0)

    def test_wrong_target_dimension(self):
        net = init_network(Architecture(widths=(2, 1), d_in=2), InitializerSpec())
        with pytest.raises(ShapeError):
            train_network(net, "abs1d", _config())


class TestInitialNetwork:
    def test_selu_forces_lecun_normal(self):
        arch = hidden_architecture(3, 4, "abs1d")
        net, spec = build_initial_network(arch, InitializerSpec(), "abs1d", _config(normalization=NormalizationMode.SELU))
        assert spec.scheme == InitScheme.LECUN_NORMAL
        assert net.activation == ActivationKind.SELU

    def test_lsuv_rescales(self):
        arch = hidden_architecture(4, 8, "abs1d")
        plain, _ = build_initial_network(arch, InitializerSpec(scheme=InitScheme.ORTHOGONAL, seed=4), "abs1d", _config())
        lsuv, _ = build_initial_network(arch, InitializerSpec(scheme=InitScheme.LSUV, seed=4), "abs1d", _config())
        X = np.linspace(-1.0, 1.0, 5)[:, None]
        assert not np.allclose(predict(plain, X), predict(lsuv, X))


class TestConfigSection:
    def test_overrides_win_and_none_is_ignored(self):
        section = {"optimizer": "sgd", "lr": 0.1, "steps": 5, "batch_size": 8, "loss": "mae", "workers": 3}
        config = train_config_from_section(section, lr=0.5, steps=None, seed=4)
        assert config.optimizer.name == "sgd"
        assert config.optimizer.lr == 0.5
        assert config.steps == 5
        assert config.loss == LossKind.MAE
        assert config.seed == 4

    def test_optimizer_options_are_routed(self):
        config = train_config_from_section({"optimizer": "sgd_nesterov", "momentum": 0.5})
        assert config.optimizer.momentum == 0.5
        assert config.optimizer.lr == 1e-3


class TestTrainMany:
    def test_results_do_not_depend_on_workers(self):
        arch = hidden_architecture(3, 3, "abs1d")
        jobs = [TrainJob(arch=arch, init=InitializerSpec(seed=s), target_id="abs1d", config=_config(seed=s, steps=10)) for s in range(3)]
        serial = train_many(jobs, workers=1)
        parallel = train_many(jobs, workers=2)
        assert [r.network for r in serial] == [r.network for r in parallel]
        assert [r.collapse.kind for r in serial] == [r.collapse.kind for r in parallel]
