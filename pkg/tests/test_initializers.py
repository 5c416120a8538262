import math

import numpy as np
import pytest

from src.core.initializers import (
    BiasMode,
    InitializerSpec,
    InitScheme,
    draw_parameter_batch,
    init_network,
    init_parameters,
    lsuv_rescale_detailed,
    orthogonal_matrix,
    parse_scheme,
)
from src.core.network import Architecture, forward_batch
from src.core.rng import make_generator
from src.utils.errors import ArgumentError, UnsupportedError


def test_parse_scheme():
    assert parse_scheme("orthogonal") == InitScheme.ORTHOGONAL
    with pytest.raises(UnsupportedError):
        parse_scheme("xavier_magic")


def test_same_seed_same_parameters():
    arch = Architecture(widths=(4, 4, 1))
    a = init_parameters(arch, InitializerSpec(seed=12))
    b = init_parameters(arch, InitializerSpec(seed=12))
    c = init_parameters(arch, InitializerSpec(seed=13))
    for x, y in zip(a.arrays(), b.arrays()):
        np.testing.assert_array_equal(x, y)
    assert not np.array_equal(a.weights[0], c.weights[0])


@pytest.mark.parametrize("scheme", [InitScheme.HE_NORMAL, InitScheme.GLOROT_UNIFORM, InitScheme.RADEMACHER])
def test_flip_sign_negates_symmetric_schemes(scheme):
    arch = Architecture(widths=(3, 3, 1))
    spec = InitializerSpec(scheme=scheme, bias_mode=BiasMode.SYMMETRIC, seed=2)
    plain = init_parameters(arch, spec)
    flipped = init_parameters(arch, spec, flip_sign=True)
    for x, y in zip(plain.arrays(), flipped.arrays()):
        np.testing.assert_array_equal(x, -y)


def test_symmetry_flag():
    assert InitializerSpec(scheme=InitScheme.RADEMACHER).is_symmetric
    assert not InitializerSpec(scheme=InitScheme.ORTHOGONAL).is_symmetric
    assert not InitializerSpec(scheme=InitScheme.LSUV).is_symmetric


class TestDistributions:
    M = 20_000

    def _weights(self, scheme, fan_in=8, fan_out=4, **kw):
        arch = Architecture(widths=(fan_out,), d_in=fan_in)
        spec = InitializerSpec(scheme=scheme, **kw)
        weights, biases = draw_parameter_batch(arch, spec, self.M, make_generator(0, 42))
        return weights[0], biases[0]

    def test_he_normal_variance(self):
        w, b = self._weights(InitScheme.HE_NORMAL)
        assert w.shape == (self.M, 4, 8)
        assert abs(w.var() - 2.0 / 8) < 0.01 * (2.0 / 8)
        assert abs(w.mean()) < 0.005
        assert np.all(b == 0.0)

    def test_lecun_normal_variance(self):
        w, _ = self._weights(InitScheme.LECUN_NORMAL)
        assert abs(w.var() - 1.0 / 8) < 0.01 * (1.0 / 8)

    def test_glorot_uniform_bound(self):
        w, _ = self._weights(InitScheme.GLOROT_UNIFORM)
        bound = math.sqrt(6.0 / 12)
        assert np.max(np.abs(w)) <= bound
        assert abs(w.var() - bound**2 / 3) < 0.01 * bound**2 / 3

    def test_symmetric_uniform_variance(self):
        w, _ = self._weights(InitScheme.SYMMETRIC_UNIFORM, sigma_w2=1.5)
        assert abs(w.var() - 1.5 / 8) < 0.01 * 1.5 / 8

    def test_rademacher_values(self):
        w, _ = self._weights(InitScheme.RADEMACHER, sigma_w2=2.0)
        assert set(np.unique(w)) == {-0.5, 0.5}

    def test_symmetric_bias_variance(self):
        _, b = self._weights(InitScheme.HE_NORMAL, bias_mode=BiasMode.SYMMETRIC, sigma_b2=0.25)
        assert abs(b.var() - 0.25) < 0.03 * 0.25

    def test_bias_free_architecture_overrides_bias_mode(self):
        arch = Architecture(widths=(3, 1), bias_free=True)
        net = init_network(arch, InitializerSpec(bias_mode=BiasMode.SYMMETRIC, seed=1))
        assert all(np.all(b == 0.0) for b in net.params.biases)

    def test_orthogonal_batch_rows_are_orthonormal(self):
        w, _ = self._weights(InitScheme.ORTHOGONAL, fan_in=8, fan_out=4)
        gram = w[:50] @ np.swapaxes(w[:50], 1, 2)
        np.testing.assert_allclose(gram, np.broadcast_to(np.eye(4), gram.shape), atol=1e-12)


class TestOrthogonal:
    def test_wide_matrix_has_orthonormal_rows(self):
        q = orthogonal_matrix(3, 5, seed=1)
        assert q.shape == (3, 5)
        np.testing.assert_allclose(q @ q.T, np.eye(3), atol=1e-12)

    def test_tall_matrix_has_orthonormal_columns(self):
        q = orthogonal_matrix(5, 3, seed=1)
        np.testing.assert_allclose(q.T @ q, np.eye(3), atol=1e-12)

    def test_rejects_empty_shape(self):
        with pytest.raises(ArgumentError):
            orthogonal_matrix(0, 3, seed=1)

    def test_determinant_sign_is_balanced(self):
        signs = np.array([np.sign(np.linalg.det(orthogonal_matrix(3, 3, seed=s))) for s in range(10_000)])
        assert set(np.unique(signs)) == {-1.0, 1.0}
        assert abs(float(np.mean(signs > 0)) - 0.5) < 0.03


class TestLSUV:
    def test_layers_reach_unit_std(self):
        arch = Architecture(widths=(16, 16, 16, 1))
        net = init_network(arch, InitializerSpec(scheme=InitScheme.LSUV, seed=3))
        probe = make_generator(3, 7).uniform(-math.sqrt(3), math.sqrt(3), (256, 1))
        result = lsuv_rescale_detailed(net, probe)
        trace = forward_batch(result.network, probe)
        for l in range(1, arch.depth + 1):
            if l in result.dead_layers:
                continue
            assert 0.95 <= float(np.std(trace.h[l - 1])) <= 1.05
        assert len(result.scales) == arch.depth

    def test_dead_layer_is_left_alone(self):
        arch = Architecture(widths=(2, 1))
        net = init_network(arch, InitializerSpec(scheme=InitScheme.ORTHOGONAL, seed=0))
        zero = net.with_params(net.params.rebuild([np.zeros_like(a) for a in net.params.arrays()]))
        result = lsuv_rescale_detailed(zero, np.ones((4, 1)))
        assert result.dead_layers == (1, 2)
        assert result.scales == (1.0, 1.0)

    def test_rejects_empty_probe(self):
        net = init_network(Architecture(widths=(2, 1)), InitializerSpec(scheme=InitScheme.LSUV))
        with pytest.raises(ArgumentError):
            lsuv_rescale_detailed(net, np.zeros((0, 1)))

    @pytest.mark.parametrize("seed", range(20))
    def test_preactivation_signs_survive_rescaling(self, seed):
        arch = Architecture(widths=(8, 8, 8, 1))
        spec = InitializerSpec(scheme=InitScheme.ORTHOGONAL, bias_mode=BiasMode.SYMMETRIC, seed=seed)
        net = init_network(arch, spec)
        probe = make_generator(seed, 9).uniform(-math.sqrt(3), math.sqrt(3), (64, 1))
        result = lsuv_rescale_detailed(net, probe)
        before, after = forward_batch(net, probe), forward_batch(result.network, probe)
        for l in range(arch.depth):
            np.testing.assert_array_equal(np.sign(before.h[l]), np.sign(after.h[l]))

    def test_biases_scale_with_their_layer(self):
        arch = Architecture(widths=(8, 8, 1))
        net = init_network(arch, InitializerSpec(scheme=InitScheme.ORTHOGONAL, bias_mode=BiasMode.SYMMETRIC, seed=4))
        probe = make_generator(4, 9).uniform(-math.sqrt(3), math.sqrt(3), (64, 1))
        result = lsuv_rescale_detailed(net, probe)
        before, after = forward_batch(net, probe), forward_batch(result.network, probe)
        # 第 l 层的预激活是原值乘以前 l 层缩放的乘积
        factor = 1.0
        for l, scale in enumerate(result.scales):
            factor *= scale
            np.testing.assert_allclose(after.h[l], factor * before.h[l], rtol=1e-10, atol=1e-12)
