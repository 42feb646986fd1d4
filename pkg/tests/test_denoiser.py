import numpy as np
import pytest

from ordinal_diffusion import numcore as nc
from ordinal_diffusion.denoiser import (
    NULL_CLASS, ArchConfig, NoiseModel, init_params, predict_noise, time_embed,
)


@pytest.fixture(scope="module")
def arch():
    return ArchConfig(D=3, C=4)


def test_same_seed_bit_identical(arch):
    a, b = init_params(arch, 11), init_params(arch, 11)
    assert a.names() == b.names()
    assert all(a.tensors[k].tobytes() == b.tensors[k].tobytes() for k in a.names())


def test_different_seed_differs(arch):
    a, b = init_params(arch, 11), init_params(arch, 12)
    assert not np.array_equal(a.tensors["W1"], b.tensors["W1"])


def test_init_scale_monte_carlo():
    # U(-1/sqrt(n), 1/sqrt(n)) has E|w| = 1/(2 sqrt(n)); hidden layers are 128 wide
    arch = ArchConfig(D=2, C=4)
    draws = [np.abs(init_params(arch, s).tensors["W1"]).mean() for s in range(5)]
    expected = 0.5 / np.sqrt(128)
    assert np.mean(draws) == pytest.approx(expected, rel=0.2)


def test_embedding_table_shape_and_scale(arch):
    emb = init_params(arch, 0).tensors["class_embed"]
    assert emb.shape == (arch.C + 1, arch.E)
    assert emb.std() == pytest.approx(0.02, rel=0.5)


def test_layer_shapes(arch):
    p = init_params(arch, 0)
    assert p.tensors["W0"].shape == (3 + 16 + 16, 128)
    assert p.tensors["W3"].shape == (128, 3)
    assert p.num_layers() == 4


@pytest.mark.parametrize("kw", [{"D": 0, "C": 3}, {"D": 2, "C": 1}, {"D": 2, "C": 3, "hidden": ()},
                                {"D": 2, "C": 3, "activation": "relu6"}])
def test_bad_arch(kw):
    with pytest.raises(ValueError):
        ArchConfig(**kw)


def test_arch_hash_stable_and_sensitive():
    a = ArchConfig(D=2, C=4)
    assert a.hash() == ArchConfig.from_dict(a.to_dict()).hash()
    assert a.hash() != ArchConfig(D=2, C=5).hash()


class TestTimeEmbed:
    def test_range(self):
        for t in (1, 250, 999, 1000):
            v = time_embed(t, 1000, 8)
            assert v.shape == (16,)
            assert np.all(np.abs(v) <= 1)

    def test_deterministic(self):
        assert time_embed(37, 1000, 8).tobytes() == time_embed(37, 1000, 8).tobytes()

    def test_injective_on_full_grid(self):
        grid = np.stack([time_embed(t, 1000, 8) for t in range(1, 1001)])
        d = np.sqrt(((grid[:, None, :] - grid[None, :, :]) ** 2).sum(-1))
        np.fill_diagonal(d, np.inf)
        assert d.min() > 1e-6

    @pytest.mark.parametrize("t", [0, 1001])
    def test_out_of_range(self, t):
        with pytest.raises(ValueError):
            time_embed(t, 1000, 8)


class TestPredictNoise:
    def test_shape(self, arch):
        p = init_params(arch, 0)
        x = np.random.default_rng(0).normal(size=(5, 3))
        assert predict_noise(p, x, 10, 2).shape == x.shape

    def test_deterministic(self, arch):
        p = init_params(arch, 0)
        x = np.random.default_rng(0).normal(size=(5, 3))
        assert predict_noise(p, x, 10, 2).tobytes() == predict_noise(p, x, 10, 2).tobytes()

    def test_class_changes_output(self, arch):
        p = init_params(arch, 0)
        x = np.random.default_rng(1).normal(size=(4, 3))
        outs = [predict_noise(p, x, 500, c) for c in (None, 1, 2, 3, 4)]
        for i in range(len(outs)):
            for j in range(i + 1, len(outs)):
                assert not np.array_equal(outs[i], outs[j])

    def test_null_uses_row_zero(self, arch):
        p = init_params(arch, 0)
        x = np.ones((2, 3))
        base = predict_noise(p, x, 5, NULL_CLASS)
        p.tensors["class_embed"][1:] += 1.0
        np.testing.assert_array_equal(predict_noise(p, x, 5, None), base)
        p.tensors["class_embed"][0] += 1.0
        assert not np.array_equal(predict_noise(p, x, 5, None), base)

    @pytest.mark.parametrize("c", [5, -1, 2.5])
    def test_unknown_class(self, arch, c):
        with pytest.raises(ValueError):
            predict_noise(init_params(arch, 0), np.zeros((1, 3)), 5, c)

    def test_wrong_width(self, arch):
        with pytest.raises(nc.ShapeError):
            predict_noise(init_params(arch, 0), np.zeros((1, 4)), 5, 1)

    def test_does_not_mutate_params(self, arch):
        p = init_params(arch, 0)
        before = {k: v.copy() for k, v in p.tensors.items()}
        predict_noise(p, np.ones((3, 3)), 5, 1)
        assert all(np.array_equal(before[k], p.tensors[k]) for k in before)


def test_grad_check_through_network():
    arch = ArchConfig(D=2, C=3, hidden=(5, 4), E=3, F=2, T=100, activation="silu")
    params = init_params(arch, 3)
    params.tensors["class_embed"] *= 30
    model = NoiseModel(params, trainable=True)
    rng = np.random.default_rng(0)
    x = rng.normal(size=(4, 2))
    target = rng.normal(size=(4, 2))
    labels = np.array([0, 1, 2, 3])
    names = list(model.nodes)

    def f(ps):
        model.nodes = dict(zip(names, ps))
        return nc.reduce_mean(nc.square(nc.sub(model(x, 40, labels), nc.constant(target))))

    rep = nc.grad_check(f, [model.nodes[k] for k in names], rtol=1e-4)
    assert rep.passed, rep.flagged[:5]
