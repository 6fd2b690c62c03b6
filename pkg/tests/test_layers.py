import numpy as np
import pytest

from conftest import max_rel_error, numerical_grad
from ssimnet.errors import ConfigError, DataFormatError, ShapeError, StateError
from ssimnet.layers import Conv2D, Dense, LayerSpec, MaxPool2D, ReLU, softmax_xent
from ssimnet.model import ModelSpec, Network
from ssimnet.config import builtin_configs


def conv_spec(f, k, s=1, p=0):
    return LayerSpec("conv", out_channels=f, kernel=(k, k), stride=s, padding=p)


def naive_conv(x, w, b, stride, pad):
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, f, oh, ow))
    for a in range(n):
        for o in range(f):
            for i in range(oh):
                for j in range(ow):
                    acc = b[o]
                    for ch in range(c):
                        for u in range(kh):
                            for v in range(kw):
                                acc += w[o, ch, u, v] * xp[a, ch, i * stride + u, j * stride + v]
                    out[a, o, i, j] = acc
    return out


# -- LayerSpec ----------------------------------------------------------------

def test_layerspec_field_presence():
    LayerSpec("relu")
    LayerSpec("fc", out_channels=10)
    LayerSpec("maxpool", kernel=(2, 2), stride=2, padding=0)
    with pytest.raises(ConfigError):
        LayerSpec("conv", out_channels=3)
    with pytest.raises(ConfigError):
        LayerSpec("relu", kernel=(3, 3), stride=1, padding=0)
    with pytest.raises(ConfigError):
        LayerSpec("maxpool", out_channels=3, kernel=(2, 2), stride=2, padding=0)
    with pytest.raises(ConfigError):
        LayerSpec("bogus")


# -- conv -----------------------------------------------------------------------

def test_conv_sum_of_ones():
    layer = Conv2D(conv_spec(1, 3), 1)
    layer.params["weight"][...] = 1.0
    out = layer.forward(np.ones((1, 1, 3, 3)))
    np.testing.assert_array_equal(out, [[[[9.0]]]])


def test_conv_identity_kernel(rng):
    layer = Conv2D(conv_spec(1, 1), 1)
    layer.params["weight"][...] = 1.0
    x = rng.normal(size=(2, 1, 4, 4))
    np.testing.assert_array_equal(layer.forward(x), x)


@pytest.mark.parametrize("stride,pad", [(1, 1), (2, 1), (1, 0)])
def test_conv_matches_naive_loop(rng, stride, pad):
    layer = Conv2D(conv_spec(3, 3, stride, pad), 2, seed=3)
    layer.params["bias"][...] = rng.normal(size=3)
    x = rng.normal(size=(1, 2, 5, 5))
    expected = naive_conv(x, layer.params["weight"], layer.params["bias"], stride, pad)
    np.testing.assert_allclose(layer.forward(x), expected, rtol=0, atol=1e-12)


def test_conv_same_padding_preserves_size(rng):
    layer = Conv2D(conv_spec(32, 5, 1, 2), 3)
    assert layer.forward(rng.normal(size=(1, 3, 32, 32))).shape == (1, 32, 32, 32)


def test_conv_rejects_non_integral_geometry():
    with pytest.raises(ShapeError):
        Conv2D(conv_spec(1, 3, 2, 0), 1).forward(np.zeros((1, 1, 6, 6)))


def test_conv_backward_zero_grad(rng):
    layer = Conv2D(conv_spec(2, 3, 1, 1), 2)
    x = rng.normal(size=(1, 2, 5, 5))
    out = layer.forward(x)
    gi = layer.backward(np.zeros_like(out))
    assert not gi.any() and not layer.grads["weight"].any()


def test_conv_weight_grad_of_sum_is_sum_of_patches(rng):
    layer = Conv2D(conv_spec(2, 3), 1)
    x = rng.normal(size=(1, 1, 5, 5))
    out = layer.forward(x)
    layer.backward(np.ones_like(out))
    expected = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            expected += x[0, 0, i:i + 3, j:j + 3]
    np.testing.assert_allclose(layer.grads["weight"][0, 0], expected, atol=1e-12)
    np.testing.assert_allclose(layer.grads["weight"][1, 0], expected, atol=1e-12)
    np.testing.assert_allclose(layer.grads["bias"], [9.0, 9.0])


@pytest.mark.parametrize("stride,pad", [(1, 1), (2, 1)])
def test_conv_finite_differences(rng, stride, pad):
    layer = Conv2D(conv_spec(3, 3, stride, pad), 2, seed=5)
    layer.params["bias"][...] = rng.normal(size=3)
    x = rng.normal(size=(1, 2, 5, 5))
    g = rng.normal(size=layer.forward(x).shape)

    def loss():
        return float(np.sum(layer.forward(x) * g))

    loss()
    gi = layer.backward(g)
    for name in ("weight", "bias"):
        num = numerical_grad(loss, layer.params[name])
        assert max_rel_error(layer.grads[name], num) < 1e-6
    assert max_rel_error(gi, numerical_grad(loss, x)) < 1e-6


def test_backward_without_forward():
    with pytest.raises(StateError):
        Conv2D(conv_spec(1, 3), 1).backward(np.zeros((1, 1, 1, 1)))
    with pytest.raises(StateError):
        ReLU().backward(np.zeros(3))


# -- relu -----------------------------------------------------------------------

def test_relu():
    r = ReLU()
    np.testing.assert_array_equal(r.forward(np.array([-1.0, 0.0, 2.0])), [0, 0, 2])
    np.testing.assert_array_equal(r.backward(np.ones(3)), [0, 0, 1])


def test_relu_idempotent(rng):
    x = rng.normal(size=(4, 5))
    once = ReLU().forward(x)
    np.testing.assert_array_equal(ReLU().forward(once), once)


# -- maxpool ----------------------------------------------------------------------

def test_maxpool_basic():
    out = MaxPool2D().forward(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))
    np.testing.assert_array_equal(out, [[[[4.0]]]])


def test_maxpool_ties_route_to_first():
    p = MaxPool2D()
    x = np.full((1, 1, 4, 4), 3.0)
    p.forward(x)
    gi = p.backward(np.ones((1, 1, 2, 2)))
    expected = np.zeros((4, 4))
    expected[::2, ::2] = 1
    np.testing.assert_array_equal(gi[0, 0], expected)


def test_maxpool_matches_window_enumeration(rng):
    x = rng.normal(size=(1, 1, 4, 4))
    g = rng.normal(size=(1, 1, 2, 2))
    p = MaxPool2D()
    out = p.forward(x)
    gi = p.backward(g)
    exp_out = np.zeros((2, 2))
    exp_gi = np.zeros((4, 4))
    for i in range(2):
        for j in range(2):
            win = x[0, 0, 2 * i:2 * i + 2, 2 * j:2 * j + 2]
            exp_out[i, j] = win.max()
            u, v = divmod(int(np.argmax(win)), 2)
            exp_gi[2 * i + u, 2 * j + v] = g[0, 0, i, j]
    np.testing.assert_array_equal(out[0, 0], exp_out)
    np.testing.assert_array_equal(gi[0, 0], exp_gi)


def test_maxpool_conserves_gradient_mass_and_truncates_odd(rng):
    p = MaxPool2D()
    x = rng.normal(size=(2, 3, 5, 7))
    out = p.forward(x)
    assert out.shape == (2, 3, 2, 3)
    g = rng.normal(size=out.shape)
    gi = p.backward(g)
    assert gi.shape == x.shape
    assert gi.sum() == pytest.approx(g.sum(), abs=1e-12)
    assert not gi[:, :, 4, :].any() and not gi[:, :, :, 6].any()


def test_maxpool_window_too_large():
    with pytest.raises(ConfigError):
        MaxPool2D().forward(np.zeros((1, 1, 1, 4)))


# -- fc -----------------------------------------------------------------------------

def test_fc_identity_and_bias(rng):
    fc = Dense(LayerSpec("fc", out_channels=4), 4)
    fc.params["weight"][...] = np.eye(4)
    x = rng.normal(size=(3, 4))
    np.testing.assert_array_equal(fc.forward(x), x)
    fc.params["bias"][...] = [1, 2, 3, 4]
    np.testing.assert_array_equal(fc.forward(np.zeros((2, 4))), [[1, 2, 3, 4]] * 2)


def test_fc_finite_differences(rng):
    fc = Dense(LayerSpec("fc", out_channels=3), 8, seed=1)
    fc.params["bias"][...] = rng.normal(size=3)
    x = rng.normal(size=(2, 2, 2, 2))
    g = rng.normal(size=(2, 3))

    def loss():
        return float(np.sum(fc.forward(x) * g))

    loss()
    gi = fc.backward(g)
    assert gi.shape == x.shape
    for name in ("weight", "bias"):
        assert max_rel_error(fc.grads[name], numerical_grad(loss, fc.params[name])) < 1e-6
    assert max_rel_error(gi, numerical_grad(loss, x)) < 1e-6


def test_fc_dimension_mismatch():
    with pytest.raises(ShapeError):
        Dense(LayerSpec("fc", out_channels=3), 8).forward(np.zeros((1, 7)))


# -- softmax cross-entropy -------------------------------------------------------

def test_xent_uniform_logits():
    loss, _, _ = softmax_xent(np.zeros((3, 10)), np.array([0, 4, 9]))
    assert loss == pytest.approx(np.log(10), abs=1e-12)
    assert loss == pytest.approx(2.302585, abs=1e-6)


def test_xent_saturated():
    logits = np.zeros((1, 10))
    logits[0, 3] = 1000.0
    loss, grad, _ = softmax_xent(logits, np.array([3]))
    assert loss == pytest.approx(0.0, abs=1e-12)
    assert np.all(np.isfinite(grad))


def test_xent_finite_differences(rng):
    logits = rng.normal(size=(2, 5))
    targets = np.array([1, 4])
    _, grad, _ = softmax_xent(logits, targets)
    num = numerical_grad(lambda: softmax_xent(logits, targets)[0], logits)
    assert max_rel_error(grad, num) < 1e-6


def test_xent_rejects_bad_target():
    with pytest.raises(DataFormatError):
        softmax_xent(np.zeros((1, 10)), np.array([10]))


# -- model composition ---------------------------------------------------------------

@pytest.mark.parametrize("name", sorted(builtin_configs()))
def test_builtin_models_produce_ten_logits(name, rng):
    net = Network(builtin_configs()[name].model, seed=0)
    assert net.forward(rng.normal(size=(2, 3, 32, 32))).shape == (2, 10)


def test_model_spec_rejects_bad_chain():
    bad = ModelSpec((conv_spec(4, 3, 1, 1), LayerSpec("fc", out_channels=5)),
                    input_shape=(1, 8, 8), num_classes=10)
    with pytest.raises(ConfigError):
        bad.validate()
    bad = ModelSpec((LayerSpec("fc", out_channels=10), conv_spec(4, 3)), input_shape=(1, 8, 8))
    with pytest.raises(ConfigError):
        bad.validate()


def test_network_gradient_all_layer_kinds(rng):
    spec = ModelSpec(
        (LayerSpec("ssim", out_channels=2, kernel=(3, 3), stride=1, padding=1), LayerSpec("relu"),
         LayerSpec("maxpool", kernel=(2, 2), stride=2, padding=0),
         conv_spec(3, 3, 1, 1), LayerSpec("relu"), LayerSpec("fc", out_channels=4)),
        input_shape=(2, 6, 6), num_classes=4,
    )
    net = Network(spec, seed=2)
    x = rng.normal(size=(2, 2, 6, 6))
    y = np.array([1, 3])

    def loss():
        return softmax_xent(net.forward(x), y)[0]

    net.zero_grad()
    _, _, gi = net.loss_and_grads(x, y, need_input=True)
    for name, p in net.named_parameters().items():
        num = numerical_grad(loss, p)
        assert max_rel_error(net.named_gradients()[name], num) < 1e-5, name
    assert max_rel_error(gi, numerical_grad(loss, x)) < 1e-5
