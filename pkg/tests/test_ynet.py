import numpy as np
import pytest
from conftest import MINI_IMAGE, MINI_SIGNAL, mini_config
from hypothesis import given, settings
from hypothesis import strategies as st

from pat_ynet import nn
from pat_ynet.nn import AdamState, Tensor, adam_step, finite_diff_check
from pat_ynet.ynet import (VARIANTS, YNetConfig, compute_loss, decoder_forward, encoder1_forward, encoder2_forward,
                           fan_in, init_params, ynet_forward)


def mini_inputs(batch=2, seed=0, dtype=np.float64):
    r = np.random.default_rng(seed)
    b = r.uniform(-1, 1, (batch, 1, *MINI_SIGNAL)).astype(dtype)
    f = r.uniform(-1, 1, (batch, 1, *MINI_IMAGE)).astype(dtype)
    gt = r.random((batch, 1, *MINI_IMAGE)).astype(dtype)
    return b, f, gt


def test_config_validation():
    with pytest.raises(ValueError):
        YNetConfig(base_channels=0)
    with pytest.raises(ValueError):
        YNetConfig(variant="bogus")
    with pytest.raises(ValueError):
        YNetConfig(aux_weight=-1)
    with pytest.raises(ValueError):
        YNetConfig(signal_shape=(2048, 128))
    cfg = YNetConfig(variant="enc1_only_skips")
    assert YNetConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.channels == [16, 32, 64, 128, 256]


def test_full_size_shapes():
    model = init_params(YNetConfig(base_channels=1), 0)
    b = Tensor(np.zeros((2, 1, 2560, 128), np.float32))
    skips, z1 = encoder1_forward(model, b)
    assert [s.shape[2:] for s in skips] == [(2560, 128), (1280, 64), (640, 32), (320, 16)]
    assert z1.shape == (2, 16, 8, 8)
    skips2, z2 = encoder2_forward(model, Tensor(np.zeros((2, 1, 128, 128), np.float32)))
    assert [s.shape[2:] for s in skips2] == [(128, 128), (64, 64), (32, 32), (16, 16)]
    assert z2.shape == (2, 16, 8, 8)
    f = decoder_forward(model, z1, z2, skips, skips2)
    assert f.shape == (2, 1, 128, 128)


@settings(max_examples=6)
@given(st.integers(1, 3), st.sampled_from(VARIANTS))
def test_shape_pipeline_any_width(c, variant):
    model = init_params(mini_config(base_channels=c, variant=variant), 0, dtype=np.float64)
    b, f, _ = mini_inputs(1)
    skips, z1 = encoder1_forward(model, b)
    assert [s.shape[1:] for s in skips] == [(c, 640, 32), (2 * c, 320, 16), (4 * c, 160, 8), (8 * c, 80, 4)]
    assert z1.shape == (1, 16 * c, 2, 2)
    out, _ = ynet_forward(model, b, f)
    assert out.shape == (1, 1, *MINI_IMAGE)


def test_wrong_input_shape_rejected():
    model = init_params(mini_config(), 0)
    with pytest.raises(ValueError):
        encoder1_forward(model, np.zeros((1, 1, 320, 32)))
    with pytest.raises(ValueError):
        encoder2_forward(model, np.zeros((1, 2, *MINI_IMAGE)))
    with pytest.raises(ValueError):
        ynet_forward(model, None, np.zeros((1, 1, *MINI_IMAGE)))


@pytest.mark.parametrize("training", [False, True])
def test_zero_input_gives_zero_bottleneck(training):
    model = init_params(mini_config(), 0, dtype=np.float64)
    _, z1 = encoder1_forward(model, np.zeros((2, 1, *MINI_SIGNAL)), training=training)
    _, z2 = encoder2_forward(model, np.zeros((2, 1, *MINI_IMAGE)), training=training)
    assert not z1.data.any() and not z2.data.any()


def test_eval_deterministic_and_finite():
    model = init_params(mini_config(), 3)
    b, f, _ = mini_inputs(2, dtype=np.float32)
    a1, _ = ynet_forward(model, b, f)
    a2, _ = ynet_forward(model, b, f)
    np.testing.assert_array_equal(a1.data, a2.data)
    assert np.all(np.isfinite(a1.data))


def test_zero_last_layer_gives_zero_output():
    model = init_params(mini_config(), 0)
    model.params["dec.out.kernel"].data[:] = 0
    model.params["dec.out.bias"].data[:] = 0
    b, f, _ = mini_inputs(2, dtype=np.float32)
    out, _ = ynet_forward(model, b, f, training=True)
    assert not out.data.any()


def randomize_output(model, seed=0):
    # the output kernel starts at zero, which would hide every input dependence
    w = model.params["dec.out.kernel"].data
    w[:] = np.random.default_rng(seed).normal(0, 0.5, w.shape)
    return model


def test_output_kernel_starts_at_zero():
    model = init_params(mini_config(), 3)
    assert not model.params["dec.out.kernel"].data.any()
    assert model.params["enc1.l1.conv1.kernel"].data.any()


def test_full_output_depends_on_both_inputs():
    model = randomize_output(init_params(mini_config(), 1, dtype=np.float64))
    b, f, _ = mini_inputs(2)
    bt, ft = Tensor(b, requires_grad=True), Tensor(f, requires_grad=True)
    out, _ = ynet_forward(model, bt, ft)
    out.sum().backward()
    assert np.abs(bt.grad).max() > 0 and np.abs(ft.grad).max() > 0
    b2 = b.copy()
    b2[:, :, 100:200] += 0.5
    out2, _ = ynet_forward(model, b2, f)
    assert not np.array_equal(out.data, out2.data)


def test_unet_post_ignores_sinogram():
    model = init_params(mini_config(variant="unet_post"), 1)
    b, f, _ = mini_inputs(2, dtype=np.float32)
    o1, _ = ynet_forward(model, b, f)
    o2, _ = ynet_forward(model, -b * 0.3, f)
    o3, _ = ynet_forward(model, None, f)
    np.testing.assert_array_equal(o1.data, o2.data)
    np.testing.assert_array_equal(o1.data, o3.data)


@pytest.mark.parametrize("variant,silent", [("unet_post", "enc1."), ("enc2_only_skips", "enc1."),
                                            ("enc1_only_skips", "enc2.")])
def test_variant_isolation(variant, silent):
    model = randomize_output(init_params(mini_config(variant=variant), 2, dtype=np.float64))
    b, f, gt = mini_inputs(2)
    out, z2 = ynet_forward(model, b, f, training=True)
    total, _, l_aux = compute_loss(model, out, z2, gt)
    model.zero_grad()
    total.backward()
    grads = model.grads()
    assert not any(np.any(g) for k, g in grads.items() if k.startswith(silent))
    if variant == "enc1_only_skips":
        assert float(l_aux.data) == 0.0 and z2 is None
    live = "enc2." if silent == "enc1." else "enc1."
    assert any(np.any(g) for k, g in grads.items() if k.startswith(live))


def test_unet_post_training_keeps_encoder1_bitwise():
    model = init_params(mini_config(variant="unet_post"), 4)
    before = {k: v.data.copy() for k, v in model.group("enc1").items()}
    st_ = AdamState.for_params(model.arrays())
    b, f, gt = mini_inputs(2, dtype=np.float32)
    for _ in range(3):
        out, z2 = ynet_forward(model, b, f, training=True)
        total, _, _ = compute_loss(model, out, z2, gt)
        model.zero_grad()
        total.backward()
        adam_step(model.arrays(), model.grads(), st_)
    for k, v in model.group("enc1").items():
        np.testing.assert_array_equal(v.data, before[k])
    assert not np.array_equal(model.params["dec.out.kernel"].data, init_params(model.config, 4).params["dec.out.kernel"].data)


# -- loss -------------------------------------------------------------------------------------

def test_loss_vanishes_at_target():
    model = init_params(mini_config(), 0, dtype=np.float64)
    _, _, gt = mini_inputs(2)
    c = model.config.channels[-1]
    z2 = np.zeros((2, c, 2, 2))
    z2[:, 0] = nn.area_downsample(gt[:, 0], 2, 2)
    model.params["aux.kernel"].data[:] = 0
    model.params["aux.kernel"].data[0, 0] = 1
    total, l_rec, l_aux = compute_loss(model, Tensor(gt.copy()), Tensor(z2), gt)
    assert float(total.data) == 0.0 and float(l_rec.data) == 0.0 and float(l_aux.data) == 0.0


def test_loss_weighting_arithmetic():
    model = init_params(mini_config(), 0, dtype=np.float64)
    gt = np.zeros((1, 1, *MINI_IMAGE))
    f = gt.copy()
    f[0, 0, 0, 0] = np.sqrt(0.6)  # L_rec = 0.3
    c = model.config.channels[-1]
    z2 = np.zeros((1, c, 2, 2))
    z2[0, 0, 0, 0] = np.sqrt(0.8)  # L_aux = 0.4 through a unit aux kernel
    model.params["aux.kernel"].data[:] = 0
    model.params["aux.kernel"].data[0, 0] = 1
    total, l_rec, l_aux = compute_loss(model, Tensor(f), Tensor(z2), gt)
    assert float(l_rec.data) == pytest.approx(0.3, abs=1e-12)
    assert float(l_aux.data) == pytest.approx(0.4, abs=1e-12)
    assert float(total.data) == pytest.approx(0.5, abs=1e-12)


def test_aux_kernel_gradient_is_weighted_aux_gradient():
    model = init_params(mini_config(), 5, dtype=np.float64)
    b, f, gt = mini_inputs(2)
    out, z2 = ynet_forward(model, b, f, training=True)
    total, _, _ = compute_loss(model, out, z2, gt)
    model.zero_grad()
    total.backward()
    g_total = model.params["aux.kernel"].grad.copy()

    out, z2 = ynet_forward(model, b, f, training=True)
    _, _, l_aux = compute_loss(model, out, z2, gt)
    model.zero_grad()
    l_aux.backward()
    np.testing.assert_allclose(g_total, 0.5 * model.params["aux.kernel"].grad, rtol=1e-12)

    # and numerically: the aux kernel only enters through lambda * L_aux
    k = model.params["aux.kernel"]

    def op(kk):
        o, zz = ynet_forward(model, b, f, training=True)
        return compute_loss(model, o, zz, gt)[0]

    assert finite_diff_check(op, [k]) < 1e-6


def test_loss_shape_mismatch():
    model = init_params(mini_config(), 0)
    with pytest.raises(ValueError):
        compute_loss(model, Tensor(np.zeros((1, 1, 32, 32))), None, np.zeros((1, 1, 16, 16)))


# -- initialization --------------------------------------------------------------------------

def test_init_deterministic_and_bn():
    a, b = init_params(mini_config(), 9), init_params(mini_config(), 9)
    for k in a.params:
        np.testing.assert_array_equal(a.params[k].data, b.params[k].data)
    assert all(not v.data.any() for k, v in a.params.items() if k.endswith(".shift"))
    assert all(np.all(v.data == 1) for k, v in a.params.items() if k.endswith(".scale"))
    c = init_params(mini_config(), 10)
    assert not np.array_equal(a.params["enc2.l1.conv1.kernel"].data, c.params["enc2.l1.conv1.kernel"].data)


def test_he_variance():
    model = init_params(YNetConfig(), 0)
    checked = 0
    for k, p in model.params.items():
        if k.endswith(".kernel") and ".up." not in k and p.data.ndim == 4:
            fi = fan_in(p.shape, "conv")
            if fi >= 144:
                var = float(np.var(p.data.astype(np.float64)))
                assert abs(var / (2.0 / fi) - 1) < 0.2, k
                checked += 1
    assert checked > 20


def test_every_branch_has_parameters():
    model = init_params(mini_config(variant="unet_post"), 0)
    prefixes = {k.split(".")[0] for k in model.params}
    assert prefixes == {"enc1", "enc2", "dec", "aux"}


# -- end-to-end gradient -----------------------------------------------------------------------

def test_end_to_end_gradcheck():
    model = init_params(mini_config(base_channels=2), 7, dtype=np.float64)
    b, f, gt = mini_inputs(2, seed=7)
    names = list(model.params)
    tensors = [model.params[k] for k in names]
    rng = np.random.default_rng(0)
    picks = [[] for _ in tensors]
    for i in rng.choice(len(tensors), size=32):
        t = tensors[i]
        picks[i].append(np.unravel_index(rng.integers(t.data.size), t.shape))

    def op(*_):
        out, z2 = ynet_forward(model, b, f, training=True)
        return compute_loss(model, out, z2, gt)[0]

    assert finite_diff_check(op, tensors, eps=1e-6, coords=picks) < 1e-4


def test_tiny_overfit():
    # two channels plateau near 8x on uniform-noise targets; four have room to memorize
    model = init_params(mini_config(base_channels=4), 0)
    b, f, gt = mini_inputs(4, dtype=np.float32)
    st_ = AdamState.for_params(model.arrays(), lr=0.005)
    losses = []
    for _ in range(150):
        out, z2 = ynet_forward(model, b, f, training=True)
        total, _, _ = compute_loss(model, out, z2, gt)
        losses.append(float(total.data))
        model.zero_grad()
        total.backward()
        adam_step(model.arrays(), model.grads(), st_)
    assert losses[-1] < losses[0] / 10


def test_astype_copies():
    m = init_params(mini_config(), 0)
    d = m.astype(np.float64)
    assert d.params["dec.out.kernel"].dtype == np.float64
    d.params["dec.out.kernel"].data[:] = 5
    assert not np.any(m.params["dec.out.kernel"].data == 5)
