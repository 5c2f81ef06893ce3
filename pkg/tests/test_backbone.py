import numpy as np
import pytest

from modscc.backbone import Backbone, BackboneConfig, ConfigError, VGG16_BLOCKS, conv_param_count
from modscc.nn import ParamStore


def closed_form_count(blocks, c_in=3):
    """Per conv layer: 9*Cin*Cout weights, Cout biases, 2*Cout batch-norm affine terms."""
    total = 0
    for n, w in blocks:
        for _ in range(n):
            total += 9 * c_in * w + w + 2 * w
            c_in = w
    return total


def test_full_profile_param_count_matches_closed_form():
    cfg = BackboneConfig.full()
    expected = closed_form_count(VGG16_BLOCKS)
    assert conv_param_count(cfg) == expected
    # conv weights+biases of VGG-16 alone are the well-known 14,714,688
    assert expected - 2 * sum(n * w for n, w in VGG16_BLOCKS) == 14_714_688


def test_built_backbone_allocates_exactly_that_many_parameters(tiny_backbone):
    store = ParamStore(0, np.float64)
    Backbone(tiny_backbone, store)
    assert store.num_parameters() == conv_param_count(tiny_backbone) == closed_form_count(((1, 4), (1, 6)))


def test_full_profile_shape_arithmetic():
    cfg = BackboneConfig.full()
    assert cfg.feature_width == 512
    H, W = cfg.input_size
    assert (H // 2 ** len(cfg.conv_blocks), W // 2 ** len(cfg.conv_blocks)) == (8, 8)


def test_desk_output_width_and_finite(rng):
    cfg = BackboneConfig.desk()
    bb = Backbone(cfg, ParamStore(0))
    x = rng.random((3, 3, 32, 32)).astype(np.float32)
    out = bb(x, training=True)
    assert out.shape == (3, 64)
    assert np.isfinite(out.data).all()


def test_duplicate_rows_give_identical_features(tiny_backbone, rng):
    bb = Backbone(tiny_backbone, ParamStore(1, np.float64))
    img = rng.random((1, 3, 8, 8))
    x = np.concatenate([img, img, rng.random((1, 3, 8, 8))])
    out = bb(x, training=True).data
    np.testing.assert_array_equal(out[0], out[1])


def test_eval_mode_is_per_sample(tiny_backbone, rng):
    bb = Backbone(tiny_backbone, ParamStore(1, np.float64))
    x = rng.random((4, 3, 8, 8))
    alone = bb(x[:1], training=False).data
    batched = bb(x, training=False).data
    np.testing.assert_allclose(batched[:1], alone, rtol=1e-12, atol=1e-14)


def test_full_profile_halves_spatial_extent_each_block():
    # run the real 13-layer layout on a small input with narrow widths
    cfg = BackboneConfig(conv_blocks=tuple((n, 2) for n, _ in VGG16_BLOCKS), input_size=(32, 32))
    bb = Backbone(cfg, ParamStore(0))
    sizes = []
    from modscc import tensor as T

    x = T.Tensor(np.random.default_rng(0).random((2, 3, 32, 32)).astype(np.float32))
    for block in bb.layers:
        for conv, bn in block:
            x = T.leaky_relu(bn(conv(x), True))
        x = T.max_pool2(x)
        sizes.append(x.shape[2])
    assert sizes == [16, 8, 4, 2, 1]


@pytest.mark.parametrize("kw, msg", [
    (dict(conv_blocks=((1, 8),)), "full profile"),
    (dict(input_size=(250, 256)), "divisible"),
    (dict(dense_width=0), "dense_width"),
    (dict(activation_slope=1.5), "slope"),
])
def test_invalid_configs(kw, msg):
    with pytest.raises(ConfigError, match=msg):
        BackboneConfig(**kw)


def test_wrong_input_shape(tiny_backbone):
    bb = Backbone(tiny_backbone, ParamStore(0))
    with pytest.raises(ValueError, match="expects"):
        bb(np.zeros((1, 3, 16, 16), np.float32), training=False)
