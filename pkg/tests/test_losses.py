import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modscc import tensor as T
from modscc.losses import (
    MULTI_OUTPUT,
    MO_DSCC_WEIGHTS,
    GroundTruthBatch,
    LossWeights,
    one_hot,
    reduce_to_baseline,
    total_loss,
)
from modscc.models import MoDsCC
from modscc.tensor import Tape, Tensor

HEAD_CLASSES = {"p_aux": 3, "d_aux": 4, "p_temp": 3, "d_temp": 4, "p_final": 3, "d_final": 4}


def random_logits(rng, n=5):
    return {h: Tensor(rng.standard_normal((n, k))) for h, k in HEAD_CLASSES.items()}


def truth(rng, n=5):
    return GroundTruthBatch(rng.integers(0, 3, n), rng.integers(0, 4, n), 3, 4)


def ce(z, labels):
    """Direct batch-mean cross-entropy, the oracle for a single head."""
    z = np.asarray(z, dtype=np.float64)
    lse = np.log(np.exp(z - z.max(1, keepdims=True)).sum(1)) + z.max(1)
    return float(np.mean(lse - z[np.arange(len(z)), labels]))


def test_selector_weight_picks_one_term(rng):
    logits, t = random_logits(rng), truth(rng)
    c = total_loss(logits, t, LossWeights(0, 0, 1, 0, 0, 0))
    assert c.item() == pytest.approx(ce(logits["p_temp"].data, t.plant), rel=1e-12)


def test_hand_computed_weighted_sum():
    # logits built so each head's cross-entropy equals 1..6 exactly:
    # two classes with margin m give loss log(1 + e^-m), invert for m
    per_head = dict(zip(("p_aux", "d_aux", "p_temp", "d_temp", "p_final", "d_final"), (1, 2, 3, 4, 5, 6)))
    logits = {}
    for h, target in per_head.items():
        m = -math.log(math.exp(target) - 1)
        k = HEAD_CLASSES[h]
        z = np.full((1, k), -1e3)
        z[0, 0], z[0, 1] = m, 0.0
        logits[h] = Tensor(z)
    t = GroundTruthBatch([0], [0], 3, 4)
    c = total_loss(logits, t, MO_DSCC_WEIGHTS, return_terms=True)
    for h, target in per_head.items():
        assert c[1][h].item() == pytest.approx(target, rel=1e-12)
    manual = 0.1 * 1 + 0.1 * 2 + 0.1 * 3 + 0.4 * 5 + 0.1 * 4 + 0.5 * 6
    assert manual == pytest.approx(6.0)
    assert c[0].item() == pytest.approx(manual, rel=1e-12)


def test_perfect_predictions_give_zero():
    t = GroundTruthBatch([0, 2], [1, 3], 3, 4)
    logits = {}
    for h, k in HEAD_CLASSES.items():
        labels = t.plant if h.startswith("p_") else t.disease
        z = np.zeros((2, k))
        z[np.arange(2), labels] = 1e3
        logits[h] = Tensor(z)
    assert total_loss(logits, t, MO_DSCC_WEIGHTS).item() == 0.0


def test_ground_truth_levels_agree(rng):
    t = truth(rng)
    np.testing.assert_array_equal(t.P_a, t.P_1)
    np.testing.assert_array_equal(t.P_1, t.P_2)
    np.testing.assert_array_equal(t.D_a, t.D_2)
    assert t.P_1.shape == (5, 3)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 5), st.floats(0.0, 3.0), st.floats(0.0, 3.0), st.integers(0, 1000))
def test_linear_in_each_weight(idx, a, b, seed):
    rng = np.random.default_rng(seed)
    logits, t = random_logits(rng), truth(rng)
    base = list(MO_DSCC_WEIGHTS.as_tuple())
    _, terms = total_loss(logits, t, MO_DSCC_WEIGHTS, return_terms=True)
    head = ("p_aux", "d_aux", "p_temp", "d_temp", "p_final", "d_final")[idx]
    wa, wb = list(base), list(base)
    wa[idx], wb[idx] = a, b
    ca = total_loss(logits, t, LossWeights.of(wa)).item()
    cb = total_loss(logits, t, LossWeights.of(wb)).item()
    assert ca - cb == pytest.approx((a - b) * terms[head].item(), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("bad", [(-0.1, 0, 1, 0, 0, 0), (0, 0, 0, 0, 0, 0), (math.nan, 0, 1, 0, 0, 0)])
def test_invalid_weights(bad):
    with pytest.raises(ValueError):
        LossWeights.of(bad)


def test_weight_text_round_trip():
    w = LossWeights.parse("0.1:0.1:0.1:0.1:0.4:0.5")
    assert w == MO_DSCC_WEIGHTS and (w.beta_2, w.delta_2) == (0.4, 0.5)
    assert LossWeights.parse(str(w)) == w
    with pytest.raises(ValueError):
        LossWeights.parse("1:2:3")


@pytest.mark.parametrize("w, name, heads", [
    ((0, 0, 1, 0, 0, 0), "plant-only", ("p_temp",)),
    ((0, 0, 0, 1, 0, 0), "disease-only", ("d_temp",)),
    ((0, 0, 1, 1, 0, 0), "multi-output", ("p_temp", "d_temp")),
    ((0.1, 0.1, 0.1, 0.1, 0.4, 0.5), "full", ("p_final", "d_final")),
    ((0, 0, 0.1, 0.1, 0.4, 0.5), "full", ("p_final", "d_final")),
])
def test_reduce_to_baseline(w, name, heads):
    mode = reduce_to_baseline(LossWeights.of(w))
    assert mode.name == name and mode.output_heads == heads


def test_zero_weight_gates_exclusive_gradients(tiny_backbone, tiny_heads, rng):
    model = MoDsCC(tiny_backbone, tiny_heads, LossWeights(0.1, 0.1, 0.1, 0.1, 0.0, 0.5), seed=0, dtype=np.float64)
    x = rng.random((4, 3, 8, 8))
    t = model.make_truth(rng.integers(0, 3, 4), rng.integers(0, 4, 4))
    with Tape() as tape:
        loss, _ = model.loss(model.outputs(x, training=True), t)
    grads = tape.backward(loss)
    assert not grads["head_p_final.weight"].any() and not grads["head_p_final.bias"].any()
    assert grads["head_d_final.weight"].any()


def test_one_hot_validation():
    np.testing.assert_array_equal(one_hot([1, 0], 2), [[0, 1], [1, 0]])
    with pytest.raises(ValueError):
        one_hot([2], 2)


def test_multi_output_preset():
    assert MULTI_OUTPUT.as_tuple() == (0, 0, 1, 1, 0, 0)


def test_loss_is_finite_for_extreme_logits():
    z = Tensor(np.array([[1e4, -1e4, 0.0]]))
    assert math.isfinite(T.cross_entropy(z, np.array([[0.0, 1.0, 0.0]])).item())
