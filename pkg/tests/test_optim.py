import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ssdhealth.errors import ConfigError, DimensionError, NumericError
from ssdhealth.model import ModelConfig, init_params
from ssdhealth.optim import AdamState, adam_step, clip_global_norm, global_norm

# -0.001 * 1 / (1 + 1e-8): first step with m_hat = v_hat = 1, evaluated in floats
FIRST_STEP_DELTA = -0.001 / (1.0 + 1e-8)

grad_dicts = st.dictionaries(
    st.sampled_from(["a", "b", "c"]),
    arrays(np.float64, st.integers(1, 5), elements=st.floats(-1e3, 1e3)),
    min_size=1,
)


def test_small_norm_unchanged():
    g = {"w": np.array([0.3, 0.4])}
    out, scale = clip_global_norm(g, 1.0)
    assert scale == 1.0
    np.testing.assert_array_equal(out["w"], g["w"])


def test_three_four_clipped_to_unit():
    out, scale = clip_global_norm({"w": np.array([3.0, 4.0])}, 1.0)
    assert scale == pytest.approx(0.2, abs=1e-15)
    np.testing.assert_allclose(out["w"], [0.6, 0.8], rtol=0, atol=1e-15)


def test_boundary_is_not_clipped():
    g = {"w": np.array([0.6, 0.8])}
    out, scale = clip_global_norm(g, global_norm(g))
    assert scale == 1.0


def test_non_finite_gradient_names_tensor():
    with pytest.raises(NumericError, match="'bad'"):
        clip_global_norm({"ok": np.ones(2), "bad": np.array([np.nan])})


def test_threshold_must_be_positive():
    with pytest.raises(ConfigError):
        clip_global_norm({"w": np.ones(2)}, 0.0)


@given(grad_dicts, st.floats(0.01, 10))
def test_clipped_norm_bounded_and_idempotent(g, threshold):
    once, _ = clip_global_norm(g, threshold)
    assert global_norm(once) <= threshold + 1e-12
    twice, _ = clip_global_norm(once, threshold)
    for k in g:
        np.testing.assert_allclose(twice[k], once[k], rtol=1e-15, atol=0)


def test_clip_works_on_model_params():
    p = init_params(ModelConfig(hidden=3))
    out, scale = clip_global_norm(p.map(lambda n, t: t * 100), 1.0)
    assert scale < 1 and global_norm(out) == pytest.approx(1.0)


def test_zero_gradient_leaves_params():
    p = {"w": np.array([1.0, -2.0])}
    new, state = adam_step(p, {"w": np.zeros(2)}, AdamState.fresh(p))
    np.testing.assert_array_equal(new["w"], p["w"])
    assert state.t == 1


def test_first_step_size():
    p = {"w": np.array([0.0])}
    new, _ = adam_step(p, {"w": np.array([1.0])}, AdamState.fresh(p, lr=0.001))
    assert new["w"][0] == pytest.approx(FIRST_STEP_DELTA, rel=1e-12)


@given(st.floats(-1e3, 1e3).filter(lambda x: abs(x) > 1e-6))
def test_first_step_opposes_gradient(g):
    p = {"w": np.array([0.5])}
    new, _ = adam_step(p, {"w": np.array([g])}, AdamState.fresh(p))
    assert np.sign(new["w"][0] - 0.5) == -np.sign(g)


def test_converges_on_a_parabola():
    p = {"w": np.array([1.0])}
    state = AdamState.fresh(p, lr=0.001)
    for _ in range(5000):
        p, state = adam_step(p, {"w": 2 * p["w"]}, state)
    assert abs(p["w"][0]) < 0.1


def test_step_is_deterministic_and_pure():
    rng = np.random.default_rng(0)
    p = {"w": rng.normal(size=4)}
    g = {"w": rng.normal(size=4)}
    s = AdamState.fresh(p)
    before = p["w"].copy()
    a, sa = adam_step(p, g, s)
    b, sb = adam_step(p, g, s)
    np.testing.assert_array_equal(a["w"], b["w"])
    np.testing.assert_array_equal(sa.v["w"], sb.v["w"])
    np.testing.assert_array_equal(p["w"], before)
    assert s.t == 0


def test_shape_mismatch():
    p = {"w": np.zeros(2)}
    with pytest.raises(DimensionError):
        adam_step(p, {"w": np.zeros(3)}, AdamState.fresh(p))
