import numpy as np
import pytest

from sdn.autodiff import AdamState, Tensor, adam_step


def make_params(values):
    return {k: Tensor(np.asarray(v, dtype=np.float32), requires_grad=True) for k, v in values.items()}


def test_zero_gradient_leaves_fresh_state_unchanged():
    params = make_params({"w": [1.0, -2.0]})
    state = AdamState(lr=0.1)
    adam_step(params, {"w": np.zeros(2, np.float32)}, state)
    np.testing.assert_array_equal(params["w"].data, [1.0, -2.0])
    np.testing.assert_array_equal(state.v["w"], np.zeros(2))
    assert state.t == 1


def test_defaults_match_published_momenta():
    state = AdamState()
    assert state.beta1 == 0.0
    assert state.beta2 == 0.999


def test_hand_evaluated_first_step():
    # scalar, g=1, lr=0.1, beta1=0, beta2=0.999, eps=1e-8:
    # m=1, v=1e-3, mhat=1, vhat=1 -> update = -0.1 * 1/(1+1e-8)
    params = make_params({"w": 0.0})
    state = AdamState(lr=0.1, beta1=0.0, beta2=0.999, eps=1e-8)
    adam_step(params, {"w": np.float32(1.0)}, state)
    assert params["w"].data == pytest.approx(-0.1 / (1 + 1e-8), rel=1e-6)
    assert state.t == 1


def test_bitwise_deterministic():
    runs = []
    for _ in range(2):
        params = make_params({"w": np.linspace(-1, 1, 7)})
        state = AdamState(lr=3e-4)
        rng = np.random.default_rng(0)
        for _ in range(5):
            adam_step(params, {"w": rng.standard_normal(7).astype(np.float32)}, state)
        runs.append(params["w"].data.tobytes())
    assert runs[0] == runs[1]


def test_nan_gradient_halts():
    params = make_params({"w": [1.0]})
    with pytest.raises(FloatingPointError, match="w"):
        adam_step(params, {"w": np.array([np.nan], np.float32)}, AdamState())


def test_missing_grad_skips_param():
    params = make_params({"a": [1.0], "b": [2.0]})
    adam_step(params, {"a": np.ones(1, np.float32)}, AdamState(lr=0.1))
    assert params["b"].data[0] == 2.0
    assert params["a"].data[0] != 1.0
