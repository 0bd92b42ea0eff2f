"""Model forward/backward verification.

Three independent routes: a hand-computed scalar cell, central-difference
gradient checks on every parameter, and agreement between the batched
teacher-forced forward and the incremental stepper.
"""

import math

import numpy as np
import pytest

from hierolm.corpus import BOS_ID, EOS_ID
from hierolm.models import (
    ARCHITECTURES,
    CacheMismatch,
    KOutOfRange,
    LstmState,
    ModelDims,
    SequenceTooShort,
    backward_sequence,
    clone_values,
    forward_sequence,
    greedy_complete,
    init_params,
    initial_state,
    load_values,
    lstm_cell,
    predict_topk,
    run_context,
    step_state,
    zero_grads,
)
from hierolm.numerics import grad_check, softmax_xent

DIMS = ModelDims(vocab_size=7, embed_size=3, hidden_size=4)
IDS = np.array([BOS_ID, 4, 6, 5, 4, EOS_ID])


def _sigma(x):
    return 1.0 / (1.0 + math.exp(-x))


# -- initialization -----------------------------------------------------------

@pytest.mark.parametrize("arch", ARCHITECTURES)
def test_init_shapes_and_determinism(arch):
    p1 = init_params(arch, DIMS, seed=0)
    p2 = init_params(arch, DIMS, seed=0)
    p3 = init_params(arch, DIMS, seed=1)
    for (name, a), (_, b), (_, c) in zip(p1.items(), p2.items(), p3.items()):
        assert a.value.dtype == np.float32
        np.testing.assert_array_equal(a.value, b.value)
        if name.startswith(("W", "E")):
            assert not np.array_equal(a.value, c.value)
    assert p1.E.shape == (7, 3)
    assert p1.W_y.shape in ((4, 7),)
    assert p1.b_y.shape == (7,)


def test_init_rejects_unknown_architecture():
    with pytest.raises(ValueError):
        init_params("transformer", DIMS)


def test_lstm_forget_bias_starts_at_one():
    p = init_params("lstm", DIMS)
    np.testing.assert_array_equal(p.b_f.value, np.ones(4, dtype=np.float32))
    assert not p.b_i.value.any() and not p.b_o.value.any()


@pytest.mark.parametrize("arch", ARCHITECTURES)
def test_init_weights_obey_xavier_bounds(arch):
    p = init_params(arch, ModelDims(50, 20, 30), seed=3)
    for name, param in p.items():
        if not name.startswith(("W", "E")):
            continue
        fan_in, fan_out = param.value.shape
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        assert np.abs(param.value).max() <= limit
        # with thousands of draws the max should come close to the limit
        assert np.abs(param.value).max() > 0.5 * limit


def test_clone_and_load_values_roundtrip():
    p = init_params("rnn", DIMS, seed=0)
    saved = clone_values(p)
    p.E.value += 1.0
    load_values(p, saved)
    np.testing.assert_array_equal(p.E.value, saved["E"])


# -- scalar cell oracle -------------------------------------------------------

def test_lstm_cell_matches_hand_computation():
    dims = ModelDims(vocab_size=2, embed_size=1, hidden_size=1)
    p = init_params("lstm", dims, seed=0, dtype=np.float64)
    p.W_f.value[:] = [[0.5], [-0.4]]
    p.b_f.value[:] = [0.1]
    p.W_i.value[:] = [[0.3], [0.2]]
    p.b_i.value[:] = [-0.2]
    p.W_g.value[:] = [[0.7], [-0.6]]
    p.b_g.value[:] = [0.05]
    p.W_o.value[:] = [[-0.3], [0.8]]
    p.b_o.value[:] = [0.2]

    e, h_prev, c_prev = 0.1, 0.2, -0.3
    state, _ = lstm_cell(np.array([[e]]), LstmState(np.array([[h_prev]]),
                                                    np.array([[c_prev]])), p)
    f = _sigma(e * 0.5 + h_prev * -0.4 + 0.1)
    i = _sigma(e * 0.3 + h_prev * 0.2 - 0.2)
    g = math.tanh(e * 0.7 + h_prev * -0.6 + 0.05)
    o = _sigma(e * -0.3 + h_prev * 0.8 + 0.2)
    c = f * c_prev + i * g
    h = o * math.tanh(c)
    assert state.c[0, 0] == pytest.approx(c, abs=1e-12)
    assert state.h[0, 0] == pytest.approx(h, abs=1e-12)


# -- gradient checks ----------------------------------------------------------

def _sequence_loss(params, ids, *, dropout=0.0):
    """Closure for grad_check: recompute loss, leave grads in params."""
    targets = ids[1:]

    def loss_fn():
        zero_grads(params)
        rng = np.random.default_rng(99) if dropout else None
        logits, cache = forward_sequence(params, ids, train=dropout > 0.0,
                                         dropout=dropout, rng=rng)
        loss, dlogits = softmax_xent(logits, targets)
        backward_sequence(params, cache, dlogits)
        return loss

    return loss_fn


@pytest.mark.parametrize("arch", ARCHITECTURES)
def test_gradients_match_finite_differences(arch):
    params = init_params(arch, DIMS, seed=1, dtype=np.float64)
    err = grad_check(_sequence_loss(params, IDS),
                     dict(params.items()), eps=1e-5)
    assert err < 1e-4, f"{arch} max relative gradient error {err:.3e}"


@pytest.mark.parametrize("arch", ARCHITECTURES)
def test_gradients_with_dropout_match_finite_differences(arch):
    params = init_params(arch, DIMS, seed=2, dtype=np.float64)
    err = grad_check(_sequence_loss(params, IDS, dropout=0.4),
                     dict(params.items()), eps=1e-5)
    assert err < 1e-4, f"{arch} max relative gradient error {err:.3e}"


def test_gradients_with_padding_match_unpadded():
    """End-padding plus masking must leave real-position gradients intact."""
    params = init_params("lstm", DIMS, seed=3, dtype=np.float64)
    row = np.array([BOS_ID, 4, 5, EOS_ID])
    pad_row = np.array([BOS_ID, 4, 5, EOS_ID, 0, 0])

    zero_grads(params)
    logits, cache = forward_sequence(params, row)
    loss, dlogits = softmax_xent(logits, row[1:])
    backward_sequence(params, cache, dlogits)
    plain = {name: p.grad.copy() for name, p in params.items()}

    zero_grads(params)
    logits, cache = forward_sequence(params, pad_row)
    mask = pad_row[1:] != 0
    loss_p, dlogits = softmax_xent(logits, pad_row[1:], mask)
    backward_sequence(params, cache, dlogits)

    assert loss_p == pytest.approx(loss, rel=1e-12)
    for name, p in params.items():
        np.testing.assert_allclose(p.grad, plain[name], atol=1e-12,
                                   err_msg=name)


# -- batched forward vs incremental stepper -----------------------------------

@pytest.mark.parametrize("arch", ARCHITECTURES)
def test_stepper_agrees_with_batched_forward(arch):
    params = init_params(arch, DIMS, seed=4, dtype=np.float64)
    logits, _ = forward_sequence(params, IDS)
    state = initial_state(params)
    for t in range(len(IDS) - 1):
        state, step_logits = step_state(params, state, int(IDS[t]))
        np.testing.assert_allclose(step_logits, logits[t], atol=1e-10)


@pytest.mark.parametrize("arch", ARCHITECTURES)
def test_run_context_matches_last_forward_row(arch):
    params = init_params(arch, DIMS, seed=5, dtype=np.float64)
    logits, _ = forward_sequence(params, IDS)
    _, last = run_context(params, IDS[:-1])
    np.testing.assert_allclose(last, logits[-1], atol=1e-10)


@pytest.mark.parametrize("arch", ARCHITECTURES)
def test_batched_rows_match_single_rows(arch):
    params = init_params(arch, DIMS, seed=6, dtype=np.float64)
    rows = np.array([[BOS_ID, 4, 5, EOS_ID], [BOS_ID, 6, 6, EOS_ID]])
    batched, _ = forward_sequence(params, rows)
    for i in range(2):
        single, _ = forward_sequence(params, rows[i])
        np.testing.assert_allclose(batched[i], single, atol=1e-12)


def test_nplm_sees_exactly_two_tokens_of_context():
    params = init_params("nplm", DIMS, seed=7, dtype=np.float64)
    a, _ = forward_sequence(params, np.array([BOS_ID, 4, 5, 6, EOS_ID]))
    b, _ = forward_sequence(params, np.array([BOS_ID, 6, 5, 6, EOS_ID]))
    # row 3 conditions on positions 2 and 3, which agree across the inputs
    np.testing.assert_allclose(a[3], b[3], atol=1e-12)
    assert np.abs(a[1] - b[1]).max() > 1e-8  # row 1 sees the changed token


# -- dropout behavior ---------------------------------------------------------

def test_dropout_inactive_outside_training():
    params = init_params("lstm", DIMS, seed=8)
    plain, _ = forward_sequence(params, IDS)
    evald, _ = forward_sequence(params, IDS, train=False, dropout=0.5)
    np.testing.assert_array_equal(plain, evald)


def test_dropout_perturbs_training_logits_and_needs_rng():
    params = init_params("lstm", DIMS, seed=8)
    plain, _ = forward_sequence(params, IDS)
    rng = np.random.default_rng(0)
    dropped, _ = forward_sequence(params, IDS, train=True, dropout=0.5, rng=rng)
    assert np.abs(plain - dropped).max() > 1e-6
    with pytest.raises(ValueError):
        forward_sequence(params, IDS, train=True, dropout=0.5)


# -- error paths --------------------------------------------------------------

def test_forward_rejects_too_short_sequences():
    params = init_params("rnn", DIMS)
    with pytest.raises(SequenceTooShort):
        forward_sequence(params, np.array([BOS_ID]))
    with pytest.raises(SequenceTooShort):
        run_context(params, [])


def test_backward_rejects_mismatched_cache():
    lstm = init_params("lstm", DIMS, seed=0)
    rnn = init_params("rnn", DIMS, seed=0)
    logits, cache = forward_sequence(lstm, IDS)
    _, dlogits = softmax_xent(logits, IDS[1:])
    with pytest.raises(CacheMismatch):
        backward_sequence(rnn, cache, dlogits)
    with pytest.raises(CacheMismatch):
        backward_sequence(lstm, cache, dlogits[:-1])


# -- inference helpers --------------------------------------------------------

def test_initial_state_per_architecture():
    lstm = initial_state(init_params("lstm", DIMS))
    assert isinstance(lstm, LstmState)
    assert not lstm.h.any() and not lstm.c.any()
    rnn = initial_state(init_params("rnn", DIMS))
    assert rnn.shape == (1, 4) and not rnn.any()
    assert initial_state(init_params("nplm", DIMS)) == (BOS_ID, BOS_ID)


def test_predict_topk_orders_and_bounds():
    params = init_params("lstm", DIMS, seed=9)
    ranked = predict_topk(params, [BOS_ID, 4], 7)
    probs = [p for _, p in ranked]
    assert probs == sorted(probs, reverse=True)
    assert sum(probs) == pytest.approx(1.0, abs=1e-9)
    assert len({tid for tid, _ in ranked}) == 7
    for k in (0, 8):
        with pytest.raises(KOutOfRange):
            predict_topk(params, [BOS_ID], k)


def test_predict_topk_breaks_ties_toward_smaller_ids():
    params = init_params("lstm", DIMS, seed=9)
    params.W_y.value[:] = 0.0
    params.b_y.value[:] = 0.0
    ranked = predict_topk(params, [BOS_ID, 4], 3)
    assert [tid for tid, _ in ranked] == [0, 1, 2]
    for _, p in ranked:
        assert p == pytest.approx(1.0 / 7, abs=1e-9)


def test_greedy_complete_stops_at_eos_inclusive():
    params = init_params("rnn", DIMS, seed=10)
    params.W_y.value[:] = 0.0
    params.b_y.value[:] = 0.0
    params.b_y.value[EOS_ID] = 5.0
    out = greedy_complete(params, [BOS_ID], 10)
    assert out == [EOS_ID]


def test_greedy_complete_respects_step_budget():
    params = init_params("rnn", DIMS, seed=10)
    params.W_y.value[:] = 0.0
    params.b_y.value[:] = 0.0
    params.b_y.value[5] = 5.0
    out = greedy_complete(params, [BOS_ID], 3)
    assert out == [5, 5, 5]
    with pytest.raises(ValueError):
        greedy_complete(params, [BOS_ID], 0)
