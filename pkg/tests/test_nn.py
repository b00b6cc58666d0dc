"""Gradient, distribution, optimizer, and checkpoint tests for the policy
and critic networks.

Analytic gradients are checked against central finite differences. The
recurrent-cell Jacobian must agree to 1e-5 relative, single feedforward
layers to 1e-6, action log-probability gradients to 1e-6, and the full
unrolled policy network to 1e-4 (looser: five timesteps of float64
round-off accumulate).
"""

import numpy as np
import pytest

from asterhover.errors import ConfigurationError
from asterhover.nn import (
    Adam,
    Conv2D,
    GRUCell,
    Linear,
    PolicyNetwork,
    ValueNetwork,
    action_log_prob,
    entropy,
    entropy_grad_logits,
    greedy_action,
    kl_divergence,
    load_checkpoint,
    log_softmax,
    logp_grad_logits,
    orthogonal_init,
    sample_multicategorical,
    save_checkpoint,
    softmax,
)


FD_H = 1.0e-5
# Central differences carry round-off noise of about eps * |loss| / h
# (~1e-10 here), so entries whose true gradient sits near zero cannot meet a
# pure relative bound; the absolute floor covers only that noise band.
FD_ATOL = 5.0e-9


def fd_slot(loss_fn, arr, idx, h=FD_H):
    """Central finite difference of loss_fn wrt one flattened entry of arr."""
    old = arr.flat[idx]
    arr.flat[idx] = old + h
    lo_p = loss_fn()
    arr.flat[idx] = old - h
    lo_m = loss_fn()
    arr.flat[idx] = old
    return (lo_p - lo_m) / (2.0 * h)


def check_fd(loss_fn, arr, grad, rng, rtol, samples=40, label=""):
    idxs = rng.choice(arr.size, size=min(samples, arr.size), replace=False)
    for idx in idxs:
        fd = fd_slot(loss_fn, arr, idx)
        a = grad.flat[idx]
        assert abs(a - fd) <= FD_ATOL + rtol * max(abs(a), abs(fd)), (
            f"{label}[{idx}]: analytic {a}, finite difference {fd}"
        )


# --------------------------------------------------------------------------
# Initializers and parameter counts

def test_orthogonal_init_tall_columns_orthonormal():
    rng = np.random.default_rng(0)
    w = orthogonal_init(rng, (40, 12))
    np.testing.assert_allclose(w.T @ w, np.eye(12), atol=1e-12)


def test_orthogonal_init_wide_rows_orthonormal():
    rng = np.random.default_rng(0)
    w = orthogonal_init(rng, (12, 40))
    np.testing.assert_allclose(w @ w.T, np.eye(12), atol=1e-12)


def test_orthogonal_init_gain_scales_singular_values():
    rng = np.random.default_rng(3)
    w = orthogonal_init(rng, (20, 20), gain=0.01)
    s = np.linalg.svd(w, compute_uv=False)
    np.testing.assert_allclose(s, np.full(20, 0.01), rtol=1e-12)


def test_policy_parameter_count():
    net = PolicyNetwork(seed=0)
    # conv 152 + 1032, dense 2800 + 18600 + 2904, recurrent 103950
    assert net.num_params == 129438


def test_value_parameter_count():
    net = ValueNetwork(seed=0)
    # 1820 + 11700 + 130 + 6
    assert net.num_params == 13656


def test_same_seed_same_params_different_seed_differs():
    a = PolicyNetwork(seed=7)
    b = PolicyNetwork(seed=7)
    c = PolicyNetwork(seed=8)
    for (ka, va), (kb, vb) in zip(a.parameters().items(), b.parameters().items()):
        assert ka == kb
        np.testing.assert_array_equal(va, vb)
    assert any(
        not np.array_equal(v, c.parameters()[k]) for k, v in a.parameters().items()
    )


def test_fresh_policy_is_near_uniform():
    net = PolicyNetwork(seed=4)
    rng = np.random.default_rng(1)
    image = rng.uniform(-1.0, 1.0, size=(3, 8, 8, 2))
    vec = rng.uniform(-1.0, 1.0, size=(3, 7))
    logits, _, _ = net.step(image, vec, net.init_hidden(3))
    p = softmax(logits)
    assert np.all(np.abs(p - 0.5) < 0.05)


# --------------------------------------------------------------------------
# Feedforward layer gradients (tolerance 1e-6)

def test_linear_gradients_match_finite_differences():
    rng = np.random.default_rng(11)
    layer = Linear(rng, 9, 5)
    x = rng.standard_normal((4, 9))
    s = rng.standard_normal((4, 5))

    def loss():
        y, _ = layer.forward(x)
        return float((s * y).sum())

    y, cache = layer.forward(x)
    dx = layer.backward(s, cache)
    check_fd(loss, layer.W, layer.gW, rng, 1e-6, label="W")
    check_fd(loss, layer.b, layer.gb, rng, 1e-6, label="b")
    check_fd(loss, x, dx, rng, 1e-6, label="x")


def test_conv_gradients_match_finite_differences():
    rng = np.random.default_rng(12)
    layer = Conv2D(rng, 2, 3, kernel=3, stride=2)
    x = rng.standard_normal((2, 8, 8, 2))
    y, cache = layer.forward(x)
    assert y.shape == (2, 3, 3, 3)
    s = rng.standard_normal(y.shape)

    def loss():
        out, _ = layer.forward(x)
        return float((s * out).sum())

    dx = layer.backward(s, cache)
    check_fd(loss, layer.W, layer.gW, rng, 1e-6, label="W")
    check_fd(loss, layer.b, layer.gb, rng, 1e-6, label="b")
    check_fd(loss, x, dx, rng, 1e-6, samples=60, label="x")


def test_conv_output_matches_direct_convolution():
    rng = np.random.default_rng(13)
    layer = Conv2D(rng, 2, 4, kernel=3, stride=1)
    x = rng.standard_normal((1, 6, 6, 2))
    y, _ = layer.forward(x)
    for i in range(4):
        for j in range(4):
            patch = x[0, i:i + 3, j:j + 3, :]
            expected = np.einsum("hwc,hwco->o", patch, layer.W) + layer.b
            np.testing.assert_allclose(y[0, i, j], expected, rtol=1e-12)


def test_conv_rejects_wrong_channel_count():
    rng = np.random.default_rng(0)
    layer = Conv2D(rng, 2, 4, kernel=3, stride=1)
    with pytest.raises(ConfigurationError):
        layer.forward(np.zeros((1, 8, 8, 3)))


# --------------------------------------------------------------------------
# Recurrent cell (tolerance 1e-5)

def test_gru_gradients_match_finite_differences():
    rng = np.random.default_rng(21)
    cell = GRUCell(rng, 6, 5)
    x = rng.standard_normal((3, 6))
    h = rng.standard_normal((3, 5)) * 0.5
    s = rng.standard_normal((3, 5))

    def loss():
        h_new, _ = cell.forward(x, h)
        return float((s * h_new).sum())

    h_new, cache = cell.forward(x, h)
    dx, dh = cell.backward(s, cache)
    for name, grad in cell.grads().items():
        check_fd(loss, cell.params()[name], grad, rng, 1e-5, samples=20, label=name)
    check_fd(loss, x, dx, rng, 1e-5, label="x")
    check_fd(loss, h, dh, rng, 1e-5, label="h")


def test_gru_saturated_update_gate_copies_hidden():
    rng = np.random.default_rng(22)
    cell = GRUCell(rng, 4, 3)
    cell.bz[:] = 50.0  # z -> 1
    x = rng.standard_normal((2, 4))
    h = rng.standard_normal((2, 3))
    h_new, _ = cell.forward(x, h)
    np.testing.assert_allclose(h_new, h, atol=1e-15)


def test_gru_open_gates_reduce_to_tanh_layer():
    rng = np.random.default_rng(23)
    cell = GRUCell(rng, 4, 3)
    cell.bz[:] = -50.0  # z -> 0
    cell.br[:] = 50.0   # r -> 1
    x = rng.standard_normal((2, 4))
    h = rng.standard_normal((2, 3))
    h_new, _ = cell.forward(x, h)
    expected = np.tanh(x @ cell.Wh + h @ cell.Uh + cell.bh)
    np.testing.assert_allclose(h_new, expected, atol=1e-12)


def test_gru_zero_state_zero_input_stays_small():
    cell = GRUCell(np.random.default_rng(24), 4, 3)
    h_new, _ = cell.forward(np.zeros((1, 4)), np.zeros((1, 3)))
    # biases are zero, so z = 0.5 and the candidate is tanh(0) = 0
    np.testing.assert_allclose(h_new, np.zeros((1, 3)), atol=1e-15)


# --------------------------------------------------------------------------
# Full networks

def policy_batch(rng, T=5, B=2):
    images = rng.uniform(-1.0, 1.0, size=(T, B, 8, 8, 2))
    vecs = rng.uniform(-1.0, 1.0, size=(T, B, 7))
    return images, vecs


def test_policy_step_shapes_and_purity():
    net = PolicyNetwork(seed=1)
    rng = np.random.default_rng(31)
    image = rng.uniform(-1.0, 1.0, size=(3, 8, 8, 2))
    vec = rng.uniform(-1.0, 1.0, size=(3, 7))
    h0 = net.init_hidden(3)
    image_c, vec_c, h_c = image.copy(), vec.copy(), h0.copy()
    logits1, h1, _ = net.step(image, vec, h0)
    logits2, h2, _ = net.step(image, vec, h0)
    assert logits1.shape == (3, 12, 2)
    assert h1.shape == (3, 154)
    np.testing.assert_array_equal(logits1, logits2)
    np.testing.assert_array_equal(h1, h2)
    np.testing.assert_array_equal(image, image_c)
    np.testing.assert_array_equal(vec, vec_c)
    np.testing.assert_array_equal(h0, h_c)


def test_policy_rejects_bad_shapes():
    net = PolicyNetwork(seed=1)
    h = net.init_hidden(1)
    with pytest.raises(ConfigurationError):
        net.step(np.zeros((1, 8, 8, 1)), np.zeros((1, 7)), h)
    with pytest.raises(ConfigurationError):
        net.step(np.zeros((1, 8, 8, 2)), np.zeros((1, 6)), h)


def test_policy_sequence_matches_manual_steps():
    net = PolicyNetwork(seed=2)
    rng = np.random.default_rng(32)
    images, vecs = policy_batch(rng)
    logits_seq, _ = net.forward_sequence(images, vecs)
    h = net.init_hidden(2)
    for t in range(5):
        logits_t, h, _ = net.step(images[t], vecs[t], h)
        np.testing.assert_array_equal(logits_seq[t], logits_t)


def test_policy_hidden_state_carries_information():
    net = PolicyNetwork(seed=3)
    rng = np.random.default_rng(33)
    images, vecs = policy_batch(rng, T=2, B=1)
    logits_seq, _ = net.forward_sequence(images, vecs)
    # same second input with a reset hidden state gives different logits
    logits_reset, _, _ = net.step(images[1], vecs[1], net.init_hidden(1))
    assert not np.allclose(logits_seq[1], logits_reset)


def test_policy_full_backward_matches_finite_differences():
    net = PolicyNetwork(seed=5)
    rng = np.random.default_rng(34)
    images, vecs = policy_batch(rng, T=5, B=1)
    s = rng.standard_normal((5, 1, 12, 2))

    def loss():
        logits, _ = net.forward_sequence(images, vecs)
        return float((s * logits).sum())

    net.zero_grads()
    logits, caches = net.forward_sequence(images, vecs)
    net.backward_sequence(s.copy(), caches)
    params = net.parameters()
    grads = net.gradients()
    names = list(params)
    sizes = np.array([params[n].size for n in names])
    bounds = np.cumsum(sizes)
    for flat_idx in rng.choice(int(bounds[-1]), size=100, replace=False):
        slot = int(np.searchsorted(bounds, flat_idx, side="right"))
        local = int(flat_idx - (bounds[slot - 1] if slot else 0))
        name = names[slot]
        fd = fd_slot(loss, params[name], local)
        a = grads[name].flat[local]
        assert abs(a - fd) <= FD_ATOL + 1e-4 * max(abs(a), abs(fd)), (
            f"{name}[{local}]: analytic {a}, finite difference {fd}"
        )


def test_value_network_full_backward_matches_finite_differences():
    net = ValueNetwork(seed=6)
    rng = np.random.default_rng(35)
    xs = rng.uniform(-1.0, 1.0, size=(5, 2, 13))
    s = rng.standard_normal((5, 2))

    def loss():
        values, _ = net.forward_sequence(xs)
        return float((s * values).sum())

    net.zero_grads()
    values, caches = net.forward_sequence(xs)
    assert values.shape == (5, 2)
    net.backward_sequence(s.copy(), caches)
    params = net.parameters()
    grads = net.gradients()
    for name in params:
        check_fd(loss, params[name], grads[name], rng, 1e-4, samples=12, label=name)


def test_zero_upstream_gradient_leaves_grads_zero():
    net = PolicyNetwork(seed=7)
    rng = np.random.default_rng(36)
    images, vecs = policy_batch(rng, T=3, B=2)
    net.zero_grads()
    _, caches = net.forward_sequence(images, vecs)
    net.backward_sequence(np.zeros((3, 2, 12, 2)), caches)
    for g in net.gradients().values():
        assert np.all(g == 0.0)


def test_backward_accumulates_across_calls():
    net = ValueNetwork(seed=8)
    rng = np.random.default_rng(37)
    xs = rng.uniform(-1.0, 1.0, size=(2, 1, 13))
    s = rng.standard_normal((2, 1))
    net.zero_grads()
    _, caches = net.forward_sequence(xs)
    net.backward_sequence(s, caches)
    once = {k: v.copy() for k, v in net.gradients().items()}
    _, caches = net.forward_sequence(xs)
    net.backward_sequence(s, caches)
    for k, v in net.gradients().items():
        np.testing.assert_allclose(v, 2.0 * once[k], rtol=1e-12)


# --------------------------------------------------------------------------
# Distribution over 12 independent on/off heads

def test_zero_logits_give_half_probability_and_known_entropy():
    logits = np.zeros((1, 12, 2))
    p = softmax(logits)
    np.testing.assert_allclose(p, 0.5)
    action = np.zeros((1, 12), dtype=np.int64)
    np.testing.assert_allclose(action_log_prob(logits, action), 12.0 * np.log(0.5), rtol=1e-15)
    np.testing.assert_allclose(entropy(logits), 12.0 * np.log(2.0), rtol=1e-15)


def test_saturated_logits_are_deterministic():
    logits = np.zeros((1, 12, 2))
    logits[..., 0] = 20.0
    logits[..., 1] = -20.0
    rng = np.random.default_rng(41)
    for _ in range(20):
        action, logp = sample_multicategorical(logits, rng)
        assert np.all(action == 0)
        assert logp[0] > -1e-8
    assert np.all(greedy_action(logits) == 0)
    assert np.all(greedy_action(-logits) == 1)


def test_sampling_statistics_match_probabilities():
    logits = np.zeros((100_000, 12, 2))
    logits[..., 1] = 1.0  # p(on) = e / (1 + e)
    rng = np.random.default_rng(42)
    action, _ = sample_multicategorical(logits, rng)
    target = np.e / (1.0 + np.e)
    assert abs(action.mean() - target) < 0.005


def test_log_prob_matches_explicit_loop():
    rng = np.random.default_rng(43)
    logits = rng.standard_normal((4, 12, 2))
    action = rng.integers(0, 2, size=(4, 12))
    lp = action_log_prob(logits, action)
    for b in range(4):
        total = 0.0
        for k in range(12):
            pair = logits[b, k]
            total += pair[action[b, k]] - np.log(np.exp(pair).sum())
        np.testing.assert_allclose(lp[b], total, rtol=1e-12)


def test_entropy_and_kl_match_explicit_loop():
    rng = np.random.default_rng(44)
    old = rng.standard_normal((3, 12, 2))
    new = rng.standard_normal((3, 12, 2))
    ent = entropy(old)
    kl = kl_divergence(old, new)
    for b in range(3):
        e_ref, kl_ref = 0.0, 0.0
        for k in range(12):
            po = np.exp(old[b, k]) / np.exp(old[b, k]).sum()
            pn = np.exp(new[b, k]) / np.exp(new[b, k]).sum()
            e_ref -= (po * np.log(po)).sum()
            kl_ref += (po * np.log(po / pn)).sum()
        np.testing.assert_allclose(ent[b], e_ref, rtol=1e-12)
        np.testing.assert_allclose(kl[b], kl_ref, rtol=1e-12)
    np.testing.assert_allclose(kl_divergence(old, old), 0.0, atol=1e-15)
    assert np.all(kl > 0.0)


def test_log_prob_gradient_matches_finite_differences():
    rng = np.random.default_rng(45)
    logits = rng.standard_normal((3, 12, 2))
    action = rng.integers(0, 2, size=(3, 12))
    coeff = rng.standard_normal(3)

    def loss():
        return float((coeff * action_log_prob(logits, action)).sum())

    grad = logp_grad_logits(logits, action, coeff)
    check_fd(loss, logits, grad, rng, 1e-6, samples=60, label="logits")


def test_entropy_gradient_matches_finite_differences():
    rng = np.random.default_rng(46)
    logits = rng.standard_normal((3, 12, 2))
    coeff = rng.standard_normal(3)

    def loss():
        return float((coeff * entropy(logits)).sum())

    grad = entropy_grad_logits(logits, coeff)
    check_fd(loss, logits, grad, rng, 1e-6, samples=60, label="logits")


def test_log_softmax_is_shift_invariant_and_stable():
    logits = np.array([[[1000.0, 1001.0]]])
    lp = log_softmax(logits)
    assert np.all(np.isfinite(lp))
    np.testing.assert_allclose(np.exp(lp).sum(), 1.0, rtol=1e-12)
    np.testing.assert_allclose(log_softmax(logits - 500.0), lp, atol=1e-12)


# --------------------------------------------------------------------------
# Optimizer

def test_adam_zero_gradient_leaves_params_unchanged():
    params = {"w": np.array([1.0, -2.0, 3.0])}
    opt = Adam(params, lr=0.1)
    before = params["w"].copy()
    for _ in range(5):
        opt.step({"w": np.zeros(3)})
    np.testing.assert_array_equal(params["w"], before)


def test_adam_constant_gradient_step_size_approaches_lr():
    params = {"w": np.array([0.0])}
    opt = Adam(params, lr=1.0e-3)
    g = {"w": np.array([3.5])}
    for _ in range(200):
        prev = params["w"].copy()
        opt.step(g)
        delta = abs(params["w"][0] - prev[0])
    assert abs(delta - 1.0e-3) < 1.0e-8


def test_adam_descends_quadratic_bowl():
    params = {"x": np.array([5.0, -3.0, 2.0])}
    opt = Adam(params, lr=1.0e-2)
    for step in range(5000):
        loss = 0.5 * float((params["x"] ** 2).sum())
        if loss < 1.0e-6:
            break
        opt.step({"x": params["x"].copy()})
    assert 0.5 * float((params["x"] ** 2).sum()) < 1.0e-6


def test_adam_updates_in_place_through_network_views():
    net = ValueNetwork(seed=9)
    opt = Adam(net.parameters(), lr=1.0e-3)
    w_before = net.layers["fc1"].W.copy()
    grads = {k: np.ones_like(v) for k, v in net.parameters().items()}
    opt.step(grads)
    assert not np.allclose(net.layers["fc1"].W, w_before)


# --------------------------------------------------------------------------
# Checkpointing

def test_checkpoint_round_trip_reproduces_forward_outputs(tmp_path):
    policy_a = PolicyNetwork(seed=100)
    value_a = ValueNetwork(seed=101)
    popt = Adam(policy_a.parameters(), lr=3.0e-4)
    vopt = Adam(value_a.parameters(), lr=1.0e-3)
    rng = np.random.default_rng(50)
    # take a few optimizer steps so moments are nonzero
    for _ in range(3):
        popt.step({k: rng.standard_normal(v.shape) for k, v in policy_a.parameters().items()})
        vopt.step({k: rng.standard_normal(v.shape) for k, v in value_a.parameters().items()})

    train_rng = np.random.default_rng(77)
    train_rng.uniform(size=10)
    saved_state = train_rng.bit_generator.state
    path = str(tmp_path / "ck.npz")
    save_checkpoint(
        path, policy_a, value_a, popt, vopt,
        rng_state=saved_state, extra={"batch": 17},
    )

    policy_b = PolicyNetwork(seed=200)
    value_b = ValueNetwork(seed=201)
    popt_b = Adam(policy_b.parameters(), lr=9.9)
    vopt_b = Adam(value_b.parameters(), lr=9.9)
    meta = load_checkpoint(path, policy_b, value_b, popt_b, vopt_b)

    assert meta["extra"] == {"batch": 17}
    assert popt_b.t == popt.t and popt_b.lr == popt.lr
    assert vopt_b.t == vopt.t and vopt_b.lr == vopt.lr
    for k in popt.m:
        np.testing.assert_array_equal(popt_b.m[k], popt.m[k])
        np.testing.assert_array_equal(popt_b.v[k], popt.v[k])

    image = rng.uniform(-1.0, 1.0, size=(2, 8, 8, 2))
    vec = rng.uniform(-1.0, 1.0, size=(2, 7))
    la, ha, _ = policy_a.step(image, vec, policy_a.init_hidden(2))
    lb, hb, _ = policy_b.step(image, vec, policy_b.init_hidden(2))
    np.testing.assert_array_equal(la, lb)
    np.testing.assert_array_equal(ha, hb)
    x = rng.uniform(-1.0, 1.0, size=(2, 13))
    va, _, _ = value_a.step(x, value_a.init_hidden(2))
    vb, _, _ = value_b.step(x, value_b.init_hidden(2))
    np.testing.assert_array_equal(va, vb)

    # restoring the rng state resumes the exact draw stream
    clone = np.random.default_rng(0)
    clone.bit_generator.state = saved_state
    expected = clone.uniform(size=5)
    resumed = np.random.default_rng(0)
    resumed.bit_generator.state = meta["rng_state"]
    np.testing.assert_array_equal(resumed.uniform(size=5), expected)


def test_checkpoint_without_optimizer_state_rejects_optimizer_load(tmp_path):
    policy = PolicyNetwork(seed=1)
    value = ValueNetwork(seed=2)
    path = str(tmp_path / "bare.npz")
    save_checkpoint(path, policy, value)
    meta = load_checkpoint(path, policy, value)  # plain load works
    assert meta["version"] == 1
    with pytest.raises(ConfigurationError):
        load_checkpoint(path, policy, value, policy_opt=Adam(policy.parameters()))


def test_load_parameters_validates_names_and_shapes():
    net = ValueNetwork(seed=3)
    with pytest.raises(ConfigurationError):
        net.load_parameters({})
    good = net.copy_parameters()
    good["fc1.W"] = np.zeros((2, 2))
    with pytest.raises(ConfigurationError):
        net.load_parameters(good)
