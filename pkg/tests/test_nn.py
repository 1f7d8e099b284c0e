import math

import numpy as np
import pytest

from gcn_sizer.errors import AutodiffError
from gcn_sizer.nn import (Adam, DenseLayer, GcnLayer, Tensor, add, concat, gather_rows,
                          gcn_forward, identity, matmul, mean_all, mean_last, mul,
                          normalize_adjacency, place_rows, propagate, relu, scale,
                          slice_cols, squeeze_last, sub, tanh)


def random_graph(rng, n):
    a = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.45:
                a[i, j] = a[j, i] = 1.0
    return a


# --- adjacency normalization -------------------------------------------------

def test_normalize_single_node():
    assert normalize_adjacency(np.zeros((1, 1))).tolist() == [[1.0]]


def test_normalize_symmetric_pair():
    got = normalize_adjacency(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert got.tolist() == [[0.5, 0.5], [0.5, 0.5]]


def test_normalize_path_matches_explicit_product():
    a = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
    got = normalize_adjacency(a)
    # independent route: full D^(-1/2) (A+I) D^(-1/2) matrix product
    a_tilde = a + np.eye(3)
    d_inv_sqrt = np.diag(1.0 / np.sqrt(a_tilde.sum(axis=1)))
    oracle = d_inv_sqrt @ a_tilde @ d_inv_sqrt
    assert np.allclose(got, oracle, atol=1e-15)
    assert got[0, 0] == pytest.approx(0.5, abs=1e-12)
    assert got[0, 1] == pytest.approx(1.0 / math.sqrt(6.0), abs=1e-12)
    assert got[1, 1] == pytest.approx(1.0 / 3.0, abs=1e-12)
    assert got[1, 2] == pytest.approx(1.0 / math.sqrt(6.0), abs=1e-12)
    assert got[2, 2] == pytest.approx(0.5, abs=1e-12)
    assert got[0, 2] == 0.0


def test_normalize_matches_closed_form_on_random_graphs():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n = int(rng.integers(1, 9))
        a = random_graph(rng, n)
        got = normalize_adjacency(a)
        deg = a.sum(axis=1) + 1.0
        for i in range(n):
            for j in range(n):
                expected = 1.0 / math.sqrt(deg[i] * deg[j]) if (a[i, j] == 1.0 or i == j) else 0.0
                assert got[i, j] == pytest.approx(expected, abs=1e-12)
        assert np.array_equal(got, got.T)


def test_normalized_spectrum_within_unit_interval():
    rng = np.random.default_rng(2)
    for _ in range(50):
        n = int(rng.integers(2, 9))
        eig = np.linalg.eigvalsh(normalize_adjacency(random_graph(rng, n)))
        assert eig.min() >= -1.0 - 1e-12
        assert eig.max() <= 1.0 + 1e-12


def test_normalize_rejects_bad_input():
    with pytest.raises(ValueError):
        normalize_adjacency(np.ones((2, 3)))
    with pytest.raises(ValueError):
        normalize_adjacency(np.eye(2))
    with pytest.raises(ValueError):
        normalize_adjacency(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        normalize_adjacency(np.array([[0.0, 2.0], [2.0, 0.0]]))


# --- gcn forward --------------------------------------------------------------

def _layer_with_weight(w):
    layer = GcnLayer(w.shape[0], w.shape[1], np.random.default_rng(0))
    layer.weight.data = np.asarray(w, dtype=float)
    return layer


def test_gcn_identity_composition():
    rng = np.random.default_rng(3)
    h = np.abs(rng.normal(size=(1, 4)))
    out = gcn_forward(Tensor(h), np.eye(1), _layer_with_weight(np.eye(4)), relu)
    assert np.array_equal(out.data, h)


def test_gcn_pair_linear_matches_hand_product():
    prop = normalize_adjacency(np.array([[0.0, 1.0], [1.0, 0.0]]))
    out = gcn_forward(Tensor(np.eye(2)), prop, _layer_with_weight(np.eye(2)), identity)
    assert np.allclose(out.data, [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)


def test_gcn_permutation_equivariance_tolerance():
    rng = np.random.default_rng(4)
    for _ in range(100):
        n = int(rng.integers(2, 8))
        a = random_graph(rng, n)
        prop = normalize_adjacency(a)
        h = rng.normal(size=(n, 5))
        layer = _layer_with_weight(rng.normal(size=(5, 3)))
        base = gcn_forward(Tensor(h), prop, layer, relu).data
        perm = rng.permutation(n)
        p = np.eye(n)[perm]
        permuted = gcn_forward(Tensor(p @ h), p @ prop @ p.T, layer, relu).data
        assert np.allclose(permuted, p @ base, atol=1e-12)


def test_gcn_permutation_equivariance_exact_on_dyadic_inputs():
    # with short-mantissa inputs IEEE arithmetic is exact, so the algebraic
    # identity holds bit for bit under any summation order
    rng = np.random.default_rng(5)
    for _ in range(100):
        n = int(rng.integers(2, 8))
        prop = np.round(rng.uniform(0, 1, size=(n, n)) * 16) / 16
        prop = (prop + prop.T) / 2
        h = np.round(rng.uniform(-2, 2, size=(n, 4)) * 64) / 64
        w = np.round(rng.uniform(-1, 1, size=(4, 4)) * 64) / 64
        layer = _layer_with_weight(w)
        base = gcn_forward(Tensor(h), prop, layer, relu).data
        perm = rng.permutation(n)
        p = np.eye(n)[perm]
        permuted = gcn_forward(Tensor(p @ h), p @ prop @ p.T, layer, relu).data
        assert np.array_equal(permuted, p @ base)


def test_forward_bit_reproducible():
    rng = np.random.default_rng(6)
    a = random_graph(rng, 5)
    prop = normalize_adjacency(a)
    h = rng.normal(size=(5, 4))
    layer = GcnLayer(4, 4, np.random.default_rng(1))
    out1 = gcn_forward(Tensor(h), prop, layer, relu).data
    out2 = gcn_forward(Tensor(h), prop, layer, relu).data
    assert np.array_equal(out1, out2)


# --- backward -----------------------------------------------------------------

def finite_difference(loss_fn, params, eps=1e-5):
    """Central-difference gradient oracle over a list of parameter tensors."""
    grads = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_fn()
            flat[i] = orig - eps
            down = loss_fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * eps)
        grads.append(g)
    return grads


def test_linear_gradient_is_input():
    w = Tensor(np.array([[2.0]]))
    x = Tensor(np.array([[3.0]]))
    loss = mean_all(matmul(x, w))
    loss.backward()
    assert w.grad.tolist() == [[3.0]]
    assert x.grad.tolist() == [[2.0]]


def test_three_layer_net_matches_finite_differences():
    rng = np.random.default_rng(7)
    layers = [DenseLayer(6, 5, rng), DenseLayer(5, 4, rng), DenseLayer(4, 2, rng)]
    x = rng.normal(size=(3, 6))
    target = rng.normal(size=(3, 2))

    def forward():
        h = Tensor(x)
        h = relu(layers[0](h))
        h = tanh(layers[1](h))
        h = layers[2](h)
        d = sub(h, Tensor(target))
        return mean_all(mul(d, d))

    loss = forward()
    loss.backward()
    params = [p for layer in layers for p in layer.params]
    analytic = [p.grad.copy() for p in params]
    numeric = finite_difference(lambda: float(forward().data), params)
    for a, n in zip(analytic, numeric):
        rel = np.abs(a - n) / (np.abs(a) + 1e-8)
        assert rel.max() < 1e-4


def test_mixed_ops_match_finite_differences():
    # exercises propagate, gather/place, slice, concat, mean_last, squeeze
    rng = np.random.default_rng(8)
    prop = normalize_adjacency(random_graph(rng, 4))
    dense = DenseLayer(3, 4, rng)
    gcn = GcnLayer(4, 4, rng)
    head = DenseLayer(6, 1, rng)
    x = rng.normal(size=(4, 5))
    idx = np.array([0, 2, 3])

    def forward():
        h = Tensor(x)
        base = relu(dense(slice_cols(h, 0, 3)))
        g = gcn_forward(base, prop, gcn, tanh)
        joined = concat([gather_rows(g, idx),
                         place_rows(slice_cols(gather_rows(h, idx), 0, 2), np.arange(3), 3, 0, 2)])
        q = head(joined)
        pooled = mean_last(squeeze_last(q))
        return scale(add(pooled, pooled), 0.5)

    loss = forward()
    loss.backward()
    params = list(dense.params) + list(gcn.params) + list(head.params)
    analytic = [p.grad.copy() for p in params]
    numeric = finite_difference(lambda: float(forward().data), params)
    for a, n in zip(analytic, numeric):
        rel = np.abs(a - n) / (np.abs(a) + 1e-8)
        assert rel.max() < 1e-4


def test_batched_forward_matches_per_sample():
    rng = np.random.default_rng(9)
    prop = normalize_adjacency(random_graph(rng, 3))
    dense = DenseLayer(4, 4, rng)
    gcn = GcnLayer(4, 4, rng)
    batch = rng.normal(size=(5, 3, 4))
    batched = gcn_forward(relu(dense(Tensor(batch))), prop, gcn, relu).data
    for b in range(5):
        single = gcn_forward(relu(dense(Tensor(batch[b]))), prop, gcn, relu).data
        assert np.array_equal(batched[b], single)


def test_backward_requires_scalar_and_forward():
    with pytest.raises(AutodiffError):
        Tensor(np.zeros((2, 2))).backward()
    with pytest.raises(AutodiffError):
        Tensor(np.zeros(1)).backward()  # leaf: no recorded computation


# --- updater -------------------------------------------------------------------

def test_zero_gradients_leave_params_unchanged():
    p = Tensor(np.array([1.0, -2.0]))
    opt = Adam([p], lr=0.1)
    p.grad = np.zeros_like(p.data)
    opt.step()
    assert p.data.tolist() == [1.0, -2.0]


def test_first_step_opposes_gradient():
    p = Tensor(np.array([0.5]))
    opt = Adam([p], lr=0.1)
    p.grad = np.array([1.0])
    opt.step()
    assert p.data[0] < 0.5


def test_zero_learning_rate_is_identity():
    p = Tensor(np.array([0.25, -0.75]))
    before = p.data.copy()
    opt = Adam([p], lr=0.0)
    p.grad = np.array([3.0, -2.0])
    opt.step()
    assert np.array_equal(p.data, before)


def test_non_finite_gradient_rejected():
    p = Tensor(np.array([1.0]))
    opt = Adam([p], lr=0.1)
    p.grad = np.array([float("inf")])
    with pytest.raises(AutodiffError):
        opt.step()


def _adam_reference(p0, grad_fn, lr, steps, beta1=0.9, beta2=0.999, eps=1e-8):
    # plain-float recurrence, independent of the array implementation
    p, m, v = p0, 0.0, 0.0
    for t in range(1, steps + 1):
        g = grad_fn(p)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        p -= lr * m_hat / (math.sqrt(v_hat) + eps)
    return p


def test_quadratic_convergence_matches_reference_recurrence():
    # the reference recurrence first reaches |p - 3| < 0.05 at step 654,
    # so 700 steps converge with margin
    steps, lr = 700, 0.01
    expected = _adam_reference(0.0, lambda p: 2.0 * (p - 3.0), lr, steps)
    p = Tensor(np.array([0.0]))
    opt = Adam([p], lr=lr)
    for _ in range(steps):
        opt.zero_grad()
        p.grad = 2.0 * (p.data - 3.0)
        opt.step()
    assert abs(p.data[0] - 3.0) < 0.05
    assert p.data[0] == pytest.approx(expected, abs=1e-9)


def test_update_counter_and_state_shapes():
    layer = DenseLayer(3, 2, np.random.default_rng(0))
    opt = Adam(layer.params, lr=1e-3)
    assert opt.step_count == 0
    for p in layer.params:
        p.grad = np.ones_like(p.data)
    opt.step()
    assert opt.step_count == 1
    assert all(m.shape == p.data.shape for m, p in zip(opt._m, opt.params))
