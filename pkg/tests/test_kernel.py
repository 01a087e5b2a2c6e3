import numpy as np
import pytest

from attrseq.kernel import (
    Rng,
    activation,
    activation_grad_from_output,
    glorot_bound,
    matvec,
    orthogonal_init,
    relu,
    sigmoid,
    tanh,
    uniform_init,
)


def test_matvec_identity():
    v = np.array([1.0, 2.0, 3.0])
    assert np.array_equal(matvec(np.eye(3), v), v)


def test_matvec_zeros():
    out = matvec(np.zeros((2, 3)), np.ones(3))
    assert np.array_equal(out, np.zeros(2))


def test_matvec_hand_case():
    # independent scalar loop as the oracle
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    v = np.array([1.0, 1.0])
    expected = np.array([sum(m[i, j] * v[j] for j in range(2)) for i in range(2)])
    assert np.array_equal(matvec(m, v), expected)
    assert np.array_equal(expected, [3.0, 7.0])


def test_matvec_shape_error_names_both_shapes():
    with pytest.raises(ValueError, match=r"\(2, 3\).*\(2,\)"):
        matvec(np.zeros((2, 3)), np.zeros(2))


def test_matvec_distributes_over_addition():
    gen = np.random.default_rng(7)
    for _ in range(100):
        m = gen.uniform(-1, 1, (5, 4))
        a = gen.uniform(-1, 1, 4)
        b = gen.uniform(-1, 1, 4)
        assert np.max(np.abs(matvec(m, a + b) - (matvec(m, a) + matvec(m, b)))) < 1e-12


def test_activation_point_values():
    assert tanh(0.0) == 0.0
    assert sigmoid(0.0) == 0.5
    assert relu(-2.0) == 0.0
    assert relu(3.5) == 3.5


def test_sigmoid_saturates_without_nan():
    z = np.array([-1000.0, -50.0, 50.0, 1000.0])
    out = sigmoid(z)
    assert np.all(np.isfinite(out))
    assert out[0] == 0.0 and out[-1] == 1.0


def test_sigmoid_symmetry():
    gen = np.random.default_rng(3)
    x = gen.uniform(-30, 30, 1000)
    assert np.max(np.abs(sigmoid(x) + sigmoid(-x) - 1.0)) < 1e-12


def test_activation_lookup():
    assert activation("tanh") is tanh
    assert activation("relu") is relu
    with pytest.raises(ValueError, match="unknown activation"):
        activation("softplus")


def test_activation_grad_from_output():
    x = np.array([-2.0, -0.3, 0.0, 0.7, 2.0])
    t = tanh(x)
    assert np.allclose(activation_grad_from_output("tanh", t), 1 - np.tanh(x) ** 2)
    r = relu(x)
    assert np.array_equal(activation_grad_from_output("relu", r), [0, 0, 0, 1, 1])


def test_glorot_bound_values():
    assert glorot_bound(50, 50) == pytest.approx(0.2449489742783178)
    assert np.sqrt(6.0 / 50) == pytest.approx(0.34641016151377546)


def test_uniform_init_within_bound():
    m = uniform_init(Rng(11), 40, 30, 0.25)
    assert m.shape == (40, 30)
    assert np.all(np.abs(m) <= 0.25)


def test_uniform_init_rejects_nonpositive_bound():
    with pytest.raises(ValueError, match="bound"):
        uniform_init(Rng(0), 2, 2, 0.0)
    with pytest.raises(ValueError, match="bound"):
        uniform_init(Rng(0), 2, 2, -1.0)


def test_rng_reproducible():
    a = uniform_init(Rng(42), 8, 8, 0.5)
    b = uniform_init(Rng(42), 8, 8, 0.5)
    assert np.array_equal(a, b)


def test_rng_child_streams_independent_of_draw_order():
    r1 = Rng(42)
    r2 = Rng(42)
    r2.gen.uniform(size=100)  # consuming the parent must not affect children
    c1 = r1.child("init").gen.uniform(size=10)
    c2 = r2.child("init").gen.uniform(size=10)
    assert np.array_equal(c1, c2)
    # distinct labels give distinct streams
    assert not np.array_equal(c1, Rng(42).child("other").gen.uniform(size=10))


def test_rng_rejects_out_of_range_seed():
    with pytest.raises(ValueError, match="64-bit"):
        Rng(-1)


def test_orthogonal_init_is_orthogonal_and_deterministic():
    q1 = orthogonal_init(Rng(5), 12)
    q2 = orthogonal_init(Rng(5), 12)
    assert np.array_equal(q1, q2)
    assert np.max(np.abs(q1.T @ q1 - np.eye(12))) < 1e-10
