import numpy as np
import pytest

from l0cim.datagen import GENERATOR, gen_instance


def test_noiseless_observation_exact():
    inst = gen_instance(50, 0.6, 0.2, 0.0, seed=1)
    np.testing.assert_array_equal(inst.y, inst.A @ (inst.xi_true * inst.x_true))


def test_support_count_and_shape():
    for N, alpha, a in [(50, 0.6, 0.2), (33, 0.5, 0.25), (12, 8 / 12, 0.25), (7, 1.0, 0.0)]:
        inst = gen_instance(N, alpha, a, 0.1, seed=2)
        assert inst.A.shape == (int(np.floor(alpha * N + 0.5)), N)
        assert inst.xi_true.sum() == int(np.floor(a * N + 0.5))


def test_rounding_half_away():
    # 0.5 * 33 = 16.5 rounds up, not to even
    assert gen_instance(33, 0.5, 0.5, seed=0).M == 17


def test_seed_determinism():
    a = gen_instance(40, 0.5, 0.1, 0.05, seed=9)
    b = gen_instance(40, 0.5, 0.1, 0.05, seed=9)
    c = gen_instance(40, 0.5, 0.1, 0.05, seed=10)
    assert a.A.tobytes() == b.A.tobytes() and a.y.tobytes() == b.y.tobytes()
    assert not np.array_equal(a.A, c.A)


def test_draw_order_is_pinned():
    N, M, k, nu, seed = 20, 10, 4, 0.3, 5
    rng = np.random.Generator(np.random.PCG64(seed))
    A = rng.normal(0.0, np.sqrt(1.0 / M), size=(M, N))
    x = rng.normal(0.0, 1.0, size=N)
    pos = rng.choice(N, size=k, replace=False)
    w = rng.normal(0.0, nu, size=M)
    xi = np.zeros(N)
    xi[pos] = 1.0
    inst = gen_instance(N, 0.5, 0.2, nu, seed)
    assert GENERATOR == "PCG64"
    np.testing.assert_array_equal(inst.A, A)
    np.testing.assert_array_equal(inst.x_true, x)
    np.testing.assert_array_equal(inst.xi_true, xi)
    np.testing.assert_allclose(inst.y, A @ (xi * x) + w, rtol=0, atol=1e-15)


def test_sample_statistics():
    inst = gen_instance(2000, 0.6, 0.2, 0.0, seed=3)
    M = inst.M
    col = inst.A[:, 0]
    se_col = np.sqrt(2.0 / (M - 1)) / M
    assert abs(col.var(ddof=1) - 1.0 / M) < 3 * se_col
    se_x = np.sqrt(2.0 / (inst.N - 1))
    assert abs(inst.x_true.var(ddof=1) - 1.0) < 3 * se_x
    # column Gram close to identity
    G = inst.A.T @ inst.A
    assert abs(np.mean(np.diag(G)) - 1.0) < 0.01
    off = G[:200, :200][np.triu_indices(200, 1)]
    assert abs(off.mean()) < 0.01
    assert off.std() == pytest.approx(np.sqrt(1.0 / M), rel=0.05)


def test_invalid_ratios():
    for args in [(10, 0.0, 0.1), (10, 1.5, 0.1), (10, 0.5, -0.1), (10, 0.5, 1.1), (0, 0.5, 0.1)]:
        with pytest.raises(ValueError):
            gen_instance(*args)
    with pytest.raises(ValueError):
        gen_instance(10, 0.5, 0.1, nu=-1.0)
