import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from l0cim.model import (
    CouplingForm,
    HyperParams,
    ProblemInstance,
    SupportSignalPair,
    brute_force_l0rbcs,
    coupling_from_observation,
    hamiltonian,
    hamming_loss,
    lam_from_eta,
    load_instance,
    objective,
    rmse,
    round_half_away,
    save_instance,
)


def _inst(A, y, **kw):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return ProblemInstance(A=A, y=np.asarray(y, dtype=float), **kw)


def _pair_energy(A, y, R, s, lam):
    """Loop oracle: sum over r < r' plus Zeeman and penalty, s may be fractional."""
    A, y, R, s = map(np.asarray, (A, y, R, s))
    N = A.shape[1]
    H = 0.0
    for r in range(N):
        for q in range(r + 1, N):
            H += float(A[:, r] @ A[:, q]) * R[r] * R[q] * s[r] * s[q]
        H -= float(y @ A[:, r]) * R[r] * s[r]
    return H + lam * float(np.sum(s))


# --- hamiltonian ---------------------------------------------------------------

def test_hamiltonian_zero_support():
    rng = np.random.default_rng(0)
    inst = _inst(rng.standard_normal((3, 5)), rng.standard_normal(3))
    assert hamiltonian(inst, rng.standard_normal(5), np.zeros(5), 0.4) == 0.0


def test_hamiltonian_scalar_example():
    inst = _inst([[1.0]], [1.0])
    assert hamiltonian(inst, [1.0], [1.0], 0.5) == pytest.approx(-0.5, abs=1e-15)


def test_hamiltonian_penalty_only():
    rng = np.random.default_rng(1)
    inst = _inst(rng.standard_normal((4, 4)), rng.standard_normal(4))
    assert hamiltonian(inst, np.zeros(4), np.ones(4), 0.3) == pytest.approx(1.2)


def test_hamiltonian_matches_loop_oracle():
    rng = np.random.default_rng(2)
    for _ in range(10):
        N, M = rng.integers(1, 8), rng.integers(1, 8)
        A, y = rng.standard_normal((M, N)), rng.standard_normal(M)
        R, s = rng.standard_normal(N), rng.integers(0, 2, N).astype(float)
        H = hamiltonian(_inst(A, y), R, s, 0.17)
        assert H == pytest.approx(_pair_energy(A, y, R, s, 0.17), rel=1e-12, abs=1e-12)


def test_hamiltonian_rejects_bad_input():
    inst = _inst(np.eye(2), [1.0, 0.0])
    with pytest.raises(ValueError):
        hamiltonian(inst, [1.0], [1.0, 0.0], 0.1)
    with pytest.raises(ValueError):
        hamiltonian(inst, [1.0, 0.0], [0.5, 0.0], 0.1)


def test_objective_is_residual_form():
    rng = np.random.default_rng(3)
    A, y = rng.standard_normal((5, 4)), rng.standard_normal(5)
    R, s = rng.standard_normal(4), np.array([1.0, 0.0, 1.0, 1.0])
    expect = 0.5 * np.sum((y - A @ (R * s)) ** 2) - 0.5 * y @ y + 0.2 * s.sum()
    assert objective(_inst(A, y), R, s, 0.2) == pytest.approx(expect, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 7), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_hamiltonian_permutation_invariant(N, M, seed):
    rng = np.random.default_rng(seed)
    A, y = rng.standard_normal((M, N)), rng.standard_normal(M)
    R, s = rng.standard_normal(N), rng.integers(0, 2, N).astype(float)
    perm = rng.permutation(N)
    H0 = hamiltonian(_inst(A, y), R, s, 0.3)
    H1 = hamiltonian(_inst(A[:, perm], y), R[perm], s[perm], 0.3)
    assert H1 == pytest.approx(H0, rel=1e-10, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 7), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_hamiltonian_from_coupling(N, M, seed):
    rng = np.random.default_rng(seed)
    A, y = rng.standard_normal((M, N)), rng.standard_normal(M)
    R, s = rng.standard_normal(N), rng.integers(0, 2, N).astype(float)
    lam = 0.25
    c = coupling_from_observation(A, y)
    J, hz = c.J, c.hz
    v = R * s
    recon = (-0.5 * v @ J @ v - hz @ v + 0.5 * np.sum((A**2).sum(0) * R**2 * s) + lam * s.sum())
    assert objective(_inst(A, y), R, s, lam) == pytest.approx(recon, abs=1e-10)
    assert c.energy(R, s, lam, include_self=True) == pytest.approx(recon, abs=1e-10)
    assert c.energy(R, s, lam) == pytest.approx(hamiltonian(_inst(A, y), R, s, lam), abs=1e-10)


# --- coupling ------------------------------------------------------------------

def test_coupling_example():
    c = coupling_from_observation([[1.0, 2.0]], [3.0])
    np.testing.assert_array_equal(c.J, [[0.0, -2.0], [-2.0, 0.0]])
    np.testing.assert_array_equal(c.hz, [3.0, 6.0])


def test_coupling_orthogonal_columns():
    Q, _ = np.linalg.qr(np.random.default_rng(4).standard_normal((6, 4)))
    c = coupling_from_observation(Q, np.ones(6))
    np.testing.assert_allclose(c.J, 0.0, atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 9), st.integers(1, 9), st.integers(0, 2**32 - 1))
def test_coupling_symmetric_zero_diagonal(N, M, seed):
    rng = np.random.default_rng(seed)
    c = coupling_from_observation(rng.standard_normal((M, N)), rng.standard_normal(M))
    J = c.J
    assert np.all(np.diag(J) == 0.0)
    np.testing.assert_array_equal(J, J.T)
    v = rng.standard_normal(N)
    np.testing.assert_allclose(c.couple(v), J @ v, atol=1e-12)


def test_coupling_form_validation():
    with pytest.raises(ValueError):
        CouplingForm(gram=np.ones((2, 3)), hz=np.zeros(2))
    with pytest.raises(ValueError):
        coupling_from_observation(np.ones((2, 2)), np.ones(3))


# --- brute force ---------------------------------------------------------------

def test_brute_force_example():
    R, s, H = brute_force_l0rbcs(_inst(np.eye(2), [1.0, 0.0]), 0.3)
    np.testing.assert_array_equal(s, [1.0, 0.0])
    assert R[0] == pytest.approx(1.0)
    assert H == pytest.approx(-0.2, abs=1e-12)


def test_brute_force_large_lambda_empty():
    rng = np.random.default_rng(5)
    A, y = rng.standard_normal((4, 5)), rng.standard_normal(4)
    R, s, H = brute_force_l0rbcs(_inst(A, y), 0.5 * y @ y + 1e-6)
    assert s.sum() == 0 and H == 0.0


def test_brute_force_zero_lambda_least_squares():
    rng = np.random.default_rng(6)
    A, y = rng.standard_normal((8, 5)), rng.standard_normal(8)
    R, s, H = brute_force_l0rbcs(_inst(A, y), 0.0)
    x_ls = np.linalg.lstsq(A, y, rcond=None)[0]
    res = np.sum((y - A @ (R * s)) ** 2)
    assert res == pytest.approx(np.sum((y - A @ x_ls) ** 2), rel=1e-9)


def test_brute_force_tie_prefers_small_support():
    # duplicated column at lam=0: {0}, {1} and {0,1} all reach the same cost
    A = np.array([[1.0, 1.0]])
    _, s, _ = brute_force_l0rbcs(_inst(A, [1.0]), 0.0)
    np.testing.assert_array_equal(s, [0.0, 1.0])


def test_brute_force_refuses_large_n():
    with pytest.raises(ValueError):
        brute_force_l0rbcs(_inst(np.ones((2, 21)), [1.0, 1.0]), 0.1)


def test_brute_force_matches_exhaustive_loop():
    rng = np.random.default_rng(7)
    A, y = rng.standard_normal((4, 6)), rng.standard_normal(4)
    lam = 0.05
    best = np.inf
    for bits in itertools.product([0, 1], repeat=6):
        s = np.array(bits, dtype=float)
        act = np.flatnonzero(s)
        R = np.zeros(6)
        if act.size:
            R[act] = np.linalg.pinv(A[:, act]) @ y
        best = min(best, 0.5 * np.sum((y - A @ (R * s)) ** 2) - 0.5 * y @ y + lam * s.sum())
    assert brute_force_l0rbcs(_inst(A, y), lam)[2] == pytest.approx(best, abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_brute_force_beats_random_probes(seed):
    rng = np.random.default_rng(seed)
    A, y = rng.standard_normal((5, 7)), rng.standard_normal(5)
    inst = _inst(A, y)
    lam = 0.1
    H = brute_force_l0rbcs(inst, lam)[2]
    for _ in range(100):
        R, s = 2 * rng.standard_normal(7), rng.integers(0, 2, 7).astype(float)
        assert H <= objective(inst, R, s, lam) + 1e-12


# --- metrics -------------------------------------------------------------------

def test_rmse_examples():
    x, xi = np.zeros(4), np.zeros(4)
    assert rmse([1, 0, 0, 0], [1, 0, 0, 0], x, xi) == pytest.approx(0.5)
    assert rmse([2, 3, 0, 1], [1, 1, 0, 0], [2, 3, 5, 0], [1, 1, 0, 0]) == 0.0


def test_rmse_homogeneous():
    rng = np.random.default_rng(8)
    R, x = rng.standard_normal(6), rng.standard_normal(6)
    s, xi = rng.integers(0, 2, 6), rng.integers(0, 2, 6)
    assert rmse(-3 * R, s, -3 * x, xi) == pytest.approx(3 * rmse(R, s, x, xi))


def test_rmse_requires_truth():
    with pytest.raises(ValueError):
        rmse([1.0], [1.0], None, None)


def test_hamming_examples():
    xi = np.array([1, 0, 1, 0])
    assert hamming_loss(xi, xi) == 0.0
    assert hamming_loss(1 - xi, xi) == 1.0
    assert hamming_loss([1, 0, 1, 1], xi) == 0.25
    with pytest.raises(ValueError):
        hamming_loss([0.5, 0, 1, 0], xi)


def test_support_signal_pair():
    pair = SupportSignalPair(sigma=np.array([1.0, 0.0]), R=np.array([2.0, 5.0]))
    np.testing.assert_array_equal(pair.estimate, [2.0, 0.0])


# --- instance, params, helpers -------------------------------------------------

def test_instance_invariants():
    with pytest.raises(ValueError):
        _inst(np.ones((3, 4)), np.ones(2))
    with pytest.raises(ValueError):
        ProblemInstance(A=np.ones((2, 4)), y=np.ones(2), x_true=np.ones(4),
                        xi_true=np.array([1.0, 0, 0, 0]), a=0.5, alpha=0.5)


def test_instance_roundtrip(tmp_path):
    from l0cim.datagen import gen_instance
    inst = gen_instance(20, 0.5, 0.2, 0.1, seed=3)
    save_instance(inst, tmp_path / "b")
    back = load_instance(tmp_path / "b")
    np.testing.assert_array_equal(back.A, inst.A)
    np.testing.assert_array_equal(back.y, inst.y)
    np.testing.assert_array_equal(back.x_true, inst.x_true)
    np.testing.assert_array_equal(back.xi_true, inst.xi_true)
    assert (back.a, back.alpha, back.nu, back.seed) == (inst.a, inst.alpha, inst.nu, inst.seed)


def test_round_half_away():
    assert [round_half_away(v) for v in (0.5, 1.5, 2.5, -0.5, 2.4)] == [1, 2, 3, -1, 2]


def test_lam_from_eta():
    assert lam_from_eta(0.6) == pytest.approx(0.18)


def test_hyperparams_validation_and_roundtrip():
    hp = HyperParams(tau=0.21, K=0.1)
    assert HyperParams.from_dict(hp.to_dict()) == hp
    assert hp.replace(K=2.0).K == 2.0
    for bad in ({"dt": 0}, {"n_steps": 0}, {"tau": 0}, {"g2": -1},
                {"eta_init": 0.1, "eta_end": 0.2}, {"eta_end": -0.1, "eta_init": 0.1}):
        with pytest.raises(ValueError):
            HyperParams(**bad)
    with pytest.raises(ValueError):
        HyperParams.from_dict({"no_such_field": 1})
