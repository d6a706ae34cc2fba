import numpy as np
import pytest
from sklearn.base import clone

from l0cim import L0CimRegressor, gen_instance
from l0cim.model import HyperParams

FAST = dict(n_steps=300, velo=6, eta_init=0.6, eta_end=0.1)


def test_params_roundtrip_and_clone():
    est = L0CimRegressor("pp", tau=0.21, cdp="cg", random_state=3)
    params = est.get_params()
    assert params["backend"] == "pp" and params["tau"] == 0.21
    twin = clone(est)
    assert twin.get_params() == params
    hp = est.hyperparams()
    assert isinstance(hp, HyperParams) and hp.tau == 0.21


def test_defaults_match_hyperparams():
    est = L0CimRegressor()
    defaults = HyperParams()
    for k, v in est.hyperparams().to_dict().items():
        if k != "gamma" and k != "divergence_limit":
            assert v == getattr(defaults, k)


def test_fit_predict_identity_design():
    y = np.array([0.0, 1.5, 0.0, -2.0])
    est = L0CimRegressor(cdp="cg", random_state=0, eta_end=0.05, **{k: v for k, v in FAST.items()
                                                                    if k != "eta_end"})
    est.fit(np.eye(4), y)
    np.testing.assert_array_equal(est.support_, [False, True, False, True])
    np.testing.assert_allclose(est.coef_, y, atol=1e-8)
    np.testing.assert_allclose(est.predict(np.eye(4)), y, atol=1e-8)
    assert est.n_features_in_ == 4 and len(est.history_) == FAST["velo"] + 1


def test_fit_records_truth_metrics():
    inst = gen_instance(30, 0.6, 0.1, 0.0, seed=1)
    est = L0CimRegressor("mfz-cn", random_state=2, **FAST)
    est.fit(inst.A, inst.y, x_true=inst.x_true, xi_true=inst.xi_true)
    assert est.history_[-1].rmse is not None
    assert est.coef_.shape == (30,)
    np.testing.assert_array_equal(est.coef_, est.signal_ * est.support_)


def test_deterministic_given_seed():
    inst = gen_instance(20, 0.6, 0.2, 0.05, seed=4)
    a = L0CimRegressor("pp", random_state=5, **FAST).fit(inst.A, inst.y)
    b = L0CimRegressor("pp", random_state=5, **FAST).fit(inst.A, inst.y)
    assert a.coef_.tobytes() == b.coef_.tobytes()


def test_input_validation():
    est = L0CimRegressor(**FAST)
    with pytest.raises(Exception):
        est.predict(np.eye(2))
    with pytest.raises(ValueError):
        est.fit(np.eye(3), np.ones(2))
    with pytest.raises(ValueError):
        est.fit(np.array([[np.nan, 1.0]]), np.ones(1))
    est.fit(np.eye(3), np.ones(3))
    with pytest.raises(ValueError):
        est.predict(np.eye(2))
    with pytest.raises(ValueError):
        L0CimRegressor("sa").fit(np.eye(2), np.ones(2))
