import math

import numpy as np
import pytest

from fundsep.errors import ParameterOutOfRange, UnsupportedMeasurePair
from fundsep.feynman_kac import (d_inv_phi, estimate, estimate_f, estimate_f_z, exact_f, exact_f_z,
                                 estimate_moment_32, gaussian_f_oracle, gaussian_f_z_oracle, gaussian_f_zz_oracle,
                                 hs_identity, inv_phi, moment_32_hyp1f1, ratio_estimate)
from fundsep.model import FILTERED_OU, THREE_HALVES, StateModelSpec
from fundsep.sde import SimConfig


@pytest.mark.parametrize("b,a,s,y0,nu,t", [
    (1.0, 1.0, 0.5, 1.0, 0.3, 0.5), (1.0, 1.0, 0.5, 0.2, 1.3, 2.0), (2.0, 0.1, 1.0, 3.0, 0.7, 1.0),
    (0.5, 2.0, 0.8, 1.5, 2.5, 4.0), (1.0, 0.0, 0.3, 1.0, 0.05, 0.1),
])
def test_moment_routes_agree(b, a, s, y0, nu, t):
    m = StateModelSpec("3/2", b, a, s)
    assert estimate_moment_32(m, y0, nu, t) == pytest.approx(moment_32_hyp1f1(m, y0, nu, t), rel=1e-9)


def test_moment_range_checks():
    m = StateModelSpec("3/2", 1.0, 1.0, 1.0)          # kappa = 3
    assert estimate_moment_32(m, 2.0, 1.5, 0.0) == 2.0 ** 1.5
    with pytest.raises(ParameterOutOfRange):
        estimate_moment_32(m, 1.0, 4.5, 1.0)
    with pytest.raises(ParameterOutOfRange):
        moment_32_hyp1f1(m, -1.0, 1.0, 1.0)


def test_initial_values(model, consts):
    cfg = SimConfig(n_paths=10)
    assert estimate_f(model, consts, 0.8, 0.0, cfg).value == pytest.approx(float(inv_phi(model.kind, consts, 0.8)))
    assert estimate_f_z(model, consts, 0.8, 0.0, cfg).value == pytest.approx(float(d_inv_phi(model.kind, consts, 0.8)))


def test_d_inv_phi_is_derivative(model, consts):
    z, h = 0.9, 1e-6
    fd = (inv_phi(model.kind, consts, z + h) - inv_phi(model.kind, consts, z - h)) / (2 * h)
    assert float(d_inv_phi(model.kind, consts, z)) == pytest.approx(float(fd), rel=1e-7)


def test_closed_form_derivatives(model, consts):
    if model.kind == FILTERED_OU:
        z, t, h = 0.4, 1.3, 1e-5
        fd = (gaussian_f_oracle(consts, z + h, t) - gaussian_f_oracle(consts, z - h, t)) / (2 * h)
        assert float(gaussian_f_z_oracle(consts, z, t)) == pytest.approx(float(fd), rel=1e-7)
        fd2 = (gaussian_f_z_oracle(consts, z + h, t) - gaussian_f_z_oracle(consts, z - h, t)) / (2 * h)
        assert float(gaussian_f_zz_oracle(consts, z, t)) == pytest.approx(float(fd2), rel=1e-6)
    elif model.kind == THREE_HALVES:
        z, t, h = 0.7, 1.0, 1e-4
        fd = (exact_f(model, consts, z + h, t) - exact_f(model, consts, z - h, t)) / (2 * h)
        assert exact_f_z(model, consts, z, t) == pytest.approx(fd, rel=1e-6)
    else:
        pytest.skip("no closed form")


def test_f_against_closed_form(model, consts):
    if model.kind == "inverse_bessel":
        pytest.skip("no closed form")
    cfg = SimConfig(dt=2e-3, n_paths=20000, seed=3)
    est = estimate_f(model, consts, 0.8, 1.0, cfg)
    assert est.z_score(exact_f(model, consts, 0.8, 1.0)) < 4.0


def test_representations_agree(model, consts):
    cfg = SimConfig(dt=2e-3, n_paths=20000, seed=8)
    tilde = estimate_f_z(model, consts, 0.8, 1.0, cfg, "tilde")
    if model.kind == FILTERED_OU:
        assert tilde.z_score(exact_f_z(model, consts, 0.8, 1.0)) < 4.0
        with pytest.raises(UnsupportedMeasurePair):
            estimate_f_z(model, consts, 0.8, 1.0, cfg, "hat")
        return
    hat = estimate_f_z(model, consts, 0.8, 1.0, cfg.with_(seed=9), "hat")
    assert tilde.z_score(hat) < 4.0


def test_feynman_kac_factorisation(model, consts):
    cfg = SimConfig(dt=2e-3, n_paths=20000, seed=21)
    u, rhs = hs_identity(model, consts, 0.8, 1.0, cfg)
    assert u.z_score(rhs) < 4.0


def test_antithetic_standard_error():
    x = np.array([1.0, -1.0] * 50) + 2.0
    assert estimate(x, 0, paired=True).std_error == 0.0
    assert estimate(x, 0).std_error > 0.0


def test_ratio_estimate():
    cfg = SimConfig(n_paths=4, antithetic=False)
    r = ratio_estimate(np.array([2.0, 4.0, 6.0]), np.array([1.0, 2.0, 3.0]), cfg)
    assert r.value == 2.0 and r.std_error == pytest.approx(0.0, abs=1e-15)
