import math

import numpy as np
import pytest

from fundsep.convergence import (ergodic_f_limit, ergodic_fz_limit, fit_decay_rate, fit_log_slope,
                                 portfolio_convergence, sandwich_check, stationary_mean)
from fundsep.defaults import default_model
from fundsep.errors import DegenerateFit, EmptyGrid
from fundsep.feynman_kac import exact_f, gaussian_f_z_oracle
from fundsep.model import FILTERED_OU, INVERSE_BESSEL, derive_constants
from fundsep.sde import SimConfig


def test_log_slope_exact():
    t = np.linspace(0, 4, 9)
    slope, icpt, r2 = fit_log_slope(t, 3.0 * np.exp(-0.7 * t))
    assert slope == pytest.approx(-0.7, rel=1e-12)
    assert icpt == pytest.approx(math.log(3.0), rel=1e-12)
    assert r2 == pytest.approx(1.0)


def test_log_slope_rejects():
    with pytest.raises(DegenerateFit):
        fit_log_slope([1, 2, 3], [1, 2, 3])
    with pytest.raises(DegenerateFit):
        fit_log_slope(np.arange(5), [1, 2, 0, 3, 4])


def test_grid_checks(model, consts):
    cfg = SimConfig(n_paths=4)
    with pytest.raises(EmptyGrid):
        fit_decay_rate(model, consts, 1.0, [], cfg)
    with pytest.raises(DegenerateFit):
        fit_decay_rate(model, consts, 1.0, [0.01, 2, 3, 4, 5], cfg)
    with pytest.raises(DegenerateFit):
        fit_decay_rate(model, consts, 1.0, [3, 2, 4, 5, 6], cfg)


def test_ergodic_limits(model, consts):
    lim = ergodic_f_limit(model, consts)
    if model.kind == INVERSE_BESSEL:
        assert lim > 0
        return
    assert exact_f(model, consts, 0.8, 40.0) == pytest.approx(lim, rel=1e-8)
    if model.kind == FILTERED_OU:
        t = 40.0
        scaled = math.exp(consts.lam_hat * t) * float(gaussian_f_z_oracle(consts, 0.8, t))
        assert scaled == pytest.approx(ergodic_fz_limit(model, consts), rel=1e-8)


def test_stationary_mean_positive(model, consts):
    m = stationary_mean(model, consts)
    assert math.isfinite(m)
    if model.positive_state:
        assert m > 0


@pytest.fixture(scope="module")
def ou(spec):
    model = default_model(FILTERED_OU)
    return model, derive_constants(spec, model)


def test_decay_rate_filtered(ou):
    model, consts = ou
    cfg = SimConfig(dt=0.05, n_paths=20000, seed=1)
    fit = fit_decay_rate(model, consts, 0.5, np.linspace(1.2, 6.0, 9), cfg)
    assert fit.rel_error < 0.05
    assert fit.r_squared > 0.99
    assert sandwich_check(model, consts, 0.5, np.linspace(1.2, 6.0, 9), cfg).passed


def test_portfolio_convergence_filtered(spec, ou):
    model, consts = ou
    cfg = SimConfig(dt=0.05, n_paths=20000, seed=2)
    s = portfolio_convergence(spec, model, consts, 0.5, [1.5, 3.0, 4.5, 6.0], cfg)
    assert s.decreasing
    assert s.rel_error < 0.05
