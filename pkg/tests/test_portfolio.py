import numpy as np
import pytest

from fundsep.defaults import default_model
from fundsep.errors import ConfigError
from fundsep.model import FILTERED_OU, THREE_HALVES, derive_constants
from fundsep.portfolio import (assemble, dynamic_portfolio, fund_table, intertemporal_weights, myopic_fund,
                               static_portfolio)
from fundsep.feynman_kac import McEstimate
from fundsep.sde import SimConfig

FUND_NAMES = {
    "three_halves": ["safe", "myopic", "hedge", "intertemporal"],
    "inverse_bessel": ["safe", "myopic", "hedge", "hedge_inverse", "intertemporal"],
    "filtered_ou": ["safe", "myopic", "hedge_linear", "hedge_constant", "intertemporal"],
}


def test_fund_names(spec, model, consts, kind):
    assert [f.name for f in fund_table(spec, model, consts)] == FUND_NAMES[kind]


def test_static_portfolio_is_sum_of_funds(spec, model, consts):
    for z in (0.3, 1.0, 2.5):
        total = sum(f.weight * f.vector(z) for f in fund_table(spec, model, consts) if f.static and f.weight is not None)
        np.testing.assert_allclose(static_portfolio(spec, model, consts, z), total, rtol=1e-13, atol=1e-15)


def test_sqrt_variant(spec):
    model = default_model(THREE_HALVES)
    consts = derive_constants(spec, model)
    funds = fund_table(spec, model, consts, "sqrt")
    assert [f.name for f in funds] == ["safe", "myopic", "hedge", "intertemporal"]
    z = 2.0
    total = sum(f.weight * f.vector(z) for f in funds if f.static and f.weight is not None)
    np.testing.assert_allclose(static_portfolio(spec, model, consts, z, "sqrt"), total, rtol=1e-13)
    np.testing.assert_allclose(static_portfolio(spec, model, consts, z, "sqrt"),
                               static_portfolio(spec, model, consts, z) / np.sqrt(z), rtol=1e-13)
    other = default_model("invB")
    with pytest.raises(ConfigError):
        myopic_fund(spec, other, 1.0, "sqrt")


def test_at_maturity_only_myopic_remains(spec, model, consts):
    z = 0.7
    d = dynamic_portfolio(spec, model, consts, z, 2.0, 2.0, SimConfig(n_paths=4))
    np.testing.assert_allclose(d.total_dynamic, myopic_fund(spec, model, z) / (1.0 - spec.p), atol=1e-13)
    np.testing.assert_allclose(d.total_via_log_u, d.total_dynamic, atol=1e-13)


def test_assemble_adds_weight_along_hedge(spec, model, consts):
    w = McEstimate(0.3, 0.01, 10, 0)
    d = assemble(spec, model, consts, 0.9, 0.0, 1.0, w)
    np.testing.assert_allclose(d.total_dynamic - d.total_static, d.scale * d.intertemporal_direction * 0.3,
                               rtol=1e-13, atol=1e-16)
    np.testing.assert_allclose(d.total_dynamic_se, np.abs(d.scale * d.intertemporal_direction) * 0.01)


def test_monte_carlo_weight_matches_quadrature(spec, model, consts):
    if model.kind not in (THREE_HALVES, FILTERED_OU):
        pytest.skip("no closed form")
    cfg = SimConfig(dt=2e-3, n_paths=20000, seed=6)
    taus = [0.0, 0.5, 2.0]
    mc = intertemporal_weights(model, consts, 0.8, taus, cfg)
    ex = intertemporal_weights(model, consts, 0.8, taus, method="exact")
    assert mc[0].value == pytest.approx(ex[0].value, rel=1e-13)
    for m, e in zip(mc[1:], ex[1:]):
        assert m.z_score(e.value) < 4.0


def test_bad_arguments(spec, model, consts):
    with pytest.raises(ConfigError):
        dynamic_portfolio(spec, model, consts, 1.0, 2.0, 1.0, SimConfig(n_paths=4))
    with pytest.raises(ConfigError):
        intertemporal_weights(model, consts, 1.0, [1.0], SimConfig(n_paths=4), method="pde")
    if model.positive_state:
        with pytest.raises(ConfigError):
            static_portfolio(spec, model, consts, -1.0)
