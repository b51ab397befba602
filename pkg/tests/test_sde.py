import math

import numpy as np
import pytest

from fundsep.errors import ConfigError, MissingFunctional, UnsupportedMeasurePair
from fundsep.feynman_kac import estimate, gaussian_moments
from fundsep.model import FILTERED_OU, INVERSE_BESSEL, THREE_HALVES, dynamics
from fundsep.sde import SimConfig, flow_derivative, girsanov_weight, simulate


def test_config_validation():
    with pytest.raises(ConfigError):
        SimConfig(dt=0.0)
    with pytest.raises(ConfigError):
        SimConfig(scheme="milstein")
    with pytest.raises(ConfigError):
        SimConfig(horizon=1.0, record_times=(2.0,))
    with pytest.raises(ConfigError):
        SimConfig(n_paths=1)
    assert SimConfig(dt=0.3, horizon=1.0).step == pytest.approx(1.0 / 3.0)


def test_scheme_must_fit_model(model, consts):
    wrong = "implicit" if model.kind == FILTERED_OU else "exact"
    with pytest.raises(ConfigError):
        simulate(model, consts, "P", 1.0, SimConfig(n_paths=4, scheme=wrong))


def test_unknown_functional(model, consts):
    with pytest.raises(MissingFunctional):
        simulate(model, consts, "P", 1.0, SimConfig(n_paths=4), ["int_z3"])


def test_thread_count_does_not_change_paths(monkeypatch, model, consts):
    cfg = SimConfig(dt=0.02, horizon=0.5, n_paths=9000, seed=11)
    monkeypatch.setenv("FUNDSEP_THREADS", "1")
    a = simulate(model, consts, "PTilde", 0.8, cfg, ["int_z"])
    monkeypatch.setenv("FUNDSEP_THREADS", "3")
    b = simulate(model, consts, "PTilde", 0.8, cfg, ["int_z"])
    assert a.digest() == b.digest()
    assert a.noise_checksum == b.noise_checksum


@pytest.mark.parametrize("scheme", ["full_truncation", "implicit"])
def test_reciprocal_three_halves_mean(spec, scheme):
    # 1/Z is CIR: E[1/Z_t] = m + (1/z - m) e^{-Bt}, m = (K + s^2)/B
    from fundsep.defaults import default_model
    from fundsep.model import derive_constants
    model = default_model(THREE_HALVES)
    consts = derive_constants(spec, model)
    d = dynamics(model, consts, "P")
    z0, t = 0.5, 1.5
    batch = simulate(model, consts, "P", z0, SimConfig(dt=2e-3, horizon=t, n_paths=20000, seed=2, scheme=scheme))
    est = estimate(1.0 / batch.at(t), 2, paired=True)
    m = (d.K + d.vol ** 2) / d.B
    exact = m + (1.0 / z0 - m) * math.exp(-d.B * t)
    assert abs(est.value - exact) < 4 * est.std_error + 2e-3 * exact


def test_ou_transition_moments(model, consts):
    if model.kind != FILTERED_OU:
        pytest.skip("Gaussian transitions only")
    batch = simulate(model, consts, "PTilde", 0.7, SimConfig(dt=0.05, horizon=2.0, n_paths=40000, seed=5,
                                                             antithetic=False))
    m, v = gaussian_moments(consts, 0.7, 2.0)
    x = batch.at(2.0)
    assert abs(x.mean() - m) < 4 * math.sqrt(v / x.size)
    assert x.var() == pytest.approx(v, rel=0.03)


def test_flow_derivative_matches_bumped_paths(model, consts):
    # pathwise dZ_t/dz against common-noise central differences
    scheme = "exact" if model.kind == FILTERED_OU else "implicit"
    cfg = SimConfig(dt=1e-3, horizon=1.0, n_paths=512, seed=9, scheme=scheme)
    z, h = 1.0, 1e-5
    fn = ["int_z"] if model.kind == THREE_HALVES else ["int_z2"]
    base = simulate(model, consts, "PTilde", z, cfg, fn)
    up = simulate(model, consts, "PTilde", z + h, cfg).at(1.0)
    dn = simulate(model, consts, "PTilde", z - h, cfg).at(1.0)
    fd = (up - dn) / (2 * h)
    fl = flow_derivative(model, "PTilde", base)
    assert np.median(np.abs(fl / fd - 1.0)) < 0.02


def test_flow_derivative_needs_integral(model, consts):
    if model.kind == FILTERED_OU:
        pytest.skip("deterministic flow")
    batch = simulate(model, consts, "PTilde", 1.0, SimConfig(n_paths=4))
    with pytest.raises(MissingFunctional):
        flow_derivative(model, "PTilde", batch)
    with pytest.raises(UnsupportedMeasurePair):
        flow_derivative(model, "PHat", batch)


def test_girsanov_weights_have_unit_mean(model, consts):
    cfg = SimConfig(dt=2e-3, horizon=1.0, n_paths=20000, seed=4)
    fn = ["int_z"] if model.kind == THREE_HALVES else ["int_z2"]
    pairs = [("P", "PTilde")] + ([] if model.kind == FILTERED_OU else [("PTilde", "PHat")])
    for src, dst in pairs:
        batch = simulate(model, consts, src, 0.9, cfg, fn)
        est = estimate(girsanov_weight(model, consts, batch, src, dst), cfg.seed, paired=True)
        assert est.z_score(1.0) < 4.0, (src, dst, est)


def test_recorded_times(model, consts):
    cfg = SimConfig(dt=0.01, horizon=1.0, n_paths=4, record_times=(0.25, 1.0))
    batch = simulate(model, consts, "P", 1.0, cfg, ["int_z"])
    np.testing.assert_allclose(batch.times, [0.0, 0.25, 1.0])
    assert np.all(batch.states[:, 0] == 1.0)
    with pytest.raises(ConfigError):
        batch.at(0.5)
