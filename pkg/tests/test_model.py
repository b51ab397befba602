import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fundsep.errors import AssumptionViolated, InvalidSpec, UnsupportedMeasurePair
from fundsep.model import (FILTERED_OU, INVERSE_BESSEL, THREE_HALVES, PreferenceMarketSpec, StateModelSpec,
                           canonical_kind, derive_constants, dynamics, eigen_residual, eigenpair, generator,
                           riccati_root)

from conftest import rel

# exact rational-arithmetic values at the default parameter sets (sympy, independent of the package)
FROZEN = {
    THREE_HALVES: dict(eta=0.081591148247892308, lam=0.098191148247892307, lam_hat=1.0),
    INVERSE_BESSEL: dict(eta=0.041750118548657628, xi=0.038515979337877981, lam=0.093446523592711481,
                         lam_hat=1.5537106523003074, zeta=0.82316891183876264),
    FILTERED_OU: dict(P0=0.098773003935204065, eta=0.027577633727610783, xi=0.029632926711028138,
                      lam=0.026239990141440066, lam_hat=0.93064157977171856, kappa=0.92774846580671683),
}


def test_frozen_constants(consts, kind):
    for key, want in FROZEN[kind].items():
        got = getattr(consts, key)
        assert got == pytest.approx(want, rel=1e-14, abs=1e-16), key


def test_aliases():
    assert canonical_kind("3/2") == THREE_HALVES
    assert canonical_kind("invB") == INVERSE_BESSEL
    assert canonical_kind("FOU") == FILTERED_OU
    with pytest.raises(InvalidSpec):
        canonical_kind("heston")


def test_market_validation():
    good = dict(p=-1.0, r=0.0, mu=[0.1], Sigma=[[0.2]], rho=[0.1])
    PreferenceMarketSpec(**good)
    with pytest.raises(InvalidSpec):
        PreferenceMarketSpec(**{**good, "p": 0.5})
    with pytest.raises(InvalidSpec):
        PreferenceMarketSpec(**{**good, "rho": [1.2]})
    with pytest.raises(InvalidSpec):
        PreferenceMarketSpec(**{**good, "Sigma": [[0.2, 0.0], [0.0, 0.1]]})
    with pytest.raises(InvalidSpec):
        PreferenceMarketSpec(**{**good, "Sigma": [[0.0]]})


def test_three_halves_rate_is_b(spec):
    for b in (0.3, 1.0, 2.5):
        c = derive_constants(spec, StateModelSpec("3/2", b, 1.0, 0.5))
        assert c.lam_hat == b


def test_zero_premium_gives_deterministic_u():
    # with mu = 0 the potential is constant: u = exp(p r t / delta), so lambda = -p r / delta
    spec = PreferenceMarketSpec(p=-2.0, r=0.03, mu=[0.0, 0.0], Sigma=np.eye(2) * 0.2, rho=[0.3, 0.1])
    for kind in ("3/2", "invB"):
        c = derive_constants(spec, StateModelSpec(kind, 1.0, 1.0, 0.4))
        assert c.eta == 0.0 and c.xi == 0.0
        assert c.lam == pytest.approx(-spec.p * spec.r / c.delta, abs=1e-15)


def test_assumption_flag(spec):
    # theta = a + q sigma rho'mu = -0.1925 < -sigma^2/2
    c = derive_constants(spec, StateModelSpec("3/2", 1.0, -0.1, 0.5))
    assert not c.assumption_ok
    assert "theta" in c.assumption_note
    with pytest.raises(AssumptionViolated):
        eigenpair(StateModelSpec("3/2", 1.0, -0.1, 0.5), c)


def test_eta_solves_quadratic(spec, consts, model):
    if model.kind == FILTERED_OU:
        S, k, g = consts.theta_norm2, consts.kappa, consts.q / consts.delta * consts.mu2
        roots = np.roots([S, k, -g / 4.0])
    else:
        s, th = model.sigma, consts.theta
        roots = np.roots([s * s / 2.0, s * s / 2.0 + th, -consts.q * consts.mu2 / (2.0 * consts.delta)])
    assert consts.eta == pytest.approx(roots.real.max(), rel=1e-12)


def test_eigen_residual_default(model, consts):
    grid = np.linspace(-3, 3, 50) if model.kind == FILTERED_OU else np.geomspace(0.05, 20, 50)
    assert eigen_residual(model, consts, grid) < 1e-10


@settings(max_examples=40, deadline=None)
@given(b=st.floats(0.1, 3.0), a=st.floats(0.0, 3.0), s=st.floats(0.1, 1.5), kind=st.sampled_from(["3/2", "invB", "fou"]))
def test_eigen_residual_property(b, a, s, kind):
    spec = PreferenceMarketSpec(p=-1.5, r=0.01, mu=[0.4, 0.3], Sigma=[[0.2, 0.0], [0.05, 0.3]], rho=[-0.4, 0.2])
    if kind == "fou":
        a += 0.05
    m = StateModelSpec(kind, b, a, s)
    c = derive_constants(spec, m)
    if not c.assumption_ok:
        return
    grid = np.linspace(-2, 2, 30) if kind == "fou" else np.geomspace(0.1, 5, 30)
    assert eigen_residual(m, c, grid) < 1e-9


def test_generator_potential(spec, model, consts):
    g = generator(model, consts)
    z = np.array([0.3, 1.0, 2.0])
    power = 1.0 if model.kind == THREE_HALVES else 2.0
    expect = -(spec.p * spec.r - 0.5 * consts.q * consts.mu2 * z ** power) / consts.delta
    assert rel(g.potential(z), expect) < 1e-14


def test_riccati_root_examples():
    assert riccati_root(0.0, 1.0, np.zeros(1), np.array([1.0])) == pytest.approx(1.0, abs=1e-15)
    # perfectly correlated observation noise
    assert riccati_root(1.0, 0.5, np.array([1.0]), np.array([0.3])) == 0.0
    mu, rho = np.array([0.5, 0.4]), np.array([-0.5, -0.3])
    P = riccati_root(1.0, 0.5, rho, mu)
    c = 1.0 + 0.5 * rho @ mu
    assert abs(-2 * c * P + 0.25 * (1 - rho @ rho) - (mu @ mu) * P * P) < 1e-15


def test_tilted_dynamics(spec, model, consts):
    s = consts.vol
    d = dynamics(model, consts, "PTilde")
    if model.kind == FILTERED_OU:
        assert d.K == consts.lam_hat
        with pytest.raises(UnsupportedMeasurePair):
            dynamics(model, consts, "PHat")
        return
    assert d.K == pytest.approx(consts.theta + s * s * consts.eta)
    hat = dynamics(model, consts, "PHat")
    if model.kind == THREE_HALVES:
        assert (hat.B, hat.K) == pytest.approx((model.b, d.K + 0.5 * s * s))
        assert dynamics(model, consts, "PBar").K == pytest.approx(d.K + s * s)
    else:
        assert hat.extra["rate"] == pytest.approx(consts.lam_hat, rel=1e-13)
        assert hat.extra["c"] == pytest.approx(consts.zeta, rel=1e-13)
        bar = dynamics(model, consts, "PBar")
        # second tilt constant: (B - s^2 zeta) / (theta + s^2 (eta + 3))
        want = (d.B - s * s * consts.zeta) / (consts.theta + s * s * (consts.eta + 3.0))
        assert bar.extra["c"] == pytest.approx(want, rel=1e-13)


def _spectral_gap(B, alpha, s, n=1500):
    """Second eigenvalue of dY = (alpha/Y - B) dt - s dW by symmetric finite differences."""
    import scipy.linalg as sl
    L = 12.0 * alpha / B
    y = np.linspace(L / n, L, n)
    h = y[1] - y[0]
    logm = (2 * alpha / s ** 2) * np.log(y) - 2 * B * y / s ** 2
    ym = 0.5 * (y[1:] + y[:-1])
    logmh = (2 * alpha / s ** 2) * np.log(ym) - 2 * B * ym / s ** 2
    w = 0.5 * s ** 2 * np.exp(logmh - logm.max()) / h ** 2
    mm = np.exp(logm - logm.max())
    dg = np.zeros(n)
    dg[:-1] -= w
    dg[1:] -= w
    ev = sl.eigh_tridiagonal(dg / mm, w / np.sqrt(mm[1:] * mm[:-1]), eigvals_only=True, select="i",
                             select_range=(n - 3, n - 1))
    return -ev[-2]


def test_inverse_bessel_rate_is_spectral_gap(spec):
    # lambda_hat equals the spectral gap of the tilted state (1/Z is a Bessel-type diffusion)
    for b, a, s in [(1.0, 1.0, 0.5), (2.0, 2.0, 0.5), (1.0, 2.0, 1.0)]:
        m = StateModelSpec("invB", b, a, s)
        c = derive_constants(spec, m)
        d = dynamics(m, c, "PTilde")
        assert _spectral_gap(d.B, d.K + s * s, s) == pytest.approx(c.lam_hat, rel=2e-3)


def test_fou_delta_and_theta(spec, kind):
    if kind != FILTERED_OU:
        return
    m = StateModelSpec("fou", 0.5, 1.0, 0.5)
    c = derive_constants(spec, m)
    assert c.delta == pytest.approx(1.0 - spec.p)
    assert rel(c.theta, c.P0 * spec.mu + 0.5 * spec.rho) < 1e-15
    assert c.vol == pytest.approx(math.sqrt(c.theta @ c.theta))
