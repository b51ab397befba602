"""Monte Carlo estimators of u(t,z), the remainder f(t,z) and its derivative f_z.

u(t,z) = E^P[exp(-int_0^t V(Z_s) ds)] factorises as e^{-lambda t} phi(z) f(t,z)
with f(t,z) = E^{PTilde}[1/phi(Z_t)].  f_z is computed either under PTilde
with the pathwise flow derivative ("tilde") or after one more change of
measure that removes the multiplicative weight ("hat").
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .ergodic import quad
from .errors import ConfigError, DomainError, ParameterOutOfRange, UnsupportedMeasurePair
from .model import (FILTERED_OU, INVERSE_BESSEL, THREE_HALVES, DerivedConstants, Dynamics,
                    StateModelSpec, dynamics, eigenpair)
from .sde import SimConfig, flow_derivative, simulate

__all__ = [
    "McEstimate", "estimate", "estimate_u", "estimate_f", "estimate_f_z", "f_samples", "f_z_samples",
    "u_samples", "inv_phi", "d_inv_phi", "gaussian_moments", "gaussian_f_oracle", "gaussian_f_z_oracle",
    "gaussian_f_zz_oracle", "exact_f", "exact_f_z", "estimate_moment_32", "moment_32_hyp1f1",
    "ratio_estimate", "hs_identity", "f_martingale_check",
]


@dataclass(frozen=True)
class McEstimate:
    value: float
    std_error: float
    n_paths: int
    seed: int

    def z_score(self, other: "McEstimate | float") -> float:
        if isinstance(other, McEstimate):
            se = math.hypot(self.std_error, other.std_error)
            diff = self.value - other.value
        else:
            se, diff = self.std_error, self.value - float(other)
        if se == 0:
            return 0.0 if diff == 0 else math.inf
        return abs(diff) / se


def estimate(samples: np.ndarray, seed: int, paired: bool = False) -> McEstimate:
    """Sample mean and standard error; ``paired`` treats rows (2j, 2j+1) as antithetic pairs."""
    x = np.asarray(samples, float)
    n = x.shape[0]
    if not np.all(np.isfinite(x)):
        raise DomainError("non-finite Monte Carlo samples")
    if paired and n > 2:
        # pair means are iid; the naive per-path SE would ignore their correlation
        pm = 0.5 * (x[0:n - n % 2:2] + x[1:n - n % 2:2])
        if n % 2:
            pm = np.append(pm, x[-1])
        se = float(pm.std(ddof=1) / math.sqrt(pm.shape[0])) if pm.shape[0] > 1 else 0.0
    else:
        se = float(x.std(ddof=1) / math.sqrt(n))
    return McEstimate(float(x.mean()), se, int(n), int(seed))


def _est(samples, cfg: SimConfig) -> McEstimate:
    return estimate(samples, cfg.seed, paired=cfg.antithetic)


def inv_phi(kind: str, consts: DerivedConstants, z):
    """1/phi(z)."""
    z = np.asarray(z, float)
    eta, xi = consts.eta, consts.xi
    if kind == THREE_HALVES:
        return z ** eta
    if kind == INVERSE_BESSEL:
        return z ** eta * np.exp(-xi / z)
    return np.exp(eta * z * z + xi * z)


def d_inv_phi(kind: str, consts: DerivedConstants, z):
    """d/dz of 1/phi(z)."""
    z = np.asarray(z, float)
    eta, xi = consts.eta, consts.xi
    if kind == THREE_HALVES:
        return eta * z ** (eta - 1.0)
    if kind == INVERSE_BESSEL:
        return (eta * z ** (eta - 1.0) + xi * z ** (eta - 2.0)) * np.exp(-xi / z)
    return (2.0 * eta * z + xi) * np.exp(eta * z * z + xi * z)


def _times(t):
    ts = np.atleast_1d(np.asarray(t, float))
    if np.any(ts < 0):
        raise ConfigError("times must be nonnegative")
    return ts


def _cfg_for(cfg: SimConfig, ts) -> SimConfig:
    horizon = float(max(ts.max(), cfg.dt))
    return cfg.with_(horizon=horizon, record_times=tuple(float(t) for t in ts))


def u_samples(model, consts, z, t, cfg):
    """Per-path exp(-int V) under P; shape (n_paths, len(t))."""
    ts = _times(t)
    name = "int_z" if model.kind == THREE_HALVES else "int_z2"
    c0 = consts.p * consts.r / consts.delta
    c1 = 0.5 * consts.q * consts.mu2 / consts.delta
    batch = simulate(model, consts, "P", z, _cfg_for(cfg, ts), [name])
    cols = [batch.column(t) for t in ts]
    integ = batch.integrals[name][:, cols]
    return np.exp(c0 * ts[None, :] - c1 * integ)


def f_samples(model, consts, z, t, cfg, batch=None):
    ts = _times(t)
    consts.require()
    if batch is None:
        batch = simulate(model, consts, "PTilde", z, _cfg_for(cfg, ts))
    cols = [batch.column(t) for t in ts]
    return inv_phi(model.kind, consts, batch.states[:, cols])


def _fz_functionals(kind):
    return {THREE_HALVES: ["int_z"], INVERSE_BESSEL: ["int_z2"], FILTERED_OU: []}[kind]


def f_z_samples(model, consts, z, t, cfg, representation="tilde", batch=None):
    """Per-path f_z integrands; shape (n_paths, len(t))."""
    ts = _times(t)
    consts.require()
    z = float(z)
    if representation == "tilde":
        if batch is None:
            batch = simulate(model, consts, "PTilde", z, _cfg_for(cfg, ts), _fz_functionals(model.kind))
        cols = []
        for t in ts:
            fd = flow_derivative(model, "PTilde", batch, t)
            cols.append(d_inv_phi(model.kind, consts, batch.at(t)) * fd)
        return np.stack(cols, axis=1)
    if representation != "hat":
        raise ConfigError(f"unknown representation {representation!r}")
    if model.kind == FILTERED_OU:
        raise UnsupportedMeasurePair("the filtered OU model has a deterministic flow; use the tilde form")
    if batch is None:
        batch = simulate(model, consts, "PHat", z, _cfg_for(cfg, ts))
    cols = [batch.column(t) for t in ts]
    zt = batch.states[:, cols]
    eta, xi = consts.eta, consts.xi
    if model.kind == THREE_HALVES:
        return eta * np.exp(-model.b * ts)[None, :] * z ** -2.0 * zt ** (eta + 1.0)
    zeta = consts.zeta
    pref = np.exp(-consts.lam_hat * ts)[None, :] * z ** -3.0 * math.exp(zeta / z)
    return pref * (eta * zt ** (eta + 2.0) + xi * zt ** (eta + 1.0)) * np.exp(-(xi + zeta) / zt)


def _scalar(ts, samples, cfg):
    ests = [_est(samples[:, j], cfg) for j in range(samples.shape[1])]
    return ests[0] if len(ests) == 1 else ests


def estimate_u(model, consts, z, t, cfg: SimConfig):
    ts = _times(t)
    if np.all(ts == 0):
        one = McEstimate(1.0, 0.0, cfg.n_paths, cfg.seed)
        return one if ts.size == 1 else [one] * ts.size
    return _scalar(ts, u_samples(model, consts, z, ts, cfg), cfg)


def estimate_f(model, consts, z, t, cfg: SimConfig):
    ts = _times(t)
    if np.all(ts == 0):
        v = McEstimate(float(inv_phi(model.kind, consts.require(), z)), 0.0, cfg.n_paths, cfg.seed)
        return v if ts.size == 1 else [v] * ts.size
    return _scalar(ts, f_samples(model, consts, z, ts, cfg), cfg)


def estimate_f_z(model, consts, z, t, cfg: SimConfig, representation="tilde"):
    ts = _times(t)
    if np.all(ts == 0):
        v = McEstimate(float(d_inv_phi(model.kind, consts.require(), z)), 0.0, cfg.n_paths, cfg.seed)
        return v if ts.size == 1 else [v] * ts.size
    return _scalar(ts, f_z_samples(model, consts, z, ts, cfg, representation), cfg)


def ratio_estimate(num: np.ndarray, den: np.ndarray, cfg: SimConfig, independent=False) -> McEstimate:
    """mean(num)/mean(den) with a delta-method standard error.

    Same-path samples use the linearised influence values; independent
    samples combine the two relative errors in quadrature.
    """
    num = np.asarray(num, float)
    den = np.asarray(den, float)
    mn, md = num.mean(), den.mean()
    r = mn / md
    if independent:
        en, ed = _est(num, cfg), _est(den, cfg)
        se = abs(r) * math.hypot(en.std_error / mn if mn else 0.0, ed.std_error / md)
        return McEstimate(float(r), float(se), int(num.shape[0]), cfg.seed)
    infl = (num - r * den) / md
    e = _est(infl, cfg)
    return McEstimate(float(r), e.std_error, e.n_paths, cfg.seed)


# --- closed forms for the filtered OU model ----------------------------------


def gaussian_moments(consts: DerivedConstants, z, t):
    """Mean and variance of Z_t under PTilde for the filtered OU model."""
    if consts.kind != FILTERED_OU:
        raise ConfigError("Gaussian forms apply to the filtered OU model only")
    k = consts.lam_hat
    m_inf = (consts.b - consts.theta_norm2 * consts.xi) / k
    e = np.exp(-k * np.asarray(t, float))
    mean = e * np.asarray(z, float) + (1.0 - e) * m_inf
    var = consts.theta_norm2 * (1.0 - e * e) / (2.0 * k)
    return mean, var


def _quad_exp_terms(consts, z, t):
    m, v = gaussian_moments(consts, z, t)
    eta, xi = consts.eta, consts.xi
    den = 1.0 - 2.0 * eta * v
    if np.any(den <= 0):
        raise DomainError("1 - 2 eta Var_t must be positive")
    log_g = -0.5 * np.log(den) + eta * m * m + xi * m + v * (2.0 * eta * m + xi) ** 2 / (2.0 * den)
    return m, v, den, log_g


def gaussian_f_oracle(consts: DerivedConstants, z, t):
    """E[exp(eta X^2 + xi X)] for X ~ N(m_t, s_t^2)."""
    _, _, _, log_g = _quad_exp_terms(consts, z, t)
    return np.exp(log_g)


def gaussian_f_z_oracle(consts: DerivedConstants, z, t):
    """Closed-form f_z: dm_t/dz * dG/dm with dG/dm = G (2 eta m + xi)/(1 - 2 eta s^2)."""
    m, v, den, log_g = _quad_exp_terms(consts, z, t)
    e = np.exp(-consts.lam_hat * np.asarray(t, float))
    return e * np.exp(log_g) * (2.0 * consts.eta * m + consts.xi) / den


def gaussian_f_zz_oracle(consts: DerivedConstants, z, t):
    m, v, den, log_g = _quad_exp_terms(consts, z, t)
    e = np.exp(-consts.lam_hat * np.asarray(t, float))
    w = (2.0 * consts.eta * m + consts.xi) / den
    return e * e * np.exp(log_g) * (w * w + 2.0 * consts.eta / den)


# --- exact values through the 3/2 moment formula -----------------------------


def _moment_family(b, a, sigma, y0, nu, t):
    kappa = 2.0 * a / sigma ** 2 + 1.0
    if not (0.0 < nu < kappa + 1.0):
        raise ParameterOutOfRange(f"need 0 < nu < kappa + 1 = {kappa + 1.0:.6g}, got nu = {nu}")
    if y0 <= 0:
        raise ParameterOutOfRange("initial value must be positive")
    if t == 0:
        return None, kappa
    em = math.exp(-b * t)
    alpha = 2.0 * b / (sigma ** 2 * (-math.expm1(-b * t)))
    beta = alpha * em / y0
    return (alpha, beta), kappa


def estimate_moment_32(model: StateModelSpec, y0: float, nu: float, t: float) -> float:
    """E[Y_t^nu] for dY = (b - aY)Y dt + sigma Y^{3/2} dB by quadrature.

    The (1-x)^{nu-1} endpoint is removed with x = 1 - u^{1/nu}; the x^{kappa-nu}
    endpoint (integrable) is passed to QUADPACK's algebraic weight.
    """
    b, a, s = model.b, model.a, model.sigma
    ab, kappa = _moment_family(b, a, s, y0, nu, t)
    if ab is None:
        return y0 ** nu
    alpha, beta = ab
    p = kappa - nu

    # e^{-beta} int e^{beta x} x^p (1-x)^{nu-1} dx = (1/nu) int_0^1 e^{-beta u^{1/nu}} (1-u^{1/nu})^p du
    def smooth(u):
        w = u ** (1.0 / nu)
        if u >= 1.0:
            ratio = 1.0 / nu
        else:
            ratio = (1.0 - w) / (1.0 - u)
        return math.exp(-beta * w) * ratio ** p

    integral = quad(smooth, 0.0, 1.0, weight="alg", wvar=(0.0, p))[0] / nu
    return math.exp(nu * math.log(alpha) - special.gammaln(nu)) * integral


def moment_32_hyp1f1(model: StateModelSpec, y0: float, nu: float, t: float) -> float:
    """Same moment through the noncentral chi-square / Kummer function route."""
    b, a, s = model.b, model.a, model.sigma
    ab, kappa = _moment_family(b, a, s, y0, nu, t)
    if ab is None:
        return y0 ** nu
    alpha, beta = ab
    d2 = kappa + 1.0
    return float(alpha ** nu * math.exp(-beta + special.gammaln(d2 - nu) - special.gammaln(d2))
                 * special.hyp1f1(d2 - nu, d2, beta))


def _family_model(dyn: Dynamics) -> StateModelSpec:
    return StateModelSpec(THREE_HALVES, dyn.B, dyn.K, dyn.vol)


def exact_f(model, consts, z, t) -> float:
    """f(t,z) without simulation (3/2 through the moment formula, OU in closed form)."""
    if model.kind == FILTERED_OU:
        return float(gaussian_f_oracle(consts, z, t))
    if model.kind != THREE_HALVES:
        raise ConfigError("no closed form for this model")
    return estimate_moment_32(_family_model(dynamics(model, consts, "PTilde")), z, consts.eta, t)


def exact_f_z(model, consts, z, t) -> float:
    if model.kind == FILTERED_OU:
        return float(gaussian_f_z_oracle(consts, z, t))
    if model.kind != THREE_HALVES:
        raise ConfigError("no closed form for this model")
    hat = _family_model(dynamics(model, consts, "PHat"))
    return consts.eta * math.exp(-model.b * t) * z ** -2.0 * estimate_moment_32(hat, z, consts.eta + 1.0, t)


# --- identity checks ----------------------------------------------------------


def hs_identity(model, consts, z, t, cfg: SimConfig, seed_u=None, seed_f=None):
    """(u estimate, e^{-lambda t} phi(z) f estimate) from independent seeds."""
    ep = eigenpair(model, consts)
    cu = cfg.with_(seed=cfg.seed if seed_u is None else seed_u)
    cf = cfg.with_(seed=cfg.seed + 1 if seed_f is None else seed_f)
    u = estimate_u(model, consts, z, t, cu)
    f = estimate_f(model, consts, z, t, cf)
    scale = math.exp(-ep.lam * t) * float(ep.phi(z))
    return u, McEstimate(scale * f.value, scale * f.std_error, f.n_paths, f.seed)


def f_martingale_check(model, consts, z, T, t, cfg: SimConfig, inner_paths=10_000):
    """Mean of f(T-t, Z_t)/f(T, z) over PTilde paths; should be 1.

    The inner value is the closed form for the filtered OU model and a
    nested simulation (``inner_paths`` per outer path) otherwise.
    """
    outer = simulate(model, consts, "PTilde", z, cfg.with_(horizon=t, record_times=(t,)))
    zt = outer.at(t)
    if model.kind == FILTERED_OU:
        inner = gaussian_f_oracle(consts, zt, T - t)
        ref = float(gaussian_f_oracle(consts, z, T))
    else:
        ic = cfg.with_(n_paths=inner_paths)
        inner = np.array([estimate_f(model, consts, float(x), T - t, ic.with_(seed=cfg.seed + 7 + i)).value
                          for i, x in enumerate(zt)])
        ref = estimate_f(model, consts, z, T, ic.with_(n_paths=max(inner_paths, cfg.n_paths), seed=cfg.seed + 3)).value
    return _est(inner / ref, cfg)
