"""Sensitivities of the dynamic and static portfolios to z, b, a and sigma.

Static sensitivities are differentiated in closed form through explicit
derivative tables (``constant_derivatives``). Dynamic ones are central
finite differences of the Monte Carlo portfolio with common random
numbers. Drift sensitivities of f are also available by the likelihood
ratio method, which needs no re-simulation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .convergence import fit_log_slope
from .errors import AssumptionViolated, ConfigError, DegenerateFit
from .feynman_kac import McEstimate, _est, d_inv_phi, inv_phi
from .model import (FILTERED_OU, INVERSE_BESSEL, THREE_HALVES, PreferenceMarketSpec,
                    StateModelSpec, derive_constants)
from .portfolio import _check_scaling, hedge_direction, static_portfolio, weight_samples
from .sde import SimConfig, flow_derivative, simulate

__all__ = ["PARAMETERS", "constant_derivatives", "static_sensitivity", "static_sensitivity_fd",
           "perturbed", "fd_step", "FdSensitivity", "dynamic_sensitivity_fd", "dynamic_sensitivity_series",
           "drift_sensitivity_lr", "f_sensitivity_fd", "EnvelopeFit", "envelope_fit",
           "SensitivityReport", "sensitivity_report"]

PARAMETERS = ("z", "b", "a", "sigma")
MODEL_PARAMETERS = ("b", "a", "sigma")


def _check_param(parameter, allowed=PARAMETERS):
    if parameter not in allowed:
        raise ConfigError(f"unknown parameter {parameter!r}; choose from {allowed}")


# --- derivative tables ------------------------------------------------------------


def constant_derivatives(spec: PreferenceMarketSpec, model: StateModelSpec, parameter: str) -> dict:
    """Derivatives of the derived constants with respect to b, a or sigma.

    Keys: theta, eta, xi, B, K (tilted drift coefficients) and vol for all
    models; the filtered model adds P0, S (= |theta|^2), kappa, lam_hat.
    """
    _check_param(parameter, MODEL_PARAMETERS)
    c = derive_constants(spec, model)
    b, s = model.b, model.sigma
    db = 1.0 if parameter == "b" else 0.0
    da = 1.0 if parameter == "a" else 0.0
    ds = 1.0 if parameter == "sigma" else 0.0
    q, mu, rho = spec.q, spec.mu, spec.rho
    if model.kind in (THREE_HALVES, INVERSE_BESSEL):
        th, eta = c.theta, c.eta
        th_d = da + ds * q * float(rho @ mu)
        A = 0.5 + th / s ** 2
        D = q * c.mu2 / (c.delta * s ** 2)
        R = math.sqrt(A * A + D)
        A_d = th_d / s ** 2 - 2.0 * th * ds / s ** 3
        D_d = -2.0 * D * ds / s
        # eta = R - A, so eta_A = A/R - 1 = -eta/R and eta_D = 1/(2R)
        eta_d = -eta / R * A_d + D_d / (2.0 * R)
        K_d = th_d + 2.0 * s * ds * eta + s * s * eta_d
        out = dict(theta=th_d, eta=eta_d, vol=ds, K=K_d)
        if model.kind == THREE_HALVES:
            out.update(xi=0.0, B=db)
            return out
        den = s * s * (eta + 1.0) + th
        den_d = 2.0 * s * ds * (eta + 1.0) + s * s * eta_d + th_d
        xi_d = (db * eta + b * eta_d) / den - b * eta * den_d / den ** 2
        out.update(xi=xi_d, B=db - 2.0 * s * ds * c.xi - s * s * xi_d)
        return out
    # filtered OU: everything flows through the steady filter variance
    P, m2 = c.P0, c.mu2
    cc = model.a + s * float(rho @ mu)
    cc_d = da + ds * float(rho @ mu)
    s2_d = 2.0 * s * ds * (1.0 - float(rho @ rho))
    P_d = (-2.0 * cc_d * P + s2_d) / (2.0 * cc + 2.0 * m2 * P)
    th = c.theta
    th_d = P_d * mu + ds * rho
    S = c.theta_norm2
    S_d = 2.0 * float(th @ th_d)
    kap_d = da + q * float(th_d @ mu)
    g = (q / c.delta) * m2
    R = math.sqrt(c.kappa ** 2 + g * S)
    R_d = (2.0 * c.kappa * kap_d + g * S_d) / (2.0 * R)
    eta_d = (R_d - kap_d) / (2.0 * S) - c.eta * S_d / S
    lh_d = kap_d + 2.0 * S_d * c.eta + 2.0 * S * eta_d
    xi_d = 2.0 * (db * c.eta + b * eta_d) / c.lam_hat - c.xi * lh_d / c.lam_hat
    return dict(P0=P_d, theta=th_d, S=S_d, kappa=kap_d, eta=eta_d, lam_hat=lh_d, xi=xi_d,
                vol=S_d / (2.0 * math.sqrt(S)), B=db - S_d * c.xi - S * xi_d, K=lh_d)


# --- static sensitivities --------------------------------------------------------


def _static_linear_derivative(spec, model, consts, z, parameter):
    k = 1.0 / (1.0 - spec.p)
    dk = consts.delta * k
    mu_t = spec.solve_sigma_t(spec.mu)
    n = spec.n
    if model.kind == FILTERED_OU:
        th_t = spec.solve_sigma_t(consts.theta)
        if parameter == "z":
            return k * mu_t - 2.0 * dk * consts.eta * th_t
        d = constant_derivatives(spec, model, parameter)
        lin = 2.0 * consts.eta * z + consts.xi
        return -dk * ((2.0 * d["eta"] * z + d["xi"]) * th_t + lin * spec.solve_sigma_t(d["theta"]))
    rho_t = spec.solve_sigma_t(spec.rho)
    s = model.sigma
    if model.kind == THREE_HALVES:
        # pi_inf = k mu_t - dk eta sigma rho_t, free of z and b
        if parameter in ("z", "b"):
            return np.zeros(n)
        d = constant_derivatives(spec, model, parameter)
        ds = 1.0 if parameter == "sigma" else 0.0
        return -dk * rho_t * (ds * consts.eta + s * d["eta"])
    # inverse Bessel: pi_inf = k mu_t - dk sigma rho_t (eta + xi/z)
    if parameter == "z":
        return dk * s * rho_t * consts.xi / z ** 2
    d = constant_derivatives(spec, model, parameter)
    ds = 1.0 if parameter == "sigma" else 0.0
    return -dk * rho_t * (ds * (consts.eta + consts.xi / z) + s * (d["eta"] + d["xi"] / z))


def static_sensitivity(spec, model, consts, z, parameter, scaling="linear") -> np.ndarray:
    """d pi_inf / d parameter in closed form."""
    _check_param(parameter)
    consts.require()
    _check_scaling(model, scaling)
    _require_neighbourhood(spec, model, z, parameter)
    if scaling == "sqrt":
        # every static fund carries z^{-1/2}
        base = static_portfolio(spec, model, consts, 1.0, "linear")
        if parameter == "z":
            return -0.5 * z ** -1.5 * base
        return z ** -0.5 * _static_linear_derivative(spec, model, consts, 1.0, parameter)
    return _static_linear_derivative(spec, model, consts, z, parameter)


def fd_step(model, z, parameter, rel=1e-3) -> float:
    if parameter == "z":
        return rel * max(1.0, abs(z))
    return rel * abs(getattr(model, parameter))


def perturbed(spec, model, z, parameter, eps):
    """(model, z) with the parameter moved by eps."""
    if parameter == "z":
        return model, z + eps
    return replace(model, **{parameter: getattr(model, parameter) + eps}), z


def _require_neighbourhood(spec, model, z, parameter, rel=1e-3):
    h = fd_step(model, z, parameter, rel)
    for sgn in (-1.0, 1.0):
        m, _ = perturbed(spec, model, z, parameter, sgn * h)
        c = derive_constants(spec, m)
        if not c.assumption_ok:
            raise AssumptionViolated(f"assumption fails at {parameter} {'+' if sgn > 0 else '-'} {h:.3g}: "
                                     f"{c.assumption_note}")


def static_sensitivity_fd(spec, model, z, parameter, scaling="linear", rel=1e-6) -> np.ndarray:
    _check_param(parameter)
    h = fd_step(model, z, parameter, rel)
    vals = []
    for sgn in (1.0, -1.0):
        m, zz = perturbed(spec, model, z, parameter, sgn * h)
        c = derive_constants(spec, m).require()
        vals.append(static_portfolio(spec, m, c, zz, scaling))
    return (vals[0] - vals[1]) / (2.0 * h)


# --- dynamic sensitivities by finite differences -----------------------------------


@dataclass(frozen=True, eq=False)
class FdSensitivity:
    taus: tuple                 # horizons T - t
    value: np.ndarray           # (len(taus), n_assets)
    std_error: np.ndarray
    step: float
    crn: bool
    checksums_equal: bool


def _pair_se(x, antithetic):
    """Standard error of the mean along axis 0, using antithetic pair means when paired."""
    n = x.shape[0]
    if antithetic and n > 2:
        m = n - n % 2
        x = 0.5 * (x[0:m:2] + x[1:m:2])
    return x.std(axis=0, ddof=1) / math.sqrt(x.shape[0])


def dynamic_sensitivity_series(spec, model, consts, z, taus, parameter, cfg: SimConfig, step=None,
                               crn=True, representation="tilde", scaling="linear") -> FdSensitivity:
    """Central difference of pi_T(t, z) over several horizons tau = T - t from one pair of runs."""
    _check_param(parameter)
    consts.require()
    _require_neighbourhood(spec, model, z, parameter)
    taus = np.atleast_1d(np.asarray(taus, float))
    if np.any(taus < 0):
        raise ConfigError("horizons must be nonnegative")
    h = fd_step(model, z, parameter) if step is None else float(step)
    live = taus > 0
    sides = []
    for sgn, seed in ((1.0, cfg.seed), (-1.0, cfg.seed if crn else cfg.seed + 1_000_003)):
        m, zz = perturbed(spec, model, z, parameter, sgn * h)
        c = derive_constants(spec, m).require()
        scale = c.delta / (1.0 - spec.p)
        hv = scale * hedge_direction(spec, m, c, zz, scaling)
        stat = static_portfolio(spec, m, c, zz, scaling)
        w = np.zeros(taus.size)
        infl = np.zeros((cfg.n_paths, taus.size))
        checksum = None
        if live.any():
            fz, f, _, batch = weight_samples(m, c, zz, taus[live], cfg.with_(seed=seed), representation)
            mf = f.mean(axis=0)
            wl = fz.mean(axis=0) / mf
            w[live] = wl
            infl[:, live] = (fz - wl * f) / mf
            checksum = batch.noise_checksum
        w0 = float(d_inv_phi(m.kind, c, zz) / inv_phi(m.kind, c, zz))
        w[~live] = w0
        pis = stat[None, :] + w[:, None] * hv[None, :]
        sides.append((pis, infl[:, :, None] * hv[None, None, :], checksum))
    value = (sides[0][0] - sides[1][0]) / (2.0 * h)
    infl = (sides[0][1] - sides[1][1]) / (2.0 * h)
    se = _pair_se(infl, cfg.antithetic)
    return FdSensitivity(tuple(map(float, taus)), value, se, h, crn, sides[0][2] == sides[1][2])


def dynamic_sensitivity_fd(spec, model, consts, z, t, T, parameter, cfg: SimConfig, step=None, crn=True,
                           representation="tilde", scaling="linear") -> FdSensitivity:
    if not 0 <= t <= T:
        raise ConfigError(f"need 0 <= t <= T, got t={t}, T={T}")
    return dynamic_sensitivity_series(spec, model, consts, z, [T - t], parameter, cfg, step, crn,
                                      representation, scaling)


# --- likelihood-ratio drift sensitivity of f ------------------------------------------


_LR_FUNCTIONALS = {
    THREE_HALVES: ["int_inv_sqrt_z_dB", "int_sqrt_z_dB"],
    INVERSE_BESSEL: ["B", "int_z_dB"],
    FILTERED_OU: ["B", "int_z_dB"],
}


def _explicit_term(kind, consts, d, zt, s=None, s_d=0.0):
    """d/d(param) of 1/phi at fixed state (or fixed scaled state for the filtered model)."""
    g = inv_phi(kind, consts, zt)
    if kind == THREE_HALVES:
        return d["eta"] * np.log(zt) * g
    if kind == INVERSE_BESSEL:
        return (d["eta"] * np.log(zt) - d["xi"] / zt) * g
    x = zt / s
    eta_s2_d = d["eta"] * s * s + 2.0 * consts.eta * s * s_d
    xi_s_d = d["xi"] * s + consts.xi * s_d
    return (eta_s2_d * x * x + xi_s_d * x) * g


def drift_sensitivity_lr(spec, model, consts, z, t, parameter, cfg: SimConfig) -> McEstimate:
    """df(t, z)/d parameter for parameter in {b, a} by the likelihood ratio method.

    f = E^{PTilde}[1/phi(Z_t)] and both the tilted drift and phi move with
    the parameter. The estimator is g(Z_t) times the score integral of the
    drift perturbation plus the explicit derivative of g. For the filtered
    model the state scale |theta| also moves with a, so we work with Z/|theta|
    (unit diffusion) and add the start-point term -(z s'/s) f_z.
    """
    _check_param(parameter, ("b", "a"))
    consts.require()
    d = constant_derivatives(spec, model, parameter)
    kind = model.kind
    s = consts.vol
    s_d = d["vol"]
    if t == 0:
        zt = np.array([float(z)])
        v = _explicit_term(kind, consts, d, zt, s, s_d)
        if kind == FILTERED_OU:
            v = v - z * s_d / s * d_inv_phi(kind, consts, zt)
        return McEstimate(float(v[0]), 0.0, cfg.n_paths, cfg.seed)
    funcs = list(_LR_FUNCTIONALS[kind])
    cfg_t = cfg.with_(horizon=float(max(t, cfg.dt)), record_times=(float(t),))
    batch = simulate(model, consts, "PTilde", z, cfg_t, funcs)
    zt = batch.at(t)
    g = inv_phi(kind, consts, zt)
    tb = batch.dyn
    if kind == THREE_HALVES:
        # drift (B - K Z) Z over diffusion s Z^{3/2}
        score = (d["B"] * batch.integral("int_inv_sqrt_z_dB", t) - d["K"] * batch.integral("int_sqrt_z_dB", t)) / s
    elif kind == INVERSE_BESSEL:
        score = (d["B"] * batch.integral("B", t) - d["K"] * batch.integral("int_z_dB", t)) / s
    else:
        # X = Z/s has drift B/s - K X and unit diffusion
        bs_d = d["B"] / s - tb.B * s_d / s ** 2
        score = bs_d * batch.integral("B", t) - d["K"] / s * batch.integral("int_z_dB", t)
    samples = g * score + _explicit_term(kind, consts, d, zt, s, s_d)
    if kind == FILTERED_OU and s_d != 0.0:
        fz = d_inv_phi(kind, consts, zt) * flow_derivative(model, "PTilde", batch, t)
        samples = samples - z * s_d / s * fz
    return _est(samples, cfg)


def f_sensitivity_fd(spec, model, z, t, parameter, cfg: SimConfig, rel=1e-3) -> McEstimate:
    """Central difference of the f estimate in a model parameter with common random numbers."""
    _check_param(parameter, MODEL_PARAMETERS)
    h = fd_step(model, z, parameter, rel)
    cfg_t = cfg.with_(horizon=float(max(t, cfg.dt)), record_times=(float(t),))
    vals = []
    for sgn in (1.0, -1.0):
        m, _ = perturbed(spec, model, z, parameter, sgn * h)
        c = derive_constants(spec, m).require()
        batch = simulate(m, c, "PTilde", z, cfg_t)
        vals.append(inv_phi(m.kind, c, batch.at(t)))
    return _est((vals[0] - vals[1]) / (2.0 * h), cfg)


# --- envelope fits -----------------------------------------------------------------------


@dataclass(frozen=True)
class EnvelopeFit:
    C: float
    degree: float
    residual: float
    residuals: dict


_PREFACTORS = {
    0.0: lambda T: np.ones_like(T),
    0.5: lambda T: 1.0 + np.sqrt(T),
    1.0: lambda T: 1.0 + T,
}


def envelope_fit(gap_series, rate: float) -> EnvelopeFit:
    """Fit gap(T) ~ C P(T) e^{-rate T} with P in {1, 1 + sqrt T, 1 + T}.

    For each prefactor log C is the mean of log(gap) + rate T - log P(T);
    the prefactor with the smallest RMS log residual wins.
    """
    pts = sorted((float(T), float(g)) for T, g in gap_series)
    if len(pts) < 5:
        raise DegenerateFit(f"need at least 5 points, got {len(pts)}")
    T = np.array([p[0] for p in pts])
    g = np.array([p[1] for p in pts])
    if not np.all(np.isfinite(g)) or np.any(g <= 0):
        raise DegenerateFit("gaps must be positive and finite")
    best = None
    res = {}
    for deg, pref in _PREFACTORS.items():
        y = np.log(g) + rate * T - np.log(pref(T))
        logc = float(y.mean())
        r = float(np.sqrt(np.mean((y - logc) ** 2)))
        res[deg] = r
        if best is None or r < best[2] - 1e-12:
            best = (math.exp(logc), deg, r)
    return EnvelopeFit(best[0], best[1], best[2], res)


# --- report ------------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SensitivityReport:
    parameter: str
    t: float
    T_grid: tuple
    dynamic_sens: np.ndarray          # (len(T_grid), n_assets)
    dynamic_se: np.ndarray
    static_sens: np.ndarray
    gap_norm: tuple
    gap_se: tuple
    fitted_rate: float
    r_squared: float
    envelope: EnvelopeFit | None
    checksums_equal: bool


def sensitivity_report(spec, model, consts, z, parameter, T_grid, cfg: SimConfig, t=0.0, rate=None,
                       representation="tilde", scaling="linear", crn=True) -> SensitivityReport:
    """Dynamic sensitivities over horizons T, the static limit and the decay of their gap."""
    T_grid = np.asarray(T_grid, float)
    if T_grid.size < 2:
        raise DegenerateFit("need at least two horizons")
    fd = dynamic_sensitivity_series(spec, model, consts, z, T_grid - t, parameter, cfg, crn=crn,
                                    representation=representation, scaling=scaling)
    stat = static_sensitivity(spec, model, consts, z, parameter, scaling)
    diff = fd.value - stat[None, :]
    gap = np.linalg.norm(diff, axis=1)
    # first-order SE of the norm along the difference direction
    unit = np.where(gap[:, None] > 0, diff / np.where(gap[:, None] > 0, gap[:, None], 1.0), 0.0)
    gap_se = np.sqrt(np.sum((unit * fd.std_error) ** 2, axis=1))
    slope, _, r2 = fit_log_slope(T_grid, gap, min_points=2)
    env = None
    if T_grid.size >= 5:
        env = envelope_fit(list(zip(T_grid - t, gap)), consts.lam_hat if rate is None else rate)
    return SensitivityReport(parameter, float(t), tuple(map(float, T_grid)), fd.value, fd.std_error, stat,
                             tuple(map(float, gap)), tuple(map(float, gap_se)), -slope, r2, env,
                             fd.checksums_equal)
