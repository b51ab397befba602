"""Dynamic and static optimal portfolios and their fund decomposition.

With h(z) the hedge direction of the model and f the remainder of the
eigen-factorisation,

    pi_T(t, z)  = myopic(z)/(1-p) + delta/(1-p) h(z) (phi'/phi(z) + f_z/f(T-t, z))
    pi_inf(z)   = myopic(z)/(1-p) + delta/(1-p) h(z) phi'/phi(z)

so the dynamic portfolio is the static one plus an intertemporal fund whose
weight f_z/f decays at rate lambda_hat.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError
from .feynman_kac import (McEstimate, _cfg_for, _fz_functionals, _times, d_inv_phi, exact_f, exact_f_z,
                          f_samples, f_z_samples, inv_phi, ratio_estimate)
from .model import FILTERED_OU, INVERSE_BESSEL, THREE_HALVES, DerivedConstants, PreferenceMarketSpec, StateModelSpec, eigenpair
from .sde import SimConfig, simulate

__all__ = ["Fund", "PortfolioDecomposition", "myopic_fund", "hedge_direction", "static_portfolio",
           "intertemporal_weight", "intertemporal_weights", "weight_samples", "dynamic_portfolio", "assemble", "fund_table", "SCALINGS"]

SCALINGS = ("linear", "sqrt")


def _check_scaling(model, scaling):
    if scaling not in SCALINGS:
        raise ConfigError(f"unknown myopic scaling {scaling!r}")
    if scaling == "sqrt" and model.kind != THREE_HALVES:
        raise ConfigError("the sqrt variant exists for the 3/2 model only")


def myopic_fund(spec: PreferenceMarketSpec, model: StateModelSpec, z, scaling="linear") -> np.ndarray:
    """(Sigma Sigma')^{-1} times excess return, per unit of 1/(1-p)."""
    _check_scaling(model, scaling)
    base = spec.solve_sigma_t(spec.mu)
    if model.kind == FILTERED_OU:
        return base * z
    if scaling == "sqrt":
        # asset volatility z Sigma and excess return Sigma mu z^{3/2}
        return base / math.sqrt(z)
    return base


def hedge_direction(spec: PreferenceMarketSpec, model: StateModelSpec, consts: DerivedConstants, z,
                    scaling="linear") -> np.ndarray:
    """(Sigma(z)')^{-1} times the state diffusion vector; multiplies phi'/phi and f_z/f."""
    _check_scaling(model, scaling)
    if model.kind == FILTERED_OU:
        return spec.solve_sigma_t(consts.theta)
    v = spec.solve_sigma_t(spec.rho) * model.sigma
    if scaling == "sqrt":
        return v * math.sqrt(z)
    return v * z


def _check_state(model, z):
    if model.positive_state and not z > 0:
        raise ConfigError(f"state must be positive, got {z}")


def static_portfolio(spec, model, consts, z, scaling="linear") -> np.ndarray:
    consts.require()
    _check_state(model, z)
    ep = eigenpair(model, consts)
    k = 1.0 / (1.0 - spec.p)
    return k * myopic_fund(spec, model, z, scaling) \
        + consts.delta * k * hedge_direction(spec, model, consts, z, scaling) * float(ep.dlog_phi(z))


@dataclass(frozen=True)
class Fund:
    name: str
    weight: float | None          # None for the intertemporal fund (time/state dependent)
    vector: Callable
    static: bool = True


@dataclass(frozen=True, eq=False)
class PortfolioDecomposition:
    z: float
    t: float
    T: float
    myopic: np.ndarray              # unscaled myopic fund at z
    myopic_weight: float            # 1/(1-p)
    static_funds: list              # [(name, weight, vector at z)]
    intertemporal_direction: np.ndarray
    intertemporal_weight: McEstimate
    total_static: np.ndarray
    total_dynamic: np.ndarray
    total_dynamic_se: np.ndarray
    total_via_log_u: np.ndarray     # assembled through u_z/u = phi'/phi + f_z/f
    scale: float                    # delta/(1-p)


def fund_table(spec, model, consts, scaling="linear") -> list[Fund]:
    """Named funds with their preference-dependent weights.

    The safe asset absorbs the remaining wealth and has no fixed weight.
    """
    consts.require()
    _check_scaling(model, scaling)
    k = 1.0 / (1.0 - spec.p)
    d = consts.delta * k
    mu_t = spec.solve_sigma_t(spec.mu)
    safe = Fund("safe", None, lambda z: np.zeros(spec.n))
    if model.kind == FILTERED_OU:
        th = spec.solve_sigma_t(consts.theta)
        return [
            safe,
            Fund("myopic", k, lambda z: mu_t * z),
            Fund("hedge_linear", -2.0 * d * consts.eta, lambda z: th * z),
            Fund("hedge_constant", -d * consts.xi, lambda z: th.copy()),
            Fund("intertemporal", None, lambda z: th.copy(), static=False),
        ]
    rs = spec.solve_sigma_t(spec.rho) * model.sigma
    if scaling == "sqrt":
        return [
            safe,
            Fund("myopic", k, lambda z: mu_t / math.sqrt(z)),
            Fund("hedge", -d * consts.eta, lambda z: rs / math.sqrt(z)),
            Fund("intertemporal", None, lambda z: rs * math.sqrt(z), static=False),
        ]
    funds = [safe, Fund("myopic", k, lambda z: mu_t.copy()), Fund("hedge", -d * consts.eta, lambda z: rs.copy())]
    if model.kind == INVERSE_BESSEL:
        funds.append(Fund("hedge_inverse", -d * consts.xi, lambda z: rs / z))
    funds.append(Fund("intertemporal", None, lambda z: rs * z, static=False))
    return funds


def weight_samples(model, consts, z, taus, cfg: SimConfig, representation="tilde"):
    """Per-path (f_z, f) integrands at each horizon in ``taus``.

    Returns (fz, f, independent, batch). Under "tilde" both come from one
    PTilde batch; under "hat" f is simulated separately with seed + 1.
    """
    ts = _times(taus)
    if representation == "tilde":
        batch = simulate(model, consts, "PTilde", z, _cfg_for(cfg, ts), _fz_functionals(model.kind))
        fz = f_z_samples(model, consts, z, ts, cfg, "tilde", batch=batch)
        f = f_samples(model, consts, z, ts, cfg, batch=batch)
        return fz, f, False, batch
    if representation != "hat":
        raise ConfigError(f"unknown representation {representation!r}")
    batch = simulate(model, consts, "PHat", z, _cfg_for(cfg, ts))
    fz = f_z_samples(model, consts, z, ts, cfg, "hat", batch=batch)
    f = f_samples(model, consts, z, ts, cfg.with_(seed=cfg.seed + 1))
    return fz, f, True, batch


def intertemporal_weights(model, consts, z, taus, cfg: SimConfig | None = None, representation="tilde",
                          method="mc") -> list[McEstimate]:
    """f_z/f at each horizon, by simulation or (3/2, filtered OU) by quadrature."""
    ts = [float(t) for t in _times(taus)]
    n = cfg.n_paths if cfg else 0
    seed = cfg.seed if cfg else 0
    if method == "exact":
        return [McEstimate(float(d_inv_phi(model.kind, consts, z) / inv_phi(model.kind, consts, z)), 0.0, n, seed)
                if t == 0 else
                McEstimate(exact_f_z(model, consts, z, t) / exact_f(model, consts, z, t), 0.0, n, seed)
                for t in ts]
    if method != "mc":
        raise ConfigError(f"unknown method {method!r}")
    if cfg is None:
        raise ConfigError("Monte Carlo weight needs a SimConfig")
    out = [None] * len(ts)
    live = [i for i, t in enumerate(ts) if t > 0]
    for i, t in enumerate(ts):
        if t == 0:
            out[i] = McEstimate(float(d_inv_phi(model.kind, consts, z) / inv_phi(model.kind, consts, z)), 0.0, n, seed)
    if live:
        fz, f, indep, _ = weight_samples(model, consts, z, [ts[i] for i in live], cfg, representation)
        for j, i in enumerate(live):
            out[i] = ratio_estimate(fz[:, j], f[:, j], cfg, independent=indep)
    return out


def intertemporal_weight(model, consts, z, tau, cfg: SimConfig | None = None, representation="tilde",
                         method="mc") -> McEstimate:
    return intertemporal_weights(model, consts, z, [tau], cfg, representation, method)[0]


def assemble(spec, model, consts, z, t, T, weight: McEstimate, scaling="linear") -> PortfolioDecomposition:
    """Build the decomposition from a given intertemporal weight f_z/f."""
    consts.require()
    _check_state(model, z)
    ep = eigenpair(model, consts)
    k = 1.0 / (1.0 - spec.p)
    scale = consts.delta * k
    my = myopic_fund(spec, model, z, scaling)
    h = hedge_direction(spec, model, consts, z, scaling)
    static_funds = [(f.name, f.weight, f.vector(z)) for f in fund_table(spec, model, consts, scaling)
                    if f.static and f.weight is not None and f.name != "myopic"]
    total_static = k * my + scale * h * float(ep.dlog_phi(z))
    total_dynamic = total_static + scale * h * weight.value
    log_u_z = float(ep.dlog_phi(z)) + weight.value
    via_u = k * my + scale * h * log_u_z
    return PortfolioDecomposition(
        z=float(z), t=float(t), T=float(T), myopic=my, myopic_weight=k, static_funds=static_funds,
        intertemporal_direction=h, intertemporal_weight=weight, total_static=total_static,
        total_dynamic=total_dynamic, total_dynamic_se=np.abs(scale * h) * weight.std_error,
        total_via_log_u=via_u, scale=scale)


def dynamic_portfolio(spec, model, consts, z, t, T, cfg: SimConfig | None = None, representation="tilde",
                      method="mc", scaling="linear") -> PortfolioDecomposition:
    if not (0 <= t <= T):
        raise ConfigError(f"need 0 <= t <= T, got t={t}, T={T}")
    consts.require()
    _check_state(model, z)
    w = intertemporal_weight(model, consts, z, T - t, cfg, representation, method)
    return assemble(spec, model, consts, z, t, T, w, scaling)
