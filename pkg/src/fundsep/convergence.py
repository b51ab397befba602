"""Empirical decay rate of the intertemporal weight f_z/f.

The weight should behave like C(z) e^{-lambda_hat t}; we regress
log|f_z/f| on t and compare the slope with -lambda_hat, and check that the
rescaled weight e^{lambda_hat t}|f_z/f| stays bounded above and below.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ergodic import invariant_density
from .errors import DegenerateFit, EmptyGrid
from .feynman_kac import d_inv_phi, inv_phi
from .model import FILTERED_OU, DerivedConstants, StateModelSpec
from .portfolio import assemble, intertemporal_weights
from .sde import SimConfig

__all__ = ["RateFit", "fit_decay_rate", "fit_log_slope", "sandwich_check", "SandwichResult",
           "ergodic_f_limit", "ergodic_fz_limit", "stationary_mean", "portfolio_convergence", "ConvergenceSeries",
           "MIN_POINTS"]

MIN_POINTS = 5


@dataclass(frozen=True, eq=False)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    t_grid: tuple
    analytic_rate: float
    rel_error: float
    values: tuple = ()            # |f_z/f| at each t
    std_errors: tuple = ()

    @property
    def fitted_rate(self) -> float:
        return -self.slope

    def rescaled(self) -> np.ndarray:
        return np.exp(self.analytic_rate * np.asarray(self.t_grid)) * np.asarray(self.values)


def fit_log_slope(t, y, min_points=MIN_POINTS):
    """OLS of log y on t. Returns (slope, intercept, r_squared)."""
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    if t.size < min_points:
        raise DegenerateFit(f"need at least {min_points} points, got {t.size}")
    if not np.all(np.isfinite(y)) or np.any(y <= 0):
        raise DegenerateFit("values must be positive and finite to take logs")
    ly = np.log(y)
    slope, intercept = np.polyfit(t, ly, 1)
    resid = ly - (slope * t + intercept)
    ss = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss if ss > 0 else 1.0
    return float(slope), float(intercept), r2


def _check_grid(t_grid, consts, burn_in):
    ts = np.asarray(t_grid, float)
    if ts.size == 0:
        raise EmptyGrid("empty time grid")
    if ts.size > 1 and np.any(np.diff(ts) <= 0):
        raise DegenerateFit("time grid must be strictly increasing")
    b = 1.0 / consts.lam_hat if burn_in is None else burn_in
    if ts[0] < b - 1e-12:
        raise DegenerateFit(f"first time {ts[0]} is inside the burn-in {b:.4g}")
    return ts


def _weights(model, consts, z, ts, cfg, representation):
    ws = intertemporal_weights(model, consts, z, ts, cfg, representation)
    vals = np.array([w.value for w in ws])
    if not np.all(np.isfinite(vals)) or np.any(vals == 0):
        raise DegenerateFit("an intertemporal weight is zero or non-finite")
    if np.any(np.sign(vals) != np.sign(vals[0])):
        raise DegenerateFit("the intertemporal weight changes sign over the grid")
    return ws, np.abs(vals)


def fit_decay_rate(model: StateModelSpec, consts: DerivedConstants, z: float, t_grid, cfg: SimConfig,
                   representation="tilde", burn_in: float | None = None) -> RateFit:
    consts.require()
    ts = _check_grid(t_grid, consts, burn_in)
    ws, vals = _weights(model, consts, z, ts, cfg, representation)
    slope, icpt, r2 = fit_log_slope(ts, vals)
    lam = consts.lam_hat
    return RateFit(slope, icpt, r2, tuple(map(float, ts)), lam, abs(slope + lam) / lam,
                   tuple(map(float, vals)), tuple(w.std_error for w in ws))


@dataclass(frozen=True)
class SandwichResult:
    ratio_min: float
    ratio_max: float
    bound: float
    passed: bool
    rescaled: tuple


def sandwich_check(model, consts, z, t_grid, cfg: SimConfig, bound: float = 10.0, representation="tilde",
                   burn_in: float | None = None) -> SandwichResult:
    """e^{lambda_hat t}|f_z/f| over the grid must stay within a factor ``bound``."""
    consts.require()
    ts = _check_grid(t_grid, consts, burn_in)
    if ts.size < 2:
        raise DegenerateFit("need at least two times to compare")
    _, vals = _weights(model, consts, z, ts, cfg, representation)
    resc = np.exp(consts.lam_hat * ts) * vals
    lo, hi = float(resc.min()), float(resc.max())
    return SandwichResult(lo, hi, bound, hi / lo <= bound, tuple(map(float, resc)))


def stationary_mean(model, consts, measure="PTilde") -> float:
    dens = invariant_density(model, consts, measure)
    if model.kind == FILTERED_OU:
        return dens.mean
    return dens.rate / (dens.shape - 1.0)


def ergodic_f_limit(model, consts) -> float:
    """lim f(t, z) = integral of 1/phi against the PTilde stationary law."""
    dens = invariant_density(model, consts, "PTilde")
    return dens.expect(lambda x: float(inv_phi(model.kind, consts, x)),
                       log_g=_log_inv_phi(model, consts))


def _log_inv_phi(model, consts):
    eta, xi = consts.eta, consts.xi
    if model.kind == FILTERED_OU:
        return lambda x: eta * x * x + xi * x
    return lambda x: eta * math.log(x) - xi / x


def ergodic_fz_limit(model, consts) -> float:
    """lim e^{lambda_hat t} f_z(t, z) for the filtered OU model.

    The flow derivative is exactly e^{-lambda_hat t}, so the limit is the
    stationary mean of (2 eta Z + xi) e^{eta Z^2 + xi Z}.
    """
    if model.kind != FILTERED_OU:
        raise DegenerateFit("closed ergodic constant only for the filtered OU model")
    dens = invariant_density(model, consts, "PTilde")
    return dens.expect(lambda x: float(d_inv_phi(model.kind, consts, x)))


@dataclass(frozen=True, eq=False)
class ConvergenceSeries:
    T_grid: tuple
    gap: tuple                   # |pi_T(0,z) - pi_inf(z)|
    gap_se: tuple
    slope: float
    r_squared: float
    analytic_rate: float
    rel_error: float
    decreasing: bool


def portfolio_convergence(spec, model, consts, z, T_grid, cfg: SimConfig, representation="tilde",
                          scaling="linear") -> ConvergenceSeries:
    """Distance between the dynamic portfolio at t=0 and the static one, over horizons T."""
    consts.require()
    Ts = np.asarray(T_grid, float)
    ws = intertemporal_weights(model, consts, z, Ts, cfg, representation)
    gap, se = [], []
    for T, w in zip(Ts, ws):
        d = assemble(spec, model, consts, z, 0.0, T, w, scaling)
        gap.append(float(np.linalg.norm(d.total_dynamic - d.total_static)))
        se.append(float(np.linalg.norm(d.total_dynamic_se)))
    gap = np.array(gap)
    slope, _, r2 = fit_log_slope(Ts, gap, min_points=3)
    lam = consts.lam_hat
    dec = bool(np.all(np.diff(gap) < 0))
    return ConvergenceSeries(tuple(map(float, Ts)), tuple(map(float, gap)), tuple(map(float, se)),
                             slope, r2, lam, abs(slope + lam) / lam, dec)
