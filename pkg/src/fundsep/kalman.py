"""Steady-state Kalman-Bucy filter for a hidden OU drift factor.

Prices follow dS/S = (r + Sigma mu Y) dt + Sigma dW and the hidden factor
dY = (b - aY) dt + sigma dB with d<W, B> = rho dt. With the conditional
variance frozen at its Riccati fixed point P0 the filter is

    dY_hat = (b - a Y_hat) dt + (P0 mu + sigma rho)' Sigma^{-1} d nu,
    d nu   = dS/S - (r + Sigma mu Y_hat) dt.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DegenerateObservation, NonFinite, ParseError, ValidationError
from .model import FILTERED_OU, PreferenceMarketSpec, StateModelSpec, riccati_root
from .rng import NoiseSource
from .sde import SimConfig

__all__ = ["FilterState", "PriceSeries", "FilterResult", "JointSimulation", "steady_state_variance",
           "riccati_residual", "filter_gain", "simulate_joint", "run_filter", "filter_log_returns",
           "ingest_prices", "write_prices", "mean_square_error"]


@dataclass(frozen=True)
class FilterState:
    y_hat: float
    P: float
    gain: np.ndarray


@dataclass(frozen=True, eq=False)
class PriceSeries:
    times: np.ndarray          # (m,)
    prices: np.ndarray         # (n_assets, m)

    def __post_init__(self):
        t = np.asarray(self.times, float)
        p = np.asarray(self.prices, float)
        if p.ndim != 2 or p.shape[1] != t.shape[0]:
            raise ValidationError(f"prices must be n_assets x {t.shape[0]}, got {p.shape}")
        if t.shape[0] < 2:
            raise ValidationError("need at least two observations")
        if np.any(np.diff(t) <= 0):
            i = int(np.argmax(np.diff(t) <= 0)) + 1
            raise ValidationError(f"non-increasing time at observation {i}")
        if not np.all(np.isfinite(p)) or np.any(p <= 0):
            j, i = np.argwhere(~(np.isfinite(p) & (p > 0)))[0]
            raise ValidationError(f"price of asset {j + 1} at observation {i} is not strictly positive")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "prices", p)

    @property
    def n_assets(self) -> int:
        return self.prices.shape[0]


@dataclass(frozen=True, eq=False)
class FilterResult:
    times: np.ndarray
    y_hat: np.ndarray           # (..., m)
    innovations: np.ndarray     # (..., m - 1, n_assets)
    state: FilterState


def _ou_model(model):
    if model.kind != FILTERED_OU:
        raise ConfigError("the Kalman filter applies to the filtered OU model")


def steady_state_variance(spec: PreferenceMarketSpec, model: StateModelSpec) -> float:
    """Nonnegative root of -2(a + sigma rho'mu) P + sigma^2 (1 - |rho|^2) - |mu|^2 P^2 = 0."""
    _ou_model(model)
    mu2 = float(spec.mu @ spec.mu)
    if mu2 == 0.0:
        c = model.a + model.sigma * float(spec.rho @ spec.mu)
        lim = model.sigma ** 2 * (1.0 - float(spec.rho @ spec.rho)) / (2.0 * c) if c != 0 else -1.0
        if lim > 0:
            return lim
        raise DegenerateObservation("mu = 0: prices carry no information about the factor")
    P = riccati_root(model.a, model.sigma, spec.rho, spec.mu)
    if not math.isfinite(P):
        raise DegenerateObservation("no nonnegative steady-state variance")
    return P


def riccati_residual(spec, model, P) -> float:
    c = model.a + model.sigma * float(spec.rho @ spec.mu)
    return -2.0 * c * P + model.sigma ** 2 * (1.0 - float(spec.rho @ spec.rho)) - float(spec.mu @ spec.mu) * P * P


def filter_gain(spec, model, P) -> np.ndarray:
    """(P mu' + sigma rho') Sigma^{-1} as a vector acting on the innovation."""
    return spec.solve_sigma_t(P * spec.mu + model.sigma * spec.rho)


@dataclass(frozen=True, eq=False)
class JointSimulation:
    times: np.ndarray            # (m + 1,)
    true_path: np.ndarray        # (n_paths, m + 1)
    log_prices: np.ndarray       # (n_paths, m + 1, n_assets)

    def price_series(self, i: int = 0) -> PriceSeries:
        return PriceSeries(self.times, np.exp(self.log_prices[i]).T)


def simulate_joint(spec, model, cfg: SimConfig, y0: float | None = None, s0: float = 1.0) -> JointSimulation:
    """Factor and log-prices on a uniform grid, ``cfg.n_paths`` independent copies.

    The factor uses exact OU transitions. Its Brownian increment is
    rho'dW + sqrt(1 - |rho|^2) dW_perp, drawn jointly with the transition
    noise. y0 defaults to a draw from the stationary law.
    """
    _ou_model(model)
    n, m = spec.n, cfg.n_steps
    dt = cfg.step
    a, b, s = model.a, model.b, model.sigma
    rho = spec.rho
    perp = math.sqrt(max(0.0, 1.0 - float(rho @ rho)))
    e1 = math.exp(-a * dt)
    v = -math.expm1(-2.0 * a * dt) / (2.0 * a)
    c1 = -math.expm1(-a * dt) / (a * dt)
    resid = math.sqrt(max(v - c1 * c1 * dt, 0.0))
    mean_lvl = b / a
    sm = spec.Sigma @ spec.mu
    drift_corr = spec.r - 0.5 * np.sum(spec.Sigma ** 2, axis=1)

    noise = NoiseSource(cfg.seed, 0, cfg.n_paths, dim=n + 3, antithetic=False)
    y = np.empty((cfg.n_paths, m + 1))
    lp = np.empty((cfg.n_paths, m + 1, n))
    init = noise.draw(1)[0]
    y[:, 0] = mean_lvl + s / math.sqrt(2.0 * a) * init[:, n + 2] if y0 is None else y0
    lp[:, 0, :] = math.log(s0)
    sdt = math.sqrt(dt)
    k = 0
    while k < m:
        steps = min(512, m - k)
        eps = noise.draw(steps)
        for j in range(steps):
            dw = eps[j, :, :n] * sdt
            dB = dw @ rho + perp * eps[j, :, n] * sdt
            yk = y[:, k]
            lp[:, k + 1, :] = lp[:, k, :] + (drift_corr[None, :] + yk[:, None] * sm[None, :]) * dt + dw @ spec.Sigma.T
            y[:, k + 1] = mean_lvl + (yk - mean_lvl) * e1 + s * (c1 * dB + resid * eps[j, :, n + 1])
            k += 1
    return JointSimulation(np.arange(m + 1) * dt, y, lp)


def filter_log_returns(spec, model, P0, dlog, dts, y0_hat=None) -> tuple[np.ndarray, np.ndarray]:
    """Run the discretised filter over log-returns ``dlog`` of shape (..., m, n).

    The innovation over step k uses the left-point estimate:
    nu_k = dlog_k + diag(Sigma Sigma')/2 dt - r dt - Sigma mu Y_hat_k dt.
    Returns (y_hat of shape (..., m + 1), innovations of shape (..., m, n)).
    """
    _ou_model(model)
    dlog = np.asarray(dlog, float)
    dts = np.broadcast_to(np.asarray(dts, float), dlog.shape[-2:-1])
    gain = filter_gain(spec, model, P0)
    a, b = model.a, model.b
    sm = spec.Sigma @ spec.mu
    corr = 0.5 * np.sum(spec.Sigma ** 2, axis=1) - spec.r
    m = dlog.shape[-2]
    y = np.empty(dlog.shape[:-2] + (m + 1,))
    y[..., 0] = b / a if y0_hat is None else y0_hat
    nu = np.empty_like(dlog)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(m):
            dt = dts[k]
            yk = y[..., k]
            nk = dlog[..., k, :] + corr * dt - yk[..., None] * sm * dt
            nu[..., k, :] = nk
            y[..., k + 1] = yk + (b - a * yk) * dt + nk @ gain
    if not np.all(np.isfinite(y)):
        raise NonFinite("filter diverged; reduce the observation step")
    return y, nu


def run_filter(spec, model, P0, prices: PriceSeries, y0_hat=None) -> FilterResult:
    if prices.n_assets != spec.n:
        raise ValidationError(f"price file has {prices.n_assets} assets, market has {spec.n}")
    dlog = np.diff(np.log(prices.prices), axis=1).T
    y, nu = filter_log_returns(spec, model, P0, dlog, np.diff(prices.times), y0_hat)
    return FilterResult(prices.times, y, nu, FilterState(float(y[-1]), P0, filter_gain(spec, model, P0)))


def mean_square_error(true_path, y_hat, start: int = 0) -> float:
    """Average of (Y - Y_hat)^2 over paths and time indices >= start."""
    e = np.asarray(true_path)[..., start:] - np.asarray(y_hat)[..., start:]
    return float(np.mean(e * e))


def ingest_prices(path) -> PriceSeries:
    """Read a CSV with header time,asset_1,...,asset_n."""
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        n = len(header) - 1
        if n < 1 or header[0] != "time" or header[1:] != [f"asset_{i}" for i in range(1, n + 1)]:
            raise ParseError(f"{path}: row 1: expected header time,asset_1..asset_n, got {','.join(header)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != n + 1:
                raise ParseError(f"{path}: row {lineno}: expected {n + 1} fields, got {len(row)}")
            vals = []
            for col, cell in enumerate(row, start=1):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ParseError(f"{path}: row {lineno}, column {col} ({header[col - 1]}): "
                                     f"not a number: {cell!r}") from None
            rows.append(vals)
    if len(rows) < 2:
        raise ValidationError(f"{path}: need at least two observations")
    arr = np.array(rows)
    for i in range(1, len(rows)):
        if not arr[i, 0] > arr[i - 1, 0]:
            raise ValidationError(f"{path}: row {i + 2}: non-increasing time {arr[i, 0]!r}")
    bad = np.argwhere(~(np.isfinite(arr[:, 1:]) & (arr[:, 1:] > 0)))
    if bad.size:
        i, j = bad[0]
        raise ValidationError(f"{path}: row {i + 2}, column {j + 2} (asset_{j + 1}): "
                              f"price {arr[i, j + 1]!r} is not strictly positive")
    return PriceSeries(arr[:, 0], arr[:, 1:].T)


def write_prices(path, series: PriceSeries):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time"] + [f"asset_{i}" for i in range(1, series.n_assets + 1)])
        for k, t in enumerate(series.times):
            w.writerow([repr(float(t))] + [repr(float(x)) for x in series.prices[:, k]])
