"""Stationary laws of the tilted state processes and a recurrence test."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special

from .errors import InvalidSpec, QuadratureFailure
from .model import FILTERED_OU, THREE_HALVES, DerivedConstants, StateModelSpec, dynamics

__all__ = ["InvariantDensity", "invariant_density", "positive_recurrence_check", "quad"]

EPSABS = 1e-12
TAIL_LOG = math.log(1e-10) - 12.0


def quad(fn, lo, hi, **kw):
    """scipy.integrate.quad that raises QuadratureFailure instead of warning."""
    kw.setdefault("epsabs", EPSABS)
    kw.setdefault("epsrel", 1e-12)
    kw.setdefault("limit", 400)
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(fn, lo, hi, **kw)
        except integrate.IntegrationWarning as exc:
            # accept a nominal warning when the error estimate is still tiny
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                val, err = integrate.quad(fn, lo, hi, **kw)
            if not (np.isfinite(val) and err <= max(1e-9, 1e-8 * abs(val))):
                raise QuadratureFailure(f"quadrature did not converge on [{lo}, {hi}]: {exc}") from exc
    if not np.isfinite(val):
        raise QuadratureFailure(f"non-finite quadrature result on [{lo}, {hi}]")
    return val, err


@dataclass(frozen=True)
class InvariantDensity:
    """Normalised stationary density of the state under a tilted measure.

    For 3/2 and inverse Bessel the law is inverse-gamma: 1/Z ~ Gamma(shape,
    rate) and the density is rate^shape / Gamma(shape) z^{-shape-1} e^{-rate/z}.
    For the filtered OU model it is Gaussian.
    """

    kind: str
    measure: str
    shape: float = math.nan
    rate: float = math.nan
    mean: float = math.nan
    var: float = math.nan
    log_norm: float = 0.0          # log of the quadrature normalisation constant
    support: tuple = (0.0, math.inf)

    def _log_unnormalised(self, z):
        z = np.asarray(z, float)
        if self.kind == FILTERED_OU:
            return -0.5 * (z - self.mean) ** 2 / self.var
        with np.errstate(divide="ignore"):
            return -(self.shape + 1.0) * np.log(z) - self.rate / z

    def pdf(self, z):
        z = np.asarray(z, float)
        if self.kind == FILTERED_OU:
            return np.exp(self._log_unnormalised(z) - self.log_norm)
        out = np.zeros_like(z)
        pos = z > 0
        out[pos] = np.exp(self._log_unnormalised(z[pos]) - self.log_norm)
        return out

    def expect(self, g: Callable, log_g: Callable | None = None) -> float:
        """Integral of g against the density by adaptive quadrature.

        ``log_g`` (log of a positive g) avoids overflow for steep integrands.
        """
        if self.kind == FILTERED_OU:
            sd = math.sqrt(self.var)
            if log_g is None:
                fn = lambda x: g(x) * math.exp(self._log_unnormalised(x) - self.log_norm)
            else:
                fn = lambda x: math.exp(log_g(x) + self._log_unnormalised(x) - self.log_norm)
            lo, hi = _envelope_bounds(lambda x: (log_g(x) if log_g else 0.0) + self._log_unnormalised(x),
                                      self.mean, sd)
            return quad(fn, lo, hi, points=[self.mean])[0]
        # integrate in u = log z: density e^u p(e^u)
        if log_g is None:
            base = lambda u: float(self._log_unnormalised(math.exp(u))) + u - self.log_norm
            fn = lambda u: g(math.exp(u)) * math.exp(base(u))
            logf = base
        else:
            logf = lambda u: log_g(math.exp(u)) + float(self._log_unnormalised(math.exp(u))) + u - self.log_norm
            fn = lambda u: math.exp(logf(u))
        centre = math.log(self.rate / self.shape)
        lo, hi = _envelope_bounds(logf, centre, 1.0)
        return quad(fn, lo, hi, points=[centre])[0]


def _envelope_bounds(logf, centre, step):
    """Walk out from ``centre`` until the log-integrand is far below its peak."""
    peak = logf(centre)
    grid = centre + step * np.linspace(-8, 8, 161)
    vals = np.array([logf(x) for x in grid])
    peak = max(peak, float(np.max(vals[np.isfinite(vals)])))
    lo = hi = float(grid[int(np.nanargmax(vals))])
    for direction in (-1, 1):
        x = lo if direction < 0 else hi
        h = step
        for _ in range(400):
            x += direction * h
            v = logf(x)
            if not np.isfinite(v) or v - peak < TAIL_LOG:
                break
            h *= 1.15
        else:
            raise QuadratureFailure("integrand tail does not decay; expectation may be infinite")
        if direction < 0:
            lo = x
        else:
            hi = x
    return lo, hi


def invariant_density(model: StateModelSpec, consts: DerivedConstants, measure: str = "PTilde") -> InvariantDensity:
    if measure == "P":
        raise InvalidSpec("the base pricing measure carries a potential; use a tilted measure")
    dyn = dynamics(model, consts, measure)
    if model.kind == FILTERED_OU:
        mean = dyn.B / dyn.K
        var = dyn.vol ** 2 / (2.0 * dyn.K)
        return InvariantDensity(FILTERED_OU, measure, mean=mean, var=var,
                                log_norm=0.5 * math.log(2.0 * math.pi * var), support=(-math.inf, math.inf))
    s2 = dyn.vol ** 2
    extra = 2.0 if model.kind == THREE_HALVES else 3.0
    shape = extra + 2.0 * dyn.K / s2
    rate = 2.0 * dyn.B / s2
    if shape <= 0 or rate <= 0:
        raise InvalidSpec(f"tilted dynamics have no stationary law (shape={shape}, rate={rate})")
    dens = InvariantDensity(model.kind, measure, shape=shape, rate=rate)
    # normalise numerically in log space; the closed form rate^k/Gamma(k) is the test oracle
    logf = lambda u: float(dens._log_unnormalised(math.exp(u))) + u
    centre = math.log(rate / shape)
    shift = logf(centre)
    lo, hi = _envelope_bounds(logf, centre, 1.0)
    total = quad(lambda u: math.exp(logf(u) - shift), lo, hi, points=[centre])[0]
    return InvariantDensity(model.kind, measure, shape=shape, rate=rate, log_norm=shift + math.log(total))


def closed_form_log_norm(dens: InvariantDensity) -> float:
    """log of Gamma(k) / rate^k, the exact inverse-gamma normaliser."""
    return special.gammaln(dens.shape) - dens.shape * math.log(dens.rate)


@dataclass(frozen=True)
class RecurrenceResult:
    recurrent: bool
    integrals: tuple          # (lower scale, upper scale, speed) at the finest level
    coarse: tuple
    threshold: float


def positive_recurrence_check(drift: Callable, diffusion: Callable, domain, c: float,
                              threshold: float = 1e8, levels=(1e-6, 1e-12)) -> RecurrenceResult:
    """Numerical version of the scale/speed criterion for a 1-d diffusion.

    Both scale integrals must diverge at their boundaries and the speed
    integral must be finite. Divergence is declared when the truncated
    integral exceeds ``threshold`` at the finest truncation level; this is a
    heuristic since divergence is not decidable from finitely many samples.
    """
    alpha, beta = map(float, domain)
    if not (alpha < c < beta):
        raise InvalidSpec("c must lie strictly inside the domain")
    if diffusion(c) <= 0:
        raise InvalidSpec("diffusion must be positive inside the domain")
    ratio = lambda y: 2.0 * drift(y) / diffusion(y) ** 2
    cap = math.log(threshold) + 20.0

    def run(eps):
        out = []
        for sign in (-1.0, 1.0):
            nodes = _nodes(c, alpha if sign < 0 else beta, eps)
            scale = _piecewise(nodes, ratio, lambda e, x: math.exp(min(-e, cap)), cap)
            speed = _piecewise(nodes, ratio, lambda e, x: math.exp(min(e, cap)) / diffusion(x) ** 2, cap)
            out.append((scale, speed))
        return (out[0][0], out[1][0], out[0][1] + out[1][1])

    coarse = run(levels[0])
    fine = run(levels[-1])
    lower, upper, speed = fine
    recurrent = lower > threshold and upper > threshold and speed <= threshold
    return RecurrenceResult(recurrent, fine, coarse, threshold)


def _nodes(c, end, eps):
    """Points from c toward ``end``, geometrically refined near the boundary."""
    if math.isfinite(end):
        span = end - c
        fr = np.concatenate([np.linspace(0.0, 0.9, 10), 1.0 - np.geomspace(0.1, eps, 40)])
        return c + span * fr
    scale = max(1.0, abs(c))
    sgn = 1.0 if end > 0 else -1.0
    return c + sgn * np.concatenate([[0.0], scale * np.geomspace(1e-3, 1.0 / eps, 60)])


def _piecewise(nodes, ratio, integrand, cap):
    """Integrate integrand(E(x), x) where E(x) = int_c^x ratio along ``nodes``."""
    total = 0.0
    e_left = 0.0
    for x0, x1 in zip(nodes[:-1], nodes[1:]):
        inner = lambda x, x0=x0, e0=e_left: e0 + integrate.quad(ratio, x0, x, limit=100)[0]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            lo, hi = (x0, x1) if x1 > x0 else (x1, x0)
            piece = integrate.quad(lambda x: integrand(inner(x), x), lo, hi, limit=100)[0]
            e_right = e_left + integrate.quad(ratio, x0, x1, limit=200)[0]
        total += abs(piece)
        e_left = e_right
        if not math.isfinite(total) or total > math.exp(cap):
            return math.inf
    return total
