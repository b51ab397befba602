"""Closed-form constants, eigenpairs and per-measure state dynamics.

Three state models are supported:

    three_halves    dY = (b - aY) Y dt + sigma Y^{3/2} dB      on (0, inf)
    inverse_bessel  dY = (b - aY) Y^2 dt + sigma Y^2 dB        on (0, inf)
    filtered_ou     dY = (b - aY) dt + sigma dB                 on R

For the filtered model the investor only sees the Kalman estimate, whose
noise is fully spanned by the traded assets; the state scale is |theta|
with theta = P0 mu + sigma rho.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import AssumptionViolated, EmptyGrid, InvalidSpec, UnsupportedMeasurePair

__all__ = [
    "THREE_HALVES", "INVERSE_BESSEL", "FILTERED_OU", "KINDS", "MEASURES",
    "PreferenceMarketSpec", "StateModelSpec", "DerivedConstants", "Eigenpair",
    "Dynamics", "canonical_kind", "derive_constants", "eigenpair",
    "eigen_residual", "generator", "dynamics", "riccati_root",
]

THREE_HALVES = "three_halves"
INVERSE_BESSEL = "inverse_bessel"
FILTERED_OU = "filtered_ou"
KINDS = (THREE_HALVES, INVERSE_BESSEL, FILTERED_OU)

# P: base pricing measure, PTilde: tilted by phi, PHat/PBar: further tilts
MEASURES = ("P", "PTilde", "PHat", "PBar")

_ALIASES = {
    "3/2": THREE_HALVES, "threehalves": THREE_HALVES, "three_halves": THREE_HALVES,
    "invb": INVERSE_BESSEL, "inversebessel": INVERSE_BESSEL, "inverse_bessel": INVERSE_BESSEL,
    "fou": FILTERED_OU, "filteredou": FILTERED_OU, "filtered_ou": FILTERED_OU, "ou": FILTERED_OU,
}

MAX_CONDITION = 1e12


def canonical_kind(kind: str) -> str:
    key = str(kind).strip().lower().replace("-", "_").replace(" ", "")
    if key not in _ALIASES:
        raise InvalidSpec(f"unknown model kind {kind!r}; expected one of {KINDS}")
    return _ALIASES[key]


def _frozen(x, name, ndim):
    arr = np.array(x, dtype=float)
    if arr.ndim != ndim:
        raise InvalidSpec(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidSpec(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PreferenceMarketSpec:
    """Power-utility investor (x^p / p, p < 0) facing n risky assets.

    Excess returns are Sigma mu g(Y), volatilities Sigma h(Y), and rho is the
    correlation vector between the asset noise W and the state noise B.
    """

    p: float
    r: float
    mu: np.ndarray
    Sigma: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        mu = _frozen(self.mu, "mu", 1)
        Sigma = _frozen(self.Sigma, "Sigma", 2)
        rho = _frozen(self.rho, "rho", 1)
        n = mu.shape[0]
        if n < 1:
            raise InvalidSpec("need at least one risky asset")
        if Sigma.shape != (n, n) or rho.shape != (n,):
            raise InvalidSpec(f"shape mismatch: mu {mu.shape}, Sigma {Sigma.shape}, rho {rho.shape}")
        if not (math.isfinite(self.p) and self.p < 0):
            raise InvalidSpec(f"p must be negative, got {self.p}")
        if not math.isfinite(self.r):
            raise InvalidSpec("r must be finite")
        if float(rho @ rho) > 1.0 + 1e-12:
            raise InvalidSpec(f"|rho| = {math.sqrt(rho @ rho):.6g} exceeds 1")
        cond = np.linalg.cond(Sigma)
        if not np.isfinite(cond) or cond > MAX_CONDITION:
            raise InvalidSpec(f"Sigma is singular or ill-conditioned (cond={cond:.3g})")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "Sigma", Sigma)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "r", float(self.r))

    @property
    def n(self) -> int:
        return int(self.mu.shape[0])

    @property
    def q(self) -> float:
        return self.p / (self.p - 1.0)

    def solve_sigma_t(self, v) -> np.ndarray:
        """(Sigma')^{-1} v via LU with partial pivoting."""
        lu = scipy.linalg.lu_factor(self.Sigma.T)
        return scipy.linalg.lu_solve(lu, np.asarray(v, dtype=float))

    def solve_sigma(self, v) -> np.ndarray:
        lu = scipy.linalg.lu_factor(self.Sigma)
        return scipy.linalg.lu_solve(lu, np.asarray(v, dtype=float))


@dataclass(frozen=True)
class StateModelSpec:
    kind: str
    b: float
    a: float
    sigma: float

    def __post_init__(self):
        kind = canonical_kind(self.kind)
        object.__setattr__(self, "kind", kind)
        for name in ("b", "a", "sigma"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise InvalidSpec(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if self.b <= 0:
            raise InvalidSpec(f"b must be positive, got {self.b}")
        if self.sigma <= 0:
            raise InvalidSpec(f"sigma must be positive, got {self.sigma}")
        if kind == FILTERED_OU:
            if self.a <= 0:
                raise InvalidSpec(f"filtered OU needs a > 0, got {self.a}")
        elif self.a <= -0.5 * self.sigma ** 2:
            raise InvalidSpec(f"need a > -sigma^2/2 for well-posedness, got a={self.a}")

    @property
    def positive_state(self) -> bool:
        return self.kind != FILTERED_OU


@dataclass(frozen=True, eq=False)
class DerivedConstants:
    """Closed-form constants for one (market, model) pair.

    ``theta`` is a scalar for the 3/2 and inverse Bessel models and the
    vector P0 mu + sigma rho for the filtered model (``theta_norm2`` holds
    its squared length). ``kappa`` is the mean-reversion coefficient of the
    state under the pricing measure P: theta for 3/2 / invB, a + q theta'mu
    for the filtered model. ``vol`` is the state diffusion scale.
    """

    kind: str
    p: float
    r: float
    q: float
    delta: float
    mu2: float
    theta: float | np.ndarray
    theta_norm2: float
    kappa: float
    vol: float
    eta: float
    xi: float
    lam: float
    lam_hat: float
    zeta: float = 0.0
    P0: float | None = None
    assumption_ok: bool = True
    assumption_note: str = ""
    b: float = 0.0
    sigma: float = 0.0

    def require(self):
        if not self.assumption_ok:
            raise AssumptionViolated(self.assumption_note)
        return self

    def as_dict(self) -> dict:
        out = {
            "kind": self.kind, "q": self.q, "delta": self.delta,
            "theta": (list(map(float, self.theta)) if isinstance(self.theta, np.ndarray) else self.theta),
            "kappa": self.kappa, "eta": self.eta, "xi": self.xi, "zeta": self.zeta,
            "lambda": self.lam, "lambda_hat": self.lam_hat, "P0": self.P0,
            "assumption_ok": self.assumption_ok,
        }
        return out


def riccati_root(a: float, sigma: float, rho: np.ndarray, mu: np.ndarray) -> float:
    """Nonnegative root of -2cP + sigma^2(1-|rho|^2) - |mu|^2 P^2 = 0, c = a + sigma rho'mu.

    Written in the rationalised form when c > 0 so that |mu| -> 0 is stable.
    Returns nan when no nonnegative root exists.
    """
    c = a + sigma * float(rho @ mu)
    s2 = sigma ** 2 * max(0.0, 1.0 - float(rho @ rho))
    m2 = float(mu @ mu)
    root = math.sqrt(c * c + s2 * m2)
    if c > 0:
        return s2 / (c + root)
    if m2 == 0.0:
        return math.nan
    return (-c + root) / m2


def derive_constants(spec: PreferenceMarketSpec, model: StateModelSpec) -> DerivedConstants:
    """Compute q, delta, theta, eta, xi, lambda and the decay rate lambda_hat.

    Never raises on assumption failure: the result carries
    ``assumption_ok=False`` and a note saying which inequality failed.
    """
    p, r, q = spec.p, spec.r, spec.q
    mu, rho = spec.mu, spec.rho
    mu2 = float(mu @ mu)
    b, a, s = model.b, model.a, model.sigma

    if model.kind in (THREE_HALVES, INVERSE_BESSEL):
        delta = 1.0 / (1.0 - q * float(rho @ rho))
        theta = a + q * s * float(rho @ mu)
        A = 0.5 + theta / s ** 2
        D = q * mu2 / (delta * s ** 2)
        # same exponent for both models: root of s^2 e^2/2 + (s^2/2 + theta) e - q|mu|^2/(2 delta)
        eta = D / (A + math.sqrt(A * A + D)) if A > 0 else -A + math.sqrt(A * A + D)
        ok = theta > -0.5 * s ** 2
        note = "" if ok else (f"theta = a + q sigma rho'mu = {theta:.6g} must exceed -sigma^2/2 = {-0.5 * s * s:.6g}")
        if model.kind == THREE_HALVES:
            return DerivedConstants(
                kind=model.kind, p=p, r=r, q=q, delta=delta, mu2=mu2, theta=theta,
                theta_norm2=theta * theta, kappa=theta, vol=s, eta=eta, xi=0.0,
                lam=b * eta - p * r / delta, lam_hat=b, zeta=0.0,
                assumption_ok=ok, assumption_note=note, b=b, sigma=s)
        den = s ** 2 * (eta + 1.0) + theta
        xi = b * eta / den
        lam = -0.5 * s ** 2 * xi ** 2 + b * xi - p * r / delta
        bt = b - s ** 2 * xi
        zeta = bt / (theta + s ** 2 * (eta + 2.0))
        lam_hat = -0.5 * s ** 2 * zeta ** 2 + bt * zeta
        return DerivedConstants(
            kind=model.kind, p=p, r=r, q=q, delta=delta, mu2=mu2, theta=theta,
            theta_norm2=theta * theta, kappa=theta, vol=s, eta=eta, xi=xi, lam=lam,
            lam_hat=lam_hat, zeta=zeta, assumption_ok=ok, assumption_note=note, b=b, sigma=s)

    # filtered OU
    if mu2 == 0.0:
        c = a + s * float(rho @ mu)
        P0 = s ** 2 * (1.0 - float(rho @ rho)) / (2.0 * c) if c > 0 else math.nan
    else:
        P0 = riccati_root(a, s, rho, mu)
    if not math.isfinite(P0):
        raise InvalidSpec("filtered OU: no nonnegative steady filter variance")
    theta_v = P0 * mu + s * rho
    theta_v.setflags(write=False)
    S = float(theta_v @ theta_v)
    # the filtered state is driven by theta'W_hat, fully spanned by the assets
    delta = 1.0 / (1.0 - q)
    kappa = a + q * float(theta_v @ mu)
    if S == 0.0:
        raise InvalidSpec("filtered OU: |theta| = 0, the filtered state is deterministic")
    root = math.sqrt(kappa * kappa + (q / delta) * S * mu2)
    eta = ((q / delta) * mu2 / 2.0) / (kappa + root) if kappa > 0 else (-kappa + root) / (2.0 * S)
    lam_hat = kappa + 2.0 * S * eta
    xi = 2.0 * b * eta / lam_hat if lam_hat != 0 else math.nan
    lam = (eta - 0.5 * xi ** 2) * S + b * xi - p * r / delta
    ok = kappa > 0
    note = "" if ok else f"a + q theta'mu = {kappa:.6g} must be positive"
    return DerivedConstants(
        kind=model.kind, p=p, r=r, q=q, delta=delta, mu2=mu2, theta=theta_v,
        theta_norm2=S, kappa=kappa, vol=math.sqrt(S), eta=eta, xi=xi, lam=lam,
        lam_hat=lam_hat, zeta=0.0, P0=P0, assumption_ok=ok, assumption_note=note, b=b, sigma=s)


@dataclass(frozen=True)
class Eigenpair:
    lam: float
    phi: Callable
    dlog_phi: Callable
    d2_phi: Callable


def eigenpair(model: StateModelSpec, consts: DerivedConstants) -> Eigenpair:
    consts.require()
    eta, xi = consts.eta, consts.xi
    if model.kind == THREE_HALVES:
        return Eigenpair(
            consts.lam,
            lambda z: np.asarray(z, float) ** (-eta),
            lambda z: -eta / np.asarray(z, float),
            lambda z: eta * (eta + 1.0) * np.asarray(z, float) ** (-eta - 2.0),
        )
    if model.kind == INVERSE_BESSEL:
        def phi(z):
            z = np.asarray(z, float)
            return z ** (-eta) * np.exp(xi / z)

        def dlog(z):
            z = np.asarray(z, float)
            return -eta / z - xi / z ** 2

        def d2(z):
            z = np.asarray(z, float)
            g = -eta / z - xi / z ** 2
            return phi(z) * (g * g + eta / z ** 2 + 2.0 * xi / z ** 3)

        return Eigenpair(consts.lam, phi, dlog, d2)

    def phi(z):
        z = np.asarray(z, float)
        return np.exp(-eta * z * z - xi * z)

    def dlog(z):
        return -2.0 * eta * np.asarray(z, float) - xi

    def d2(z):
        z = np.asarray(z, float)
        g = -2.0 * eta * z - xi
        return phi(z) * (g * g - 2.0 * eta)

    return Eigenpair(consts.lam, phi, dlog, d2)


@dataclass(frozen=True)
class Generator:
    """Drift, diffusion and potential of the linear pricing equation under P."""

    drift: Callable
    diffusion: Callable
    potential: Callable


def generator(model: StateModelSpec, consts: DerivedConstants) -> Generator:
    c0 = consts.p * consts.r / consts.delta
    c1 = 0.5 * consts.q * consts.mu2 / consts.delta
    b, s, k = model.b, consts.vol, consts.kappa
    if model.kind == THREE_HALVES:
        return Generator(lambda z: (b - k * z) * z, lambda z: s * z ** 1.5, lambda z: -(c0 - c1 * z))
    if model.kind == INVERSE_BESSEL:
        return Generator(lambda z: (b - k * z) * z * z, lambda z: s * z * z, lambda z: -(c0 - c1 * z * z))
    return Generator(lambda z: b - k * z, lambda z: s + 0.0 * z, lambda z: -(c0 - c1 * z * z))


def eigen_residual(model: StateModelSpec, consts: DerivedConstants, grid) -> float:
    """Max over the grid of |L phi + lambda phi| / phi with exact derivatives."""
    z = np.asarray(grid, dtype=float).ravel()
    if z.size == 0:
        raise EmptyGrid("eigen_residual needs at least one grid point")
    if model.positive_state and np.any(z <= 0):
        raise InvalidSpec("grid leaves the state space (0, inf)")
    ep = eigenpair(model, consts)
    g = generator(model, consts)
    phi = ep.phi(z)
    res = 0.5 * g.diffusion(z) ** 2 * ep.d2_phi(z) + g.drift(z) * ep.dlog_phi(z) * phi \
        - g.potential(z) * phi + ep.lam * phi
    return float(np.max(np.abs(res / phi)))


@dataclass(frozen=True)
class Dynamics:
    """State SDE under one measure.

    3/2:  dZ = (B - K Z) Z dt + vol Z^{3/2} dW
    invB: dZ = (B - K Z) Z^2 dt + vol Z^2 dW
    OU:   dZ = (B - K Z) dt + vol dW
    """

    kind: str
    measure: str
    B: float
    K: float
    vol: float
    extra: dict = field(default_factory=dict)

    def drift(self, z):
        z = np.asarray(z, float)
        if self.kind == THREE_HALVES:
            return (self.B - self.K * z) * z
        if self.kind == INVERSE_BESSEL:
            return (self.B - self.K * z) * z * z
        return self.B - self.K * z

    def diffusion(self, z):
        z = np.asarray(z, float)
        if self.kind == THREE_HALVES:
            return self.vol * z ** 1.5
        if self.kind == INVERSE_BESSEL:
            return self.vol * z * z
        return self.vol + 0.0 * z


def _next_tilt(kind, B, K, s):
    """Tilt by the eigenfunction of the flow-derivative-weighted operator.

    Returns (B', K', rate, c) where the eigenfunction is z^{-1/2} (3/2) or
    z^{-1} e^{c/z} (invB) and ``rate`` is the total exponential decay
    picked up by the derivative representation.
    """
    if kind == THREE_HALVES:
        return B, K + 0.5 * s * s, B, 0.0
    c = B / (K + 2.0 * s * s)
    rate = B * c - 0.5 * s * s * c * c
    return B - s * s * c, K + s * s, rate, c


def dynamics(model: StateModelSpec, consts: DerivedConstants, measure: str = "P") -> Dynamics:
    if measure not in MEASURES:
        raise UnsupportedMeasurePair(f"unknown measure {measure!r}")
    s, k, b = consts.vol, consts.kappa, model.b
    if measure == "P":
        return Dynamics(model.kind, "P", b, k, s)
    consts.require()
    if model.kind == FILTERED_OU:
        if measure != "PTilde":
            raise UnsupportedMeasurePair("the filtered OU model only has P and PTilde")
        return Dynamics(model.kind, measure, b - consts.theta_norm2 * consts.xi, consts.lam_hat, s)
    if model.kind == THREE_HALVES:
        B, K = b, k + s * s * consts.eta
    else:
        B, K = b - s * s * consts.xi, k + s * s * consts.eta
    if measure == "PTilde":
        return Dynamics(model.kind, measure, B, K, s)
    B, K, rate, c = _next_tilt(model.kind, B, K, s)
    if measure == "PHat":
        return Dynamics(model.kind, measure, B, K, s, {"rate": rate, "c": c})
    B2, K2, rate2, c2 = _next_tilt(model.kind, B, K, s)
    return Dynamics(model.kind, measure, B2, K2, s, {"rate": rate2, "c": c2, "prev_rate": rate, "prev_c": c})
