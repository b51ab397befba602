"""Path simulation of the state process under P and its tilted measures.

Schemes
-------
3/2 model
    X = 1/Z solves dX = (K + s^2 - B X) dt - s sqrt(X) dW, a CIR process.
    ``full_truncation`` runs Euler on X with the coefficients evaluated at
    max(X, 0); ``implicit`` runs the drift-implicit scheme on sqrt(X),
    which stays positive without truncation.
inverse Bessel model
    X = 1/Z^2 solves dX = (2K + 3 s^2 - 2B sqrt(X)) dt - 2 s sqrt(X) dW.
    ``full_truncation`` is Euler on X; ``implicit`` is drift-implicit on
    1/Z = sqrt(X).
filtered OU model
    ``exact`` Gaussian transitions; the Brownian increment is drawn jointly
    with the transition noise so that stochastic integrals stay consistent.

Path functionals are accumulated on the same grid: trapezoidal sums for
dt-integrals, left-point sums for dB-integrals.
"""
from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .errors import ConfigError, MissingFunctional, NonPositiveState, UnsupportedMeasurePair
from .model import (FILTERED_OU, INVERSE_BESSEL, THREE_HALVES, DerivedConstants, Dynamics,
                    StateModelSpec, dynamics, eigenpair)
from .rng import BLOCK_LANES, NoiseSource, worker_count

__all__ = ["SimConfig", "PathBatch", "Functional", "FUNCTIONALS", "simulate", "simulate_dynamics",
           "flow_derivative", "girsanov_weight", "MAX_CLAMP_FRACTION"]

MAX_CLAMP_FRACTION = 0.01
CHUNK_PATHS = 32 * BLOCK_LANES
STEP_CHUNK = 512
SCHEMES = ("auto", "full_truncation", "implicit", "exact")


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    horizon: float = 1.0
    n_paths: int = 100_000
    seed: int = 0
    scheme: str = "auto"
    antithetic: bool = True
    record_times: tuple | None = None

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not self.horizon >= self.dt:
            raise ConfigError(f"horizon {self.horizon} shorter than dt {self.dt}")
        if int(self.n_paths) < 2:
            raise ConfigError("need at least two paths")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        object.__setattr__(self, "n_paths", int(self.n_paths))
        object.__setattr__(self, "seed", int(self.seed))
        if self.record_times is not None:
            rt = tuple(float(t) for t in self.record_times)
            if any(t < 0 or t > self.horizon + 1e-12 for t in rt):
                raise ConfigError("record times must lie in [0, horizon]")
            object.__setattr__(self, "record_times", rt)

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.horizon / self.dt)))

    @property
    def step(self) -> float:
        return self.horizon / self.n_steps

    def with_(self, **kw) -> "SimConfig":
        from dataclasses import replace
        return replace(self, **kw)


@dataclass(frozen=True)
class Functional:
    """A path functional: kind 'dt' gives int g(Z) ds, kind 'dB' gives int g(Z) dW."""

    name: str
    kind: str
    fn: Callable


FUNCTIONALS = {
    "int_z": Functional("int_z", "dt", lambda z: z),
    "int_z2": Functional("int_z2", "dt", lambda z: z * z),
    "B": Functional("B", "dB", lambda z: np.ones_like(z)),
    "int_z_dB": Functional("int_z_dB", "dB", lambda z: z),
    "int_sqrt_z_dB": Functional("int_sqrt_z_dB", "dB", np.sqrt),
    "int_inv_sqrt_z_dB": Functional("int_inv_sqrt_z_dB", "dB", lambda z: 1.0 / np.sqrt(z)),
}


def _resolve(functionals) -> list[Functional]:
    out = []
    for f in functionals or ():
        if isinstance(f, Functional):
            out.append(f)
        elif f in FUNCTIONALS:
            out.append(FUNCTIONALS[f])
        else:
            raise MissingFunctional(f"unknown functional {f!r}")
    return out


@dataclass(frozen=True, eq=False)
class PathBatch:
    """Simulated paths, stored at the recorded times only.

    ``states[i, j]`` is path i at ``times[j]``; ``integrals[name][i, j]`` is
    the named functional accumulated up to ``times[j]``.
    """

    kind: str
    measure: str
    dyn: Dynamics
    z0: float
    dt: float
    times: np.ndarray
    states: np.ndarray
    integrals: dict
    clamp_count: int
    n_steps: int
    noise_checksum: tuple
    seed: int
    scheme: str

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    def column(self, t: float) -> int:
        j = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[j] - t) > 0.5 * self.dt + 1e-12:
            raise ConfigError(f"time {t} was not recorded")
        return j

    def at(self, t: float) -> np.ndarray:
        return self.states[:, self.column(t)]

    def integral(self, name: str, t: float) -> np.ndarray:
        if name not in self.integrals:
            raise MissingFunctional(f"functional {name!r} was not accumulated")
        return self.integrals[name][:, self.column(t)]

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.states).tobytes())
        for k in sorted(self.integrals):
            h.update(k.encode())
            h.update(np.ascontiguousarray(self.integrals[k]).tobytes())
        return h.hexdigest()


def _pick_scheme(kind, scheme):
    if scheme == "auto":
        return "exact" if kind == FILTERED_OU else "full_truncation"
    if (kind == FILTERED_OU) != (scheme == "exact"):
        raise ConfigError(f"scheme {scheme!r} does not apply to the {kind} model")
    return scheme


def _record_indices(cfg: SimConfig):
    m = cfg.n_steps
    times = cfg.record_times if cfg.record_times is not None else (0.0, cfg.horizon)
    idx = sorted({min(m, int(round(t / cfg.step))) for t in times} | {0})
    return np.array(idx, dtype=int)


def simulate(model: StateModelSpec, consts: DerivedConstants, measure: str, z0: float,
             cfg: SimConfig, functionals: Iterable = ()) -> PathBatch:
    """Simulate Z under ``measure`` started at z0."""
    dyn = dynamics(model, consts, measure)
    return simulate_dynamics(dyn, z0, cfg, functionals)


def simulate_dynamics(dyn: Dynamics, z0: float, cfg: SimConfig, functionals: Iterable = ()) -> PathBatch:
    z0 = float(z0)
    if dyn.kind != FILTERED_OU and not z0 > 0:
        raise ConfigError(f"initial state must be positive, got {z0}")
    scheme = _pick_scheme(dyn.kind, cfg.scheme)
    funcs = _resolve(functionals)
    rec = _record_indices(cfg)
    n = cfg.n_paths
    starts = list(range(0, n, CHUNK_PATHS))
    job = lambda s: _run_chunk(dyn, scheme, z0, cfg, funcs, rec, s, min(CHUNK_PATHS, n - s))
    workers = min(worker_count(), len(starts))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, starts))
    else:
        parts = [job(s) for s in starts]
    states = np.concatenate([p[0] for p in parts], axis=0)
    integrals = {f.name: np.concatenate([p[1][f.name] for p in parts], axis=0) for f in funcs}
    clamps = sum(p[2] for p in parts)
    checksum = (sum(p[3] for p in parts), sum(p[4] for p in parts))
    if clamps > MAX_CLAMP_FRACTION * n * cfg.n_steps:
        raise NonPositiveState(f"{clamps} truncation clamps in {n * cfg.n_steps} steps; reduce dt")
    for arr in [states, *integrals.values()]:
        arr.setflags(write=False)
    return PathBatch(dyn.kind, dyn.measure, dyn, z0, cfg.step, rec * cfg.step, states, integrals,
                     clamps, cfg.n_steps, checksum, cfg.seed, scheme)


def _run_chunk(dyn, scheme, z0, cfg, funcs, rec, first, count):
    dim = 2 if dyn.kind == FILTERED_OU else 1
    noise = NoiseSource(cfg.seed, first, count, dim=dim, antithetic=cfg.antithetic)
    dt = cfg.step
    sdt = math.sqrt(dt)
    m = cfg.n_steps
    B, K, s = dyn.B, dyn.K, dyn.vol

    states = np.empty((count, len(rec)))
    acc = {f.name: np.zeros(count) for f in funcs}
    out = {f.name: np.empty((count, len(rec))) for f in funcs}
    dt_funcs = [f for f in funcs if f.kind == "dt"]
    db_funcs = [f for f in funcs if f.kind == "dB"]

    z = np.full(count, z0)
    # the transformed state that the scheme actually propagates
    if dyn.kind == THREE_HALVES:
        x = np.full(count, 1.0 / z0) if scheme == "full_truncation" else np.full(count, 1.0 / math.sqrt(z0))
        floor = 1e-12 / z0
    elif dyn.kind == INVERSE_BESSEL:
        x = np.full(count, 1.0 / z0 ** 2) if scheme == "full_truncation" else np.full(count, 1.0 / z0)
        floor = 1e-12 / z0 ** 2
    else:
        e1 = math.exp(-K * dt)
        mean_lvl = B / K if K != 0 else 0.0
        # Var of the transition noise and its covariance with the Brownian increment
        v = (1.0 - math.exp(-2.0 * K * dt)) / (2.0 * K) if K != 0 else dt
        c1 = (1.0 - e1) / (K * dt) if K != 0 else 1.0
        resid = math.sqrt(max(v - c1 * c1 * dt, 0.0))

    g_prev = {f.name: f.fn(z) for f in dt_funcs}
    clamps = 0
    col = 0
    if rec[0] == 0:
        states[:, 0] = z
        for f in funcs:
            out[f.name][:, 0] = 0.0
        col = 1

    n = 0
    while n < m:
        steps = min(STEP_CHUNK, m - n)
        eps = noise.draw(steps)
        for k in range(steps):
            dw = eps[k, :, 0] * sdt
            for f in db_funcs:
                acc[f.name] += f.fn(z) * dw
            if dyn.kind == THREE_HALVES:
                if scheme == "full_truncation":
                    xp = np.maximum(x, 0.0)
                    x = x + (K + s * s - B * xp) * dt - s * np.sqrt(xp) * dw
                    bad = x <= 0.0
                    if bad.any():
                        clamps += int(bad.sum())
                    z = 1.0 / np.maximum(x, floor)
                else:
                    c = x - 0.5 * s * dw
                    den = 1.0 + 0.5 * B * dt
                    x = (c + np.sqrt(c * c + 2.0 * den * (K + 0.75 * s * s) * dt)) / (2.0 * den)
                    z = 1.0 / (x * x)
            elif dyn.kind == INVERSE_BESSEL:
                if scheme == "full_truncation":
                    xp = np.maximum(x, 0.0)
                    r = np.sqrt(xp)
                    x = x + (2.0 * K + 3.0 * s * s - 2.0 * B * r) * dt - 2.0 * s * r * dw
                    bad = x <= 0.0
                    if bad.any():
                        clamps += int(bad.sum())
                    z = 1.0 / np.sqrt(np.maximum(x, floor))
                else:
                    c = x - B * dt - s * dw
                    x = 0.5 * (c + np.sqrt(c * c + 4.0 * (K + s * s) * dt))
                    z = 1.0 / x
            else:
                z = mean_lvl + (z - mean_lvl) * e1 + s * (c1 * dw + resid * eps[k, :, 1])
            for f in dt_funcs:
                g = f.fn(z)
                acc[f.name] += 0.5 * (g_prev[f.name] + g) * dt
                g_prev[f.name] = g
            n += 1
            if col < len(rec) and n == rec[col]:
                states[:, col] = z
                for f in funcs:
                    out[f.name][:, col] = acc[f.name]
                col += 1
    return states, out, clamps, noise.sum, noise.sumsq


def flow_derivative(model: StateModelSpec, measure: str, batch: PathBatch, t: float | None = None) -> np.ndarray:
    """Pathwise dZ_t/dz from the closed forms, using the batch's drift coefficients."""
    if batch.measure != measure:
        raise UnsupportedMeasurePair(f"batch was simulated under {batch.measure}, not {measure}")
    t = batch.times[-1] if t is None else t
    j = batch.column(t)
    tt = batch.times[j]
    dyn = batch.dyn
    zt = batch.states[:, j]
    z = batch.z0
    if dyn.kind == FILTERED_OU:
        return np.full(batch.n_paths, math.exp(-dyn.K * tt))
    s2 = dyn.vol ** 2
    if dyn.kind == THREE_HALVES:
        if "int_z" not in batch.integrals:
            raise MissingFunctional("flow derivative of the 3/2 model needs int_z")
        iz = batch.integrals["int_z"][:, j]
        return (zt / z) ** 1.5 * np.exp(-0.5 * dyn.B * tt - (0.5 * dyn.K + 0.375 * s2) * iz)
    if "int_z2" not in batch.integrals:
        raise MissingFunctional("flow derivative of the inverse Bessel model needs int_z2")
    iz2 = batch.integrals["int_z2"][:, j]
    return (zt / z) ** 2 * np.exp(-(s2 + dyn.K) * iz2)


def girsanov_weight(model: StateModelSpec, consts: DerivedConstants, batch: PathBatch,
                    from_: str = "P", to: str = "PTilde", t: float | None = None) -> np.ndarray:
    """Density of ``to`` relative to ``from_`` on F_t, per path.

    P -> PTilde: exp(lambda t - int V) phi(Z_t)/phi(z).
    PTilde -> PHat: exp(rate t - int W) psi(Z_t)/psi(z), where W is the
    flow-derivative potential and psi the second eigenfunction.
    """
    if batch.measure != from_:
        raise UnsupportedMeasurePair(f"batch was simulated under {batch.measure}, not {from_}")
    t = batch.times[-1] if t is None else t
    j = batch.column(t)
    tt = batch.times[j]
    zt = batch.states[:, j]
    z = batch.z0
    if (from_, to) == ("P", "PTilde"):
        ep = eigenpair(model, consts)
        c0 = consts.p * consts.r / consts.delta
        c1 = 0.5 * consts.q * consts.mu2 / consts.delta
        name = "int_z" if model.kind == THREE_HALVES else "int_z2"
        if name not in batch.integrals:
            raise MissingFunctional(f"Girsanov weight needs {name}")
        int_v = -(c0 * tt - c1 * batch.integrals[name][:, j])
        return np.exp(ep.lam * tt - int_v + np.log(ep.phi(zt)) - np.log(ep.phi(z)))
    if (from_, to) == ("PTilde", "PHat") and model.kind != FILTERED_OU:
        tilde = batch.dyn
        hat = dynamics(model, consts, "PHat")
        s2 = tilde.vol ** 2
        if model.kind == THREE_HALVES:
            iz = batch.integrals["int_z"][:, j]
            # psi = z^{-1/2}; potential (K/2 + 3 s^2/8) z, eigenvalue B/2
            return np.exp(0.5 * tilde.B * tt - (0.5 * tilde.K + 0.375 * s2) * iz) * np.sqrt(z / zt)
        iz2 = batch.integrals["int_z2"][:, j]
        c = hat.extra["c"]
        log_psi = lambda x: -np.log(x) + c / x
        return np.exp(hat.extra["rate"] * tt - (s2 + tilde.K) * iz2 + log_psi(zt) - log_psi(z))
    raise UnsupportedMeasurePair(f"no weight implemented for {from_} -> {to} in the {model.kind} model")
