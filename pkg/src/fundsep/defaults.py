"""Default market and state-model parameter sets used by the CLI, demos and tests."""
from __future__ import annotations

from .model import FILTERED_OU, INVERSE_BESSEL, THREE_HALVES, PreferenceMarketSpec, StateModelSpec, canonical_kind

__all__ = ["default_market", "default_model", "DEFAULT_MODEL_PARAMS"]

DEFAULT_MARKET = dict(p=-1.0, r=0.02, mu=[0.5, 0.4], Sigma=[[0.2, 0.0], [0.06, 0.25]], rho=[-0.5, -0.3])

# invB uses b=2, a=2 so that the doubly tilted law mixes quickly relative to
# lambda_hat; at b=a=1 the decay of f_z/f is still pre-asymptotic on t in [1, 6]
DEFAULT_MODEL_PARAMS = {
    THREE_HALVES: dict(b=1.0, a=1.0, sigma=0.5),
    INVERSE_BESSEL: dict(b=2.0, a=2.0, sigma=0.5),
    FILTERED_OU: dict(b=0.5, a=1.0, sigma=0.5),
}


def default_market() -> PreferenceMarketSpec:
    return PreferenceMarketSpec(**DEFAULT_MARKET)


def default_model(kind: str = THREE_HALVES) -> StateModelSpec:
    kind = canonical_kind(kind)
    return StateModelSpec(kind, **DEFAULT_MODEL_PARAMS[kind])
