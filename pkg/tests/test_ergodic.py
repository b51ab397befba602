import math

import numpy as np
import pytest

from fundsep.ergodic import closed_form_log_norm, invariant_density, positive_recurrence_check
from fundsep.errors import InvalidSpec
from fundsep.model import FILTERED_OU, dynamics


@pytest.mark.parametrize("measure", ["PTilde", "PHat"])
def test_normaliser_matches_gamma_function(model, consts, measure):
    if model.kind == FILTERED_OU:
        pytest.skip("Gaussian law")
    dens = invariant_density(model, consts, measure)
    assert dens.log_norm == pytest.approx(closed_form_log_norm(dens), abs=1e-10)
    assert dens.expect(lambda z: 1.0) == pytest.approx(1.0, abs=1e-10)


def test_stationary_mean(model, consts):
    dens = invariant_density(model, consts)
    if model.kind == FILTERED_OU:
        d = dynamics(model, consts, "PTilde")
        assert dens.mean == pytest.approx(d.B / d.K)
        assert dens.expect(lambda z: z) == pytest.approx(dens.mean, abs=1e-10)
        assert dens.expect(lambda z: (z - dens.mean) ** 2) == pytest.approx(dens.var, rel=1e-9)
    else:
        assert dens.expect(lambda z: z) == pytest.approx(dens.rate / (dens.shape - 1.0), rel=1e-9)


def test_base_measure_rejected(model, consts):
    with pytest.raises(InvalidSpec):
        invariant_density(model, consts, "P")


def test_cir_with_feller_is_recurrent():
    res = positive_recurrence_check(lambda x: 2.0 * (1.0 - x), lambda x: 0.5 * math.sqrt(x), (0.0, math.inf), 1.0)
    assert res.recurrent


def test_drifting_brownian_motion_is_transient():
    res = positive_recurrence_check(lambda x: 1.0, lambda x: 1.0, (-math.inf, math.inf), 0.0)
    assert not res.recurrent
    assert res.integrals[1] < 10.0


def test_brownian_motion_is_not_positive_recurrent():
    res = positive_recurrence_check(lambda x: 0.0, lambda x: 1.0, (-math.inf, math.inf), 0.0)
    assert not res.recurrent
    assert res.integrals[2] > res.threshold


def test_tilted_state_is_recurrent(model, consts):
    d = dynamics(model, consts, "PTilde")
    dom = (-math.inf, math.inf) if model.kind == FILTERED_OU else (0.0, math.inf)
    c = 0.0 if model.kind == FILTERED_OU else 1.0
    assert positive_recurrence_check(d.drift, lambda z: float(d.diffusion(z)), dom, c).recurrent


def test_check_point_inside_domain():
    with pytest.raises(InvalidSpec):
        positive_recurrence_check(lambda x: -x, lambda x: 1.0, (0.0, 1.0), 2.0)
