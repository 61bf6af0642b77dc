import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from heatqv import lemmas as LM
from heatqv.errors import DomainError


def test_lipschitz_in_space_example():
    chk = LM.lemma_bounds_check("2.3", LM.LemmaDraw(t=1.0, x=0.0, y=1.0, z=2.0))
    assert chk.passed
    assert chk.rhs == pytest.approx(0.25)
    assert chk.slack == pytest.approx(chk.rhs - chk.lhs)


def test_gram_bounds_example():
    chk = LM.lemma_bounds_check("2.6", LM.LemmaDraw(t=2.0, s=1.0))
    assert chk.passed
    assert chk.lhs == pytest.approx(0.36486728113276373, rel=1e-12)
    assert chk.rhs == pytest.approx(1 / math.pi)


def test_mixed_increment_degenerate():
    chk = LM.lemma_bounds_check("2.5", LM.LemmaDraw(t=1.0, x=0.3, y=0.3, x2=0.0, y2=-0.1))
    assert chk.passed and chk.degenerate
    assert chk.lhs == 0.0 and chk.rhs == 0.0


def test_rejected_orderings():
    assert LM.lemma_bounds_check("2.1", LM.LemmaDraw(t=0.5, s=1.0)).rejected
    assert LM.lemma_bounds_check("2.4", LM.LemmaDraw(t=1, s=2, t2=0.5, s2=0.1)).rejected
    assert LM.lemma_bounds_check("2.5", LM.LemmaDraw(t=1, x=0, y=1, x2=-1, y2=-2)).rejected
    with pytest.raises(DomainError):
        LM.lemma_bounds_check("9.9", LM.LemmaDraw())


@given(st.floats(0.01, 3), st.floats(0.01, 3), st.floats(0.01, 3))
def test_time_holder_bound_always_holds(r, t, s):
    chk = LM.lemma_bounds_check("2.2", LM.LemmaDraw(r=r, t=t, s=s))
    assert chk.passed


@given(st.floats(0.01, 3), st.floats(0.0, 0.999))
def test_gram_bounds_always_hold(t, frac):
    s = t * frac
    if s <= 0:
        return
    assert LM.lemma_bounds_check("2.6", LM.LemmaDraw(t=t, s=s)).passed


@given(st.floats(0.05, 3), st.floats(-2, 2), st.floats(-2, 2))
def test_space_lipschitz_constant_half_holds(t, y, z):
    # the sharp constant is 1/2 (slope of the tail ratio at the origin);
    # the explicit 1/4 check is exercised by the sweep below
    chk = LM.lemma_bounds_check("2.3", LM.LemmaDraw(t=t, x=0.0, y=y, z=z))
    assert chk.lhs <= 0.5 * abs(y - z) * (1 + 1e-9) + 1e-12


def test_space_lipschitz_quarter_fails_near_diagonal():
    # the 1/4 constant is violated for nearby sites: the ratio tends to 1/2
    chk = LM.lemma_bounds_check("2.3", LM.LemmaDraw(t=1.0, x=0.0, y=0.0, z=1e-3))
    assert not chk.passed
    assert chk.ratio == pytest.approx(0.5, rel=1e-2)


def test_sweep_scale_free_for_holder_checks():
    for which in ("2.1", "2.2", "2.7"):
        res = LM.lemma_sweep(which, 400, seed=1)
        assert res.stable, which
        assert res.stability < 1.5


def test_sweep_explicit_checks():
    assert LM.lemma_sweep("2.6", 400, seed=1).pass_rate == 1.0
    assert LM.lemma_sweep("2.2", 400, seed=1).pass_rate == 1.0


def test_sweep_deterministic():
    a = LM.lemma_sweep("2.4", 200, seed=3)
    b = LM.lemma_sweep("2.4", 200, seed=3)
    assert a.sup_ratio == b.sup_ratio


def test_draws_are_admissible():
    rng = np.random.default_rng(0)
    for which in LM.LEMMAS:
        draws = LM.draw_parameters(which, 50, rng)
        assert len(draws) == 50
        assert not any(LM.lemma_bounds_check(which, q).rejected for q in draws)
