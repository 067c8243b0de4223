import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pgce.errors import ConfigError, DomainError
from pgce.losses import DirectLossKind, SurrogateKind, direct_loss, surrogate, surrogate_domain

finite = st.floats(min_value=-50, max_value=50, allow_nan=False)


@pytest.mark.parametrize("kind", list(SurrogateKind))
def test_phi_zero_is_one(kind):
    assert surrogate(kind, 0.0) == 1.0


def test_surrogate_examples():
    assert surrogate("hinge", -2.0) == 0.0
    assert surrogate("exponential", 1.0) == pytest.approx(math.e)
    assert surrogate("square", -3.0) == 1.0
    assert surrogate("square", 1.0) == 4.0
    assert surrogate("perplexity", math.e - 1) == pytest.approx(2.0)
    assert surrogate("logit", 1.0) == pytest.approx(math.log2(1 + math.e))
    assert surrogate("logit", 800.0) == pytest.approx(800 / math.log(2))
    assert surrogate("exponential", 1000.0) == math.inf


def test_perplexity_domain():
    assert surrogate_domain("perplexity") == -1.0
    assert surrogate_domain("hinge") == -math.inf
    for u in (-1.0, -2.0):
        with pytest.raises(DomainError):
            surrogate("perplexity", u)
    with pytest.raises(DomainError):
        surrogate("hinge", math.nan)


@pytest.mark.parametrize("kind", list(SurrogateKind))
@given(u1=finite, u2=finite)
def test_monotone(kind, u1, u2):
    lo = surrogate_domain(kind)
    u1, u2 = sorted((u1, u2))
    if u1 <= lo:
        return
    assert surrogate(kind, u1) <= surrogate(kind, u2)


@pytest.mark.parametrize("kind", list(SurrogateKind))
@given(u=st.floats(min_value=0, max_value=50))
def test_dominates_indicator(kind, u):
    assert surrogate(kind, u) >= 1.0


@pytest.mark.parametrize("kind", [k for k in SurrogateKind if k is not SurrogateKind.PERPLEXITY])
@given(u1=finite, u2=finite)
def test_midpoint_convex(kind, u1, u2):
    lhs = surrogate(kind, 0.5 * (u1 + u2))
    rhs = 0.5 * (surrogate(kind, u1) + surrogate(kind, u2))
    assert lhs <= rhs * (1 + 1e-12) + 1e-12


def test_perplexity_is_strictly_concave():
    # 1 + log(1 + u) is concave on its domain, so midpoints lie above chords
    u1, u2 = 0.0, 3.0
    assert surrogate("perplexity", 1.5) > 0.5 * (surrogate("perplexity", u1) + surrogate("perplexity", u2))


def test_direct_losses():
    assert direct_loss("mse", 1.0, 0.5) == 0.25
    assert direct_loss("mae", -1.0, 0.5) == 1.5
    assert direct_loss("huber", 0.5, 0.0) == 0.125
    assert direct_loss("huber", 2.0, 0.0) == 1.5
    assert direct_loss("huber", 3.0, 0.0, delta=2.0) == 4.0
    with pytest.raises(ConfigError):
        direct_loss("huber", 1.0, 0.0, delta=0.0)


def test_cross_entropy_direct_loss():
    for yhat in (-0.999, 0.0, 0.7, 1.0):
        assert direct_loss(DirectLossKind.CROSS_ENTROPY, -1.0, yhat) == 0.0
    assert direct_loss("cross_entropy", 1.0, 1.0) == 0.0
    assert direct_loss("cross_entropy", 1.0, 0.0) == pytest.approx(math.log(2))
    with pytest.raises(DomainError):
        direct_loss("cross_entropy", 1.0, -1.0)
    with pytest.raises(DomainError):
        direct_loss("cross_entropy", 0.5, 0.0)
    with pytest.raises(DomainError):
        direct_loss("cross_entropy", 1.0, 1.5)


def test_huber_continuity_at_knee():
    for delta in (0.5, 1.0, 3.0):
        e = 1e-9
        v = [direct_loss("huber", d, 0.0, delta) for d in (delta - e, delta, delta + e)]
        assert abs(v[2] - v[0]) < 1e-8
        slope_in = (v[1] - v[0]) / e
        slope_out = (v[2] - v[1]) / e
        assert abs(slope_in - slope_out) < 1e-5
        np.testing.assert_allclose(slope_in, delta, rtol=1e-5)
