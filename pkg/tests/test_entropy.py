import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lvpp.entropy import (
    EXP_CLAMP,
    DomainError,
    Kind,
    LegendreMap,
    bregman,
    eval_R,
    feasibility_margin,
    grad_R,
    grad_R_star,
    jac_grad_R_star,
)

# -- closed-form examples ---------------------------------------------------


def test_eval_R_examples():
    assert eval_R(LegendreMap.shannon_lower(0.0), None, [1.0]) == pytest.approx(-1.0, abs=1e-15)
    assert eval_R(LegendreMap.fermi_dirac(0.0, 1.0), None, [0.5]) == pytest.approx(-math.log(2), abs=1e-15)
    assert eval_R(LegendreMap.hellinger(1.0, 2), None, [0.0, 0.0]) == pytest.approx(-1.0)


def test_eval_R_outside_domain_is_infinite():
    assert eval_R(LegendreMap.shannon_lower(0.0), None, [-0.1]) == np.inf
    assert eval_R(LegendreMap.shannon_upper(1.0), None, [1.1]) == np.inf
    assert eval_R(LegendreMap.hellinger(1.0, 2), None, [1.0, 1.0]) == np.inf
    assert eval_R(LegendreMap.simplex(3), None, [0.5, 0.6, -0.1]) == np.inf


def test_eval_R_boundary_uses_zero_log_zero():
    assert eval_R(LegendreMap.shannon_lower(0.0), None, [0.0]) == 0.0
    assert eval_R(LegendreMap.fermi_dirac(0.0, 1.0), None, [1.0]) == 0.0
    assert eval_R(LegendreMap.simplex(3), None, [1.0, 0.0, 0.0]) == 0.0


def test_grad_R_examples():
    assert grad_R(LegendreMap.shannon_lower(0.0), None, [1.0])[0] == 0.0
    assert grad_R(LegendreMap.fermi_dirac(0.0, 1.0), None, [0.5])[0] == 0.0
    np.testing.assert_allclose(grad_R(LegendreMap.hellinger(1.0, 2), None, [0.6, 0.0]), [0.75, 0.0], atol=1e-15)


@pytest.mark.parametrize(
    "lmap, a",
    [
        (LegendreMap.shannon_lower(0.0), [0.0]),
        (LegendreMap.shannon_upper(1.0), [1.0]),
        (LegendreMap.fermi_dirac(0.0, 1.0), [1.0]),
        (LegendreMap.hellinger(1.0, 2), [0.6, 0.8]),
        (LegendreMap.simplex(2), [1.0, 0.0]),
    ],
)
def test_grad_R_on_boundary_raises(lmap, a):
    with pytest.raises(DomainError):
        grad_R(lmap, None, a)


def test_grad_R_star_examples():
    assert grad_R_star(LegendreMap.shannon_lower(0.0), None, [0.0])[0] == 1.0
    assert grad_R_star(LegendreMap.shannon_upper(2.0), None, [0.0])[0] == 1.0
    assert grad_R_star(LegendreMap.fermi_dirac(0.0, 1.0), None, [0.0])[0] == 0.5
    np.testing.assert_allclose(
        grad_R_star(LegendreMap.hellinger(1.0, 2), None, [3.0, 4.0]),
        np.array([3.0, 4.0]) / math.sqrt(26.0),
        rtol=1e-15,
    )
    np.testing.assert_allclose(grad_R_star(LegendreMap.simplex(4), None, np.zeros(4)), 0.25, rtol=0)


def test_jacobian_examples():
    np.testing.assert_allclose(jac_grad_R_star(LegendreMap.shannon_lower(0.0), None, [0.0]), [[1.0]])
    np.testing.assert_allclose(jac_grad_R_star(LegendreMap.fermi_dirac(0.0, 1.0), None, [0.0]), [[0.25]])
    np.testing.assert_allclose(jac_grad_R_star(LegendreMap.hellinger(1.0, 2), None, [0.0, 0.0]), np.eye(2))


def test_bregman_examples():
    assert bregman(LegendreMap.shannon_lower(0.0), None, [1.0], [math.e]) == pytest.approx(math.e - 2, rel=1e-14)
    assert bregman(LegendreMap.hellinger(1.0, 2), None, [0.0, 0.0], [0.6, 0.0]) == pytest.approx(0.25, rel=1e-14)
    assert bregman(LegendreMap.fermi_dirac(0.0, 1.0), None, [0.3], [0.3]) == 0.0


def test_bregman_first_argument_outside_domain():
    assert bregman(LegendreMap.shannon_lower(0.0), None, [-1.0], [1.0]) == np.inf


def test_dimension_mismatch_raises():
    with pytest.raises(ValueError):
        grad_R_star(LegendreMap.hellinger(1.0, 2), None, [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        eval_R(LegendreMap.simplex(3), None, [0.5, 0.5])
    with pytest.raises(ValueError):
        jac_grad_R_star(LegendreMap.shannon_lower(0.0), None, 1.0)


def test_invalid_parameters():
    with pytest.raises(DomainError):
        grad_R_star(LegendreMap.fermi_dirac(1.0, 0.0), None, [0.0])
    with pytest.raises(DomainError):
        grad_R_star(LegendreMap.hellinger(0.0, 2), None, [0.0, 0.0])
    with pytest.raises(ValueError):
        LegendreMap(Kind.SHANNON_LOWER)
    with pytest.raises(ValueError):
        LegendreMap(Kind.FERMI_DIRAC, phi_lower=0.0, phi_upper=1.0, dim=2)


def test_point_dependent_bounds():
    pts = np.array([[0.0, 0.0], [1.0, 1.0]])
    lmap = LegendreMap.hellinger(lambda p: 0.1 + 0.2 * p[..., 0] + 0.4 * p[..., 1], 2)
    out = grad_R_star(lmap, pts, np.array([[100.0, 0.0], [0.0, 100.0]]))
    np.testing.assert_allclose(np.linalg.norm(out, axis=1), [0.1, 0.7], rtol=1e-4)
    with pytest.raises(ValueError):
        grad_R_star(lmap, None, [1.0, 0.0])


def test_saturation_keeps_outputs_finite():
    for lmap in _maps():
        big = np.full(lmap.dim, 1e6)
        for psi in (big, -big):
            assert np.all(np.isfinite(grad_R_star(lmap, None, psi)))
            assert np.all(np.isfinite(jac_grad_R_star(lmap, None, psi)))
    assert EXP_CLAMP == 700.0


# -- randomized properties ----------------------------------------------------


def _maps():
    return [
        LegendreMap.shannon_lower(-0.5),
        LegendreMap.shannon_upper(0.7),
        LegendreMap.fermi_dirac(-1.0, 2.0),
        LegendreMap.hellinger(1.5, 2),
        LegendreMap.hellinger(0.3, 1),
        LegendreMap.simplex(4),
    ]


MAPS = _maps()
map_index = st.integers(0, len(MAPS) - 1)


def _psi(lmap, bound):
    return arrays(np.float64, lmap.dim, elements=st.floats(-bound, bound))


@st.composite
def map_and_psi(draw, bound=10.0):
    lmap = MAPS[draw(map_index)]
    return lmap, draw(_psi(lmap, bound))


@settings(max_examples=100, deadline=None)
@given(map_and_psi(bound=10.0))
def test_round_trip_unsaturated(sample):
    lmap, psi = sample
    psi = np.clip(psi, -5.0, 5.0)
    back = grad_R(lmap, None, grad_R_star(lmap, None, psi))
    if lmap.kind is Kind.SIMPLEX:
        psi = psi - psi.mean()
    np.testing.assert_allclose(back, psi, rtol=1e-12, atol=1e-12)


@settings(max_examples=300, deadline=None)
@given(map_and_psi(bound=30.0))
def test_strict_feasibility(sample):
    lmap, psi = sample
    a = grad_R_star(lmap, None, psi)
    assert np.all(feasibility_margin(lmap, None, a) > 0)
    if lmap.kind is Kind.SIMPLEX:
        assert abs(a.sum() - 1.0) <= 1e-14


@settings(max_examples=200, deadline=None)
@given(map_and_psi(bound=1e300))
def test_feasibility_never_violated(sample):
    lmap, psi = sample
    a = grad_R_star(lmap, None, psi)
    assert np.all(np.isfinite(a))
    assert np.all(feasibility_margin(lmap, None, a) >= 0)


def _central(f, x, h):
    cols = []
    for j in range(x.size):
        e = np.zeros(x.size)
        e[j] = h
        cols.append((f(x + e) - f(x - e)) / (2 * h))
    return np.column_stack(cols)


def _richardson_jacobian(f, x, h=1e-3):
    """Central differences with one Richardson step: O(h^4) truncation and
    roughly 1e-13 rounding, so the comparison is limited by the Jacobian
    rather than by cancellation in the difference quotient."""
    return (4 * _central(f, x, h / 2) - _central(f, x, h)) / 3


@settings(max_examples=100, deadline=None)
@given(map_and_psi(bound=10.0))
def test_jacobian_matches_finite_differences(sample):
    lmap, psi = sample
    J = jac_grad_R_star(lmap, None, psi)
    Jfd = _richardson_jacobian(lambda p: grad_R_star(lmap, None, p), psi)
    scale = max(np.abs(J).max(), 1e-300)
    # the difference quotient cannot resolve entries below its rounding floor
    floor = 4 * np.finfo(float).eps * np.abs(grad_R_star(lmap, None, psi)).max() / 1e-3
    assert np.abs(J - Jfd).max() <= 1e-6 * scale + floor
    np.testing.assert_allclose(J, J.T, atol=1e-15)
    assert np.linalg.eigvalsh(J).min() >= -1e-12 * scale


@st.composite
def feasible_pair(draw):
    lmap = MAPS[draw(map_index)]
    psi_a = draw(_psi(lmap, 8.0))
    psi_b = draw(_psi(lmap, 8.0))
    return lmap, grad_R_star(lmap, None, psi_a), grad_R_star(lmap, None, psi_b)


@settings(max_examples=1000, deadline=None)
@given(feasible_pair())
def test_bregman_nonnegative(sample):
    lmap, a, b = sample
    d = float(bregman(lmap, None, a, b))
    assert d >= 0.0
    if d == 0.0:
        assert np.linalg.norm(a - b) <= 1e-12


@settings(max_examples=300, deadline=None)
@given(feasible_pair())
def test_bregman_zero_on_diagonal(sample):
    lmap, a, _ = sample
    assert float(bregman(lmap, None, a, a)) == 0.0


@settings(max_examples=300, deadline=None)
@given(st.data())
def test_monotone(data):
    lmap = MAPS[data.draw(map_index)]
    psi = data.draw(_psi(lmap, 10.0))
    chi = data.draw(_psi(lmap, 10.0))
    gap = (grad_R_star(lmap, None, psi) - grad_R_star(lmap, None, chi)) @ (psi - chi)
    assert gap >= -1e-12


def test_vectorised_over_points(rng):
    lmap = LegendreMap.fermi_dirac(lambda p: p[..., 0] - 1.0, lambda p: p[..., 0] + 1.0)
    pts = rng.uniform(size=(7, 2))
    psi = rng.normal(size=(7, 1))
    batch = grad_R_star(lmap, pts, psi)
    single = np.array([grad_R_star(lmap, pts[i], psi[i]) for i in range(7)])
    np.testing.assert_allclose(batch, single, rtol=1e-15)
