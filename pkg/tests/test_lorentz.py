import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from steklov_lab.lorentz import (
    INF,
    AnalyticProfile,
    LZParams,
    double_star_norm,
    embedding_gap,
    holder_pair,
    l1,
    membership_F_d,
    membership_G_d,
    norm_double_star,
    quasi_norm,
)
from steklov_lab.mesh import square_mesh
from steklov_lab.rearrangement import StepProfile, maximal_function, rearrange_values


def three_one():
    return rearrange_values([1.0, 3.0], [2.0, 1.0])


def test_params_validation():
    with pytest.raises(ValueError):
        LZParams(0.5, 2)
    with pytest.raises(ValueError):
        LZParams(2, float("nan"))
    with pytest.raises(ValueError):
        LZParams(2, 2, INF)
    assert LZParams(INF, 1, -2).inv_p == 0.0


def test_two_step_double_star_value():
    # f** = 3 on (0, 1], (2 + t)/t on (1, 3]
    exact = math.sqrt(9.0 + quad(lambda t: ((2 + t) / t) ** 2, 1, 3, epsabs=0, epsrel=1e-13)[0])
    assert exact == pytest.approx(4.249837152331735, rel=1e-14)
    assert norm_double_star(three_one(), LZParams(2, 2)) == pytest.approx(exact, rel=1e-12)


def test_step_quasi_norm_closed_form():
    # (int f*^2 dt)^(1/2) for (p, q) = (2, 2) is the L2 norm
    p = three_one()
    assert quasi_norm(p, LZParams(2, 2)) == pytest.approx(math.sqrt(9 + 2), rel=1e-14)
    assert quasi_norm(p, LZParams(1, 1)) == pytest.approx(5.0, rel=1e-14)
    # weak type: sup t * f*(t) reached at t = 3 with value 1, or t = 1 with value 3
    assert quasi_norm(p, LZParams(1, INF)) == pytest.approx(3.0)


def test_log_weighted_norm_against_quad():
    p = three_one()
    par = LZParams(1.5, 3, 0.7)
    ref = quad(lambda t: (t ** (1 / 1.5) * l1(t) ** 0.7 * p(t)) ** 3 / t, 0, 1, epsrel=1e-13)[0]
    ref += quad(lambda t: (t ** (1 / 1.5) * l1(t) ** 0.7 * p(t)) ** 3 / t, 1, 3, epsrel=1e-13)[0]
    assert quasi_norm(p, par) == pytest.approx(ref ** (1 / 3), rel=1e-10)


def test_endpoint_log_space_diverges_at_zero():
    p = three_one()
    assert quasi_norm(p, LZParams(INF, 1, 0.0)) == INF
    finite = quasi_norm(p, LZParams(INF, 1, -2.0))
    # int_0^1 3 (1 - log t)^-2 dt/t = 3, plus the tail on (1, 3]
    tail = quad(lambda t: (1 + math.log(t)) ** -2 / t, 1, 3)[0]
    assert finite == pytest.approx(3.0 + tail, rel=1e-12)


def test_norm_double_star_needs_p_above_one():
    with pytest.raises(ValueError):
        norm_double_star(three_one(), LZParams(1, 2))


params_st = st.builds(
    LZParams,
    st.sampled_from([1.0, 1.5, 2.0, 3.0, 7.0, INF]),
    st.sampled_from([1.0, 2.0, 2.5, INF]),
    st.sampled_from([-1.5, 0.0, 0.5, 2.0]),
)
profile_st = st.lists(
    st.tuples(st.floats(0.0, 20.0), st.floats(0.05, 2.0)), min_size=1, max_size=12
).map(lambda pairs: rearrange_values(*map(np.array, zip(*pairs))))


@settings(max_examples=100, deadline=None)
@given(profile_st, params_st, st.floats(0.01, 100.0))
def test_homogeneity(prof, par, c):
    base = quasi_norm(prof, par)
    scaled = quasi_norm(StepProfile(prof.breakpoints, c * prof.levels), par)
    if base == INF:
        assert scaled == INF
    else:
        assert scaled == pytest.approx(c * base, rel=1e-12, abs=1e-300)


@settings(max_examples=100, deadline=None)
@given(profile_st, st.sampled_from([(4.0, 6.0, 2.0), (3.0, 3.0, 1.5), (6.0, INF, 3.0), (5.0, 2.0, 2.0)]))
def test_power_identity_on_steps(prof, case):
    p, q, r = case
    lhs = quasi_norm(StepProfile(prof.breakpoints, prof.levels ** r), LZParams(p / r, q / r))
    rhs = quasi_norm(prof, LZParams(p, q)) ** r
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-300)


@settings(max_examples=100, deadline=None)
@given(profile_st, params_st)
def test_double_star_dominates(prof, par):
    strong = double_star_norm(prof, par)
    weak = quasi_norm(prof, par)
    assert strong >= weak * (1 - 1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([(2.0, 2.0, 3.0, 4.0), (4.0, INF, 4.0, 2.0), (3.0, 2.0, 2.5, 2.0)]))
def test_holder_pairs(seed, split):
    rng = np.random.default_rng(seed)
    m = square_mesh(int(rng.integers(2, 9)))
    f = m.boundary_function(rng.standard_normal(m.n_edges) * rng.exponential(size=m.n_edges) ** 2)
    g = m.boundary_function(rng.standard_normal(m.n_edges))
    lhs, rhs = holder_pair(f, g, split)
    assert lhs <= rhs * (1 + 1e-12)


def test_holder_rejects_bad_exponents():
    m = square_mesh(3)
    f = m.constant(1.0)
    with pytest.raises(ValueError):
        holder_pair(f, f, (1.0, 2.0, 2.0, 2.0))
    with pytest.raises(ValueError):
        holder_pair(f, f, (1.5, 2.0, 1.5, 2.0))  # combined p = 0.75


def test_embedding_gap_hypotheses():
    p = three_one()
    weak, strong = embedding_gap(p, LZParams(3, 2), LZParams(2, 1))
    assert weak < INF and strong < INF
    embedding_gap(p, LZParams(2, 1, 1.0), LZParams(2, 3, 0.5))
    with pytest.raises(ValueError):
        embedding_gap(p, LZParams(2, 3, 0.0), LZParams(2, 1, 0.0))


def power_law(beta, A=1.0, T=2.0, log_power=0.0):
    return AnalyticProfile(lambda t: A * t ** -beta * np.abs(np.log(t)) ** log_power, T, A, beta,
                           log_power, name="test", power_law=log_power == 0)


def test_analytic_maximal_of_power_law():
    f = power_law(0.25)
    fss = f.maximal()
    assert fss(0.5) == pytest.approx(f(0.5) / 0.75, rel=1e-14)
    with pytest.raises(ValueError):
        power_law(1.0).maximal()


def test_analytic_norm_divergence_and_value():
    f = power_law(0.5, T=1.0)
    assert quasi_norm(f, LZParams(2, 2)) == INF
    assert quasi_norm(f, LZParams(2, INF)) == pytest.approx(1.0, rel=1e-12)
    # (int_0^1 t^{2/3 - 1/2 * ...}) : p = 1.5, q = 1 -> int t^{2/3 - 1/2 - 1} dt = 6
    assert quasi_norm(f, LZParams(1.5, 1)) == pytest.approx(6.0, rel=1e-9)


def test_limit_at_zero_cases():
    f = power_law(0.5)
    assert f.limit_at_zero(0.5) == 1.0
    assert f.limit_at_zero(0.6) == 0.0
    assert f.limit_at_zero(0.4) == INF
    assert f.limit_at_zero(0.5, 2.0) == INF
    assert power_law(0.5, log_power=-3).limit_at_zero(0.5, 2.0) == 0.0


def test_membership_analytic_verdicts():
    f = power_law(0.5)
    assert membership_F_d(f, 2).verdict == "non-member"
    assert membership_F_d(f, 1.5).verdict == "member"
    assert membership_G_d(power_law(0.5), 2).verdict == "non-member"
    assert membership_G_d(power_law(0.5, log_power=-2.5), 2).verdict == "member"
    with pytest.raises(ValueError):
        membership_F_d(f, 1.0)


def test_membership_grid_on_bounded_step():
    rep = membership_F_d(three_one(), 2.0)
    assert rep.method == "grid"
    assert rep.verdict == "member"
    assert rep.limit_at_T == pytest.approx((3 * (1 - 2.0 ** -60)) ** 0.5 * 1.0, rel=1e-12)
    d = rep.to_dict()
    assert d["class"] == "F_2" and len(d["samples"]) == 61


def test_membership_grid_sees_growth():
    # dyadic steps following t^{-1/2}: t^{1/2} f*(t) stays near 1 on every scale
    b = np.concatenate([[0.0], 2.0 ** np.arange(-70, 1)])
    prof = StepProfile(b, b[1:] ** -0.5)
    assert membership_F_d(prof, 2.0).verdict == "non-member"
    assert membership_F_d(prof, 1.2).verdict == "member"
    # t^{1/6} decay is too slow to reach the tolerance within the grid
    assert membership_F_d(prof, 1.5).verdict == "inconclusive"


def test_maximal_profile_norm_matches_step_formula():
    prof = three_one()
    mp = maximal_function(prof)
    for par in (LZParams(2, 1), LZParams(3, 4, 0.5), LZParams(2, INF, -0.5)):
        assert quasi_norm(mp, par) == pytest.approx(double_star_norm(prof, par), rel=1e-12)
