import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fd_helpers import directional_fd, rel_err, smooth_point
from steklov_lab.fem import (
    Field,
    PerturbationSpec,
    boundary_G,
    default_epsilon,
    dual_norm,
    energy_J,
    fem_space,
    grad_G,
    grad_J,
    growth_ratio,
    h1_norm,
    hess_G,
    hess_J,
    jacobian_F,
    lp_volume,
    perturbation_F,
    potential_F,
    residual,
    residual_jacobian,
    sup_norm,
    w1p_norm,
    zero_perturbation,
)
from steklov_lab.mesh import box_mesh, build_mesh, square_mesh
from steklov_lab.weights import perturbation_weight


def F(c, m):
    return Field(c, m)


@pytest.fixture(scope="module")
def mesh():
    return box_mesh(0.25, 6)


@pytest.fixture(scope="module")
def weight(mesh):
    x = mesh.edge_midpoints[:, 0]
    return mesh.boundary_function(np.cos(7 * x) - 0.4)


def test_field_validation(mesh):
    with pytest.raises(ValueError):
        Field(np.zeros(3), mesh)
    with pytest.raises(ValueError):
        Field(np.full(mesh.n_vertices, np.nan), mesh)
    a = Field(np.ones(mesh.n_vertices), mesh)
    assert np.all((2 * a - a).coefficients == 1.0)


def test_space_is_cached(mesh):
    assert fem_space(mesh) is fem_space(mesh)


def test_stiffness_kills_constants_and_mass_sums_to_area(mesh):
    S = fem_space(mesh)
    one = np.ones(mesh.n_vertices)
    assert np.abs(S.K @ one).max() < 1e-12
    assert one @ (S.M @ one) == pytest.approx(mesh.areas.sum(), rel=1e-13)


def test_energy_of_linear_field():
    m = square_mesh(5)
    x, y = m.vertices.T
    for p in (1.5, 2.0, 3.0):
        assert energy_J(F(3 * x - 4 * y, m), p) == pytest.approx(5.0 ** p, rel=1e-12)


def test_p2_boundary_integral_closed_form():
    m = build_mesh([[0, 0], [2, 0], [0, 1]], [[0, 1, 2]])
    a, b = 0.7, -1.3
    c = np.array([a, b, 0.0])
    i = next(k for k, e in enumerate(m.boundary_edges) if set(e) == {0, 1})
    vals = np.zeros(3)
    vals[i] = 1.5  # weight only on the edge of length 2
    g = m.boundary_function(vals)
    assert boundary_G(F(c, m), g, 2.0) == pytest.approx(1.5 * 2 * (a * a + a * b + b * b) / 3, rel=1e-14)
    assert boundary_G(F(c, m), g, 2.0) == pytest.approx(c @ (fem_space(m).boundary_mass(g) @ c), rel=1e-14)


def test_boundary_G_of_constant_is_weight_integral(mesh, weight):
    one = F(np.ones(mesh.n_vertices), mesh)
    from steklov_lab.mesh import boundary_integral

    for p in (1.5, 2.0, 2.5):
        assert boundary_G(one, weight, p) == pytest.approx(boundary_integral(weight), rel=1e-13)


def test_lp_volume_exact_for_p2(mesh):
    c = smooth_point(mesh, np.random.default_rng(1))
    S = fem_space(mesh)
    assert lp_volume(F(c, mesh), 2.0) == pytest.approx(c @ (S.M @ c), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5).filter(lambda t: abs(t) > 1e-3), st.sampled_from([1.5, 2.0, 3.0]), st.integers(0, 1000))
def test_homogeneity(t, p, seed):
    m = box_mesh(0.25, 4)
    rng = np.random.default_rng(seed)
    phi = F(rng.standard_normal(m.n_vertices), m)
    g = m.boundary_function(rng.standard_normal(m.n_edges))
    assert energy_J(phi * t, p) == pytest.approx(abs(t) ** p * energy_J(phi, p), rel=1e-11)
    assert boundary_G(phi * t, g, p) == pytest.approx(abs(t) ** p * boundary_G(phi, g, p), rel=1e-10, abs=1e-12)
    spec = PerturbationSpec.default(m.constant(1.0), p)
    e = spec.gamma - 1
    assert np.allclose(perturbation_F(phi * t, spec), np.sign(t) * abs(t) ** e * perturbation_F(phi, spec), rtol=1e-11, atol=1e-13)


def test_perturbation_spec_bounds(mesh):
    f = mesh.constant(1.0)
    with pytest.raises(ValueError):
        PerturbationSpec(2.0, f, 2.0)
    with pytest.raises(ValueError):
        PerturbationSpec(3.5, f, 1.5)  # above p / (2 - p) = 3
    assert PerturbationSpec.default(f, 1.5).gamma == 2.5
    assert zero_perturbation(mesh, 2.0).f_weight.values.max() == 0.0


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_derivatives_match_finite_differences(mesh, weight, p):
    rng = np.random.default_rng(7)
    spec = PerturbationSpec.default(perturbation_weight(weight), p)
    for _ in range(5):
        x = smooth_point(mesh, rng) * rng.choice([-1, 1])
        v = rng.standard_normal(mesh.n_vertices)
        eps = 0.0
        checks = [
            (lambda c: energy_J(F(c, mesh), p, eps), lambda c: grad_J(F(c, mesh), p, eps) @ v),
            (lambda c: boundary_G(F(c, mesh), weight, p), lambda c: grad_G(F(c, mesh), weight, p) @ v),
            (lambda c: potential_F(F(c, mesh), spec), lambda c: perturbation_F(F(c, mesh), spec) @ v),
            (lambda c: grad_J(F(c, mesh), p, eps), lambda c: hess_J(F(c, mesh), p, eps) @ v),
            (lambda c: grad_G(F(c, mesh), weight, p), lambda c: hess_G(F(c, mesh), weight, p) @ v),
            (lambda c: perturbation_F(F(c, mesh), spec), lambda c: jacobian_F(F(c, mesh), spec) @ v),
        ]
        for fun, deriv in checks:
            assert rel_err(directional_fd(fun, x, v), deriv(x)) < 1e-5


def test_regularized_energy_derivatives(mesh):
    rng = np.random.default_rng(3)
    x = rng.standard_normal(mesh.n_vertices)
    v = rng.standard_normal(mesh.n_vertices)
    eps = 0.3
    fd = directional_fd(lambda c: grad_J(F(c, mesh), 1.5, eps), x, v)
    assert rel_err(fd, hess_J(F(x, mesh), 1.5, eps) @ v) < 1e-6
    assert default_epsilon(F(x, mesh)) > 0


def test_residual_jacobian_blocks(mesh, weight):
    rng = np.random.default_rng(11)
    spec = PerturbationSpec(3.0, perturbation_weight(weight), 2.0)
    x = smooth_point(mesh, rng)
    v = rng.standard_normal(mesh.n_vertices)
    lam = 0.8
    Jphi, dlam = residual_jacobian(lam, F(x, mesh), weight, spec, 2.0)
    fd_phi = directional_fd(lambda c: residual(lam, F(c, mesh), weight, spec, 2.0), x, v)
    assert rel_err(fd_phi, Jphi @ v) < 1e-6
    h = 1e-6
    fd_lam = (residual(lam + h, F(x, mesh), weight, spec, 2.0) - residual(lam - h, F(x, mesh), weight, spec, 2.0)) / (2 * h)
    assert rel_err(fd_lam, dlam) < 1e-7


def test_residual_is_weak_form(mesh, weight):
    # tested against phi itself: J - lam (G + gamma * potential)
    rng = np.random.default_rng(5)
    spec = PerturbationSpec(3.0, perturbation_weight(weight), 2.0)
    phi = F(smooth_point(mesh, rng), mesh)
    lam = 1.3
    r = residual(lam, phi, weight, spec, 2.0)
    expect = energy_J(phi, 2.0) - lam * (boundary_G(phi, weight, 2.0) + spec.gamma * potential_F(phi, spec))
    assert r @ phi.coefficients == pytest.approx(expect, rel=1e-12)


def test_riesz_identity(mesh):
    c = np.random.default_rng(2).standard_normal(mesh.n_vertices)
    S = fem_space(mesh)
    assert dual_norm(S.W @ c, mesh) == pytest.approx(h1_norm(F(c, mesh)), rel=1e-10)
    assert dual_norm(np.zeros(mesh.n_vertices), mesh) == 0.0


def test_norms(mesh):
    c = np.full(mesh.n_vertices, -2.0)
    phi = F(c, mesh)
    area = mesh.areas.sum()
    assert sup_norm(phi) == 2.0
    assert w1p_norm(phi, 1.5) == pytest.approx((area * 2 ** 1.5) ** (1 / 1.5), rel=1e-12)


def test_growth_ratio_slope(mesh, weight):
    p = 2.0
    spec = PerturbationSpec(p + 1.0, perturbation_weight(weight), p)
    d = F(smooth_point(mesh, np.random.default_rng(4)), mesh)
    d = d * (1.0 / w1p_norm(d, p))
    t = 10.0 ** -np.arange(1, 6)
    r = np.array([growth_ratio(s, d, spec, p) for s in t])
    slope = np.polyfit(np.log(t), np.log(r), 1)[0]
    assert slope == pytest.approx(spec.gamma - p, rel=1e-10)
    with pytest.raises(ValueError):
        growth_ratio(0.0, d, spec, p)


def test_poincare_on_positive_cone(mesh, weight):
    # sampled lower bound of J / int |phi|^p over {G > 0} stays away from zero; constants are outside the cone
    rng = np.random.default_rng(9)
    one = F(np.ones(mesh.n_vertices), mesh)
    assert boundary_G(one, weight, 2.0) < 0
    ratios = []
    x, y = mesh.vertices.T
    for _ in range(200):
        bump = np.exp(-rng.uniform(5, 80) * (x ** 2 + y ** 2))
        phi = F(rng.normal() * bump + 0.1 * rng.standard_normal(mesh.n_vertices), mesh)
        if boundary_G(phi, weight, 2.0) > 0:
            ratios.append(energy_J(phi, 2.0) / lp_volume(phi, 2.0))
    assert len(ratios) > 20
    assert min(ratios) > 0.1
