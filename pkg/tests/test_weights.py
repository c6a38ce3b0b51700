import math

import numpy as np
import pytest
from scipy import integrate, special

from steklov_lab.mesh import box_mesh, disk_mesh, square_mesh
from steklov_lab.rearrangement import decreasing_rearrangement
from steklov_lab.weights import (
    WeightError,
    admissibility,
    analytic_integral,
    analytic_rearrangement,
    exact_polygon_integral,
    g2_majorant_integral,
    g2_rearrangement,
    load_weight_csv,
    parse_weight,
    perturbation_weight,
    sample_on_boundary,
)


def test_parse_catalog_names():
    assert parse_weight("g1-circle").domain_tag == "disk"
    w = parse_weight("g2-box:p=1.25:R=0.2")
    assert w.params["p"] == 1.25 and w.R == 0.2 and not w.params["majorant"]
    assert parse_weight("h-box").params["majorant"] == 1.0
    c = parse_weight("composite:g3-box:q=2-0.75")
    assert c.kind == "composite" and c.shift == 0.75 and c.base.params["q"] == 2
    assert parse_weight("const:-1.5").params["c"] == -1.5


@pytest.mark.parametrize("name", ["g3-box", "g3-box:q=1", "g2-box:p=2", "g2-box:R=0.6", "bogus", "g3-box:q"])
def test_parse_rejects(name):
    with pytest.raises(WeightError):
        parse_weight(name)


def test_g1_integral_closed_form():
    # int |sin th|^{-1/2} dth over (0, 2 pi) = 2 B(1/4, 1/2)
    quad = 4 * integrate.quad(lambda th: math.sin(th) ** -0.5, 0, math.pi / 2, epsrel=1e-12)[0]
    assert analytic_integral(parse_weight("g1-circle")) == pytest.approx(quad, rel=1e-10)
    assert 2 * special.beta(0.25, 0.5) == pytest.approx(quad, rel=1e-10)


def test_g1_polygon_integral_approaches_circle():
    errs = []
    for n in (256, 1024):
        m = disk_mesh(n)
        errs.append(abs(exact_polygon_integral(parse_weight("g1-circle"), m) / analytic_integral(parse_weight("g1-circle")) - 1))
    assert errs[1] < errs[0] < 0.05


@pytest.mark.parametrize("name", ["g3-box:q=2", "g3-box:q=4", "h-box:p=1.5", "g2-box:p=1.5", "g2-box:p=1.8:R=0.3"])
def test_box_integrals_exact_on_any_mesh(name):
    w = parse_weight(name)
    for m in (box_mesh(w.R, 7), box_mesh(w.R, 12, grading=2.0)):
        assert exact_polygon_integral(w, m) == pytest.approx(analytic_integral(w), rel=1e-12)


def test_g2_antiderivative_against_quad():
    w = parse_weight("g2-box:p=1.5")
    ref = 2 * integrate.quad(lambda x: (x * abs(math.log(x))) ** -0.5, 0, 0.25, epsrel=1e-12)[0]
    assert analytic_integral(w) == pytest.approx(ref, rel=1e-9)


def test_composite_shift_halves_integral():
    for name in ("composite:g3-box:q=2", "composite:g1-circle", "composite:g2-box:p=1.5"):
        w = parse_weight(name)
        assert analytic_integral(w) == pytest.approx(-0.5 * analytic_integral(w.base), rel=1e-12)


def test_g3_rearrangement_power_law():
    prof = analytic_rearrangement(parse_weight("g3-box:q=2"))
    assert prof.A == pytest.approx(math.sqrt(2))
    assert prof(0.1) == pytest.approx(math.sqrt(2 / 0.1))
    assert prof(0.6) == 0.0  # beyond the bottom face, length 2R


def test_sampled_profile_matches_power_law():
    w = parse_weight("g3-box:q=4")
    m = box_mesh(w.R, 40, grading=2.0)
    prof = decreasing_rearrangement(sample_on_boundary(w, m))
    exact = analytic_rearrangement(w)
    mid = 0.5 * (prof.breakpoints[:-1] + prof.breakpoints[1:])
    keep = (mid > 0.02) & (mid < 0.45)
    assert np.allclose(prof.levels[keep], exact(mid[keep]), rtol=0.03)


def test_g2_rearrangement_is_exact():
    w = parse_weight("g2-box:p=1.5")
    prof = g2_rearrangement(w)
    t = 0.2
    x = t / 2
    assert prof(t) == pytest.approx((x * abs(math.log(x))) ** -0.5)
    with pytest.raises(WeightError):
        g2_rearrangement(parse_weight("g2-box:p=1.5:R=0.45"))


def test_g2_majorant_integral():
    for R in (0.05, 0.25, 0.35):
        num, closed = g2_majorant_integral(parse_weight(f"g2-box:p=1.5:R={R}"))
        assert num == pytest.approx(closed, rel=1e-8)


def test_wrong_domain_rejected():
    with pytest.raises(WeightError):
        sample_on_boundary(parse_weight("g1-circle"), box_mesh(0.25, 4))
    with pytest.raises(WeightError):
        sample_on_boundary(parse_weight("g3-box:q=2"), square_mesh(4))


def test_admissibility_of_catalog():
    ok = admissibility(parse_weight("composite:g3-box:q=2"), 2.0)
    assert ok.admissible and ok.regime == "N=p" and ok.integral_g == pytest.approx(-1.0)
    assert not admissibility(parse_weight("g3-box:q=2"), 2.0).admissible  # positive integral
    assert admissibility(parse_weight("composite:g3-box:q=4"), 1.5).admissible
    bad = admissibility(parse_weight("composite:g3-box:q=2"), 1.5)
    assert not bad.admissible and bad.membership.verdict == "non-member"
    assert admissibility(parse_weight("composite:g2-box:p=1.5"), 1.5).admissible
    with pytest.raises(WeightError):
        admissibility(parse_weight("composite:g3-box:q=2"), 2.5)


@pytest.mark.parametrize("c", [0.1, 1.0, 7.5])
def test_admissibility_invariant_under_positive_scaling(c):
    w = parse_weight("composite:g3-box:q=2")
    a, b = admissibility(w, 2.0), admissibility(w.scaled(c), 2.0)
    assert a.admissible == b.admissible
    assert b.integral_g == pytest.approx(c * a.integral_g, rel=1e-12)
    with pytest.raises(WeightError):
        w.scaled(-1.0)


def test_sampled_admissibility_and_constants(box20, g_p2):
    rep = admissibility(g_p2, 2.0)
    assert rep.admissible and rep.membership.method == "grid"
    assert not admissibility(parse_weight("const:-1"), 2.0, mesh=box20).admissible
    assert not admissibility(box20.constant(1.0), 2.0).admissible


def test_perturbation_weight_is_bounded(g_p2):
    f = perturbation_weight(g_p2)
    assert f.values.min() >= 0 and f.values.max() <= 1
    assert np.all(f.values[g_p2.values > 0] > 0)


def test_weight_csv_roundtrip(tmp_path, box8):
    vals = np.linspace(-1, 2, box8.n_edges)
    path = tmp_path / "w.csv"
    path.write_text("edge,value\n" + "".join(f"{i},{float(v)!r}\n" for i, v in enumerate(vals)))
    assert np.array_equal(load_weight_csv(path, box8).values, vals)
    with pytest.raises(ValueError):
        path.write_text("1\n2\n")
        load_weight_csv(path, box8)
