import numpy as np
import pytest

from steklov_lab.bifurcation import (
    CSV_HEADER,
    BifurcationError,
    Branch,
    BranchPoint,
    ContinuationConfig,
    _classify_seed,
    branch_from_first,
    classify_branch,
    extrapolate_to_zero,
    matched_lambda,
    no_bifurcation_scan,
)
from steklov_lab.fem import PerturbationSpec, zero_perturbation


@pytest.fixture(scope="module")
def spec_p2(f_p2):
    return PerturbationSpec.default(f_p2, 2.0)


@pytest.fixture(scope="module")
def branch_plus(box20, g_p2, spec_p2, eig_p2):
    return branch_from_first(box20, g_p2, spec_p2, 2.0, eig_p2, ContinuationConfig(direction=1))


@pytest.fixture(scope="module")
def branch_minus(box20, g_p2, spec_p2, eig_p2):
    return branch_from_first(box20, g_p2, spec_p2, 2.0, eig_p2, ContinuationConfig(direction=-1))


def fake_branch(lams, norms, reason=""):
    pts = [BranchPoint(l, None, n, n, float(i), 3, 0.0) for i, (l, n) in enumerate(zip(lams, norms))]
    return Branch(pts, reason)


def test_config_validation():
    with pytest.raises(ValueError):
        ContinuationConfig(ds=1.0, ds_max=0.5)
    with pytest.raises(ValueError):
        ContinuationConfig(direction=0)


def test_branch_leaves_lambda1(branch_plus, eig_p2):
    est, spread = extrapolate_to_zero(branch_plus)
    assert est == pytest.approx(eig_p2.lambda1, rel=1e-4)
    assert spread < 1e-3
    assert branch_plus.fd_discrepancy < 1e-6
    assert all(pt.residual_norm <= 1e-9 for pt in branch_plus)
    norms = np.array([pt.w1p_norm for pt in branch_plus])
    assert norms[-1] > 10 * norms[0]


def test_branch_symmetry(branch_plus, branch_minus):
    assert len(branch_plus) == len(branch_minus)
    for a, b in zip(branch_plus, branch_minus):
        assert abs(a.lam - b.lam) <= 1e-8
        scale = np.abs(a.phi.coefficients).max()
        assert np.abs(a.phi.coefficients + b.phi.coefficients).max() <= 1e-8 * scale


def test_step_size_robustness(box20, g_p2, spec_p2, eig_p2, branch_plus):
    fine = branch_from_first(box20, g_p2, spec_p2, 2.0, eig_p2, ContinuationConfig(ds_max=0.025, max_points=120))
    s = np.array([pt.arclength for pt in branch_plus])
    s = s[s <= min(s[-1], fine[-1].arclength)]
    a, b = matched_lambda(branch_plus, s), matched_lambda(fine, s)
    # the branch exits through lam = 0, so relative error is floored there
    assert np.max(np.abs(a - b) / np.abs(b).clip(min=0.05)) <= 5e-3


def test_zero_perturbation_stays_on_eigenvalue(box20, g_p2, eig_p2):
    b = branch_from_first(box20, g_p2, zero_perturbation(box20, 2.0), 2.0, eig_p2,
                          ContinuationConfig(max_points=20))
    assert max(abs(pt.lam - eig_p2.lambda1) for pt in b) <= 1e-6
    assert classify_branch(b).label == "max-points"


def test_stop_reason_and_csv_row(branch_plus):
    assert branch_plus.stop_reason == "lambda-window"
    assert classify_branch(branch_plus).label == "unbounded-exit"
    row = branch_plus[0].row()
    assert len(row) == len(CSV_HEADER) and row[0] == 0.0


def test_first_corrector_failure_raises(box20, g_p2, spec_p2, eig_p2):
    with pytest.raises(BifurcationError):
        branch_from_first(box20, g_p2, spec_p2, 2.0, eig_p2, ContinuationConfig(newton_max=1))


def test_classification_on_synthetic_branches():
    assert classify_branch(fake_branch([1.0, 1.1, 1.2], [1e-3, 1e-2, 5e-5])).label == "returns-to-trivial"
    assert classify_branch(fake_branch([1.0, 1.1], [1e-3, 2e3])).label == "unbounded-exit"
    cfg = ContinuationConfig(lam_window=(0.5, 1.5))
    assert classify_branch(fake_branch([1.0, 1.6], [1e-3, 1e-1]), cfg).label == "unbounded-exit"
    assert classify_branch(fake_branch([1.0, 1.1], [1e-3, 1e-2], "stalled")).label == "stalled"
    assert classify_branch(fake_branch([1.0, 1.1], [1e-3, 1e-2], "max-points")).label == "max-points"
    with pytest.raises(ValueError):
        classify_branch(Branch())


def test_extrapolation_of_linear_branch():
    b = fake_branch([2.0 + 3 * n for n in (1e-3, 2e-3, 4e-3)], [1e-3, 2e-3, 4e-3])
    est, spread = extrapolate_to_zero(b)
    assert est == pytest.approx(2.0, rel=1e-12)
    assert spread < 1e-12


def test_seed_classifier():
    assert _classify_seed([1e-2, 1e-4, 1e-9], 1e-14, 1e-12) == "trivial"
    assert _classify_seed([1e-5, 5e-6, 2.5e-6, 1.25e-6, 6e-7], 1e-10, 1e-12) == "near-kernel"
    assert _classify_seed([1e-2, 3e-2, 5e-2], 1e-13, 1e-12) == "nontrivial"
    assert _classify_seed([1e-2, 2e-2, 1e-2, 3e-2], 1e-3, 1e-12) == "divergent"
    assert _classify_seed([1e-2, 1e2], 1.0, 1e-12) == "divergent"


def test_scan_away_from_eigenvalue(box20, g_p2, spec_p2, eig_p2):
    rep = no_bifurcation_scan(box20, g_p2, spec_p2, 2.0, eig_p2.lambda1 / 2, n_seeds=10)
    for rho in (1e-1, 1e-2, 1e-3):
        assert rep.nontrivial_below(rho) == 0
        assert rep.count("trivial", rho) == 10
    d = rep.to_dict()
    assert set(d["summary"]) == {"0.1", "0.01", "0.001"}


def test_scan_at_eigenvalue_finds_near_kernel(box20, g_p2, spec_p2, eig_p2):
    rep = no_bifurcation_scan(box20, g_p2, spec_p2, 2.0, eig_p2.lambda1, rhos=(1e-2,), n_seeds=10)
    assert rep.count("near-kernel") > 0


def test_scan_is_deterministic(box8, eig_p2):
    x, y = box8.edge_midpoints.T
    g = box8.boundary_function(np.where((np.abs(x) < 0.1) & (y < 1e-12), 3.0, -1.0))
    spec = PerturbationSpec.default(box8.constant(1.0), 2.0)
    a = no_bifurcation_scan(box8, g, spec, 2.0, 0.3, rhos=1e-2, n_seeds=6, threads=1)
    b = no_bifurcation_scan(box8, g, spec, 2.0, 0.3, rhos=1e-2, n_seeds=6, threads=3)
    assert a.outcomes == b.outcomes
