"""Pseudo-arclength continuation of the branch bifurcating from ``(lam1, 0)``.

Unknowns are ``(phi, lam)``; the arclength metric is ``<u, v>_H1 + mu mu'``.
Each corrector step solves the bordered system

    [ A    b  ] [dphi]   [ -residual ]
    [ Wt   l  ] [dlam] = [ -arclength]

with ``A = d residual / d phi`` and ``b = d residual / d lam``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .eigen import EigenResult, worker_count
from .fem import (
    Field,
    PerturbationSpec,
    dual_norm,
    fem_space,
    residual,
    residual_jacobian,
    sup_norm,
    w1p_norm,
)
from .mesh import BoundaryFunction, Mesh

RIDGE = 1e-12
TRIVIAL_NORM = 1e-4
SCAN_ZERO_NORM = 1e-6


class BifurcationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ContinuationConfig:
    ds: float = 2e-3
    ds_min: float = 1e-7
    ds_max: float = 0.05
    max_points: int = 60
    newton_tol: float = 1e-9
    newton_max: int = 25
    lam_window: tuple | None = None
    norm_ceiling: float = 1e3
    direction: int = 1
    start_norm: float = 1e-3
    fd_check: bool = True
    fd_columns: int = 40
    fd_tol: float = 1e-4
    eps: float | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if not 0 < self.ds_min <= self.ds <= self.ds_max:
            raise ValueError("need 0 < ds_min <= ds <= ds_max")
        if self.direction not in (1, -1):
            raise ValueError("direction must be +1 or -1")
        if self.max_points < 1 or self.newton_max < 1:
            raise ValueError("max_points and newton_max must be positive")


@dataclass(frozen=True, eq=False)
class BranchPoint:
    lam: float
    phi: Field
    w1p_norm: float
    sup_norm: float
    arclength: float
    newton_iters: int
    residual_norm: float

    def row(self) -> tuple:
        return (self.arclength, self.lam, self.w1p_norm, self.sup_norm, self.newton_iters)


CSV_HEADER = ("arclength", "lambda", "w1p_norm", "sup_norm", "newton_iters")


class Branch(list):
    """List of :class:`BranchPoint` plus the reason the trace stopped."""

    def __init__(self, points=(), stop_reason: str = "", fd_discrepancy: float | None = None):
        super().__init__(points)
        self.stop_reason = stop_reason
        self.fd_discrepancy = fd_discrepancy


def _factor(M: sp.spmatrix):
    try:
        return splu(M.tocsc())
    except RuntimeError:
        pass
    try:
        return splu((M + RIDGE * sp.identity(M.shape[0])).tocsc())
    except RuntimeError as exc:
        raise BifurcationError("Jacobian singular beyond ridge regularization") from exc


class _System:
    def __init__(self, mesh, g, spec, p, eps):
        self.mesh, self.g, self.spec, self.p, self.eps = mesh, g, spec, p, eps
        self.S = fem_space(mesh)
        self.W = self.S.W

    def res(self, lam, c):
        return residual(lam, Field(c, self.mesh), self.g, self.spec, self.p, self.eps)

    def jac(self, lam, c):
        return residual_jacobian(lam, Field(c, self.mesh), self.g, self.spec, self.p, self.eps)

    def rnorm(self, lam, c):
        return dual_norm(self.res(lam, c), self.mesh)

    def bordered(self, A, b, row_phi, row_lam):
        n = A.shape[0]
        M = sp.bmat([[A, sp.csr_matrix(b.reshape(n, 1))],
                     [sp.csr_matrix(row_phi.reshape(1, n)), sp.csr_matrix([[row_lam]])]])
        return _factor(M)

    def tangent(self, lam, c, prev_phi, prev_lam):
        """Unit tangent in the H1 x R metric, oriented along ``(prev_phi, prev_lam)``."""
        A, b = self.jac(lam, c)
        lu = self.bordered(A, b, self.W @ prev_phi, prev_lam)
        rhs = np.zeros(len(c) + 1)
        rhs[-1] = 1.0
        z = lu.solve(rhs)
        tp, tl = z[:-1], z[-1]
        nrm = np.sqrt(tp @ (self.W @ tp) + tl * tl)
        return tp / nrm, tl / nrm

    def correct(self, lam0, c0, tp, tl, ds, cfg):
        """Newton on the augmented system; returns ``(lam, c, iters)`` or ``None``."""
        lam, c = lam0 + ds * tl, c0 + ds * tp
        Wt = self.W @ tp
        base = self.rnorm(lam, c)
        for it in range(1, cfg.newton_max + 1):
            r = self.res(lam, c)
            arc = Wt @ (c - c0) + tl * (lam - lam0) - ds
            A, b = self.jac(lam, c)
            lu = self.bordered(A, b, Wt, tl)
            z = lu.solve(-np.concatenate([r, [arc]]))
            c = c + z[:-1]
            lam = lam + z[-1]
            if not np.all(np.isfinite(c)) or not np.isfinite(lam):
                return None
            rn = self.rnorm(lam, c)
            if rn > 1e6 * max(base, cfg.newton_tol):
                return None
            step = np.sqrt(max(z[:-1] @ (self.W @ z[:-1]), 0.0) + z[-1] ** 2)
            if rn <= cfg.newton_tol and step <= 1e-6 * max(1.0, abs(lam)):
                return lam, c, it
        return None

    def fd_discrepancy(self, lam, c, cfg) -> float:
        """Relative Frobenius gap between the analytic Jacobian and central differences."""
        A, b = self.jac(lam, c)
        n = len(c)
        rng = np.random.default_rng(cfg.rng_seed)
        cols = np.arange(n) if n <= cfg.fd_columns else np.sort(rng.choice(n, cfg.fd_columns, replace=False))
        scale = max(float(np.max(np.abs(c))), 1e-12)
        num = den = 0.0
        Ad = A.toarray() if n <= 2000 else None
        for j in cols:
            h = 1e-6 * max(abs(c[j]), scale)
            e = np.zeros(n)
            e[j] = h
            col = (self.res(lam, c + e) - self.res(lam, c - e)) / (2 * h)
            aj = Ad[:, j] if Ad is not None else A[:, j].toarray().ravel()
            num += float(np.sum((col - aj) ** 2))
            den += float(np.sum(aj ** 2))
        hl = 1e-6 * max(1.0, abs(lam))
        col = (self.res(lam + hl, c) - self.res(lam - hl, c)) / (2 * hl)
        num += float(np.sum((col - b) ** 2))
        den += float(np.sum(b ** 2))
        return float(np.sqrt(num / den))


def _point(system: _System, lam, c, s, iters) -> BranchPoint:
    phi = Field(c, system.mesh)
    return BranchPoint(float(lam), phi, w1p_norm(phi, system.p), sup_norm(phi), float(s), int(iters),
                       system.rnorm(lam, c))


def branch_from_first(mesh: Mesh, g: BoundaryFunction, spec: PerturbationSpec, p: float,
                      res: EigenResult, cfg: ContinuationConfig | None = None) -> Branch:
    """Trace the branch leaving ``(lam1, 0)`` along ``direction * phi1``."""
    cfg = cfg or ContinuationConfig()
    eps = res.epsilon_used if cfg.eps is None else cfg.eps
    system = _System(mesh, g, spec, p, eps)
    W = system.W
    window = cfg.lam_window or (0.0, 3.0 * res.lambda1)

    phi1 = res.phi1.coefficients
    t0 = cfg.start_norm / w1p_norm(res.phi1, p)
    e1 = cfg.direction * phi1
    c_seed = t0 * e1
    lam0 = res.lambda1

    # first point: Newton with the H1 projection on phi1 pinned at the seed value
    pin = W @ e1
    pin_val = float(pin @ c_seed)
    lam, c = lam0, c_seed.copy()
    ok = False
    it = 0
    for it in range(1, cfg.newton_max + 1):
        r = system.res(lam, c)
        A, b = system.jac(lam, c)
        lu = system.bordered(A, b, pin, 0.0)
        z = lu.solve(-np.concatenate([r, [pin @ c - pin_val]]))
        c, lam = c + z[:-1], lam + z[-1]
        step = np.sqrt(max(z[:-1] @ (W @ z[:-1]), 0.0) + z[-1] ** 2)
        if system.rnorm(lam, c) <= cfg.newton_tol and step <= 1e-6 * max(1.0, abs(lam)):
            ok = True
            break
    if not ok:
        raise BifurcationError("bifurcation seed invalid: first corrector did not converge")

    fd = None
    if cfg.fd_check:
        fd = system.fd_discrepancy(lam, c, cfg)
        if fd > cfg.fd_tol:
            raise BifurcationError(f"analytic Jacobian disagrees with finite differences ({fd:.3g})")

    branch = Branch([_point(system, lam, c, 0.0, it)], fd_discrepancy=fd)
    tp, tl = system.tangent(lam, c, e1, 0.0)
    ds = cfg.ds
    s = 0.0
    reason = "max-points"
    while len(branch) < cfg.max_points:
        out = system.correct(lam, c, tp, tl, ds, cfg)
        if out is None:
            ds *= 0.5
            if ds < cfg.ds_min:
                if len(branch) == 1:
                    raise BifurcationError("bifurcation seed invalid: corrector fails at ds_min")
                reason = "stalled"
                break
            continue
        lam_n, c_n, iters = out
        s += ds
        pt = _point(system, lam_n, c_n, s, iters)
        branch.append(pt)
        tp, tl = system.tangent(lam_n, c_n, tp, tl)
        lam, c = lam_n, c_n
        if iters <= 4:
            ds = min(1.5 * ds, cfg.ds_max)
        if pt.w1p_norm >= cfg.norm_ceiling:
            reason = "norm-ceiling"
            break
        if not window[0] < pt.lam < window[1]:
            reason = "lambda-window"
            break
        if pt.w1p_norm < TRIVIAL_NORM:
            reason = "returns-to-trivial"
            break
    branch.stop_reason = reason
    return branch


@dataclass(frozen=True)
class BranchClass:
    label: str
    lambda_end: float
    norm_end: float

    def to_dict(self) -> dict:
        return {"label": self.label, "lambda_end": self.lambda_end, "norm_end": self.norm_end}


def classify_branch(branch, cfg: ContinuationConfig | None = None) -> BranchClass:
    """Heuristic label from the stop rule; not a proof of either alternative."""
    cfg = cfg or ContinuationConfig()
    if not len(branch):
        raise ValueError("empty branch")
    last = branch[-1]
    lam_end, nrm = last.lam, last.w1p_norm
    reason = getattr(branch, "stop_reason", "")
    if reason in ("norm-ceiling", "lambda-window") or nrm >= cfg.norm_ceiling or (
            cfg.lam_window is not None and not cfg.lam_window[0] < lam_end < cfg.lam_window[1]):
        label = "unbounded-exit"
    elif nrm < TRIVIAL_NORM:
        label = "returns-to-trivial"
    elif reason == "stalled":
        label = "stalled"
    elif len(branch) >= cfg.max_points or reason == "max-points":
        label = "max-points"
    else:
        label = "stalled"
    return BranchClass(label, float(lam_end), float(nrm))


def extrapolate_to_zero(branch, k: int = 5) -> tuple[float, float]:
    """Secant extrapolation of ``lam`` to zero norm from the ``k`` smallest-norm points.

    Returns ``(estimate, spread)``: the estimate uses the two smallest-norm
    points; the spread is the relative range over all consecutive secants.
    """
    pts = sorted(branch, key=lambda b: b.w1p_norm)[:k]
    if len(pts) < 2:
        raise ValueError("need at least two branch points")
    ests = []
    for a, b in zip(pts[:-1], pts[1:]):
        na, nb = a.w1p_norm, b.w1p_norm
        if nb == na:
            continue
        ests.append(a.lam - na * (b.lam - a.lam) / (nb - na))
    ests = np.array(ests)
    return float(ests[0]), float(np.ptp(ests) / abs(ests[0]))


def matched_lambda(branch, s: np.ndarray) -> np.ndarray:
    """``lam`` linearly interpolated at arclengths ``s``."""
    arc = np.array([b.arclength for b in branch])
    lam = np.array([b.lam for b in branch])
    return np.interp(s, arc, lam)


# ------------------------------------------------------------------ scan


@dataclass(frozen=True)
class SeedOutcome:
    seed: int
    rho: float
    outcome: str
    final_norm: float
    residual_norm: float
    iterations: int

    def to_dict(self) -> dict:
        return {"seed": self.seed, "rho": self.rho, "outcome": self.outcome,
                "final_norm": self.final_norm, "residual_norm": self.residual_norm,
                "iterations": self.iterations}


@dataclass(frozen=True)
class ScanReport:
    lam: float
    outcomes: tuple

    def count(self, outcome: str, rho: float | None = None) -> int:
        return sum(o.outcome == outcome and (rho is None or o.rho == rho) for o in self.outcomes)

    def nontrivial_below(self, rho: float) -> int:
        """Seeds started at ``rho`` that converged to a nontrivial solution of norm ``<= rho``."""
        return sum(o.outcome == "nontrivial" and o.rho == rho and o.final_norm <= rho for o in self.outcomes)

    def to_dict(self) -> dict:
        rhos = sorted({o.rho for o in self.outcomes}, reverse=True)
        return {
            "lambda": self.lam,
            "summary": {
                repr(r): {k: self.count(k, r) for k in ("trivial", "nontrivial", "near-kernel", "divergent")}
                for r in rhos
            },
        }


def _damped_newton(system: _System, lam: float, c: np.ndarray, newton_max: int, tol: float):
    """Backtracking Newton on ``residual(lam, .) = 0``.

    Returns ``(c, residual_norm, iterations, norms)`` with the W1p norm history.
    """
    mesh, p = system.mesh, system.p
    rn = system.rnorm(lam, c)
    norms = [w1p_norm(Field(c, mesh), p)]
    it = 0
    for it in range(1, newton_max + 1):
        if rn <= tol or norms[-1] < SCAN_ZERO_NORM * 1e-3:
            it -= 1
            break
        A, _ = system.jac(lam, c)
        d = _factor(A).solve(-system.res(lam, c))
        alpha = 1.0
        while alpha > 1e-8:
            trial = c + alpha * d
            rt = system.rnorm(lam, trial)
            if rt < (1 - 1e-4 * alpha) * rn:
                break
            alpha *= 0.5
        else:
            return c, rn, it, norms
        c, rn = trial, rt
        norms.append(w1p_norm(Field(c, mesh), p))
    return c, rn, it, norms


def _classify_seed(norms, rn, tol) -> str:
    final = norms[-1]
    if not np.isfinite(final) or final > 1e3 * norms[0]:
        return "divergent"
    if final < SCAN_ZERO_NORM:
        # linear (not superlinear) collapse is the signature of a singular Jacobian at zero
        tail = np.array(norms[-3:])
        if len(tail) == 3 and np.all(tail > 0):
            ratios = tail[1:] / tail[:-1]
            if np.all((ratios > 0.25) & (ratios < 0.95)):
                return "near-kernel"
        return "trivial"
    if rn <= tol:
        return "nontrivial"
    tail = np.array(norms[-4:])
    if len(tail) == 4 and np.all(tail[1:] < tail[:-1]):
        return "near-kernel"
    return "divergent"


def no_bifurcation_scan(mesh: Mesh, g: BoundaryFunction, spec: PerturbationSpec | None, p: float,
                        lam: float, rhos=(1e-1, 1e-2, 1e-3), n_seeds: int = 50, rng_seed: int = 0,
                        eps: float = 0.0, newton_max: int = 25, tol: float = 1e-12,
                        threads: int | None = None) -> ScanReport:
    """Damped Newton from random fields of W1p norm ``rho`` at fixed ``lam``.

    Each seed ends as ``trivial`` (norm below 1e-6 with fast collapse),
    ``near-kernel`` (linear collapse or slow drift along a nearly singular
    direction), ``nontrivial`` (converged away from zero) or ``divergent``.
    """
    if isinstance(rhos, (int, float)):
        rhos = (float(rhos),)
    system = _System(mesh, g, spec, p, eps)
    rng = np.random.default_rng(rng_seed)
    jobs = []
    for rho in rhos:
        for k in range(n_seeds):
            c = rng.standard_normal(mesh.n_vertices)
            c *= rho / w1p_norm(Field(c, mesh), p)
            jobs.append((k, float(rho), c))

    def run(job):
        k, rho, c = job
        c, rn, it, norms = _damped_newton(system, lam, c, newton_max, tol)
        return SeedOutcome(k, rho, _classify_seed(norms, rn, tol), float(norms[-1]), float(rn), it)

    system.S.W_lu
    nthreads = min(threads or worker_count(), len(jobs))
    if nthreads > 1:
        with ThreadPoolExecutor(nthreads) as ex:
            out = list(ex.map(run, jobs))
    else:
        out = [run(j) for j in jobs]
    return ScanReport(float(lam), tuple(out))
