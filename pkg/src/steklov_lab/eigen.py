"""First eigenpair of the weighted Steklov p-Laplacian by Rayleigh-quotient descent.

The quotient ``R = J / G`` is minimized over the cone ``{G > 0}`` with a
preconditioned gradient method and Armijo backtracking; iterates are rescaled
to ``G = 1`` after every step, which is free by homogeneity. For ``p = 2`` a
dense generalized eigensolver and a definiteness bisection give independent
oracles.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import splu
from scipy.spatial import cKDTree

from .fem import (
    Field,
    FEMSpace,
    _boundary_G,
    _energy,
    _grad_boundary_G,
    _grad_energy,
    _hess_energy,
    dual_norm,
    fem_space,
    residual,
)
from .mesh import BoundaryFunction, Mesh, boundary_integral

ORACLE_MAX_VERTICES = 2000
ARMIJO_C = 1e-4
# relative slack on R comparisons; decreases below this are invisible in double precision
ROUNDOFF = 64 * np.finfo(float).eps
NOISE_FACTOR = 1e3


class EigenError(RuntimeError):
    pass


class InadmissibleWeightError(EigenError):
    pass


class NoFeasibleSeedError(EigenError):
    pass


class NonConvergenceError(EigenError):
    pass


def worker_count() -> int:
    env = os.environ.get("STEKLOV_LAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


@dataclass(frozen=True)
class EigenOptions:
    seeds: int = 8
    max_iter: int = 4000
    tol: float = 1e-9
    rng_seed: int = 0
    eps: float | None = None
    threads: int | None = None
    refresh: int = 10

    def __post_init__(self):
        if self.seeds < 1:
            raise ValueError("need at least one seed")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


@dataclass(frozen=True, eq=False)
class SeedRun:
    index: int
    lam: float
    phi: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    history: np.ndarray


@dataclass(frozen=True, eq=False)
class EigenResult:
    lambda1: float
    phi1: Field
    residual_norm: float
    seeds_used: int
    seed_agreement: float
    epsilon_used: float
    p: float
    g: BoundaryFunction
    tol: float
    iterations: int
    seed_runs: tuple = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "lambda1": self.lambda1,
            "p": self.p,
            "residual_norm": self.residual_norm,
            "seeds_used": self.seeds_used,
            "seed_agreement": self.seed_agreement,
            "epsilon_used": self.epsilon_used,
            "iterations": self.iterations,
            "tol": self.tol,
            "seed_lambdas": [r.lam for r in self.seed_runs],
            "n_vertices": self.phi1.mesh.n_vertices,
        }


def check_weight(g: BoundaryFunction) -> None:
    if not np.any(g.values > 0):
        raise InadmissibleWeightError("g+ vanishes identically: no positive principal eigenvalue")
    I = boundary_integral(g)
    if not I < 0:
        raise InadmissibleWeightError(
            f"integral of g is {I:.6g} >= 0: zero is the only principal eigenvalue")


def bump_field(mesh: Mesh, g: BoundaryFunction, width: float | None = None) -> np.ndarray:
    """Gaussian bump in the distance to ``supp g+``."""
    pos = g.values > 0
    if not np.any(pos):
        raise InadmissibleWeightError("g+ vanishes identically")
    e = mesh.boundary_edges[pos]
    pts = np.vstack([mesh.vertices[e[:, 0]], mesh.vertices[e[:, 1]], mesh.edge_midpoints[pos]])
    dist, _ = cKDTree(pts).query(mesh.vertices)
    if width is None:
        ext = np.ptp(mesh.vertices, axis=0).max()
        width = 0.15 * ext
    return np.exp(-(dist / width) ** 2)


def _nudge(S: FEMSpace, c: np.ndarray, bump: np.ndarray, gv: np.ndarray, p: float):
    if _boundary_G(S, c, gv, p) > 0:
        return c
    scale = max(float(np.max(np.abs(c))), 1.0)
    for k in range(40):
        trial = c + (2.0 ** k) * scale * bump
        if _boundary_G(S, trial, gv, p) > 0:
            return trial
    return None


def _normalize(S, c, gv, p):
    G = _boundary_G(S, c, gv, p)
    return c / G ** (1.0 / p)


class _Preconditioner:
    def __init__(self, S: FEMSpace, p: float, eps: float):
        self.S, self.p, self.eps = S, p, eps
        self.lu = None

    def update(self, c: np.ndarray):
        S, p = self.S, self.p
        if p == 2:
            self.lu = S.W_lu
            return
        grad = S.gradients(c)
        s = np.einsum("tj,tj->t", grad, grad) + self.eps ** 2
        mu = float(np.dot(S.area, s ** (0.5 * p - 1.0)) / np.sum(S.area))
        P = _hess_energy(S, c, p, self.eps) / p + mu * S.M
        self.lu = splu(P.tocsc())

    def solve(self, r):
        return self.lu.solve(r)


def _residual_norm(S: FEMSpace, c: np.ndarray, gv: np.ndarray, p: float, eps: float) -> float:
    R = _energy(S, c, p, eps) / _boundary_G(S, c, gv, p)
    res = (_grad_energy(S, c, p, eps) - R * _grad_boundary_G(S, c, gv, p)) / p
    return float(np.sqrt(max(res @ S.riesz(res), 0.0)))


def _descend(S: FEMSpace, c0: np.ndarray, gv: np.ndarray, p: float, eps: float,
             opts: EigenOptions, index: int) -> SeedRun:
    c = _normalize(S, c0, gv, p)
    P = _Preconditioner(S, p, eps)
    R = _energy(S, c, p, eps)
    hist = [R]
    alpha = 1.0
    rnorm = np.inf
    it = 0
    for it in range(1, opts.max_iter + 1):
        if p != 2 and (it - 1) % opts.refresh == 0:
            P.update(c)
        elif P.lu is None:
            P.update(c)
        dJ = _grad_energy(S, c, p, eps)
        dG = _grad_boundary_G(S, c, gv, p)
        gR = dJ - R * dG
        res = gR / p
        rnorm = float(np.sqrt(max(res @ S.riesz(res), 0.0)))
        if rnorm <= opts.tol:
            return SeedRun(index, R, c, rnorm, it - 1, True, np.array(hist))
        d = P.solve(gR)
        slope = float(gR @ d)
        alpha = min(2.0 * alpha, 1e6)
        # once the predicted decrease is below the noise in R, R cannot rank steps;
        # the residual norm takes over as merit function
        noisy = slope <= NOISE_FACTOR * ROUNDOFF * abs(R)
        while True:
            trial = c - alpha * d
            G = _boundary_G(S, trial, gv, p)
            if G > 0:
                Rt = _energy(S, trial, p, eps) / G
                if not noisy:
                    if Rt <= R - ARMIJO_C * alpha * slope:
                        break
                elif Rt <= R + ROUNDOFF * abs(R):
                    if _residual_norm(S, trial / G ** (1.0 / p), gv, p, eps) < rnorm:
                        break
            alpha *= 0.5
            if alpha < 1e-30:
                return SeedRun(index, R, c, rnorm, it, False, np.array(hist))
        c = trial / G ** (1.0 / p)
        # re-evaluate after rescaling; equal to Rt at eps = 0
        R = _energy(S, c, p, eps)
        if R > hist[-1] + 2 * ROUNDOFF * abs(hist[-1]):
            raise EigenError("Armijo step increased the Rayleigh quotient")
        hist.append(R)
    return SeedRun(index, R, c, rnorm, it, rnorm <= opts.tol, np.array(hist))


def seed_fields(mesh: Mesh, g: BoundaryFunction, n: int, rng_seed: int) -> list[np.ndarray]:
    """Seed 0 is the bump on ``supp g+``; the rest are standard normal nodal fields."""
    rng = np.random.default_rng(rng_seed)
    bump = bump_field(mesh, g)
    out = [bump.copy()]
    for _ in range(n - 1):
        out.append(rng.standard_normal(mesh.n_vertices))
    return out


def choose_epsilon(mesh: Mesh, g: BoundaryFunction, p: float) -> float:
    """Zero for ``p >= 2``; otherwise ``1e-8`` times the mean gradient of the normalized bump seed."""
    if p >= 2:
        return 0.0
    S = fem_space(mesh)
    c = _normalize(S, bump_field(mesh, g), g.values, p)
    grad = S.gradients(c)
    mean = float(np.dot(S.area, np.hypot(grad[:, 0], grad[:, 1])) / np.sum(S.area))
    return max(1e-8 * mean, 1e-12)


def first_eigenpair(mesh: Mesh, g: BoundaryFunction, p: float,
                    opts: EigenOptions | None = None) -> EigenResult:
    opts = opts or EigenOptions()
    if not 1 < p:
        raise ValueError("p must exceed 1")
    check_weight(g)
    S = fem_space(mesh)
    gv = g.values
    eps = choose_epsilon(mesh, g, p) if opts.eps is None else float(opts.eps)
    bump = bump_field(mesh, g)
    starts = []
    for i, c in enumerate(seed_fields(mesh, g, opts.seeds, opts.rng_seed)):
        c = _nudge(S, c, bump, gv, p)
        if c is not None:
            starts.append((i, c))
    if not starts:
        raise NoFeasibleSeedError("no seed entered {G > 0}; g+ support may be too small for this mesh")
    S.W_lu  # factor once before threads share it
    threads = min(opts.threads or worker_count(), len(starts))
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            runs = list(ex.map(lambda ic: _descend(S, ic[1], gv, p, eps, opts, ic[0]), starts))
    else:
        runs = [_descend(S, c, gv, p, eps, opts, i) for i, c in starts]
    conv = [r for r in runs if r.converged]
    if not conv:
        best = min(runs, key=lambda r: r.residual_norm)
        raise NonConvergenceError(
            f"no seed converged within {opts.max_iter} iterations (best residual {best.residual_norm:.3g})")
    # lowest lambda, ties broken by seed index
    best = min(conv, key=lambda r: (r.lam, r.index))
    lams = np.array([r.lam for r in conv])
    phi = best.phi
    if phi.mean() < 0:
        phi = -phi
    phi1 = Field(phi, mesh)
    rn = dual_norm(residual(best.lam, phi1, g, None, p, eps), mesh)
    return EigenResult(
        lambda1=float(best.lam), phi1=phi1, residual_norm=rn, seeds_used=len(runs),
        seed_agreement=float((lams.max() - lams.min()) / lams.min()), epsilon_used=eps,
        p=p, g=g, tol=opts.tol, iterations=best.iterations, seed_runs=tuple(runs),
    )


def rayleigh_quotient(phi: Field, g: BoundaryFunction, p: float, eps: float = 0.0) -> float:
    S = fem_space(phi.mesh)
    G = _boundary_G(S, phi.coefficients, g.values, p)
    if not G > 0:
        return np.inf
    return _energy(S, phi.coefficients, p, eps) / G


# ------------------------------------------------------------------ oracles


@dataclass(frozen=True, eq=False)
class OracleSpectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    lambda1: float | None
    vector1: np.ndarray | None
    has_zero: bool

    def gap(self) -> float | None:
        if self.lambda1 is None:
            return None
        above = self.eigenvalues[self.eigenvalues > self.lambda1 * (1 + 1e-9)]
        return float(above[0] - self.lambda1) if len(above) else None

    def to_dict(self) -> dict:
        pos = self.eigenvalues[self.eigenvalues > 0]
        return {
            "lambda1_oracle": self.lambda1,
            "gap": self.gap(),
            "zero_eigenvalue": self.has_zero,
            "lowest_positive": [float(x) for x in pos[:5]],
        }


def dense_matrices(mesh: Mesh, g: BoundaryFunction) -> tuple[np.ndarray, np.ndarray]:
    S = fem_space(mesh)
    return S.K.toarray(), S.boundary_mass(g).toarray()


def dense_oracle_p2(mesh: Mesh, g: BoundaryFunction) -> OracleSpectrum:
    """All finite real eigenvalues of ``K u = lam B_g u`` by a dense QZ solve."""
    if mesh.n_vertices > ORACLE_MAX_VERTICES:
        raise EigenError(f"dense oracle capped at {ORACLE_MAX_VERTICES} vertices (got {mesh.n_vertices})")
    K, B = dense_matrices(mesh, g)
    w, V = sla.eig(K, B, homogeneous_eigvals=True)
    a, b = w
    scale = max(np.abs(K).max(), np.abs(B).max())
    finite = np.abs(b) > 1e-9 * np.maximum(np.abs(a), scale)
    lam = a[finite] / b[finite]
    V = V[:, finite]
    real = np.abs(lam.imag) <= 1e-8 * np.maximum(1.0, np.abs(lam))
    lam, V = lam[real].real, V[:, real].real
    order = np.argsort(lam)
    lam, V = lam[order], V[:, order]
    zero_tol = 1e-9 * max(1.0, float(np.max(np.abs(lam)))) if len(lam) else 0.0
    has_zero = bool(np.any(np.abs(lam) <= zero_tol))
    bv = mesh.boundary_vertices
    lam1, v1 = None, None
    for k in np.flatnonzero(lam > zero_tol):
        v = V[:, k]
        tr = v[bv]
        m = np.max(np.abs(tr))
        if np.all(tr >= -1e-10 * m) or np.all(tr <= 1e-10 * m):
            lam1 = float(lam[k])
            v1 = v / np.sqrt(abs(v @ B @ v))
            if v1.mean() < 0:
                v1 = -v1
            break
    lam = lam.copy()
    lam[np.abs(lam) <= zero_tol] = 0.0
    return OracleSpectrum(lam, V, lam1, v1, has_zero)


def lambda1_by_definiteness(mesh: Mesh, g: BoundaryFunction, rtol: float = 1e-14) -> float:
    """Bisection on positive definiteness of ``K - lam B_g``.

    For admissible ``g`` the pencil is positive definite exactly on
    ``(0, lam1)``, so ``lam1 = min {u'Ku / u'B_g u : u'B_g u > 0}``.
    """
    K, B = dense_matrices(mesh, g)

    def pd(lam):
        try:
            np.linalg.cholesky(K - lam * B)
            return True
        except np.linalg.LinAlgError:
            return False

    hi = 1.0
    while pd(hi):
        hi *= 2.0
        if hi > 1e12:
            raise EigenError("pencil stays definite: weight is not admissible")
    lo = 0.0
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if pd(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def h1_alignment(a: np.ndarray, b: np.ndarray, mesh: Mesh) -> float:
    """``|<a, b>_H1| / (|a|_H1 |b|_H1)``."""
    W = fem_space(mesh).W
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return min(1.0, float(abs(a @ (W @ b)) / np.sqrt((a @ (W @ a)) * (b @ (W @ b)))))


@dataclass(frozen=True)
class PrincipalityReport:
    passed: bool
    min_value: float
    min_vertex: int
    min_location: tuple

    def to_dict(self) -> dict:
        return {"passed": self.passed, "min_value": self.min_value, "min_vertex": self.min_vertex,
                "min_location": list(self.min_location)}


def principality_check(res) -> PrincipalityReport:
    """Sign-normalize by the mean, then require every nodal value to be positive."""
    phi = res.phi1 if isinstance(res, EigenResult) else res
    c = phi.coefficients
    if c.mean() < 0:
        c = -c
    k = int(np.argmin(c))
    loc = tuple(float(x) for x in phi.mesh.vertices[k])
    return PrincipalityReport(bool(c[k] > 0), float(c[k]), k, loc)


@dataclass(frozen=True)
class SimplicityReport:
    alignments: tuple
    aligned: int
    total: int
    all_aligned: bool
    seed_agreement: float
    gap: float | None
    isolation_claim: bool

    def to_dict(self) -> dict:
        return {"alignments": list(self.alignments), "aligned": self.aligned, "total": self.total,
                "all_aligned": self.all_aligned, "seed_agreement": self.seed_agreement,
                "gap": self.gap, "isolation_claim": self.isolation_claim}


def simplicity_isolation_probe(mesh: Mesh, g: BoundaryFunction, p: float, res: EigenResult,
                               threshold: float = 0.999) -> SimplicityReport:
    """Seed alignment with ``+-phi1``; for ``p = 2`` also the dense-oracle gap."""
    conv = [r for r in res.seed_runs if r.converged]
    al = tuple(h1_alignment(r.phi, res.phi1.coefficients, mesh) for r in conv)
    n_ok = sum(a >= threshold for a in al)
    gap = None
    if p == 2 and mesh.n_vertices <= ORACLE_MAX_VERTICES:
        gap = dense_oracle_p2(mesh, g).gap()
    return SimplicityReport(al, n_ok, len(conv), n_ok == len(conv), res.seed_agreement, gap,
                            bool(gap is not None and gap > 0))


def to_sparse_mass(mesh: Mesh, g: BoundaryFunction) -> sp.csr_matrix:
    return fem_space(mesh).boundary_mass(g)
