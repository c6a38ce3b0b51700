"""P1 finite elements for the p-Laplacian Steklov functionals.

Conventions
-----------
``J(phi) = int |grad phi|^p`` (optionally regularized to ``(|grad phi|^2 + eps^2)^(p/2)``),
``G(phi) = int_bdry g |phi|^p``, and ``F`` is the boundary operator
``<F(phi), v> = int_bdry f r(phi) v`` with ``r(s) = |s|^(gamma-2) s``.

``grad_J`` and ``grad_G`` carry the factor ``p`` of the true derivatives. The
weak form used by :func:`residual` divides both by ``p``:

    R(lam, phi) = grad_J / p - lam * (grad_G / p + F(phi)),

so eigenvalues do not depend on the derivative convention.
"""
from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .mesh import BoundaryFunction, Mesh

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(8)
EDGE_XI = 0.5 * (_GAUSS_X + 1.0)
EDGE_W = 0.5 * _GAUSS_W

# degree-4 symmetric rule on the reference triangle (barycentric points, weights sum to 1)
_A, _B = 0.445948490915965, 0.091576213509771
_WA, _WB = 0.223381589678011, 0.109951743655322
TRI_BARY = np.array([
    [_A, _A, 1 - 2 * _A], [_A, 1 - 2 * _A, _A], [1 - 2 * _A, _A, _A],
    [_B, _B, 1 - 2 * _B], [_B, 1 - 2 * _B, _B], [1 - 2 * _B, _B, _B],
])
TRI_W = np.array([_WA] * 3 + [_WB] * 3)


class FEMSpace:
    """Per-mesh geometric factors, sparsity pattern and the H1 Riesz factorization."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        v, t = mesh.vertices, mesh.triangles
        self.n = mesh.n_vertices
        self.tri = t
        p0, p1, p2 = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
        area2 = (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (p1[:, 1] - p0[:, 1]) * (p2[:, 0] - p0[:, 0])
        self.area = 0.5 * area2
        # gradients of the three barycentric basis functions, shape (nt, 3, 2)
        g = np.empty((len(t), 3, 2))
        g[:, 0] = np.column_stack([p1[:, 1] - p2[:, 1], p2[:, 0] - p1[:, 0]])
        g[:, 1] = np.column_stack([p2[:, 1] - p0[:, 1], p0[:, 0] - p2[:, 0]])
        g[:, 2] = np.column_stack([p0[:, 1] - p1[:, 1], p1[:, 0] - p0[:, 0]])
        self.bgrad = g / area2[:, None, None]
        self.rows = np.repeat(t, 3, axis=1).ravel()
        self.cols = np.tile(t, (1, 3)).ravel()

        e = mesh.boundary_edges
        self.ea, self.eb = e[:, 0], e[:, 1]
        self.elen = mesh.edge_lengths
        self.erows = np.concatenate([self.ea, self.ea, self.eb, self.eb])
        self.ecols = np.concatenate([self.ea, self.eb, self.ea, self.eb])

        local = np.einsum("tik,tjk->tij", self.bgrad, self.bgrad) * self.area[:, None, None]
        self.K = self._assemble(local)
        mloc = np.array([[2.0, 1, 1], [1, 2, 1], [1, 1, 2]]) / 12.0
        self.M = self._assemble(self.area[:, None, None] * mloc[None])
        self.W = (self.K + self.M).tocsc()
        self._W_lu = None

    def _assemble(self, local: np.ndarray) -> sp.csr_matrix:
        return sp.coo_matrix((local.ravel(), (self.rows, self.cols)), shape=(self.n, self.n)).tocsr()

    def _scatter(self, local: np.ndarray) -> np.ndarray:
        return np.bincount(self.tri.ravel(), weights=local.ravel(), minlength=self.n)

    @property
    def W_lu(self):
        if self._W_lu is None:
            self._W_lu = splu(self.W)
        return self._W_lu

    def gradients(self, phi: np.ndarray) -> np.ndarray:
        return np.einsum("tij,ti->tj", self.bgrad, phi[self.tri])

    def edge_values(self, phi: np.ndarray) -> np.ndarray:
        """``phi`` at the 8 Gauss points of every boundary edge, shape (ne, 8)."""
        return np.outer(phi[self.ea], 1.0 - EDGE_XI) + np.outer(phi[self.eb], EDGE_XI)

    def edge_scatter(self, ne_by_q: np.ndarray) -> np.ndarray:
        """Assemble ``sum_q w_q val[e, q] N_i(xi_q)`` into a nodal vector."""
        ra = ne_by_q @ (EDGE_W * (1.0 - EDGE_XI))
        rb = ne_by_q @ (EDGE_W * EDGE_XI)
        out = np.bincount(self.ea, weights=ra, minlength=self.n)
        out += np.bincount(self.eb, weights=rb, minlength=self.n)
        return out

    def edge_matrix(self, ne_by_q: np.ndarray) -> sp.csr_matrix:
        """Assemble ``sum_q w_q val[e, q] N_i N_j`` into a sparse matrix."""
        na, nb = 1.0 - EDGE_XI, EDGE_XI
        aa = ne_by_q @ (EDGE_W * na * na)
        ab = ne_by_q @ (EDGE_W * na * nb)
        bb = ne_by_q @ (EDGE_W * nb * nb)
        data = np.concatenate([aa, ab, ab, bb])
        return sp.coo_matrix((data, (self.erows, self.ecols)), shape=(self.n, self.n)).tocsr()

    def boundary_mass(self, g: BoundaryFunction) -> sp.csr_matrix:
        """``B_g[i, j] = int_bdry g N_i N_j``."""
        vals = np.outer(g.values * self.elen, np.ones(len(EDGE_XI)))
        return self.edge_matrix(vals)

    def riesz(self, v: np.ndarray) -> np.ndarray:
        return self.W_lu.solve(np.asarray(v, dtype=float))


_SPACES: "weakref.WeakKeyDictionary[Mesh, FEMSpace]" = weakref.WeakKeyDictionary()


def fem_space(mesh: Mesh) -> FEMSpace:
    space = _SPACES.get(mesh)
    if space is None:
        space = _SPACES[mesh] = FEMSpace(mesh)
    return space


@dataclass(frozen=True, eq=False)
class Field:
    """Nodal coefficients of a continuous P1 function on ``mesh``."""

    coefficients: np.ndarray
    mesh: Mesh

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=float)
        if c.shape != (self.mesh.n_vertices,):
            raise ValueError(f"expected {self.mesh.n_vertices} coefficients, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("field coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    def __mul__(self, c: float) -> "Field":
        return Field(self.coefficients * c, self.mesh)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(-self.coefficients, self.mesh)

    def __add__(self, other: "Field") -> "Field":
        return Field(self.coefficients + other.coefficients, self.mesh)

    def __sub__(self, other: "Field") -> "Field":
        return Field(self.coefficients - other.coefficients, self.mesh)


def _c(phi) -> np.ndarray:
    return phi.coefficients if isinstance(phi, Field) else np.asarray(phi, dtype=float)


def _space(phi, mesh=None) -> FEMSpace:
    return fem_space(phi.mesh if isinstance(phi, Field) else mesh)


# ---------------------------------------------------------------- Dirichlet energy


def default_epsilon(phi: Field) -> float:
    """``1e-8`` times the mean gradient magnitude, floored at ``1e-12``."""
    S = _space(phi)
    grad = S.gradients(_c(phi))
    mean = float(np.sum(S.area * np.hypot(grad[:, 0], grad[:, 1])) / np.sum(S.area))
    return max(1e-8 * mean, 1e-12)


def _energy(S: FEMSpace, c: np.ndarray, p: float, eps: float) -> float:
    grad = S.gradients(c)
    s = np.einsum("tj,tj->t", grad, grad) + eps * eps
    return float(np.dot(S.area, s ** (0.5 * p)))


def _grad_energy(S: FEMSpace, c: np.ndarray, p: float, eps: float) -> np.ndarray:
    grad = S.gradients(c)
    s = np.einsum("tj,tj->t", grad, grad) + eps * eps
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(s > 0, s ** (0.5 * p - 1.0), 0.0)
    local = np.einsum("tij,tj->ti", S.bgrad, grad) * (p * S.area * w)[:, None]
    return S._scatter(local)


def _hess_energy(S: FEMSpace, c: np.ndarray, p: float, eps: float) -> sp.csr_matrix:
    grad = S.gradients(c)
    s = np.einsum("tj,tj->t", grad, grad) + eps * eps
    floor = np.finfo(float).tiny
    s = np.maximum(s, floor)
    w = s ** (0.5 * p - 1.0)
    w2 = (p - 2.0) * s ** (0.5 * p - 2.0)
    Gg = np.einsum("tij,tj->ti", S.bgrad, grad)
    GG = np.einsum("tik,tjk->tij", S.bgrad, S.bgrad)
    local = (p * S.area)[:, None, None] * (w[:, None, None] * GG + w2[:, None, None] * np.einsum("ti,tj->tij", Gg, Gg))
    return S._assemble(local)


def energy_J(phi: Field, p: float, eps: float = 0.0) -> float:
    """``sum_T area_T (|grad phi|^2 + eps^2)^(p/2)``; exactly ``int |grad phi|^p`` at ``eps = 0``."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    return _energy(_space(phi), _c(phi), p, eps)


def grad_J(phi: Field, p: float, eps: float = 0.0) -> np.ndarray:
    """Nodal vector ``<J'(phi), N_i> = p int (|grad phi|^2 + eps^2)^((p-2)/2) grad phi . grad N_i``."""
    return _grad_energy(_space(phi), _c(phi), p, eps)


def hess_J(phi: Field, p: float, eps: float = 0.0) -> sp.csr_matrix:
    return _hess_energy(_space(phi), _c(phi), p, eps)


# ------------------------------------------------------------ boundary terms


def _spow(x: np.ndarray, e: float) -> np.ndarray:
    """``|x|^e`` with ``0^e = 0`` for ``e > 0``."""
    return np.abs(x) ** e


def _boundary_G(S: FEMSpace, c: np.ndarray, g: np.ndarray, p: float) -> float:
    vals = S.edge_values(c)
    return float(np.dot(g * S.elen, _spow(vals, p) @ EDGE_W))


def _grad_boundary_G(S: FEMSpace, c: np.ndarray, g: np.ndarray, p: float) -> np.ndarray:
    vals = S.edge_values(c)
    kern = p * np.sign(vals) * _spow(vals, p - 1.0)
    return S.edge_scatter(kern * (g * S.elen)[:, None])


def _hess_boundary_G(S: FEMSpace, c: np.ndarray, g: np.ndarray, p: float) -> sp.csr_matrix:
    vals = S.edge_values(c)
    if p == 2:
        kern = np.full_like(vals, 2.0)
    else:
        kern = p * (p - 1.0) * np.maximum(np.abs(vals), np.finfo(float).tiny) ** (p - 2.0)
    return S.edge_matrix(kern * (g * S.elen)[:, None])


def boundary_G(phi: Field, g: BoundaryFunction, p: float) -> float:
    """``int_bdry g |phi|^p`` with 8-point Gauss per edge."""
    return _boundary_G(_space(phi), _c(phi), g.values, p)


def grad_G(phi: Field, g: BoundaryFunction, p: float) -> np.ndarray:
    """``<G'(phi), N_i> = p int_bdry g |phi|^(p-2) phi N_i``."""
    return _grad_boundary_G(_space(phi), _c(phi), g.values, p)


def hess_G(phi: Field, g: BoundaryFunction, p: float) -> sp.csr_matrix:
    return _hess_boundary_G(_space(phi), _c(phi), g.values, p)


@dataclass(frozen=True, eq=False)
class PerturbationSpec:
    """``r(s) = |s|^(gamma-2) s`` weighted by the boundary function ``f_weight``.

    ``gamma > max(2, p)`` keeps ``r'`` continuous; for ``p < 2`` also
    ``gamma < p / (2 - p)`` (the planar trace-exponent bound).
    """

    gamma: float
    f_weight: BoundaryFunction
    p: float = 2.0

    def __post_init__(self):
        lo = max(2.0, self.p)
        if not self.gamma > lo:
            raise ValueError(f"gamma must exceed max(2, p) = {lo:g}")
        if self.p < 2 and not self.gamma < self.p / (2.0 - self.p):
            raise ValueError(f"for p = {self.p:g} gamma must be below {self.p / (2 - self.p):g}")

    @classmethod
    def default(cls, f_weight: BoundaryFunction, p: float) -> "PerturbationSpec":
        return cls(p + 1.0, f_weight, p)

    def r(self, s):
        s = np.asarray(s, dtype=float)
        return np.sign(s) * np.abs(s) ** (self.gamma - 1.0)

    def dr(self, s):
        return (self.gamma - 1.0) * np.abs(np.asarray(s, dtype=float)) ** (self.gamma - 2.0)


def zero_perturbation(mesh: Mesh, p: float) -> PerturbationSpec:
    return PerturbationSpec.default(mesh.constant(0.0), p)


def perturbation_F(phi: Field, spec: PerturbationSpec) -> np.ndarray:
    """Nodal vector ``<F(phi), N_i> = int_bdry f r(phi) N_i``."""
    S = _space(phi)
    vals = S.edge_values(_c(phi))
    return S.edge_scatter(spec.r(vals) * (spec.f_weight.values * S.elen)[:, None])


def potential_F(phi: Field, spec: PerturbationSpec) -> float:
    """``(1/gamma) int_bdry f |phi|^gamma``, whose derivative is :func:`perturbation_F`."""
    S = _space(phi)
    vals = S.edge_values(_c(phi))
    return float(np.dot(spec.f_weight.values * S.elen, _spow(vals, spec.gamma) @ EDGE_W)) / spec.gamma


def jacobian_F(phi: Field, spec: PerturbationSpec) -> sp.csr_matrix:
    S = _space(phi)
    vals = S.edge_values(_c(phi))
    return S.edge_matrix(spec.dr(vals) * (spec.f_weight.values * S.elen)[:, None])


def perturbation_value(phi: Field, spec: PerturbationSpec, v: Field) -> float:
    """``<F(phi), v>``."""
    return float(np.dot(perturbation_F(phi, spec), _c(v)))


# ---------------------------------------------------------------- residual


def residual(lam: float, phi: Field, g: BoundaryFunction, spec: PerturbationSpec | None,
             p: float, eps: float = 0.0) -> np.ndarray:
    """Discrete weak form ``int |grad phi|^(p-2) grad phi . grad v - lam int (g |phi|^(p-2) phi + f r(phi)) v``.

    Tested against every nodal basis function; zero exactly at solutions.
    """
    S = _space(phi)
    c = _c(phi)
    out = _grad_energy(S, c, p, eps) / p - lam * _grad_boundary_G(S, c, g.values, p) / p
    if spec is not None:
        out -= lam * perturbation_F(phi, spec)
    return out


def residual_jacobian(lam: float, phi: Field, g: BoundaryFunction, spec: PerturbationSpec | None,
                      p: float, eps: float = 0.0) -> tuple[sp.csr_matrix, np.ndarray]:
    """``(d residual / d phi, d residual / d lam)``."""
    S = _space(phi)
    c = _c(phi)
    J = (_hess_energy(S, c, p, eps) - lam * _hess_boundary_G(S, c, g.values, p)) / p
    dl = -_grad_boundary_G(S, c, g.values, p) / p
    if spec is not None:
        J = J - lam * jacobian_F(phi, spec)
        dl = dl - perturbation_F(phi, spec)
    return J.tocsr(), dl


# ------------------------------------------------------------------ norms


def dual_norm(v: np.ndarray, mesh: Mesh, p: float | None = None) -> float:
    """H1-Riesz surrogate of the dual norm: ``sqrt(v . W^{-1} v)`` with ``W`` = stiffness + mass.

    Equivalent to the ``(W^{1,p})'`` norm only on a fixed mesh; ``p`` is accepted
    for interface symmetry and unused.
    """
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        return 0.0
    r = fem_space(mesh).riesz(v)
    return float(np.sqrt(max(np.dot(v, r), 0.0)))


def h1_norm(phi: Field) -> float:
    S = _space(phi)
    c = _c(phi)
    return float(np.sqrt(c @ (S.W @ c)))


def lp_volume(phi: Field, p: float) -> float:
    """``int_Omega |phi|^p`` with a degree-4 triangle rule (exact for ``p = 2``)."""
    S = _space(phi)
    c = _c(phi)[S.tri]
    vals = c @ TRI_BARY.T
    return float(np.dot(S.area, _spow(vals, p) @ TRI_W))


def w1p_norm(phi: Field, p: float) -> float:
    """``(int |grad phi|^p + int |phi|^p)^(1/p)``."""
    return (energy_J(phi, p) + lp_volume(phi, p)) ** (1.0 / p)


def sup_norm(phi: Field) -> float:
    return float(np.max(np.abs(_c(phi))))


def growth_ratio(t: float, direction: Field, spec: PerturbationSpec, p: float) -> float:
    """``dual_norm(F(t * direction)) / t^(p-1)`` for a unit-``W^{1,p}`` direction."""
    if not t > 0:
        raise ValueError("t must be positive")
    return dual_norm(perturbation_F(direction * t, spec), direction.mesh) / t ** (p - 1.0)
