"""Singular boundary weights with closed-form rearrangements.

Catalog
-------
``g1-circle``          ``|y|**(-1/2)`` on the unit circle.
``g2-box[:p=..]``      ``|x log|x||**(-(p-1))`` on the bottom face of the box, 0 elsewhere.
``h-box[:p=..]``       the power-law majorant ``|x|**(-(p-1))`` of ``g2``.
``g3-box:q=<q>``       ``|x|**(-1/q)`` on the bottom face, 0 elsewhere.
``const:<c>``          constant weight.
``composite:<base>[-<c>]``  ``base - c``; without ``c`` the shift makes ``int g = -0.5 int base``.

The box is ``(-R, R) x (0, 2R)`` with the bottom side as the singular face;
every box name accepts ``:R=<R>`` (default ``1/4``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from .lorentz import AnalyticProfile, MembershipReport, membership_F_d, membership_G_d
from .mesh import BoundaryFunction, Mesh, boundary_integral

KINDS = ("example_2_1", "example_2_2", "example_2_3", "constant", "composite")
DEFAULT_R = 0.25
COMPOSITE_RATIO = 0.5


class WeightError(ValueError):
    pass


@dataclass(frozen=True)
class WeightSpec:
    kind: str
    params: dict = field(default_factory=dict)
    base: "WeightSpec | None" = None
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise WeightError(f"unknown weight kind {self.kind!r}")
        if self.kind == "composite" and self.base is None:
            raise WeightError("composite weight needs a base")

    @property
    def domain_tag(self) -> str:
        if self.kind == "example_2_1":
            return "disk"
        if self.kind in ("example_2_2", "example_2_3"):
            return "box"
        if self.kind == "composite":
            return self.base.domain_tag
        return "any"

    @property
    def R(self) -> float:
        return float(self.params.get("R", DEFAULT_R))

    @property
    def scale(self) -> float:
        return float(self.params.get("scale", 1.0))

    def scaled(self, c: float) -> "WeightSpec":
        """``c * w`` for ``c > 0``."""
        if not c > 0:
            raise WeightError("scaling factor must be positive")
        if self.kind == "constant":
            return WeightSpec("constant", {"c": c * self.params["c"]}, name=self.name)
        if self.kind == "composite":
            return WeightSpec("composite", {"c": c * self.shift}, self.base.scaled(c), self.name)
        params = dict(self.params)
        params["scale"] = c * self.scale
        return WeightSpec(self.kind, params, name=self.name)

    @property
    def shift(self) -> float:
        """The constant ``c`` subtracted by a composite weight."""
        if self.kind != "composite":
            return 0.0
        c = self.params.get("c")
        if c is None:
            base_int = analytic_integral(self.base)
            return (1.0 + COMPOSITE_RATIO) * base_int / domain_perimeter(self.base)
        return float(c)


def domain_perimeter(w: WeightSpec) -> float:
    tag = w.domain_tag
    if tag == "disk":
        return 2 * math.pi
    if tag == "box":
        return 8 * w.R
    raise WeightError("weight is not bound to a domain")


# ------------------------------------------------------------------ parsing


def _kv(parts) -> dict:
    out = {}
    for part in parts:
        if not part:
            continue
        if "=" not in part:
            raise WeightError(f"expected key=value, got {part!r}")
        k, v = part.split("=", 1)
        out[k.strip()] = float(v)
    return out


def parse_weight(name: str) -> WeightSpec:
    name = name.strip()
    if name.startswith("composite:"):
        rest = name[len("composite:"):]
        c = None
        if "-" in rest:
            head, tail = rest.rsplit("-", 1)
            try:
                c = float(tail)
                rest = head
            except ValueError:
                pass
        base = parse_weight(rest)
        params = {} if c is None else {"c": c}
        return WeightSpec("composite", params, base, name)
    if name.startswith("const:"):
        return WeightSpec("constant", {"c": float(name.split(":", 1)[1])}, name=name)
    head, *opts = name.replace(",", ":").split(":")
    kv = _kv(opts)
    if head == "g1-circle":
        return WeightSpec("example_2_1", kv, name=name)
    if head in ("g2-box", "h-box"):
        kv.setdefault("p", 1.5)
        if not 1 < kv["p"] < 2:
            raise WeightError("g2/h weights need 1 < p < 2 in the plane")
        if not 0 < kv.get("R", DEFAULT_R) < 0.5:
            raise WeightError("g2/h weights need 0 < R < 1/2")
        kv["majorant"] = 1.0 if head == "h-box" else 0.0
        return WeightSpec("example_2_2", kv, name=name)
    if head == "g3-box":
        if "q" not in kv:
            raise WeightError("g3-box needs q, e.g. g3-box:q=2")
        if not kv["q"] > 1:
            raise WeightError("g3-box needs q > 1")
        if not 0 < kv.get("R", DEFAULT_R) < 1:
            raise WeightError("g3-box needs 0 < R < 1")
        return WeightSpec("example_2_3", kv, name=name)
    raise WeightError(f"unknown catalog weight {name!r}")


def load_weight_csv(path, mesh: Mesh) -> BoundaryFunction:
    """Per-edge CSV: one value per line, or ``edge,value`` rows in edge order."""
    vals = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        cells = [c for c in line.split(",") if c.strip()]
        try:
            vals.append(float(cells[-1]))
        except ValueError:
            if vals:
                raise
            continue  # header row
    return BoundaryFunction(np.array(vals), mesh)


# ------------------------------------------------------- closed forms


def _exponent(w: WeightSpec) -> float:
    if w.kind == "example_2_1":
        return 0.5
    if w.kind == "example_2_2":
        return w.params["p"] - 1.0
    if w.kind == "example_2_3":
        return 1.0 / w.params["q"]
    raise WeightError(f"{w.kind} has no power-law exponent")


def analytic_rearrangement(w: WeightSpec) -> AnalyticProfile:
    """Closed-form ``f*`` of a catalog weight.

    For ``g2`` this returns the profile of its power-law majorant ``h``;
    see :func:`g2_rearrangement` for ``g2`` itself.
    """
    s = w.scale
    if w.kind == "example_2_1":
        return AnalyticProfile(lambda t: s * np.sin(t / 4) ** -0.5, 2 * math.pi, 2.0 * s, 0.5,
                               name="g1*")
    if w.kind in ("example_2_2", "example_2_3"):
        b = _exponent(w)
        A = s * 2.0 ** b  # (2^{N-1} R^{N-2})^{b} with N = 2
        return AnalyticProfile(lambda t: A * t ** -b, 8 * w.R, A, b, support=2 * w.R,
                               name="h*" if w.kind == "example_2_2" else "g3*", power_law=True)
    if w.kind == "constant":
        raise WeightError("constant weights have no fixed domain; use constant_profile(c, T)")
    raise WeightError("composite weights have no closed-form rearrangement")


def constant_profile(c: float, T: float) -> AnalyticProfile:
    return AnalyticProfile(lambda t: abs(c) * np.ones_like(t), T, abs(c), 0.0, name="const*",
                           power_law=True)


def g2_rearrangement(w: WeightSpec) -> AnalyticProfile:
    """Exact ``g2*(t) = ((t/2) |log(t/2)|)**(-(p-1))`` on ``(0, 2R)``.

    Valid while ``x |log x|`` increases on ``(0, R)``, i.e. ``R <= 1/e``.
    """
    if w.kind != "example_2_2":
        raise WeightError("not a g2 or h weight")
    if w.R > 1 / math.e:
        raise WeightError("closed-form g2* needs R <= 1/e")
    b = w.params["p"] - 1.0
    s = w.scale
    return AnalyticProfile(lambda t: s * (0.5 * t * np.abs(np.log(0.5 * t))) ** -b, 8 * w.R,
                           s * 2.0 ** b, b, log_power=-b, support=2 * w.R, name="g2*")


def _g2_antiderivative(x, b: float):
    """``int_0^|x| (t |log t|)**(-b) dt`` (odd extension), for ``|x| < 1``, ``0 < b < 1``."""
    x = np.asarray(x, dtype=float)
    a = 1.0 - b
    ax = np.abs(x)
    with np.errstate(divide="ignore"):
        L = -np.log(np.where(ax > 0, ax, 1.0))
    val = a ** (-a) * special.gamma(a) * special.gammaincc(a, a * L)
    return np.sign(x) * np.where(ax > 0, val, 0.0)


def g2_majorant_integral(w: WeightSpec) -> tuple[float, float]:
    """``int h**(d-q) g2**q dsigma`` with ``d = 1/(p-1)``, ``q = 2/(p-1)``.

    Returns ``(numeric, closed_form)``; the integrand reduces to
    ``|x|**-1 |log|x||**-2`` on the face, whose integral is ``2 / log(1/R)``.
    """
    from scipy import integrate

    b = w.params["p"] - 1.0
    d, q = 1.0 / b, 2.0 / b
    R = w.R

    def integrand(u):  # x = exp(-u), in logs to avoid overflow
        log_h = b * u
        log_g2 = -b * (math.log(u) - u)
        return math.exp((d - q) * log_h + q * log_g2 - u)

    val, _ = integrate.quad(integrand, math.log(1 / R), math.inf, epsabs=0.0, epsrel=1e-13, limit=200)
    return 2.0 * val, 2.0 / math.log(1 / R)


def analytic_integral(w: WeightSpec) -> float:
    """Exact boundary integral of a domain-bound weight on its curved/flat domain."""
    s = w.scale
    if w.kind == "example_2_1":
        return s * 2.0 * special.beta(0.25, 0.5)
    if w.kind == "example_2_3" or (w.kind == "example_2_2" and w.params.get("majorant")):
        b = _exponent(w)
        return s * 2.0 * w.R ** (1 - b) / (1 - b)
    if w.kind == "example_2_2":
        return s * 2.0 * float(_g2_antiderivative(w.R, w.params["p"] - 1.0))
    if w.kind == "composite":
        return analytic_integral(w.base) - w.shift * domain_perimeter(w.base)
    if w.kind == "constant":
        raise WeightError("constant weights have no fixed domain")
    raise WeightError(w.kind)


# ------------------------------------------------------------- sampling


def _check_domain(w: WeightSpec, m: Mesh) -> None:
    tag = w.domain_tag
    v = m.vertices
    if tag == "disk":
        r = np.hypot(*v[m.boundary_vertices].T)
        if not np.allclose(r, 1.0, atol=1e-9):
            raise WeightError(f"{w.name or w.kind} lives on the unit circle; mesh boundary is not inscribed in it")
    elif tag == "box":
        R = w.R
        lo, hi = v.min(axis=0), v.max(axis=0)
        if not (np.allclose(lo, [-R, 0.0], atol=1e-12) and np.allclose(hi, [R, 2 * R], atol=1e-12)):
            raise WeightError(f"{w.name or w.kind} lives on the box (-{R}, {R}) x (0, {2 * R})")


def _bottom_edges(m: Mesh) -> np.ndarray:
    v = m.vertices
    a, b = m.boundary_edges[:, 0], m.boundary_edges[:, 1]
    return (np.abs(v[a, 1]) < 1e-12) & (np.abs(v[b, 1]) < 1e-12)


def _power_antiderivative(x, s):
    return np.sign(x) * np.abs(x) ** (1 - s) / (1 - s)


def sample_on_boundary(w: WeightSpec, m: Mesh) -> BoundaryFunction:
    """Edge averages ``(1/|e|) int_e w dsigma`` of the weight on ``m``."""
    if w.kind == "constant":
        return m.constant(w.params["c"])
    if w.kind == "composite":
        base = sample_on_boundary(w.base, m)
        return BoundaryFunction(base.values - w.shift, m)
    _check_domain(w, m)
    v = m.vertices
    a, b = m.boundary_edges[:, 0], m.boundary_edges[:, 1]
    L = m.edge_lengths
    s = w.scale
    out = np.zeros(m.n_edges)
    if w.kind == "example_2_1":
        y0, y1 = v[a, 1], v[b, 1]
        dy = y1 - y0
        F = lambda y: 2.0 * np.sign(y) * np.sqrt(np.abs(y))
        flat = np.abs(dy) < 1e-9 * L
        with np.errstate(divide="ignore", invalid="ignore"):
            avg = (F(y1) - F(y0)) / dy
        ymid = 0.5 * (y0 + y1)
        if np.any(flat & (np.abs(ymid) < 1e-12)):
            raise WeightError("non-integrable: edge lies on the singular line y = 0")
        out = np.where(flat, np.abs(ymid) ** -0.5, avg)
        return BoundaryFunction(s * out, m)
    exp = _exponent(w)
    bottom = _bottom_edges(m)
    x0, x1 = v[a[bottom], 0], v[b[bottom], 0]
    touches = (np.minimum(x0, x1) <= 0) & (np.maximum(x0, x1) >= 0)
    if exp >= 1 and np.any(touches):
        raise WeightError(f"non-integrable: exponent {exp:g} >= 1 on an edge touching x = 0")
    if w.kind == "example_2_2" and not w.params.get("majorant"):
        F = lambda x: _g2_antiderivative(x, exp)
    else:
        F = lambda x: _power_antiderivative(x, exp)
    out[bottom] = (F(x1) - F(x0)) / (x1 - x0)
    return BoundaryFunction(s * out, m)


def exact_polygon_integral(w: WeightSpec, m: Mesh) -> float:
    """``int w dsigma`` over the mesh boundary by the same antiderivatives, edge by edge."""
    return boundary_integral(sample_on_boundary(w, m))


def perturbation_weight(g: BoundaryFunction) -> BoundaryFunction:
    """Bounded ``f``: indicator of ``supp g+`` smoothed once with neighbouring edges."""
    ind = (g.values > 0).astype(float)
    smooth = 0.25 * np.roll(ind, 1) + 0.5 * ind + 0.25 * np.roll(ind, -1)
    return BoundaryFunction(smooth, g.mesh)


# -------------------------------------------------------- admissibility


@dataclass
class AdmissibilityReport:
    gplus_nontrivial: bool
    integral_g: float
    membership: MembershipReport
    regime: str
    admissible: bool

    def to_dict(self) -> dict:
        return {
            "gplus_nontrivial": self.gplus_nontrivial,
            "integral_g": self.integral_g,
            "regime": self.regime,
            "admissible": self.admissible,
            "membership": self.membership.to_dict(),
        }


def singular_profile(w: WeightSpec) -> AnalyticProfile:
    """Profile with the same ``t -> 0`` behaviour as ``|w|*``."""
    if w.kind == "composite":
        base = w.base
        if base.kind == "constant":
            return constant_profile(base.params["c"] - w.shift, 1.0)
        prof = singular_profile(base)
        # subtracting a constant leaves the leading singular term unchanged
        return AnalyticProfile(lambda t: np.abs(prof.func(t) - w.shift), prof.T, prof.A, prof.beta,
                               prof.log_power, None, prof.name + "-c")
    if w.kind == "constant":
        return constant_profile(w.params["c"], 1.0)
    if w.kind == "example_2_2" and not w.params.get("majorant"):
        return g2_rearrangement(w)
    return analytic_rearrangement(w)


def membership_for_exponent(profile, p: float, N: int = 2) -> MembershipReport:
    if p < N:
        return membership_F_d(profile, (N - 1) / (p - 1))
    return membership_G_d(profile, 1.0, N)


def admissibility(w, p: float, N: int = 2, mesh: Mesh | None = None) -> AdmissibilityReport:
    """Check ``g+ != 0``, ``int g < 0`` and the class condition for exponent ``p``.

    ``w`` is a :class:`WeightSpec` (closed-form checks) or a sampled
    :class:`BoundaryFunction` (exact step-profile checks).
    """
    if N != 2:
        raise WeightError("only planar domains (N = 2) are supported")
    if not 1 < p <= N:
        raise WeightError(f"p = {p:g} outside (1, N] is out of scope")
    regime = "N>p" if p < N else "N=p"
    if isinstance(w, BoundaryFunction):
        from .rearrangement import decreasing_rearrangement

        gplus = bool(np.any(w.values > 0))
        integral = boundary_integral(w)
        mem = membership_for_exponent(decreasing_rearrangement(w), p, N)
    else:
        if w.kind == "constant":
            c = w.params["c"]
            gplus = c > 0
            T = mesh.perimeter if mesh is not None else 1.0
            integral = c * T
        elif w.kind == "composite" and w.base.kind == "constant":
            c = w.base.params["c"] - w.shift
            gplus = c > 0
            T = mesh.perimeter if mesh is not None else 1.0
            integral = c * T
        else:
            # singular catalog bases are unbounded above, so base - c is positive near the singularity
            gplus = w.scale > 0 if w.kind != "composite" else w.base.scale > 0
            integral = analytic_integral(w)
        mem = membership_for_exponent(singular_profile(w), p, N)
    ok = gplus and integral < 0 and mem.verdict == "member"
    return AdmissibilityReport(bool(gplus), float(integral), mem, regime, bool(ok))
