"""Lorentz-Zygmund quasi-norms and the weight classes F_d, G_d.

Quasi-norms are measured through ``t**(1/p) * l1(t)**alpha * f*(t)`` in
``L^q(dt/t)`` on ``(0, T)``, with ``l1(t) = 1 + |log t|``. Profiles are either
exact :class:`~steklov_lab.rearrangement.StepProfile` objects or closed-form
:class:`AnalyticProfile` objects that also know their small-``t`` asymptotics.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.optimize import minimize_scalar

from .mesh import BoundaryFunction
from .rearrangement import MaximalProfile, StepProfile, decreasing_rearrangement, maximal_function

INF = math.inf

# Gauss-Legendre order for step-interval quadrature
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
_REL_TOL = 1e-12

# membership limit detection
TOL_ZERO_FRACTION = 1e-3
STABILITY_FACTOR = 10.0
WINDOW = 8
GRID_LEVELS = 60
STABLE_SPREAD = 0.05


def l1(t):
    return 1.0 + np.abs(np.log(t))


@dataclass(frozen=True)
class LZParams:
    p: float
    q: float
    alpha: float = 0.0

    def __post_init__(self):
        for name in ("p", "q"):
            v = getattr(self, name)
            if not (v >= 1 or v == INF) or math.isnan(v):
                raise ValueError(f"{name} must lie in [1, inf], got {v}")
        if not math.isfinite(self.alpha):
            raise ValueError("alpha must be finite")

    @property
    def inv_p(self) -> float:
        return 0.0 if self.p == INF else 1.0 / self.p


@dataclass(frozen=True, eq=False)
class AnalyticProfile:
    """Closed-form nonincreasing profile on ``(0, T]``.

    Near ``t = 0`` the profile behaves like ``A * t**(-beta) * |log t|**log_power``;
    the membership tests and divergence checks read these exponents instead of
    sampling. ``support`` is where the profile drops to zero (``T`` if never).
    """

    func: Callable
    T: float
    A: float
    beta: float
    log_power: float = 0.0
    support: float | None = None
    name: str = "analytic"
    power_law: bool = False

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        end = self.T if self.support is None else self.support
        with np.errstate(divide="ignore", invalid="ignore"):
            val = self.func(np.where((t > 0) & (t < end), t, end / 2))
        val = np.where((t > 0) & (t < end), val, 0.0)
        return np.where(t <= 0, np.inf if self.beta > 0 or self.log_power > 0 else val, val)

    @property
    def end(self) -> float:
        return self.T if self.support is None else self.support

    def scaled(self, c: float) -> "AnalyticProfile":
        c = abs(c)
        return AnalyticProfile(lambda t: c * self.func(t), self.T, c * self.A, self.beta,
                               self.log_power, self.support, self.name, self.power_law)

    def maximal(self) -> "AnalyticProfile":
        """``f**`` of the profile; closed form for pure power laws with ``beta < 1``."""
        if self.beta >= 1:
            raise ValueError("f** is infinite when beta >= 1")
        if self.power_law and self.support is None:
            k = 1.0 / (1.0 - self.beta)
            return AnalyticProfile(lambda t: k * self.func(t), self.T, k * self.A, self.beta,
                                   self.log_power, None, self.name + "**", True)
        end = self.end

        def fss(t):
            t = np.atleast_1d(np.asarray(t, dtype=float))
            out = np.array([_quad_log(self.func, 0.0, min(x, end)) / x if x > 0 else np.inf
                            for x in t])
            return out

        return AnalyticProfile(fss, self.T, self.A / (1.0 - self.beta), self.beta, self.log_power,
                               None, self.name + "**", False)

    def limit_at_zero(self, inv_d: float, extra_log: float = 0.0) -> float:
        """Exact ``lim t**inv_d * l1(t)**extra_log * f*(t)`` as ``t -> 0``."""
        if self.A == 0:
            return 0.0
        e = inv_d - self.beta
        k = self.log_power + extra_log
        if e > 0 or (e == 0 and k < 0):
            return 0.0
        if e == 0 and k == 0:
            return float(self.A)
        return INF


def _quad_log(fun, a, b):
    """``int_a^b fun`` via ``t = exp(u)``; robust to integrable power singularities at 0."""
    if b <= a:
        return 0.0
    lo = -745.0 if a <= 0 else math.log(a)
    val, _ = integrate.quad(lambda u: float(fun(math.exp(u))) * math.exp(u), lo, math.log(b),
                            limit=400, epsabs=0.0, epsrel=1e-12)
    return val


Profile = StepProfile | AnalyticProfile | MaximalProfile


# ----------------------------------------------------------- step integrals


def _gl(fun, a: float, b: float) -> float:
    x = 0.5 * (b - a) * _GL_X + 0.5 * (b + a)
    return 0.5 * (b - a) * float(np.dot(_GL_W, fun(x)))


def _gl_graded(fun, a: float, b: float) -> float:
    """Gauss-Legendre on geometric pieces of ratio 2; grades toward ``a`` (or toward 0)."""
    if b <= a:
        return 0.0
    total = 0.0
    if a <= 0:
        hi = b
        while True:
            lo = hi / 2
            inc = _gl(fun, lo, hi)
            total += inc
            hi = lo
            if abs(inc) <= _REL_TOL * abs(total) or hi < 1e-300:
                return total
    hi = b
    while hi > 2 * a:
        lo = hi / 2
        total += _gl(fun, lo, hi)
        hi = lo
    return total + _gl(fun, a, hi)


def _split_at_one(a: float, b: float):
    if a < 1.0 < b:
        return [(a, 1.0), (1.0, b)]
    return [(a, b)]


def _log_weight_integral(k: float, a: float, b: float) -> float:
    """Closed form of ``int_a^b l1(t)**k dt/t``; ``a`` may be 0."""
    total = 0.0
    for lo, hi in _split_at_one(a, b):
        if hi <= 1.0:
            u_lo, u_hi = 1.0 - math.log(hi), (INF if lo == 0 else 1.0 - math.log(lo))
        else:
            u_lo, u_hi = 1.0 + math.log(lo), 1.0 + math.log(hi)
        if u_hi == INF:
            if k >= -1:
                return INF
            total += u_lo ** (k + 1) / (-(k + 1))
        elif k == -1:
            total += math.log(u_hi / u_lo)
        else:
            total += (u_hi ** (k + 1) - u_lo ** (k + 1)) / (k + 1)
    return total


def _weight_sup(inv_p: float, alpha: float, a: float, b: float) -> float:
    """``sup`` of ``t**inv_p * l1(t)**alpha`` over ``(a, b]``, with the limit at ``a``."""
    cands = [b, 1.0]
    if inv_p > 0 and alpha != 0:
        s = alpha / inv_p
        if s > 1:
            cands.append(math.exp(1 - s))
        if s < -1:
            cands.append(math.exp(-s - 1))
    ts = [t for t in cands if a < t <= b]
    vals = [t ** inv_p * l1(t) ** alpha for t in ts]
    if a > 0:
        vals.append(a ** inv_p * l1(a) ** alpha)
    elif inv_p == 0:
        vals.append(INF if alpha > 0 else (1.0 if alpha == 0 else 0.0))
    else:
        vals.append(0.0)
    return max(vals)


def _step_quasi_norm(prof: StepProfile, par: LZParams) -> float:
    b, v = prof.breakpoints, prof.levels
    ip, q, al = par.inv_p, par.q, par.alpha
    if q == INF:
        best = 0.0
        for i in range(len(v)):
            if v[i] > 0:
                best = max(best, v[i] * _weight_sup(ip, al, b[i], b[i + 1]))
        return best
    total = 0.0
    for i in range(len(v)):
        if v[i] == 0:
            continue
        lo, hi = b[i], b[i + 1]
        if ip == 0:
            piece = _log_weight_integral(al * q, lo, hi)
        elif al == 0:
            piece = (hi ** (q * ip) - lo ** (q * ip)) / (q * ip)
        else:
            e, k = q * ip - 1.0, al * q
            piece = sum(_gl_graded(lambda t: t ** e * l1(t) ** k, x, y) for x, y in _split_at_one(lo, hi))
        if piece == INF:
            return INF
        total += v[i] ** q * piece
    return total ** (1.0 / q)


def _maximal_norm(mp: MaximalProfile, par: LZParams) -> float:
    prof = mp.profile
    b, v = prof.breakpoints, prof.levels
    ip, q, al = par.inv_p, par.q, par.alpha
    if q == INF:
        best = 0.0
        for i in range(len(v)):
            c, vi = mp.piece(i)
            lo, hi = b[i], b[i + 1]
            if i == 0:
                best = max(best, vi * _weight_sup(ip, al, lo, hi))
                continue
            ts = np.geomspace(lo, hi, 65)[1:]
            ts = np.union1d(ts, [t for t in (1.0,) if lo < t <= hi])
            vals = ts ** ip * l1(ts) ** al * (c / ts + vi)
            j = int(np.argmax(vals))
            best = max(best, float(vals[j]), lo ** ip * l1(lo) ** al * (c / lo + vi))
            if 0 < j < len(ts) - 1:
                r = minimize_scalar(lambda u: -(math.exp(u) ** ip * l1(math.exp(u)) ** al
                                                * (c / math.exp(u) + vi)),
                                    bounds=(math.log(ts[j - 1]), math.log(ts[j + 1])),
                                    method="bounded", options={"xatol": 1e-13})
                best = max(best, -float(r.fun))
        return best
    # the first step has f** = v_0, same as f*
    total = 0.0
    for i in range(len(v)):
        c, vi = mp.piece(i)
        lo, hi = b[i], b[i + 1]
        if i == 0:
            first = _step_quasi_norm(StepProfile([0.0, hi], [vi]), par) if vi > 0 else 0.0
            if first == INF:
                return INF
            total += first ** q
            continue
        if al == 0 and float(q).is_integer() and ip > 0:
            total += _power_poly_integral(c, vi, ip, int(q), lo, hi)
        else:
            e, k = q * ip - 1.0, al * q
            total += sum(_gl_graded(lambda t: t ** e * l1(t) ** k * (c / t + vi) ** q, x, y)
                         for x, y in _split_at_one(lo, hi))
    return total ** (1.0 / q)


def _power_poly_integral(c: float, v: float, ip: float, q: int, a: float, b: float) -> float:
    """Closed form of ``int_a^b t**(q ip - 1) (c/t + v)**q dt`` by binomial expansion."""
    total = 0.0
    for j in range(q + 1):
        coef = math.comb(q, j) * c ** j * v ** (q - j)
        if coef == 0:
            continue
        e = q * ip - j  # exponent after integrating t**(e - 1)
        if abs(e) < 1e-14:
            total += coef * math.log(b / a)
        else:
            total += coef * (b ** e - a ** e) / e
    return total


# --------------------------------------------------------- analytic norms


def _analytic_norm(prof: AnalyticProfile, par: LZParams) -> float:
    ip, q, al = par.inv_p, par.q, par.alpha
    # exact divergence test at t -> 0 from the profile's asymptotics
    e = ip - prof.beta
    k = prof.log_power + al
    if prof.A > 0:
        if q == INF:
            lim = prof.limit_at_zero(ip, al)
            if lim == INF:
                return INF
        else:
            if e < 0 or (e == 0 and k * q >= -1):
                return INF
    end = prof.end
    if q == INF:
        u = np.linspace(math.log(end) - 700.0 * (ip > 0) - 60.0 * (ip == 0), math.log(end), 20001)
        t = np.exp(u)
        vals = t ** ip * l1(t) ** al * prof(t)
        j = int(np.nanargmax(vals))
        best = float(vals[j])
        if 0 < j < len(u) - 1:
            r = minimize_scalar(lambda x: -float(math.exp(x) ** ip * l1(math.exp(x)) ** al
                                                 * prof(math.exp(x))),
                                bounds=(u[j - 1], u[j + 1]), method="bounded",
                                options={"xatol": 1e-12})
            best = max(best, -float(r.fun))
        if prof.A > 0 and e == 0 and k == 0:
            best = max(best, prof.A)
        return best

    def integrand(t):
        return (t ** ip * l1(t) ** al * prof(t)) ** q / t

    pieces = [(0.0, min(end, 1.0))] + ([(1.0, end)] if end > 1.0 else [])
    total = sum(_quad_log(integrand, lo, hi) for lo, hi in pieces)
    return total ** (1.0 / q)


# ------------------------------------------------------------- public API


def _as_profile(profile) -> Profile:
    if isinstance(profile, BoundaryFunction):
        return decreasing_rearrangement(profile)
    return profile


def quasi_norm(profile, params: LZParams) -> float:
    """``|f|_(p,q;alpha)``; ``inf`` when the defining integral or supremum diverges."""
    prof = _as_profile(profile)
    if isinstance(prof, StepProfile):
        return _step_quasi_norm(prof, params)
    if isinstance(prof, MaximalProfile):
        return _maximal_norm(prof, params)
    if isinstance(prof, AnalyticProfile):
        return _analytic_norm(prof, params)
    raise TypeError(f"unsupported profile type {type(prof).__name__}")


def double_star_norm(profile, params: LZParams) -> float:
    """f**-based functional without the ``p > 1`` guard (used by the duality pairing)."""
    prof = _as_profile(profile)
    if isinstance(prof, StepProfile):
        return _maximal_norm(maximal_function(prof), params)
    if isinstance(prof, AnalyticProfile):
        return _analytic_norm(prof.maximal(), params)
    raise TypeError(f"unsupported profile type {type(prof).__name__}")


def norm_double_star(profile, params: LZParams) -> float:
    """``||f||_(p,q,alpha)``: the quasi-norm with ``f**`` in place of ``f*``; needs ``p > 1``."""
    if not params.p > 1:
        raise ValueError("the f**-based norm needs p > 1")
    return double_star_norm(profile, params)


# ------------------------------------------------------------- membership


@dataclass
class MembershipReport:
    verdict: str
    limit_at_zero: float
    limit_at_T: float
    samples: list = field(default_factory=list)
    klass: str = ""
    method: str = "grid"
    tol_zero: float = 0.0
    stability_factor: float = STABILITY_FACTOR
    window: int = WINDOW

    def to_dict(self) -> dict:
        return {
            "class": self.klass,
            "verdict": self.verdict,
            "limit_at_zero": self.limit_at_zero,
            "limit_at_T": self.limit_at_T,
            "method": self.method,
            "tol_zero": self.tol_zero,
            "stability_factor": self.stability_factor,
            "window": self.window,
            "samples": [[t, v] for t, v in self.samples],
        }


def _grid_verdict(seq: np.ndarray) -> tuple[str, float]:
    mx = float(np.max(seq)) if len(seq) else 0.0
    if not np.isfinite(mx):
        return "non-member", INF
    if mx == 0:
        return "member", 0.0
    tol = TOL_ZERO_FRACTION * mx
    w = seq[-WINDOW:]
    if np.all(w < tol) and np.all(np.diff(w) <= 0):
        return "member", tol
    if np.all(w > STABILITY_FACTOR * tol):
        spread = (np.max(w) - np.min(w)) / np.max(w)
        if spread <= STABLE_SPREAD or np.all(np.diff(w) >= 0):
            return "non-member", tol
    return "inconclusive", tol


def _membership(profile, inv_d: float, n_log: float, klass: str, check_T: bool) -> MembershipReport:
    prof = _as_profile(profile)
    T = prof.T
    k = np.arange(GRID_LEVELS + 1)
    t0 = T * 2.0 ** (-k)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        L0 = t0 ** inv_d * l1(t0) ** n_log * prof(t0)
        tT = T * (1 - 2.0 ** (-k[1:]))
        LT = tT ** inv_d * prof(tT)
    L0 = np.nan_to_num(np.asarray(L0, float), nan=0.0, posinf=INF)
    samples = [(float(a), float(b)) for a, b in zip(t0, L0)]
    verdict, tol = _grid_verdict(L0)
    limit0 = float(L0[-1])
    method = "grid"
    if isinstance(prof, AnalyticProfile):
        limit0 = prof.limit_at_zero(inv_d, n_log)
        verdict = "member" if limit0 == 0 else "non-member"
        method = "analytic"
    elif verdict == "inconclusive":
        limit0 = float(L0[-1])
    limit_T = float(LT[-1]) if check_T else float("nan")
    return MembershipReport(verdict, limit0, limit_T, samples, klass, method, tol)


def membership_F_d(profile, d: float) -> MembershipReport:
    """Scan ``t**(1/d) f*(t)`` toward ``t = 0`` (and report its value toward ``T``).

    Analytic profiles get an exact verdict from their asymptotics. The value
    near ``T`` is reported but does not enter the verdict: on a boundary of
    finite measure it equals ``T**(1/d) f*(T-)``, which is positive for every
    function bounded away from zero, including smooth ones.
    """
    if not d > 1:
        raise ValueError("F_d needs d > 1")
    return _membership(profile, 1.0 / d, 0.0, f"F_{d:g}", True)


def membership_G_d(profile, d: float, N: int = 2) -> MembershipReport:
    """Scan ``t**(1/d) l1(t)**N f*(t)`` toward ``t = 0``."""
    if not d >= 1:
        raise ValueError("G_d needs d >= 1")
    return _membership(profile, 1.0 / d, float(N), f"G_{d:g}", False)


# ------------------------------------------------------------ inequalities


def embedding_gap(profile, params_strong: LZParams, params_weak: LZParams) -> tuple[float, float]:
    """``(weak norm, strong norm)`` for a pair satisfying one of the two embedding hypotheses.

    Either ``strong.p > weak.p`` (any second indices), or equal first indices with
    ``q <= s, alpha >= beta`` or ``q > s, alpha + 1/q > beta + 1/s``.
    """
    s, w = params_strong, params_weak
    ok = s.p > w.p
    if s.p == w.p:
        iq = 0.0 if s.q == INF else 1 / s.q
        isq = 0.0 if w.q == INF else 1 / w.q
        ok = (s.q <= w.q and s.alpha >= w.alpha) or (s.q > w.q and s.alpha + iq > w.alpha + isq)
    if not ok:
        raise ValueError("parameters match neither embedding hypothesis")
    return quasi_norm(profile, w), quasi_norm(profile, s)


def holder_pair(f: BoundaryFunction, g: BoundaryFunction, split) -> tuple[float, float]:
    """``(||fg||_(p,q), C ||f||_(p1,q1) ||g||_(p2,q2))`` with ``C = p'`` (``C = 1`` at ``p = 1``)."""
    p1, q1, p2, q2 = split
    if not (1 < p1 < INF and 1 < p2 < INF and q1 >= 1 and q2 >= 1):
        raise ValueError("need p_i in (1, inf) and q_i >= 1")
    p = 1.0 / (1.0 / p1 + 1.0 / p2)
    iq = (0.0 if q1 == INF else 1 / q1) + (0.0 if q2 == INF else 1 / q2)
    q = INF if iq == 0 else 1.0 / iq
    if p < 1 or q < 1:
        raise ValueError(f"exponent mismatch: combined (p, q) = ({p:g}, {q:g}) leaves [1, inf]")
    if f.mesh is not g.mesh:
        raise ValueError("f and g live on different meshes")
    fg = BoundaryFunction(f.values * g.values, f.mesh)
    C = 1.0 if p == 1 else p / (p - 1)
    lhs = double_star_norm(fg, LZParams(p, q))
    rhs = C * double_star_norm(f, LZParams(p1, q1)) * double_star_norm(g, LZParams(p2, q2))
    return lhs, rhs
