"""Potential families, their three-dimensional norms, and the smallness constants.

All norms treat ``V`` as a radial function on R^3, whatever dimension the
dynamics runs in. Constants depending on the cutoff constant ``c_eta`` are
reported with ``c_eta = 1``.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product as iproduct
import math
import warnings

import numpy as np
import sympy as sp
from scipy import integrate
from scipy.special import gammaln

FAMILIES = ("gaussian", "exponential", "sech_squared", "compact_bump")

C1 = math.sqrt(3.0) * (2.0 * math.pi) ** (1.0 / 3.0)
C2 = 3.0 * math.pi ** (1.0 / 3.0)

GAMMAS = (0, 1, 2, 3, 4)


class AssumptionError(ValueError):
    """Raised when a configured quantity violates a labelled model assumption."""

    def __init__(self, label: str, message: str):
        super().__init__(f"{label}: {message}")
        self.label = label


class DivergenceError(ArithmeticError):
    def __init__(self, threshold: str, value: float, limit: float):
        super().__init__(f"series diverges: {threshold} requires alpha < {limit:.6g}, got ratio "
                         f"{value:.6g}")
        self.threshold = threshold


class IntegrabilityError(ValueError):
    pass


@dataclass(frozen=True)
class PotentialSpec:
    family: str
    amplitude: float = 1.0
    range: float = 1.0
    sign_constraint: bool = True

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if not self.range > 0:
            raise ValueError("range must be positive")
        if self.sign_constraint and not self.amplitude > 0:
            raise AssumptionError("(A-5)", "V >= 0 is required but the amplitude is not positive")

    @property
    def support_radius(self) -> float:
        """Radius beyond which |V| / |A| < 1e-17 (or exactly zero)."""
        return self.range * {"gaussian": 6.5, "exponential": 40.0,
                             "sech_squared": 21.0, "compact_bump": 1.0}[self.family]

    def profile(self, s):
        s = np.abs(np.asarray(s, dtype=float))
        if self.family == "gaussian":
            return np.exp(-s * s)
        if self.family == "exponential":
            # smooth at the origin so that every derivative norm is finite
            return np.exp(1.0 - np.sqrt(1.0 + s * s))
        if self.family == "sech_squared":
            return 1.0 / np.cosh(np.minimum(s, 350.0)) ** 2
        inside = s < 1.0
        out = np.zeros_like(s)
        si = s[inside]
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - si * si))
        return out

    def __call__(self, x):
        return self.amplitude * self.profile(np.asarray(x, dtype=float) / self.range)

    def scaled(self, factor: float) -> "PotentialSpec":
        return PotentialSpec(self.family, self.amplitude * factor, self.range,
                             self.sign_constraint and self.amplitude * factor > 0)


@dataclass
class PotentialNorms:
    l1: float
    l2: float
    rollnik: float
    kato: float
    sobolev_w_gamma_1: dict = field(default_factory=dict)
    sobolev_h_gamma: dict = field(default_factory=dict)
    kato_sup_radius: float = 0.0

    def inequalities(self) -> dict:
        bound = self.l1 ** (1 / 3) * self.l2 ** (2 / 3)
        return {"rollnik": (self.rollnik, C1 * bound), "kato": (self.kato, C2 * bound)}


@dataclass
class SmallnessReport:
    alpha_star: float
    alpha_star_gamma: dict
    alpha: float
    admissible: bool


@dataclass
class BornConstants:
    c_eta_convention: float
    c0: float
    c_gamma: dict
    c_hat_gamma: dict
    a_gamma: dict


# ----------------------------------------------------------------------------
# quadrature helpers

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _panels(a: float, b: float, panels: int):
    edges = np.linspace(a, b, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    half = 0.5 * (edges[1:] - edges[:-1])[:, None]
    return (mid + half * _GL_NODES).ravel(), (half * _GL_WEIGHTS).ravel()


def _radial_nodes(spec: PotentialSpec, resolution: int):
    return _panels(0.0, spec.support_radius, 128 * resolution)


# ----------------------------------------------------------------------------
# symbolic derivatives

_x, _y, _z = sp.symbols("x y z", real=True)
_rho = sp.Symbol("rho", nonnegative=True)


def _symbolic_profile(family: str):
    """Profile as an expression in rho = s^2 (every family is even in s)."""
    if family == "gaussian":
        return sp.exp(-_rho)
    if family == "exponential":
        return sp.exp(1 - sp.sqrt(1 + _rho))
    if family == "sech_squared":
        return sp.sech(sp.sqrt(_rho)) ** 2
    return sp.exp(1 - 1 / (1 - _rho))


@lru_cache(maxsize=None)
def _rho_derivatives(family: str, m: int):
    """Callables for f^{(k)}(rho), k = 0..m, where profile(s) = f(s^2)."""
    f = _symbolic_profile(family)
    return tuple(sp.lambdify(_rho, sp.diff(f, _rho, k), "numpy") for k in range(m + 1))


def _one_axis_terms(b: int):
    # d^b/dx^b g(x^2) = sum_m b! / ((2m-b)! (b-m)!) (2x)^{2m-b} g^{(m)}(x^2)
    return [(m, math.factorial(b) / (math.factorial(2 * m - b) * math.factorial(b - m)), 2 * m - b)
            for m in range((b + 1) // 2, b + 1)]


def _partial_derivative(beta, coords, fk):
    """d^beta f(|x|^2) from the precomputed rho-derivatives ``fk``."""
    total = 0.0
    for combo in iproduct(*(_one_axis_terms(b) for b in beta)):
        coef = 1.0
        poly = 1.0
        for (m, c, p), x in zip(combo, coords):
            coef *= c
            if p:
                poly = poly * (2.0 * x) ** p
        total = total + coef * poly * fk[sum(t[0] for t in combo)]
    return total


@lru_cache(maxsize=None)
def _radial_laplacian_powers(family: str, j: int):
    """Callable g(s) with ||(-Delta)^{j/2} V||^2 = 4 pi int s^2 g(s) ds for unit V."""
    s = sp.Symbol("s", positive=True)
    f = _symbolic_profile(family).subs(_rho, s**2)

    def lap(e):
        return sp.diff(e, s, 2) + 2 * sp.diff(e, s) / s

    for _ in range(j // 2):
        f = lap(f)
    if j % 2:
        f = sp.diff(f, s)
    return sp.lambdify(s, f**2, "numpy")


def _sphere_moment(beta) -> float:
    """int_{S^2} n_1^{2b1} n_2^{2b2} n_3^{2b3} dOmega."""
    a = [b + 0.5 for b in beta]
    return float(2.0 * np.exp(sum(gammaln(v) for v in a) - gammaln(sum(a))))


def _multi_indices(m: int):
    return [b for b in iproduct(range(m + 1), repeat=3) if sum(b) <= m]


def _sorted_counts(m: int) -> dict:
    counts: dict = {}
    for b in _multi_indices(m):
        key = tuple(sorted(b, reverse=True))
        counts[key] = counts.get(key, 0) + 1
    return counts


# ----------------------------------------------------------------------------
# norms


def _l_p(spec: PotentialSpec, p: int, resolution: int) -> float:
    r, w = _radial_nodes(spec, resolution)
    vals = np.abs(spec(r)) ** p
    return float((4.0 * np.pi * np.sum(w * r * r * vals)) ** (1.0 / p))


def _h_derivative_norms(spec: PotentialSpec, m: int, resolution: int) -> dict:
    """||d^beta V||_2 for sorted multi-indices, via angular moments in Fourier space."""
    a, A = spec.range, abs(spec.amplitude)
    s, w = _panels(0.0, spec.support_radius / a, 128 * resolution)
    out = {}
    for beta in _sorted_counts(m):
        j = sum(beta)
        g = _radial_laplacian_powers(spec.family, j)(s)
        total = 4.0 * np.pi * float(np.sum(w * s * s * np.nan_to_num(g)))
        # unit-range total, rescaled: d^beta V(x) = A a^{-j} (d^beta p)(x/a)
        total *= A * A * a ** (3 - 2 * j)
        out[beta] = math.sqrt(_sphere_moment(beta) / (4.0 * np.pi) * total)
    return out


def _w1_derivative_norms(spec: PotentialSpec, m: int, resolution: int) -> dict:
    """||d^beta V||_1 by octant quadrature in spherical coordinates."""
    a, A = spec.range, abs(spec.amplitude)
    rmax = spec.support_radius / a
    s, ws = _panels(0.0, rmax, 48 * resolution)
    t, wt = _panels(0.0, 0.5 * np.pi, 4 * resolution)
    S, TH, PH = np.meshgrid(s, t, t, indexing="ij")
    W = (ws[:, None, None] * wt[None, :, None] * wt[None, None, :]) * S**2 * np.sin(TH)
    X = S * np.sin(TH) * np.cos(PH)
    Y = S * np.sin(TH) * np.sin(PH)
    Z = S * np.cos(TH)
    inside = S < 1.0 if spec.family == "compact_bump" else np.ones_like(S, dtype=bool)
    rho = np.where(inside, S * S, 0.0)
    with np.errstate(all="ignore"):
        fk = [np.where(inside, np.nan_to_num(np.broadcast_to(f(rho), S.shape)), 0.0)
              for f in _rho_derivatives(spec.family, m)]
    out = {}
    for beta in _sorted_counts(m):
        vals = _partial_derivative(beta, (X, Y, Z), fk)
        out[beta] = 8.0 * float(np.sum(W * np.abs(vals))) * A * a ** (3 - sum(beta))
    return out


def _sum_norm(parts: dict, counts: dict, m: int) -> float:
    return sum(counts[b] * parts[b] for b in counts if sum(b) <= m)


def _kato(spec: PotentialSpec, resolution: int) -> tuple[float, float]:
    """sup_x int |V(y)|/|x-y| dy via the radial Newtonian potential.

    The sup is located by a search over every quadrature radius instead of
    assuming it sits at the origin.
    """
    r, w = _radial_nodes(spec, resolution)
    V = np.abs(spec(r))
    outer = np.cumsum((w * r * V)[::-1])[::-1]
    inner = np.concatenate([[0.0], np.cumsum(w * r * r * V)[:-1]])
    phi = 4.0 * np.pi * (outer + inner / r)
    at0 = 4.0 * np.pi * float(np.sum(w * r * V))
    best = int(np.argmax(phi))
    if phi[best] <= at0 * (1 + 1e-12):
        return at0, 0.0
    return float(phi[best]), float(r[best])


def _rollnik(spec: PotentialSpec, resolution: int) -> float:
    rmax = spec.support_radius
    tol = 1e-10 / resolution**2

    def smooth(s, r):
        return s * spec(s) * math.log(r + s)

    def weighted(s):
        return s * spec(s)

    def inner(r):
        # ln|(r+s)/(r-s)| = ln(r+s) - ln|r-s|; the log singularity goes into quad weights
        if r == 0:
            return 0.0
        kw = dict(epsabs=0, epsrel=tol, limit=200)
        val = integrate.quad(smooth, 0.0, rmax, args=(r,), points=[r], **kw)[0]
        val -= integrate.quad(weighted, 0.0, r, weight="alg-logb", wvar=(0, 0), **kw)[0]
        val -= integrate.quad(weighted, r, rmax, weight="alg-loga", wvar=(0, 0), **kw)[0]
        return r * spec(r) * val

    pieces = np.linspace(0.0, rmax, 9)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        total = sum(integrate.quad(inner, p, q, epsabs=0, epsrel=tol, limit=200)[0]
                    for p, q in zip(pieces[:-1], pieces[1:]))
    if not np.isfinite(total):
        raise IntegrabilityError("Rollnik integral did not converge")
    return math.sqrt(8.0 * np.pi**2 * abs(total))


def potential_norms(spec: PotentialSpec, resolution: int = 1, max_order: int = 4) -> PotentialNorms:
    return copy.deepcopy(_potential_norms(spec, resolution, max_order))


@lru_cache(maxsize=64)
def _potential_norms(spec: PotentialSpec, resolution: int, max_order: int) -> PotentialNorms:
    l1, l2 = _l_p(spec, 1, resolution), _l_p(spec, 2, resolution)
    if not (np.isfinite(l1) and np.isfinite(l2)):
        raise IntegrabilityError(f"{spec.family} is not integrable")
    if spec.amplitude == 0:
        zero = {g: 0.0 for g in range(max_order + 1)}
        return PotentialNorms(0.0, 0.0, 0.0, 0.0, dict(zero), dict(zero))
    kato, where = _kato(spec, resolution)
    counts = _sorted_counts(max_order)
    h_parts = _h_derivative_norms(spec, max_order, resolution)
    w_parts = _w1_derivative_norms(spec, max_order, resolution)
    return PotentialNorms(
        l1=l1, l2=l2, rollnik=_rollnik(spec, resolution), kato=kato,
        sobolev_w_gamma_1={g: _sum_norm(w_parts, counts, g) for g in range(max_order + 1)},
        sobolev_h_gamma={g: _sum_norm(h_parts, counts, g) for g in range(max_order + 1)},
        kato_sup_radius=where,
    )


def gradient_l2(spec: PotentialSpec, resolution: int = 1) -> float:
    """||grad V||_{L^2(R^3)}."""
    parts = _h_derivative_norms(spec, 1, resolution)
    return math.sqrt(sum(parts[b] ** 2 * c for b, c in _sorted_counts(1).items() if sum(b) == 1))


# ----------------------------------------------------------------------------
# thresholds and series constants


def alpha_star_gamma_value(gamma: int, K: int, w_norm: float, h_norm: float) -> float:
    return math.pi ** (2 / 3) / (3 * 2 ** (gamma - 1) * K) * w_norm ** (-1 / 3) * h_norm ** (-2 / 3)


def alpha_star_value(K: int, w41: float, h4: float) -> float:
    return math.pi ** (2 / 3) / (24 * K) * w41 ** (-1 / 3) * h4 ** (-2 / 3)


def smallness_thresholds(spec: PotentialSpec, K: int, alpha: float,
                         norms: PotentialNorms | None = None) -> SmallnessReport:
    if K < 1:
        raise ValueError("K must be at least 1")
    n = norms or potential_norms(spec)
    w, h = n.sobolev_w_gamma_1, n.sobolev_h_gamma
    star = alpha_star_value(K, w[4], h[4])
    gam = {g: alpha_star_gamma_value(g, K, w[g], h[g]) for g in sorted(w)}
    return SmallnessReport(alpha_star=star, alpha_star_gamma=gam, alpha=alpha,
                           admissible=alpha < star)


def _series(term, tail_tol: float = 1e-12, max_terms: int = 10_000_000) -> float:
    """Sum of nonnegative terms whose ratio eventually decreases below 1."""
    total, l = 0.0, 0
    prev = None
    while l < max_terms:
        t = term(l)
        total += t
        if prev is not None and prev > 0 and t > 0:
            rho = t / prev
            if rho < 1 and t * rho / (1 - rho) < tail_tol * max(total, 1.0):
                return total
        if t == 0 and l > 0:
            return total
        prev = t
        l += 1
    raise ArithmeticError("series truncation did not reach the tail tolerance")


def geometric_weight_sum(q: float) -> float:
    """sum_{l>=0} (l+1) q^l."""
    if not 0 <= q < 1:
        raise DivergenceError("q < 1", q, 1.0)
    return 1.0 / (1.0 - q) ** 2


def born_constants(spec: PotentialSpec, K: int, alpha: float, gammas=GAMMAS, N: int = 1,
                   norms: PotentialNorms | None = None, c_eta: float = 1.0,
                   generic_c: float = 1.0) -> BornConstants:
    n = norms or potential_norms(spec)
    rep = smallness_thresholds(spec, K, alpha, n)
    pref = c_eta / (2.0 * math.pi)

    q0 = alpha * n.kato / (2.0 * math.pi)
    if q0 >= 1:
        raise DivergenceError("Kato-norm condition alpha ||V||_K / 2pi < 1", q0,
                              2.0 * math.pi / n.kato)
    c0 = pref * geometric_weight_sum(q0)

    c_gamma, a_gamma = {}, {}
    for g in gammas:
        x = alpha / rep.alpha_star_gamma[g]
        if x >= 1:
            raise DivergenceError(f"alpha_star_gamma[{g}]", x, rep.alpha_star_gamma[g])
        c_gamma[g] = pref * _series(lambda l: (l + 1) * float(l) ** g * x**l)
        if g == 0:
            a_gamma[g] = 1.0
        else:
            qa = alpha * K * C1 * n.sobolev_w_gamma_1[g] ** (1 / 3) * n.sobolev_h_gamma[g] ** (2 / 3) \
                / (2.0 * math.pi)
            if qa >= 1:
                raise DivergenceError(f"a_gamma[{g}] series", qa, alpha / qa)
            a_gamma[g] = generic_c * C1 * _series(lambda l: float(l) ** g * qa**l if l else 0.0) \
                if qa > 0 else 0.0
    c_hat = {}
    for g in gammas:
        c_hat[g] = max((N**lam) * (a_gamma[lam] ** lam if lam else 1.0)
                       for lam in gammas if lam <= g)
    return BornConstants(c_eta_convention=c_eta, c0=c0, c_gamma=c_gamma, c_hat_gamma=c_hat,
                         a_gamma=a_gamma)
