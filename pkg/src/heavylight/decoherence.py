"""Reduced density matrices, the overlap kernel I(R, R'), the factor Lambda and
the two-packet interference experiment for the heavy particle."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
import math
import warnings

import numpy as np
import scipy.fft as sfft
from scipy.integrate import trapezoid
from scipy.optimize import minimize_scalar

from .config import SystemConfig
from .grid import SpatialGrid, WaveFunction, inner_product, make_gaussian
from .propagators import EvolutionConfig, HamiltonianSpec, evolve_free, heavy_axes
from .scattering import wave_operator_field


class DensityError(ValueError):
    pass


class RegimeWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    kernel: np.ndarray
    grid: SpatialGrid

    @property
    def cell(self) -> float:
        return self.grid.cell

    @cached_property
    def trace(self) -> float:
        return float(np.real(np.trace(self.kernel)) * self.cell)

    @cached_property
    def purity(self) -> float:
        return float(np.sum(np.abs(self.kernel) ** 2) * self.cell**2)

    def hermitian_residual(self) -> float:
        return float(np.max(np.abs(self.kernel - self.kernel.conj().T)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.kernel * self.cell)[0])

    def density(self) -> np.ndarray:
        return np.real(np.diag(self.kernel)).copy()

    def evolve_free(self, t: float) -> "DensityMatrix":
        """exp(-i t X0) rho exp(i t X0) on a single heavy axis."""
        g = self.grid
        phase = np.exp(-0.5j * t * g.wavenumbers(0) ** 2)

        def left(a):
            return sfft.ifft(phase[:, None] * sfft.fft(a, axis=0), axis=0)

        out = left(left(self.kernel).conj().T).conj().T
        return DensityMatrix(0.5 * (out + out.conj().T), g)


def _check(rho: DensityMatrix, tol: float = 1e-6) -> DensityMatrix:
    if abs(rho.trace - 1.0) > tol:
        raise DensityError(f"trace {rho.trace:.12g} deviates from 1 by more than {tol:g}; "
                           "the joint state lost norm upstream")
    return rho


def reduce_density(Psi: WaveFunction) -> DensityMatrix:
    """rho(R, R') = int dr Psi(R, r) conj(Psi(R', r))."""
    g = Psi.grid
    H = heavy_axes(g)
    if not H:
        raise ValueError("the joint grid has no heavy (R*) axes")
    nH = len(H)
    if H != list(range(nH)):
        raise ValueError("heavy axes must come first on the joint grid")
    heavy = g.parts[0] if hasattr(g, "parts") and len(g.parts) > 1 else g
    nR = math.prod(g.shape[:nH])
    dr = g.cell / heavy.cell
    A = Psi.amplitudes.reshape(nR, -1)
    K = (A @ A.conj().T) * dr
    K = 0.5 * (K + K.conj().T)
    return _check(DensityMatrix(K, heavy))


def overlap_kernel(omega_field, R, R_prime) -> complex:
    """I(R, R') = prod_j (Omega(R')^-1 chi_j, Omega(R)^-1 chi_j)."""
    a = omega_field[tuple(np.atleast_1d(np.asarray(R, dtype=float)))]
    b = omega_field[tuple(np.atleast_1d(np.asarray(R_prime, dtype=float)))]
    val = 1.0 + 0j
    for ra, rb in zip(a, b):
        val *= inner_product(rb.state, ra.state)
    return val


def lambda_factor(omega_at_plus_R0, omega_at_minus_R0) -> complex:
    """Product over light particles of (Omega(R0)^-1 chi_j, Omega(-R0)^-1 chi_j).

    Arguments are sequences of per-particle states (WaveFunction or objects with
    a ``state`` attribute).
    """
    val = 1.0 + 0j
    for p, m in zip(omega_at_plus_R0, omega_at_minus_R0):
        p = getattr(p, "state", p)
        m = getattr(m, "state", m)
        val *= inner_product(p, m)
    return val


@dataclass
class DecoherenceReport:
    lambda_: complex
    visibility: float
    overlap_kernel_samples: list
    purity: float
    raw_visibility: float = math.nan
    crossing_time: float = math.nan
    per_particle: list = field(default_factory=list)
    regime_parameter: float = math.nan
    trace: float = math.nan
    hermitian_residual: float = math.nan
    min_eigenvalue: float = math.nan


def _gradient_l2_1d(potential) -> float:
    a = potential.support_radius + 8.0 * potential.range
    x = np.linspace(-a, a, 200_001)
    dv = np.gradient(potential(x), x)
    return float(np.sqrt(trapezoid(dv**2, x)))


def _interp(psi: WaveFunction, x: np.ndarray) -> np.ndarray:
    """Band-limited (trigonometric) interpolation of a 1D grid function at points x."""
    g = psi.grid
    c = sfft.fft(psi.amplitudes) / g.points_per_axis
    k = g.wavenumbers(0)
    x0 = g.coord(0)[0]
    return np.exp(1j * np.outer(x - x0, k)) @ c


def michelson(values: np.ndarray) -> float:
    hi, lo = float(np.max(values)), float(np.min(values))
    return (hi - lo) / (hi + lo) if hi + lo > 0 else 0.0


def rho_e(f_plus: WaveFunction, f_minus: WaveFunction, lam: complex) -> DensityMatrix:
    """Kernel (f+ f+^* + f- f-^* + Lambda f+ f-^* + conj(Lambda) f- f+^*) / b^2."""
    a, c = f_plus.amplitudes, f_minus.amplitudes
    b2 = (f_plus + f_minus).normalization ** 2
    K = (np.outer(a, a.conj()) + np.outer(c, c.conj()) + lam * np.outer(a, c.conj())
         + np.conj(lam) * np.outer(c, a.conj())) / b2
    return DensityMatrix(0.5 * (K + K.conj().T), f_plus.grid)


def _lambda_from_config(config: SystemConfig, R0: float):
    from .asymptotics import initial_states

    _, chis = initial_states(config)
    ham = HamiltonianSpec("joint", alpha=config.alpha, potential=config.potential, epsilon=1.0)
    pts = np.array([[R0], [-R0]])
    fld = wave_operator_field(chis, pts, ham, tol=config.tolerances["wave_operator"],
                              cfg=EvolutionConfig(dt=config.tolerances["wave_operator_dt"]))
    plus, minus = fld[(R0,)], fld[(-R0,)]
    per = [lambda_factor([p], [m]) for p, m in zip(plus, minus)]
    samples = [(R, Rp, overlap_kernel(fld, R, Rp)) for R in (R0, -R0) for Rp in (R0, -R0)]
    return lambda_factor(plus, minus), per, samples


def two_packet_experiment(config: SystemConfig, R0=None, P0=None, sigma=None,
                          lambda_override=None, check_density: bool = True) -> DecoherenceReport:
    """Interference of two heavy packets approaching each other at +-R0 with speed |P0|.

    Lambda comes from the wave-operator solves at +-R0 unless ``lambda_override``
    is given. The state rho^e(t) is evolved with X0 and the fringes are read off
    at the time of maximal packet overlap.
    """
    d = config.decoherence
    R0 = abs(float(np.atleast_1d(d.R0 if R0 is None else R0)[0]))
    P0 = abs(float(np.atleast_1d(d.P0 if P0 is None else P0)[0]))
    sigma = float(d.sigma if sigma is None else sigma)
    if R0 == 0 or P0 == 0:
        raise ValueError("R0 and P0 must be nonzero")
    g = SpatialGrid(1, d.grid_points, d.grid_half_width, ("R1",))
    fp = make_gaussian(g, -R0, P0, sigma)
    fm = make_gaussian(g, R0, -P0, sigma)
    overlap = float(np.sum(np.abs(fp.amplitudes * fm.amplitudes)) * g.cell)
    if overlap > 1e-2:
        raise ValueError(f"initial packets overlap (int |f+||f-| = {overlap:.3g}); "
                         "increase R0 or decrease sigma")

    regime = sigma * config.alpha * _gradient_l2_1d(config.potential)
    if regime > 0.1:
        warnings.warn(f"sigma * alpha * ||grad V|| = {regime:.3g} > 0.1: the rho^e "
                      "approximation regime is not met", RegimeWarning, stacklevel=2)

    if lambda_override is not None:
        lam, per, samples = complex(lambda_override), [], []
    elif config.alpha == 0:
        lam, per = 1.0 + 0j, [1.0 + 0j] * len(config.initial_chis)
        samples = [(R, Rp, 1.0 + 0j) for R in (R0, -R0) for Rp in (R0, -R0)]
    else:
        lam, per, samples = _lambda_from_config(config, R0)

    def closeness(t):
        a = evolve_free(fp, t).amplitudes
        b = evolve_free(fm, t).amplitudes
        return -float(np.sum(np.abs(a) ** 2 * np.abs(b) ** 2))

    t0 = R0 / P0
    t_cross = float(minimize_scalar(closeness, bounds=(0.5 * t0, 1.5 * t0), method="bounded",
                                    options={"xatol": 1e-8}).x)
    gp, gm = evolve_free(fp, t_cross), evolve_free(fm, t_cross)
    b2 = (fp + fm).normalization ** 2

    w = np.abs(gp.amplitudes) ** 2 * np.abs(gm.amplitudes) ** 2
    x = g.coord(0)
    xc = float(np.sum(x * w) / np.sum(w))
    period = math.pi / P0
    xs = np.linspace(xc - 1.5 * period, xc + 1.5 * period, 1201)
    ap, am = _interp(gp, xs), _interp(gm, xs)
    envelope = (np.abs(ap) ** 2 + np.abs(am) ** 2) / b2
    dens = envelope + 2.0 * np.real(lam * ap * np.conj(am)) / b2
    visibility = michelson(dens / envelope)

    rho0 = rho_e(fp, fm, lam)
    rep = DecoherenceReport(lam, visibility, samples, rho0.purity, michelson(dens), t_cross,
                            per, regime)
    if check_density:
        rt = rho_e(gp, gm, lam)
        rep.trace = rt.trace
        rep.hermitian_residual = rt.hermitian_residual()
        rep.min_eigenvalue = rt.min_eigenvalue()
    return rep
