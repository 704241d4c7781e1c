"""Uniform periodic grids, wave functions and the norms built on them.

A grid is an ordered set of axes. Every axis is uniform on
``[-half_width, half_width)`` with a power-of-two point count. Joint
heavy/light grids are products of single-role grids, so heavy and light
axes may have different extents.

Radial grids (``dim == 3``) store the reduced amplitude ``u = r psi`` of an
s-wave on the odd extension of the half line. All norms on such grids are
the three-dimensional ones.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import product as iproduct
import math
import warnings

import numpy as np
import scipy.fft as sfft
from scipy.special import erfc

FFT_WORKERS = -1
MEMORY_BUDGET_BYTES = 2 * 1024**3


class GridMismatchError(ValueError):
    pass


class CapacityError(MemoryError):
    pass


class BoundaryTailError(ValueError):
    pass


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform grid shared by every axis in ``axes``."""

    dim: int
    points_per_axis: int
    half_width: float
    axes: tuple = ("x",)

    def __post_init__(self):
        if self.dim not in (1, 3):
            raise ValueError("dim must be 1 or 3 (radial)")
        if not _is_pow2(self.points_per_axis):
            raise ValueError(f"points_per_axis={self.points_per_axis} is not a power of two")
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")
        if self.dim == 3 and len(self.axes) != 1:
            raise ValueError("radial grids carry exactly one axis")
        object.__setattr__(self, "axes", tuple(self.axes))

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.points_per_axis

    @property
    def axis_specs(self):
        return tuple((a, self.points_per_axis, self.half_width) for a in self.axes)

    @property
    def parts(self):
        return (self,)

    @property
    def radial(self) -> bool:
        return self.dim == 3

    # shared grid protocol ------------------------------------------------
    @property
    def shape(self):
        return tuple(n for _, n, _ in self.axis_specs)

    @property
    def total_points(self) -> int:
        return math.prod(self.shape)

    @property
    def names(self):
        return tuple(a for a, _, _ in self.axis_specs)

    @property
    def cell(self) -> float:
        return math.prod(2.0 * L / n for _, n, L in self.axis_specs)

    def coord(self, axis) -> np.ndarray:
        i = self._index(axis)
        _, n, L = self.axis_specs[i]
        return -L + 2.0 * L * np.arange(n) / n

    def wavenumbers(self, axis) -> np.ndarray:
        i = self._index(axis)
        _, n, L = self.axis_specs[i]
        return 2.0 * np.pi * sfft.fftfreq(n, d=2.0 * L / n)

    def broadcast(self, axis, values: np.ndarray) -> np.ndarray:
        """Reshape a 1D array along ``axis`` for broadcasting over the grid."""
        i = self._index(axis)
        shape = [1] * len(self.shape)
        shape[i] = -1
        return np.asarray(values).reshape(shape)

    def _index(self, axis) -> int:
        if isinstance(axis, (int, np.integer)):
            return int(axis)
        return self.names.index(axis)

    def axis_of(self, name: str) -> int:
        return self.names.index(name)


class ProductGrid(SpatialGrid):
    """Tensor product of single-role grids (e.g. heavy x light)."""

    def __init__(self, parts):
        flat = []
        for p in parts:
            flat.extend(p.parts)
        names = [a for p in flat for a in p.axes]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate axis names {names}")
        if any(p.radial for p in flat):
            raise ValueError("radial grids cannot enter a product")
        object.__setattr__(self, "_parts", tuple(flat))
        object.__setattr__(self, "dim", 1)
        object.__setattr__(self, "axes", tuple(names))
        object.__setattr__(self, "points_per_axis", flat[0].points_per_axis)
        object.__setattr__(self, "half_width", flat[0].half_width)

    def __eq__(self, other):
        return isinstance(other, ProductGrid) and self._parts == other._parts

    def __hash__(self):
        return hash(self._parts)

    def __repr__(self):
        return f"ProductGrid({list(self._parts)!r})"

    @property
    def parts(self):
        return self._parts

    @property
    def axis_specs(self):
        return tuple(s for p in self._parts for s in p.axis_specs)

    @property
    def spacing(self):
        raise AttributeError("product grids have per-axis spacing; use coord()")


@dataclass(frozen=True, eq=False)
class WaveFunction:
    grid: SpatialGrid
    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.size != self.grid.total_points:
            raise GridMismatchError(
                f"{a.size} amplitudes for a grid of {self.grid.total_points} points")
        object.__setattr__(self, "amplitudes", a.reshape(self.grid.shape))

    @cached_property
    def normalization(self) -> float:
        return l2_norm(self)

    def normalize(self) -> "WaveFunction":
        n = self.normalization
        if n == 0:
            raise ZeroDivisionError("cannot normalize the zero state")
        return WaveFunction(self.grid, self.amplitudes / n)

    def __add__(self, other):
        _check_same(self, other)
        return WaveFunction(self.grid, self.amplitudes + other.amplitudes)

    def __sub__(self, other):
        _check_same(self, other)
        return WaveFunction(self.grid, self.amplitudes - other.amplitudes)

    def __mul__(self, c):
        return WaveFunction(self.grid, self.amplitudes * c)

    __rmul__ = __mul__


@dataclass
class NormReport:
    l1: float
    l2: float
    linf: float
    sobolev: dict = field(default_factory=dict)
    weighted: dict = field(default_factory=dict)


def _check_same(a: WaveFunction, b: WaveFunction):
    if a.grid != b.grid:
        raise GridMismatchError("wave functions live on different grids")


def _radial_weight(grid: SpatialGrid) -> float:
    # 4 pi int_0^inf |u|^2 dr  =  2 pi sum over the odd extension
    return 2.0 * np.pi if grid.radial else 1.0


def l2_norm(psi: WaveFunction) -> float:
    a = psi.amplitudes
    s = np.vdot(a, a).real * psi.grid.cell * _radial_weight(psi.grid)
    return math.sqrt(max(s, 0.0))


def inner_product(a: WaveFunction, b: WaveFunction) -> complex:
    """Conjugate-linear in ``a``."""
    _check_same(a, b)
    return complex(np.vdot(a.amplitudes, b.amplitudes) * a.grid.cell * _radial_weight(a.grid))


def radial_profile(psi: WaveFunction) -> tuple[np.ndarray, np.ndarray]:
    """Return (r, psi(r)) on r >= 0 for a radial state, using u'(0) at the origin."""
    g = psi.grid
    x = g.coord(0)
    u = psi.amplitudes
    i0 = g.points_per_axis // 2
    du = sfft.ifft(1j * g.wavenumbers(0) * sfft.fft(u, workers=FFT_WORKERS), workers=FFT_WORKERS)
    r = x[i0:]
    vals = np.empty(r.size, dtype=complex)
    vals[0] = du[i0]
    vals[1:] = u[i0 + 1:] / r[1:]
    return r, vals


def sup_norm(psi: WaveFunction) -> float:
    if psi.grid.radial:
        return float(np.max(np.abs(radial_profile(psi)[1])))
    return float(np.max(np.abs(psi.amplitudes)))


def l1_norm(psi: WaveFunction) -> float:
    g = psi.grid
    if g.radial:
        x = g.coord(0)
        return float(2.0 * np.pi * np.sum(np.abs(x * psi.amplitudes)) * g.cell)
    return float(np.sum(np.abs(psi.amplitudes)) * g.cell)


def fourier_multiplier(psi: WaveFunction, symbol) -> WaveFunction:
    """Apply ``symbol(k)`` (a callable on |k|^2 broadcast over the grid) spectrally."""
    g = psi.grid
    k2 = sum(g.broadcast(i, g.wavenumbers(i)) ** 2 for i in range(len(g.shape)))
    amp = sfft.ifftn(symbol(k2) * sfft.fftn(psi.amplitudes, workers=FFT_WORKERS),
                     workers=FFT_WORKERS)
    return WaveFunction(g, amp)


def derivative(psi: WaveFunction, orders) -> np.ndarray:
    """Spectral partial derivative; ``orders`` gives the order along every axis."""
    g = psi.grid
    mult = 1.0
    for i, m in enumerate(orders):
        if m:
            mult = mult * g.broadcast(i, (1j * g.wavenumbers(i)) ** m)
    if np.isscalar(mult):
        return psi.amplitudes.copy()
    return sfft.ifftn(mult * sfft.fftn(psi.amplitudes, workers=FFT_WORKERS), workers=FFT_WORKERS)


def _multi_indices(naxes: int, m: int):
    return [b for b in iproduct(range(m + 1), repeat=naxes) if sum(b) <= m]


def sobolev_norm(psi: WaveFunction, m: float) -> float:
    if m == 0:
        return l2_norm(psi)
    return l2_norm(fourier_multiplier(psi, lambda k2: (1.0 + k2) ** (m / 2.0)))


def weighted_sobolev_norm(psi: WaveFunction, m: int, n: int, axes=None, p=2) -> float:
    """Sum over multi-indices of ||<x>^n D^beta psi||_p restricted to ``axes``."""
    g = psi.grid
    axes = tuple(range(len(g.shape))) if axes is None else tuple(g._index(a) for a in axes)
    r2 = sum(g.broadcast(i, g.coord(i)) ** 2 for i in axes)
    weight = (1.0 + r2) ** (n / 2.0)
    total = 0.0
    for beta in _multi_indices(len(axes), m):
        orders = [0] * len(g.shape)
        for i, b in zip(axes, beta):
            orders[i] = b
        d = weight * derivative(psi, orders)
        if p == np.inf:
            total += float(np.max(np.abs(d)))
        else:
            total += float((np.sum(np.abs(d) ** p) * g.cell) ** (1.0 / p))
    return total


def spectral_tail(psi: WaveFunction, fraction: float = 0.1) -> float:
    """Energy fraction carried by the outermost ``fraction`` of each wavenumber band."""
    g = psi.grid
    c = sfft.fftn(psi.amplitudes, workers=FFT_WORKERS)
    total = np.vdot(c, c).real
    if total == 0:
        return 0.0
    mask = np.zeros(g.shape, dtype=bool)
    for i in range(len(g.shape)):
        k = np.abs(g.wavenumbers(i))
        mask |= g.broadcast(i, k >= (1.0 - fraction) * k.max())
    return float(np.sum(np.abs(c[mask]) ** 2) / total)


def norms(psi: WaveFunction, orders=(), weights=()) -> NormReport:
    if any(m > 4 for m in orders) or any(m > 4 for m, _ in weights):
        raise ValueError("Sobolev orders above 4 are not supported")
    tail = spectral_tail(psi)
    if tail > 1e-6:
        warnings.warn(f"spectral tail {tail:.2e} above 1e-6: grid may be under-resolved",
                      stacklevel=2)
    if psi.grid.radial and (orders or weights):
        raise ValueError("Sobolev norms are computed on line grids only")
    return NormReport(
        l1=l1_norm(psi),
        l2=l2_norm(psi),
        linf=sup_norm(psi),
        sobolev={m: sobolev_norm(psi, m) for m in orders},
        weighted={(m, n): weighted_sobolev_norm(psi, m, n) for m, n in weights},
    )


def make_gaussian(grid: SpatialGrid, center=0.0, momentum=0.0, width=1.0) -> WaveFunction:
    """Normalized packet prod_i exp(-(x_i - c_i)^2 / (4 w^2) + i p_i x_i).

    ``width`` is the standard deviation of the position density per axis.
    On a radial grid the packet is the s-wave exp(-r^2 / (4 w^2)) centred at
    the origin.
    """
    if not width > 0:
        raise ValueError("width must be positive")
    naxes = len(grid.shape)
    c = np.broadcast_to(np.asarray(center, dtype=float), (naxes,))
    p = np.broadcast_to(np.asarray(momentum, dtype=float), (naxes,))
    if grid.radial and (np.any(c != 0) or np.any(p != 0)):
        raise ValueError("radial packets are centred at the origin with zero momentum")
    tail = 0.0
    amp = np.ones(grid.shape, dtype=complex)
    for i, (_, n, L) in enumerate(grid.axis_specs):
        s = math.sqrt(2.0) * width
        tail += 0.5 * (erfc((L - c[i]) / s) + erfc((L + c[i]) / s))
        x = grid.coord(i)
        amp = amp * grid.broadcast(i, np.exp(-(x - c[i]) ** 2 / (4 * width**2) + 1j * p[i] * x))
    if grid.radial:
        tail = erfc(grid.half_width / (math.sqrt(2.0) * width))
        amp = amp * grid.coord(0)
    if tail > 1e-8:
        raise BoundaryTailError(f"packet mass beyond the grid boundary is {tail:.2e} > 1e-8")
    return WaveFunction(grid, amp).normalize()


def tensor_product(parts) -> WaveFunction:
    parts = list(parts)
    if len(parts) == 1:
        return parts[0]
    grid = ProductGrid([p.grid for p in parts])
    need = grid.total_points * 16
    if need > MEMORY_BUDGET_BYTES:
        raise CapacityError(f"joint state needs {need / 1e9:.2f} GB, budget "
                            f"{MEMORY_BUDGET_BYTES / 1e9:.2f} GB")
    amp = parts[0].amplitudes
    for p in parts[1:]:
        amp = np.multiply.outer(amp, p.amplitudes)
    return WaveFunction(grid, amp)


def marginal_density(psi: WaveFunction, keep) -> np.ndarray:
    """Integrate |psi|^2 over every axis not listed in ``keep``."""
    g = psi.grid
    keep = [g._index(a) for a in keep]
    drop = tuple(i for i in range(len(g.shape)) if i not in keep)
    dvol = math.prod(2.0 * g.axis_specs[i][2] / g.axis_specs[i][1] for i in drop)
    return np.sum(np.abs(psi.amplitudes) ** 2, axis=drop) * dvol


def boundary_mass(psi: WaveFunction, axes=None, fraction: float = 1 / 16) -> float:
    """Probability within ``fraction`` of the box edge along the given axes."""
    g = psi.grid
    axes = range(len(g.shape)) if axes is None else [g._index(a) for a in axes]
    dens = np.abs(psi.amplitudes) ** 2
    total = dens.sum()
    if total == 0:
        return 0.0
    mask = np.zeros(g.shape, dtype=bool)
    for i in axes:
        _, n, L = g.axis_specs[i]
        x = g.coord(i)
        edge = np.abs(x) >= (1.0 - 2 * fraction) * L
        mask |= g.broadcast(i, edge)
    return float(dens[mask].sum() / total)
