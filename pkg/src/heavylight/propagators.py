"""Free, parametric, heavy and joint Schrödinger propagators (Strang splitting).

Axis naming convention on joint grids: heavy coordinates are ``R1 .. RK``,
light coordinates ``r1 .. rN``. Light axes carry mass ``epsilon``, heavy axes
mass 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math
import warnings

import numpy as np
import scipy.fft as sfft

from .grid import FFT_WORKERS, WaveFunction, boundary_mass, l2_norm
from .potentials import PotentialSpec

KINDS = ("free_light", "light_parametric", "heavy", "joint")


class UnitarityError(RuntimeError):
    pass


class DomainEscapeError(RuntimeError):
    pass


class StepLimitError(RuntimeError):
    pass


@dataclass(frozen=True)
class EvolutionConfig:
    dt: float = 0.01
    splitting_order: str = "strang2"
    max_steps: int = 2_000_000
    unitarity_tolerance: float = 1e-10

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.splitting_order != "strang2":
            raise ValueError("only strang2 splitting is supported")

    @classmethod
    def for_joint(cls, epsilon: float, fraction: float = 0.1, **kw) -> "EvolutionConfig":
        return cls(dt=min(0.01, fraction * epsilon), **kw)


@dataclass(frozen=True)
class HamiltonianSpec:
    kind: str
    alpha: float = 0.0
    potential: PotentialSpec | None = None
    heavy_potential: PotentialSpec | None = None
    epsilon: float | None = None
    heavy_positions: tuple | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if (self.kind == "joint") != (self.epsilon is not None):
            raise ValueError("epsilon is required for, and only for, the joint kind")
        if self.epsilon is not None and not 0 < self.epsilon <= 1:
            raise ValueError("epsilon must lie in (0, 1]")
        if (self.kind == "light_parametric") != (self.heavy_positions is not None):
            raise ValueError("heavy_positions are required for, and only for, light_parametric")
        if self.kind in ("light_parametric", "joint") and self.alpha > 0 and self.potential is None:
            raise ValueError("a light-heavy potential is required when alpha > 0")
        if self.heavy_positions is not None:
            object.__setattr__(self, "heavy_positions",
                               tuple(float(r) for r in np.atleast_1d(self.heavy_positions)))

    def frozen_at(self, positions) -> "HamiltonianSpec":
        """Parametric light Hamiltonian h(R) for the given heavy positions."""
        return HamiltonianSpec("light_parametric", alpha=self.alpha, potential=self.potential,
                               heavy_positions=tuple(np.atleast_1d(positions)))

    def heavy_part(self) -> "HamiltonianSpec":
        return HamiltonianSpec("heavy", heavy_potential=self.heavy_potential)


def heavy_axes(grid) -> list[int]:
    return [i for i, n in enumerate(grid.names) if n.startswith("R")]


def light_axes(grid) -> list[int]:
    return [i for i, n in enumerate(grid.names) if n.startswith("r")]


def _kinetic_symbol(grid, axes, masses) -> np.ndarray:
    k2 = 0.0
    for i in axes:
        k2 = k2 + grid.broadcast(i, grid.wavenumbers(i) ** 2) / masses.get(i, 1.0)
    return 0.5 * k2


def potential_on_grid(ham: HamiltonianSpec, grid) -> np.ndarray:
    """Multiplicative part of ``ham`` sampled on ``grid`` (broadcastable)."""
    shape = [1] * len(grid.shape)
    V = np.zeros(shape)
    if ham.kind == "light_parametric":
        if ham.alpha:
            for i in range(len(grid.shape)):
                x = grid.coord(i)
                if grid.radial:
                    if any(r != 0 for r in ham.heavy_positions):
                        raise ValueError("radial mode places the heavy particle at the origin")
                    V = V + ham.alpha * grid.broadcast(i, ham.potential(np.abs(x)))
                else:
                    for R in ham.heavy_positions:
                        V = V + ham.alpha * grid.broadcast(i, ham.potential(x - R))
        return V
    H, L = heavy_axes(grid), light_axes(grid)
    if ham.heavy_potential is not None and ham.kind in ("heavy", "joint"):
        for i in H:
            V = V + grid.broadcast(i, ham.heavy_potential(grid.coord(i)))
    if ham.kind == "joint" and ham.alpha:
        for j in L:
            rj = grid.broadcast(j, grid.coord(j))
            for l in H:
                V = V + (ham.alpha / ham.epsilon) * ham.potential(rj - grid.broadcast(l, grid.coord(l)))
    return V


def _acting_axes(ham: HamiltonianSpec, grid):
    if ham.kind in ("free_light", "light_parametric"):
        return list(range(len(grid.shape))), {}
    if ham.kind == "heavy":
        axes = heavy_axes(grid)
        if not axes:
            axes = list(range(len(grid.shape)))
        return axes, {}
    H, L = heavy_axes(grid), light_axes(grid)
    if not H or not L:
        raise ValueError("joint evolution needs heavy (R*) and light (r*) axes")
    return H + L, {j: ham.epsilon for j in L}


def _fft(a, axes):
    return sfft.fftn(a, axes=axes, workers=FFT_WORKERS, overwrite_x=True)


def _ifft(a, axes):
    return sfft.ifftn(a, axes=axes, workers=FFT_WORKERS, overwrite_x=True)


def evolve_free(psi: WaveFunction, t: float, axes=None, masses=None) -> WaveFunction:
    """Exact free evolution exp(-i t sum_axes k^2 / (2 m))."""
    g = psi.grid
    axes = list(range(len(g.shape))) if axes is None else [g._index(a) for a in axes]
    masses = {g._index(k): v for k, v in (masses or {}).items()}
    if t == 0:
        return WaveFunction(g, psi.amplitudes.copy())
    phase = np.exp(-1j * t * _kinetic_symbol(g, axes, masses))
    return WaveFunction(g, _ifft(phase * _fft(psi.amplitudes.copy(), axes), axes))


def strang_steps(amp: np.ndarray, axes, kinetic: np.ndarray, potential: np.ndarray,
                 t: float, dt: float, max_steps: int, monitor=None) -> tuple[np.ndarray, float]:
    """Strang splitting of exp(-i t (T + V)) acting on the raw array ``amp``.

    ``monitor(amp, s)`` is called every step on the synchronised state at time
    ``s``; returning True stops the propagation early. Returns the final array
    and the time reached.
    """
    if t == 0:
        return amp.copy(), 0.0
    n = max(1, math.ceil(abs(t) / dt - 1e-9))
    if n > max_steps:
        raise StepLimitError(f"{n} steps requested, max_steps={max_steps}")
    h = t / n
    T = np.exp(-1j * h * kinetic)
    has_v = np.any(potential != 0)
    Vh = np.exp(-0.5j * h * potential) if has_v else None
    a = amp.astype(complex, copy=True)
    for step in range(n):
        if has_v:
            a *= Vh
        a = _ifft(T * _fft(a, axes), axes)
        if has_v:
            a *= Vh
        if monitor is not None and monitor(a, (step + 1) * h):
            return a, (step + 1) * h
    return a, t


def _check_unitarity(before: float, after: float, cfg: EvolutionConfig, what: str):
    if abs(after - before) > cfg.unitarity_tolerance:
        raise UnitarityError(f"{what}: norm changed from {before:.15g} to {after:.15g} "
                             f"(tolerance {cfg.unitarity_tolerance:g}, dt={cfg.dt:g})")


def evolve_split(psi: WaveFunction, ham: HamiltonianSpec, t: float,
                 cfg: EvolutionConfig = EvolutionConfig()) -> WaveFunction:
    if ham.kind == "free_light":
        return evolve_free(psi, t)
    g = psi.grid
    axes, masses = _acting_axes(ham, g)
    kin = _kinetic_symbol(g, axes, masses)
    pot = potential_on_grid(ham, g)
    out, _ = strang_steps(psi.amplitudes, axes, kin, pot, t, cfg.dt, cfg.max_steps)
    res = WaveFunction(g, out)
    _check_unitarity(psi.normalization, res.normalization, cfg, f"evolve_split[{ham.kind}]")
    return res


def evolve_heavy_on_joint(Psi: WaveFunction, heavy_ham: HamiltonianSpec, t: float,
                          cfg: EvolutionConfig = EvolutionConfig()) -> WaveFunction:
    """exp(-i t X) on the heavy axes; light coordinates are spectators."""
    if heavy_ham.kind != "heavy":
        raise ValueError("heavy_ham must be of kind 'heavy'")
    g = Psi.grid
    H = heavy_axes(g)
    if heavy_ham.heavy_potential is None:
        return evolve_free(Psi, t, axes=H)
    res = evolve_split(Psi, heavy_ham, t, cfg)
    return res


def evolve_noninteracting(Psi: WaveFunction, ham: HamiltonianSpec, t: float,
                          cfg: EvolutionConfig = EvolutionConfig()) -> WaveFunction:
    """exp(-i t (X + sum_j h0_j / epsilon)): the joint group with alpha = 0."""
    g = Psi.grid
    out = evolve_free(Psi, t, axes=light_axes(g), masses={j: ham.epsilon for j in light_axes(g)})
    return evolve_heavy_on_joint(out, ham.heavy_part(), t, cfg)


def light_interaction(ham: HamiltonianSpec, grid) -> np.ndarray:
    """alpha * sum_{j,l} V(r_j - R_l) on the joint grid (fast-time units)."""
    only = HamiltonianSpec("joint", alpha=ham.alpha, potential=ham.potential, epsilon=1.0)
    return potential_on_grid(only, grid)


@dataclass
class SeparationInfo:
    switched: bool
    t_switch: float
    integrand_at_switch: float
    integrand_max: float
    boundary_mass: float
    history: list = field(default_factory=list)


def evolve_joint_separated(Psi: WaveFunction, ham: HamiltonianSpec, t: float,
                           cfg: EvolutionConfig, interaction_tol: float = 5e-4,
                           check_every: int = 5, boundary_tol: float = 1e-6):
    """Joint evolution that hands over to the exact non-interacting group after the collision.

    The fast-time Duhamel integrand ``alpha * ||sum V_jl Psi||`` is monitored.
    Once it has peaked above ``10 * interaction_tol`` and decayed below
    ``interaction_tol`` the remaining interval is propagated with
    ``exp(-i (t - s) (X + h0 / epsilon))``, which is exact on R^d from then on
    up to the neglected tail. Returns ``(state, SeparationInfo)``.
    """
    g = Psi.grid
    axes, masses = _acting_axes(ham, g)
    kin = _kinetic_symbol(g, axes, masses)
    pot = potential_on_grid(ham, g)
    Vl = np.broadcast_to(light_interaction(ham, g), g.shape)
    state = {"max": 0.0, "prev": np.inf, "count": 0, "hist": [], "last": 0.0}

    def integrand(a):
        return math.sqrt(np.sum(np.abs(Vl * a) ** 2) * g.cell)

    def monitor(a, s):
        state["count"] += 1
        if state["count"] % check_every:
            return False
        val = integrand(a)
        state["hist"].append((s, val))
        state["max"] = max(state["max"], val)
        done = (val < interaction_tol and val <= state["prev"]
                and state["max"] >= 10 * interaction_tol)
        state["prev"] = val
        state["last"] = val
        return done

    if ham.alpha == 0:
        # no light-heavy coupling at all: hand over at s = 0
        out, reached = Psi.amplitudes, 0.0
    else:
        out, reached = strang_steps(Psi.amplitudes, axes, kin, pot, t, cfg.dt, cfg.max_steps,
                                    monitor)
    mid = WaveFunction(g, out)
    bm = boundary_mass(mid, axes=light_axes(g))
    if bm > boundary_tol:
        raise DomainEscapeError(f"light boundary mass {bm:.2e} > {boundary_tol:g} at s={reached:.4g}; "
                                "increase the light half_width")
    switched = reached < t - 1e-12
    if switched:
        mid = evolve_noninteracting(mid, ham, t - reached, cfg)
    _check_unitarity(Psi.normalization, mid.normalization, cfg, "evolve_joint_separated")
    info = SeparationInfo(switched, reached, state["last"], state["max"], bm, state["hist"])
    return mid, info


def energy(psi: WaveFunction, ham: HamiltonianSpec) -> float:
    g = psi.grid
    axes, masses = _acting_axes(ham, g)
    kin = _kinetic_symbol(g, axes, masses)
    pot = potential_on_grid(ham, g) if ham.kind != "free_light" else 0.0
    c = sfft.fftn(psi.amplitudes, axes=axes, workers=FFT_WORKERS)
    ekin = np.sum(np.abs(c) ** 2 * kin) / np.sum(np.abs(c) ** 2) * psi.normalization**2
    epot = np.sum(np.abs(psi.amplitudes) ** 2 * pot) * g.cell
    return float(ekin + epot)


def self_convergence(psi: WaveFunction, ham: HamiltonianSpec, t: float,
                     cfg: EvolutionConfig) -> dict:
    """Richardson study with runs at dt, dt/2 and dt/4."""
    runs = [evolve_split(psi, ham, t, EvolutionConfig(cfg.dt / f, cfg.splitting_order,
                                                      cfg.max_steps * 4, cfg.unitarity_tolerance))
            for f in (1, 2, 4)]
    e1 = l2_norm(runs[0] - runs[2])
    e2 = l2_norm(runs[1] - runs[2])
    # successive differences: -> 2^p for an order-p scheme (a dt/4 reference would give 5)
    d1, d2 = l2_norm(runs[0] - runs[1]), l2_norm(runs[1] - runs[2])
    ratio = d1 / d2 if d2 > 0 else math.inf
    estimate = l2_norm(runs[0] - runs[1]) * 4.0 / 3.0
    if estimate > 1e-4:
        warnings.warn(f"dt={cfg.dt:g} self-convergence estimate {estimate:.2e} exceeds 1e-4",
                      stacklevel=2)
    return {"ratio": ratio, "error_dt": e1, "error_half_dt": e2, "estimate": estimate}
