"""Asymptotic states xi, zeta and Psi_a, and the mass-ratio sweep against exact dynamics.

The exact joint state is propagated with Strang splitting until the light
particles have left the interaction region, and with the exact
non-interacting group afterwards (see ``evolve_joint_separated``). The
asymptotic state uses the same periodic free group on the joint grid, so the
error norm is not affected by wrap-around of the free light packets.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import math
import time as _time
import warnings

import numpy as np
import scipy.fft as sfft
from scipy import stats

from .config import SystemConfig, dt_for
from .grid import ProductGrid, SpatialGrid, WaveFunction, l2_norm, make_gaussian, tensor_product
from .propagators import (EvolutionConfig, HamiltonianSpec, evolve_free, evolve_heavy_on_joint,
                          evolve_joint_separated, light_axes)
from .scattering import OmegaField, wave_operator_field


@dataclass
class AsymptoticState:
    psi_a: WaveFunction
    zeta: WaveFunction
    t: float
    epsilon: float


@dataclass
class SweepRecord:
    epsilon: float
    t: float
    err_psi_a: float
    err_zeta: float
    gap_psi_a_zeta: float
    valid: bool = True
    diagnostics: dict = field(default_factory=dict)


@dataclass
class SlopeFit:
    t: float
    slope: float
    ci: tuple
    r_squared: float
    spearman: float
    n: int


@dataclass
class SweepResult:
    records: list
    fitted_slope: float
    slope_ci: tuple
    fits: dict = field(default_factory=dict)
    field_meta: list = field(default_factory=list)


# ----------------------------------------------------------------------------
# grids and initial data


def heavy_grid(cfg: SystemConfig) -> SpatialGrid:
    return SpatialGrid(1, cfg.grid.heavy_points, cfg.grid.heavy_half_width,
                       tuple(f"R{l + 1}" for l in range(cfg.K)))


def light_grid(cfg: SystemConfig, j: int = 0) -> SpatialGrid:
    return SpatialGrid(1, cfg.grid.light_points, cfg.grid.light_half_width, (f"r{j + 1}",))


def initial_states(cfg: SystemConfig):
    hg = heavy_grid(cfg)
    p = cfg.initial_phi
    phi = make_gaussian(hg, p.center, p.momentum, p.width) * p.norm
    chis = [make_gaussian(light_grid(cfg, j), c.center[0], c.momentum[0], c.width) * c.norm
            for j, c in enumerate(cfg.initial_chis)]
    return phi, chis


def heavy_positions(hg: SpatialGrid) -> np.ndarray:
    """All heavy configurations of the grid, C order, shape (points, K)."""
    axes = [hg.coord(i) for i in range(len(hg.shape))]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def joint_hamiltonian(cfg: SystemConfig, epsilon: float, alpha: float | None = None):
    return HamiltonianSpec("joint", alpha=cfg.alpha if alpha is None else alpha,
                           potential=cfg.potential, heavy_potential=cfg.heavy_potential,
                           epsilon=epsilon)


def assemble(phi: WaveFunction, light_grids, light_rows) -> WaveFunction:
    """Joint array phi(R) prod_j L_j[R, r_j] from per-configuration light rows."""
    nR = phi.amplitudes.size
    amp = phi.amplitudes.reshape(nR)
    for j, rows in enumerate(light_rows):
        rows = np.asarray(rows)
        if rows.shape[0] != nR:
            raise KeyError(f"light field for particle {j + 1} has {rows.shape[0]} heavy entries, "
                           f"heavy grid has {nR}")
        amp = amp.reshape(amp.shape + (1,)) * rows.reshape((nR,) + (1,) * j + (-1,))
    grid = ProductGrid([phi.grid, *light_grids])
    return WaveFunction(grid, amp.reshape(grid.shape))


def _free_rows(rows: np.ndarray, grid: SpatialGrid, tau: float) -> np.ndarray:
    k = grid.wavenumbers(0)
    return sfft.ifft(np.exp(-0.5j * tau * k * k) * sfft.fft(rows, axis=-1), axis=-1)


# ----------------------------------------------------------------------------
# asymptotic states


def parametric_light_rows(field_: OmegaField, tau: float):
    """exp(-i tau h(R)) chi_j for every R, from omega(tau) via exp(-i tau h0) omega(tau)."""
    if tau == 0:
        return None
    if tau not in field_.at_times:
        raise KeyError(f"fast time {tau:g} was not requested from the wave-operator solver")
    return [_free_rows(rows, field_.grid, tau) for rows in field_.at_times[tau]]


def build_xi(phi: WaveFunction, chis, R_field, t: float) -> WaveFunction:
    """xi(t) on the joint grid. ``R_field`` holds exp(-i t h(R)) chi_j rows, or None at t = 0."""
    grids = [c.grid for c in chis]
    if t == 0 or R_field is None:
        return tensor_product([phi, *chis])
    return assemble(phi, grids, R_field)


def build_zeta(xi_at_t_over_eps: WaveFunction, t: float, cfg: EvolutionConfig = EvolutionConfig(),
               heavy_ham: HamiltonianSpec = HamiltonianSpec("heavy")) -> WaveFunction:
    return evolve_heavy_on_joint(xi_at_t_over_eps, heavy_ham, t, cfg)


def build_psi_a(phi: WaveFunction, chis, omega_field: OmegaField, t: float, epsilon: float,
                cfg: EvolutionConfig = EvolutionConfig(),
                heavy_ham: HamiltonianSpec = HamiltonianSpec("heavy")) -> WaveFunction:
    pos = heavy_positions(phi.grid)
    if (omega_field.positions.shape != pos.shape
            or not np.allclose(omega_field.positions, pos, rtol=0, atol=1e-12)):
        raise KeyError("omega_field does not cover the heavy grid")
    Phi = assemble(phi, [c.grid for c in chis], omega_field.arrays)
    L = light_axes(Phi.grid)
    out = evolve_free(Phi, t, axes=L, masses={j: epsilon for j in L})
    return evolve_heavy_on_joint(out, heavy_ham, t, cfg)


# ----------------------------------------------------------------------------
# sweep


def field_for(cfg: SystemConfig, phi=None, chis=None, extra_times=()) -> OmegaField:
    if phi is None:
        phi, chis = initial_states(cfg)
    pos = heavy_positions(phi.grid)
    weights = np.abs(phi.amplitudes.ravel()) ** 2
    ham = HamiltonianSpec("joint", alpha=cfg.alpha, potential=cfg.potential, epsilon=1.0)
    return wave_operator_field(chis, pos, ham, tol=cfg.tolerances["wave_operator"],
                               cfg=EvolutionConfig(dt=cfg.tolerances["wave_operator_dt"]),
                               weights=weights, extra_times=extra_times)


def _exact(cfg: SystemConfig, Psi0: WaveFunction, epsilon: float, t: float, dt: float):
    ham = joint_hamiltonian(cfg, epsilon)
    ecfg = EvolutionConfig(dt=dt, unitarity_tolerance=cfg.tolerances["unitarity"])
    return evolve_joint_separated(Psi0, ham, t, ecfg, cfg.tolerances["interaction"],
                                  boundary_tol=cfg.tolerances["boundary"])


def measure_point(cfg: SystemConfig, field_: OmegaField, epsilon: float, t: float,
                  self_check: bool = True) -> SweepRecord:
    t0 = _time.perf_counter()
    phi, chis = initial_states(cfg)
    Psi0 = tensor_product([phi, *chis])
    dt = dt_for(cfg, epsilon)
    exact, info = _exact(cfg, Psi0, epsilon, t, dt)
    hcfg = EvolutionConfig(dt=dt)
    heavy_ham = HamiltonianSpec("heavy", heavy_potential=cfg.heavy_potential)
    psi_a = build_psi_a(phi, chis, field_, t, epsilon, hcfg, heavy_ham)
    tau = t / epsilon
    xi = build_xi(phi, chis, parametric_light_rows(field_, tau), tau)
    zeta = build_zeta(xi, t, hcfg, heavy_ham)
    err_a = l2_norm(exact - psi_a)
    err_z = l2_norm(exact - zeta)
    gap = l2_norm(psi_a - zeta)
    diag = {"dt": dt, "t_switch": info.t_switch, "switched": info.switched,
            "integrand_at_switch": info.integrand_at_switch, "boundary_mass": info.boundary_mass,
            "norm_psi_a": psi_a.normalization, "norm_exact": exact.normalization}
    valid = True
    if self_check and cfg.alpha > 0:
        coarse, _ = _exact(cfg, Psi0, epsilon, t, 2 * dt)
        est = l2_norm(exact - coarse) / 3.0
        diag["self_convergence_estimate"] = est
        valid = est <= cfg.tolerances["self_convergence"] * err_a + 1e-9
    diag["seconds"] = _time.perf_counter() - t0
    return SweepRecord(epsilon, t, err_a, err_z, gap, valid, diag)


def fit_slope(eps, errs, t: float) -> SlopeFit:
    eps, errs = np.asarray(eps, float), np.asarray(errs, float)
    if eps.size < 2 or np.any(errs <= 0):
        return SlopeFit(t, math.nan, (math.nan, math.nan), math.nan, math.nan, int(eps.size))
    lr = stats.linregress(np.log(eps), np.log(errs))
    dof = eps.size - 2
    half = stats.t.ppf(0.975, dof) * lr.stderr if dof > 0 else math.nan
    rho = stats.spearmanr(eps, errs).statistic if eps.size > 2 else math.nan
    return SlopeFit(t, float(lr.slope), (float(lr.slope - half), float(lr.slope + half)),
                    float(lr.rvalue**2), float(rho), int(eps.size))


def _point_job(args):
    cfg, field_, eps, t, check = args
    return measure_point(cfg, field_, eps, t, check)


class _Serial:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False

    @staticmethod
    def map(fn, items):
        return map(fn, items)


def run_epsilon_sweep(config: SystemConfig, epsilons=None, t_list=None, jobs: int = 1,
                      self_check: bool = True, on_record=None) -> SweepResult:
    """Errors of Psi_a and zeta against the exact state on the (epsilon, t) lattice.

    ``on_record`` is called with each SweepRecord as soon as it is available.
    """
    epsilons = sorted(config.epsilon if epsilons is None else epsilons, reverse=True)
    t_list = sorted(config.time if t_list is None else t_list)
    if len(epsilons) < 4:
        raise ValueError("a sweep needs at least 4 epsilons")
    if max(epsilons) / min(epsilons) < 10 - 1e-9:
        warnings.warn(f"epsilon range spans a factor {max(epsilons) / min(epsilons):g}, "
                      "less than a decade", stacklevel=2)
    if any(t <= 0 for t in t_list):
        raise ValueError("t = 0 is excluded: the asymptotic formula is undefined there")
    phi, chis = initial_states(config)
    taus = sorted({t / e for e in epsilons for t in t_list})
    field_ = field_for(config, phi, chis, extra_times=taus)
    tasks = [(config, field_, e, t, self_check) for e in epsilons for t in t_list]
    records = []
    with ProcessPoolExecutor(max_workers=jobs) if jobs > 1 else _Serial() as pool:
        for rec in pool.map(_point_job, tasks):
            records.append(rec)
            if on_record is not None:
                on_record(rec)
    records.sort(key=lambda r: (r.epsilon, r.t))
    fits = {}
    for t in t_list:
        rows = [r for r in records if r.t == t and r.valid]
        fits[t] = fit_slope([r.epsilon for r in rows], [r.err_psi_a for r in rows], t)
    ref = 1.0 if 1.0 in fits else t_list[-1]
    return SweepResult(records, fits[ref].slope, fits[ref].ci, fits, field_.meta)
