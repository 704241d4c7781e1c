"""Inverse wave operators Omega_+(R)^{-1} chi as limits of exp(i tau h0) exp(-i tau h(R)) chi.

Every solve runs on a padded copy of the light grid (same spacing, more
points) so the scattered wave has room to leave the interaction region, and
the limit is cropped back to the caller's window. Solves for many heavy
configurations are batched into one array and propagated together.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
import scipy.fft as sfft

from .grid import FFT_WORKERS, SpatialGrid, WaveFunction, l2_norm
from .propagators import EvolutionConfig, HamiltonianSpec, evolve_free, evolve_split, strang_steps


class WaveOperatorError(RuntimeError):
    pass


class DomainEscape(WaveOperatorError):
    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class NonConvergence(WaveOperatorError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


DEFAULT_CFG = EvolutionConfig(dt=0.05)


@dataclass
class WaveOperatorResult:
    state: WaveFunction
    heavy_config: tuple
    tau_used: float
    cauchy_residual: float
    duhamel_tail: float
    history: list = field(default_factory=list)


def median_speed(chi: WaveFunction) -> float:
    g = chi.grid
    w = np.abs(sfft.fft(chi.amplitudes, workers=FFT_WORKERS)) ** 2
    k = np.abs(g.wavenumbers(0))
    order = np.argsort(k)
    c = np.cumsum(w[order])
    return float(k[order][np.searchsorted(c, 0.5 * c[-1])])


def initial_tau(chi: WaveFunction, potential) -> float:
    v = max(median_speed(chi), 0.25)
    return 4.0 * potential.range / v


def tail_estimate(tau: float, g_half: float, g_tau: float) -> float:
    """int_tau^inf g(s) ds for g(s) ~ c s^{-p}, p fitted from g(tau/2), g(tau)."""
    if g_tau <= 0:
        return 0.0
    if g_half <= 0:
        return math.inf
    p = math.log(g_half / g_tau) / math.log(2.0)
    if p <= 1.0:
        return math.inf
    return g_tau * tau / (p - 1.0)


def translate(psi: WaveFunction, shift: float) -> WaveFunction:
    """(T_a psi)(x) = psi(x - a), spectrally."""
    g = psi.grid
    k = g.wavenumbers(0)
    return WaveFunction(g, sfft.ifft(np.exp(-1j * k * shift) * sfft.fft(psi.amplitudes)))


def reflect(psi: WaveFunction) -> WaveFunction:
    """(P psi)(x) = psi(-x) on the periodic grid."""
    a = psi.amplitudes
    return WaveFunction(psi.grid, np.roll(a[::-1], 1))


@dataclass
class _Batch:
    omega: np.ndarray
    tau: float
    residual: np.ndarray
    tail: np.ndarray
    extras: dict
    history: list
    pad: int
    defect: np.ndarray | None = None


def _solve_batch(chi: WaveFunction, positions: np.ndarray, alpha: float, potential, tol: float,
                 cfg: EvolutionConfig, extra_times=(), weights=None, pad: int = 4,
                 max_pad: int = 64, max_tau: float = 4096.0, boundary_tol: float = 1e-6,
                 tau0: float | None = None) -> _Batch:
    g = chi.grid
    if len(g.shape) != 1:
        raise ValueError("wave operators act on single-particle grids")
    n, L = g.points_per_axis, g.half_width
    B = positions.shape[0]
    tau0 = tau0 or initial_tau(chi, potential)
    extra_times = sorted(set(float(t) for t in extra_times))
    while pad <= max_pad:
        try:
            return _attempt(chi, g, n, L, B, positions, alpha, potential, tol, cfg, extra_times,
                            weights, pad, max_tau, boundary_tol, tau0)
        except DomainEscape:
            pad *= 2
    raise DomainEscape(f"scattered wave escapes a {max_pad}x padded grid; "
                       "increase half_width or lower max_tau")


def _attempt(chi, g, n, L, B, positions, alpha, potential, tol, cfg, extra_times, weights, pad,
             max_tau, boundary_tol, tau0):
    npad = n * pad
    gp = SpatialGrid(g.dim, npad, L * pad, g.axes)
    x = gp.coord(0)
    k2h = 0.5 * gp.wavenumbers(0) ** 2
    off = (npad - n) // 2
    radial_w = 2.0 * np.pi if g.radial else 1.0
    dx = g.spacing * radial_w

    V = np.zeros((B, npad))
    for l in range(positions.shape[1]):
        V += alpha * potential(np.abs(x[None, :] - positions[:, l:l + 1]))
    psi = np.zeros((B, npad), dtype=complex)
    psi[:, off:off + n] = chi.amplitudes
    chi_norm2 = chi.normalization**2
    edge = np.abs(x) >= 0.875 * gp.half_width
    w = None if weights is None else np.asarray(weights, float) / np.sum(weights)

    def aggregate(vals):
        if w is None:
            return float(np.max(vals))
        return float(np.sqrt(np.sum(w * vals**2)))

    def mass(vals):
        # rows with negligible weight may leave the window without affecting the joint norm
        return float(np.max(vals)) if w is None else float(np.sum(w * vals))

    schedule = []
    tau = tau0
    while tau <= max_tau * (1 + 1e-12):
        schedule.append(tau)
        tau *= 2
    times = sorted(set(schedule) | set(extra_times))
    sched_set = set(schedule)

    now = 0.0
    omegas, gvals, extras, history = {}, {}, {}, []
    accepted = None
    for t in times:
        psi, _ = strang_steps(psi, (-1,), k2h, V, t - now, cfg.dt, cfg.max_steps)
        now = t
        dens = np.abs(psi) ** 2
        bm = dens[:, edge].sum(axis=1) / dens.sum(axis=1)
        if mass(bm) > boundary_tol:
            raise DomainEscape(f"boundary mass {mass(bm):.2e} at tau={t:g}", history)
        om = sfft.ifft(np.exp(1j * t * k2h) * sfft.fft(psi, axis=-1, workers=FFT_WORKERS),
                       axis=-1, workers=FFT_WORKERS)
        crop = om[:, off:off + n]
        loss = 1.0 - np.sum(np.abs(crop) ** 2, axis=1) * dx / chi_norm2
        g_int = np.sqrt(np.sum(np.abs(V * psi) ** 2, axis=1) * dx)
        if t in extra_times:
            extras[t] = crop.copy()
        if t not in sched_set:
            if accepted is not None and now >= extra_times[-1]:
                break
            continue
        omegas[t], gvals[t] = crop, g_int
        i = schedule.index(t)
        entry = {"tau": t, "integrand": aggregate(g_int), "crop_loss": mass(np.abs(loss))}
        if i > 0 and accepted is None:
            tp = schedule[i - 1]
            res = np.sqrt(np.sum(np.abs(omegas[t] - omegas[tp]) ** 2, axis=1) * dx)
            tails = np.array([tail_estimate(t, a, b) for a, b in zip(gvals[tp], gvals[t])])
            # unitarity caps any remaining change at 2 ||chi||
            tails = np.minimum(tails, 2.0 * math.sqrt(chi_norm2))
            # Minkowski: the aggregated tail is bounded by the integral of the aggregated integrand
            entry.update(cauchy=aggregate(res),
                         tail=min(tail_estimate(t, aggregate(gvals[tp]), aggregate(g_int)),
                                  2.0 * math.sqrt(chi_norm2)))
            if entry["cauchy"] <= tol and entry["tail"] <= tol:
                accepted = (t, omegas[t], res, tails)
            for old in [s for s in omegas if s < tp]:
                del omegas[old], gvals[old]
        history.append(entry)
        if accepted is not None and now >= (extra_times[-1] if extra_times else 0.0):
            break
    if accepted is None:
        raise NonConvergence(f"no acceptance up to tau={schedule[-1]:g} (tol={tol:g})", history)
    tp, om, res, tails = accepted
    loss = 1.0 - np.sum(np.abs(om) ** 2, axis=1) * dx / chi_norm2
    if mass(np.abs(loss)) > boundary_tol:
        raise WaveOperatorError(f"limit state leaks out of the light window (loss {mass(np.abs(loss)):.2e}); "
                                "increase half_width")
    return _Batch(om, tp, res, tails, extras, history, pad, np.abs(loss))


def _alpha_zero(chi, positions, extra_times, tau0):
    B = positions.shape[0]
    om = np.broadcast_to(chi.amplitudes, (B, chi.amplitudes.size)).copy()
    return _Batch(om, tau0, np.zeros(B), np.zeros(B), {t: om.copy() for t in extra_times}, [], 1)


def wave_operator_inverse(chi: WaveFunction, R, ham: HamiltonianSpec, tol: float = 1e-3,
                          cfg: EvolutionConfig = DEFAULT_CFG, **kw) -> WaveOperatorResult:
    positions = np.atleast_2d(np.asarray(R, dtype=float))
    if ham.alpha == 0 or ham.potential is None:
        b = _alpha_zero(chi, positions, (), initial_tau(chi, ham.potential) if ham.potential else 1.0)
    else:
        b = _solve_batch(chi, positions, ham.alpha, ham.potential, tol, cfg, **kw)
    return WaveOperatorResult(WaveFunction(chi.grid, b.omega[0]), tuple(positions[0]), b.tau,
                              float(b.residual[0]), float(b.tail[0]), b.history)


class OmegaField(dict):
    """Mapping heavy configuration -> list of WaveOperatorResult (one per light particle).

    ``arrays[j]`` stacks particle ``j``'s states over ``positions``;
    ``at_times[tau][j]`` holds the untransformed approximant omega(tau).
    """

    def __init__(self, positions, arrays, at_times, grid, meta):
        super().__init__()
        self.positions = positions
        self.arrays = arrays
        self.at_times = at_times
        self.grid = grid
        self.meta = meta


def wave_operator_field(chi_list, R_grid, ham: HamiltonianSpec, tol: float = 1e-3,
                        cfg: EvolutionConfig = DEFAULT_CFG, weights=None, extra_times=(),
                        **kw) -> OmegaField:
    """Solve for every heavy configuration in ``R_grid``.

    ``weights`` (e.g. |phi(R)|^2 dR) switch acceptance from the worst row to
    the weighted L^2 residual over rows, which is the quantity entering the
    joint-state norm. Identical light states are solved once.
    """
    positions = np.atleast_2d(np.asarray(R_grid, dtype=float))
    if positions.shape[0] == 1 and np.asarray(R_grid).ndim == 1:
        positions = positions.T
    chi_list = list(chi_list)
    grid = chi_list[0].grid
    solved: list[tuple[WaveFunction, _Batch]] = []
    batches = []
    failures = []
    for chi in chi_list:
        hit = next((b for c, b in solved if np.array_equal(c.amplitudes, chi.amplitudes)), None)
        if hit is None:
            try:
                if ham.alpha == 0 or ham.potential is None:
                    hit = _alpha_zero(chi, positions, extra_times, 1.0)
                else:
                    hit = _solve_batch(chi, positions, ham.alpha, ham.potential, tol, cfg,
                                       extra_times=extra_times, weights=weights, **kw)
            except WaveOperatorError as exc:
                failures.append((len(batches), str(exc)))
                hit = None
            solved.append((chi, hit))
        batches.append(hit)
    if failures:
        labels = ", ".join(f"particle {j}: {m}" for j, m in failures)
        raise WaveOperatorError(f"wave-operator field failed over R grid "
                                f"[{positions.min():g}, {positions.max():g}]: {labels}")
    arrays = [b.omega for b in batches]
    at_times = {t: [b.extras[t] for b in batches] for t in extra_times}
    meta = [{"tau_used": b.tau, "pad": b.pad, "history": b.history,
             "max_residual": float(np.max(b.residual)),
             "max_tail": float(np.max(b.tail)),
             "max_defect": float(np.max(b.defect)) if b.defect is not None else 0.0}
            for b in batches]
    field_ = OmegaField(positions, arrays, at_times, grid, meta)
    for i, R in enumerate(positions):
        field_[tuple(R)] = [WaveOperatorResult(WaveFunction(grid, b.omega[i]), tuple(R), b.tau,
                                               float(b.residual[i]), float(b.tail[i]))
                            for b in batches]
    return field_


def intertwining_residual(chi: WaveFunction, R, ham: HamiltonianSpec, s: float = 1.0,
                          tol: float = 1e-3, cfg: EvolutionConfig = DEFAULT_CFG) -> float:
    """||exp(-i s h0) Omega^-1 chi - Omega^-1 exp(-i s h(R)) chi||."""
    R = tuple(np.atleast_1d(np.asarray(R, dtype=float)))
    base = wave_operator_inverse(chi, R, ham, tol, cfg).state
    if ham.alpha == 0 or ham.potential is None:
        moved = evolve_free(chi, s)
    else:
        h = HamiltonianSpec("light_parametric", alpha=ham.alpha, potential=ham.potential,
                            heavy_positions=R)
        moved = evolve_split(chi, h, s, EvolutionConfig(dt=min(cfg.dt, 0.01)))
    other = wave_operator_inverse(moved, R, ham, tol, cfg).state
    return l2_norm(evolve_free(base, s) - other)
