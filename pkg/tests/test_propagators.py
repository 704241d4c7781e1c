import math
import warnings

import numpy as np
import pytest

from heavylight.grid import SpatialGrid, WaveFunction, l2_norm, make_gaussian, tensor_product
from heavylight.potentials import PotentialSpec
from heavylight.propagators import (EvolutionConfig, HamiltonianSpec, StepLimitError,
                                    UnitarityError, energy, evolve_free, evolve_joint_separated,
                                    evolve_noninteracting, evolve_split, self_convergence)

V = PotentialSpec("gaussian")


@pytest.fixture
def line():
    return SpatialGrid(1, 1024, 40.0, ("r1",))


def analytic_packet(x, t, x0, p, s):
    a = 1 + 1j * t / (2 * s * s)
    return ((2 * math.pi * s * s) ** -0.25 / np.sqrt(a)
            * np.exp(-(x - x0 - p * t) ** 2 / (4 * s * s * a) + 1j * p * (x - p * t / 2)))


def test_free_evolution_matches_spreading_gaussian(line):
    psi = make_gaussian(line, -3.0, 1.5, 1.0)
    out = evolve_free(psi, 4.0)
    assert np.max(np.abs(out.amplitudes - analytic_packet(line.coord(0), 4.0, -3.0, 1.5, 1.0))) < 1e-10


def test_split_propagation_preserves_norm(line):
    h = HamiltonianSpec("light_parametric", alpha=2.0, potential=V, heavy_positions=(1.0,))
    psi = make_gaussian(line, -6.0, 2.0, 1.0)
    out = evolve_split(psi, h, 6.0, EvolutionConfig(dt=0.01))
    assert abs(out.normalization - 1.0) <= 1e-10


def test_strang_is_second_order(line):
    h = HamiltonianSpec("light_parametric", alpha=1.5, potential=V, heavy_positions=(0.0,))
    psi = make_gaussian(line, -5.0, 2.0, 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = self_convergence(psi, h, 4.0, EvolutionConfig(dt=0.05))
    assert 3.5 <= rep["ratio"] <= 4.5


def test_energy_is_conserved(line):
    h = HamiltonianSpec("light_parametric", alpha=1.5, potential=V, heavy_positions=(0.0,))
    psi = make_gaussian(line, -5.0, 2.0, 1.0)
    e0 = energy(psi, h)
    assert energy(evolve_split(psi, h, 5.0, EvolutionConfig(dt=0.005)), h) == pytest.approx(e0, rel=1e-4)


def test_zero_potential_split_equals_free(line):
    h = HamiltonianSpec("light_parametric", alpha=0.0, potential=V, heavy_positions=(0.0,))
    psi = make_gaussian(line, 0.0, 1.0, 1.0)
    assert l2_norm(evolve_split(psi, h, 3.0, EvolutionConfig(dt=0.1)) - evolve_free(psi, 3.0)) < 1e-12


def test_joint_alpha_zero_is_free_product():
    hg = SpatialGrid(1, 64, 12.0, ("R1",))
    lg = SpatialGrid(1, 256, 96.0, ("r1",))
    phi, chi = make_gaussian(hg, 0.0, -2.0, 1.0), make_gaussian(lg, -10.0, 2.0, 1.5)
    eps = 1 / 16
    ham = HamiltonianSpec("joint", alpha=0.0, potential=V, epsilon=eps)
    out, info = evolve_joint_separated(tensor_product([phi, chi]), ham, 1.0, EvolutionConfig(dt=eps / 10))
    ref = tensor_product([evolve_free(phi, 1.0), evolve_free(chi, 1.0 / eps)])
    assert l2_norm(out - ref) < 1e-12
    assert info.switched and info.t_switch == 0.0


def test_joint_collision_hands_over_and_stays_unitary():
    hg = SpatialGrid(1, 64, 12.0, ("R1",))
    lg = SpatialGrid(1, 256, 96.0, ("r1",))
    Psi = tensor_product([make_gaussian(hg, 0.0, -2.0, 1.0), make_gaussian(lg, -10.0, 2.0, 1.5)])
    eps = 1 / 16
    ham = HamiltonianSpec("joint", alpha=1.5, potential=V, epsilon=eps)
    out, info = evolve_joint_separated(Psi, ham, 2.0, EvolutionConfig(dt=eps / 10))
    assert info.switched and 0 < info.t_switch < 2.0
    assert abs(out.normalization - 1) < 1e-10
    # the remaining interval is non-interacting
    again = evolve_noninteracting(out, ham, 0.0)
    assert l2_norm(again - out) == 0.0


def test_unitarity_guard_trips_on_non_hermitian_potential(line):
    psi = make_gaussian(line, 0.0, 0.0, 1.0)
    bad = WaveFunction(line, psi.amplitudes * 1.001)
    with pytest.raises(UnitarityError):
        from heavylight.propagators import _check_unitarity
        _check_unitarity(psi.normalization, bad.normalization, EvolutionConfig(), "probe")


def test_step_limit(line):
    h = HamiltonianSpec("light_parametric", alpha=1.0, potential=V, heavy_positions=(0.0,))
    with pytest.raises(StepLimitError):
        evolve_split(make_gaussian(line, 0, 0, 1), h, 10.0, EvolutionConfig(dt=0.01, max_steps=10))


def test_spec_validation():
    with pytest.raises(ValueError):
        HamiltonianSpec("joint")
    with pytest.raises(ValueError):
        HamiltonianSpec("light_parametric", alpha=1.0, potential=V)
    with pytest.raises(ValueError):
        EvolutionConfig(splitting_order="yoshida4")
