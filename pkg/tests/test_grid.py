import math

import numpy as np
import pytest

from heavylight.grid import (BoundaryTailError, SpatialGrid, WaveFunction, boundary_mass,
                             inner_product, l1_norm, l2_norm, make_gaussian, marginal_density,
                             sup_norm, tensor_product, weighted_sobolev_norm)


@pytest.fixture
def line():
    return SpatialGrid(1, 1024, 32.0)


def test_gaussian_norms_match_closed_forms(line):
    w = 1.3
    psi = make_gaussian(line, 0.5, 1.0, w)
    amp = (2 * math.pi * w * w) ** -0.25
    assert l2_norm(psi) == pytest.approx(1.0, abs=1e-12)
    assert sup_norm(psi) == pytest.approx(amp, rel=1e-3)
    assert l1_norm(psi) == pytest.approx(amp * 2 * w * math.sqrt(math.pi), rel=1e-10)


def test_inner_product_is_conjugate_linear_in_first_argument(line):
    a = make_gaussian(line, -1.0, 0.0, 1.0)
    b = make_gaussian(line, 1.0, 2.0, 1.0)
    assert inner_product(a * 1j, b) == pytest.approx(-1j * inner_product(a, b))
    assert inner_product(a, b * 1j) == pytest.approx(1j * inner_product(a, b))


def test_weighted_norm_puts_weight_after_derivative(line):
    psi = make_gaussian(line, 0.0, 0.0, 1.0)
    x = line.coord(0)
    k = line.wavenumbers(0)
    d1 = np.fft.ifft(1j * k * np.fft.fft(psi.amplitudes))
    w = np.sqrt(1 + x * x)
    manual = sum(math.sqrt(np.sum(np.abs(w * f) ** 2) * line.cell) for f in (psi.amplitudes, d1))
    assert weighted_sobolev_norm(psi, 1, 1) == pytest.approx(manual, rel=1e-10)
    assert weighted_sobolev_norm(psi, 0, 0) == pytest.approx(1.0, abs=1e-12)


def test_grid_rejects_bad_sizes():
    with pytest.raises(ValueError):
        SpatialGrid(1, 1000, 10.0)
    with pytest.raises(ValueError):
        SpatialGrid(2, 64, 10.0)


def test_packet_too_wide_for_window():
    with pytest.raises(BoundaryTailError):
        make_gaussian(SpatialGrid(1, 64, 4.0), 0.0, 0.0, 2.0)


def test_tensor_product_and_marginals():
    a = SpatialGrid(1, 64, 10.0, ("R1",))
    b = SpatialGrid(1, 128, 20.0, ("r1",))
    Psi = tensor_product([make_gaussian(a, 0, 0, 1), make_gaussian(b, 1, 0, 2)])
    assert l2_norm(Psi) == pytest.approx(1.0, abs=1e-12)
    rho = marginal_density(Psi, ["R1"])
    assert np.sum(rho) * a.cell == pytest.approx(1.0, abs=1e-12)
    assert boundary_mass(Psi) < 1e-10


def test_radial_packet_is_normalized_with_sphere_weight():
    g = SpatialGrid(3, 1024, 40.0)
    psi = make_gaussian(g, 0.0, 0.0, 1.0)
    assert l2_norm(psi) == pytest.approx(1.0, abs=1e-12)
    # sup of the s-wave profile sits at the origin: (2 pi w^2)^(-3/4) for a unit packet
    assert sup_norm(psi) == pytest.approx((2 * math.pi) ** -0.75, rel=1e-6)


def test_wavefunction_arithmetic(line):
    a = make_gaussian(line, 0, 0, 1)
    assert l2_norm(a - a) == 0.0
    assert isinstance(a + a, WaveFunction)
    assert l2_norm(a * 2) == pytest.approx(2.0)
