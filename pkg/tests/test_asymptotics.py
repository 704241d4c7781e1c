import warnings

import numpy as np
import pytest

from conftest import small_config
from heavylight.asymptotics import (build_psi_a, build_xi, field_for, fit_slope, heavy_positions,
                                    initial_states, measure_point, run_epsilon_sweep)
from heavylight.grid import l2_norm, tensor_product
from heavylight.scattering import OmegaField


@pytest.fixture(scope="module")
def sweep():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return run_epsilon_sweep(small_config(1), self_check=False)


def test_fit_slope_recovers_power_law():
    eps = np.array([1 / 8, 1 / 16, 1 / 32, 1 / 64])
    fit = fit_slope(eps, 3.0 * eps**0.7, 1.0)
    assert fit.slope == pytest.approx(0.7)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.spearman == pytest.approx(1.0)


def test_error_decreases_with_mass_ratio(sweep):
    errs = [r.err_psi_a for r in sorted(sweep.records, key=lambda r: -r.epsilon)]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert sweep.fitted_slope >= 0.4


def test_zeta_and_psi_a_agree_once_light_particle_has_left(sweep):
    smallest = min(sweep.records, key=lambda r: r.epsilon)
    assert smallest.gap_psi_a_zeta < 0.01 < smallest.err_psi_a


def test_psi_a_is_normalized(sweep):
    for r in sweep.records:
        assert abs(r.diagnostics["norm_psi_a"] - 1) < 1e-6


def test_alpha_zero_asymptotic_state_is_exact():
    cfg = small_config(1).replace(alpha=0.0)
    fld = field_for(cfg, extra_times=(16.0,))
    rec = measure_point(cfg, fld, 1 / 16, 1.0)
    assert rec.err_psi_a < 1e-8 and rec.err_zeta < 1e-8


def test_self_check_marks_point_valid():
    cfg = small_config(1)
    fld = field_for(cfg, extra_times=(8.0,))
    rec = measure_point(cfg, fld, 1 / 8, 1.0, self_check=True)
    assert rec.valid and rec.diagnostics["self_convergence_estimate"] < 0.05 * rec.err_psi_a


def test_xi_at_time_zero_is_initial_product():
    phi, chis = initial_states(small_config(1))
    assert l2_norm(build_xi(phi, chis, None, 0.0) - tensor_product([phi, *chis])) == 0.0


def test_psi_a_requires_full_heavy_coverage():
    cfg = small_config(1)
    phi, chis = initial_states(cfg)
    pos = heavy_positions(phi.grid)[:3]
    fake = OmegaField(pos, [np.zeros((3, chis[0].amplitudes.size))], {}, chis[0].grid, [])
    with pytest.raises(KeyError):
        build_psi_a(phi, chis, fake, 1.0, 0.1)


def test_sweep_input_checks():
    cfg = small_config(1)
    with pytest.raises(ValueError):
        run_epsilon_sweep(cfg, epsilons=(0.1, 0.05, 0.025))
    with pytest.raises(ValueError), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        run_epsilon_sweep(cfg, t_list=(0.0, 1.0))
    with pytest.warns(UserWarning, match="decade"):
        run_epsilon_sweep(cfg.replace(alpha=0.0), self_check=False)


def test_parallel_sweep_matches_serial():
    cfg = small_config(1).replace(alpha=0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = run_epsilon_sweep(cfg, self_check=False, jobs=1)
        b = run_epsilon_sweep(cfg, self_check=False, jobs=2)
    assert [(r.epsilon, r.err_psi_a, r.err_zeta) for r in a.records] == \
        [(r.epsilon, r.err_psi_a, r.err_zeta) for r in b.records]
