import math

import numpy as np
import pytest

from gevrey_forge.exactnum import derive_params
from gevrey_forge.solver import (BuildConfig, FormalSolution, OmegaCutoff, SolverError, build,
                                 cutoff_constants, growth_certificate)


def test_level0_exact(small01):
    assert small01.level0_residual() < 1e-12
    assert small01.pi0_weight() == 0


def test_weak_residuals_small(small01):
    for key in small01.levels:
        assert small01.weak_residual(*key) < 1e-8


def test_rhs_vanishes_below_cutoff(small01):
    rho = small01.grid.nodes
    for (ell, p), lf in small01.levels.items():
        if ell >= 1:
            assert not np.any(lf.rhs_hat[rho < small01.chi[ell].a])


def test_level_p_range(small01):
    assert set(small01.levels) == {(l, p) for l in range(4) for p in range(l + 1)}


def test_assemble_modes_agree_beyond_ramps(small01):
    t = np.array([0.0, 0.4, 1.2])
    far = np.full(3, 4 * small01.config.R * 4 + 1.0)
    assert np.allclose(small01.assemble(t, far), small01.assemble(t, far, mode="raw"), rtol=1e-14)
    near = np.full(3, 5.0)
    # inside the first ramp the cutoffs reduce the sum
    assert np.all(np.abs(small01.assemble(t, near)) < np.abs(small01.assemble(t, near, mode="raw")))


def test_growth_certificate(small01):
    rep = growth_certificate(small01)
    assert math.isfinite(rep.C_single) and rep.C_single > 0
    assert rep.r2 >= 0.9
    assert math.isfinite(small01.level1_constant())


def test_growth_needs_four_levels():
    sol = build(derive_params(0, 1), BuildConfig(lmax=2, rho_max=40.0))
    with pytest.raises(SolverError):
        growth_certificate(sol)


def test_checkpoint_round_trip(small01, tmp_path):
    path = tmp_path / "sol"
    small01.checkpoint(path)
    back = FormalSolution.load(small01.params, path)
    assert back.solved_lmax == small01.solved_lmax
    for key, lf in small01.levels.items():
        assert np.array_equal(back.levels[key].tab.rows, lf.tab.rows)
    rho = np.linspace(5, 30, 7)
    assert np.array_equal(back.assemble(0.5, rho), small01.assemble(0.5, rho))
    with pytest.raises(SolverError):
        FormalSolution.load(small01.params, path, BuildConfig(lmax=3, rho_max=42.0, h_max=0.25))


@pytest.mark.parametrize("kwargs", [dict(lmax=-1), dict(R=1.0, R1=2.0), dict(rho_max=20.0),
                                    dict(h_max=0.0), dict(q=2)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        BuildConfig(**kwargs).validate()


def test_omega_cutoff_profile():
    om = OmegaCutoff(2, 2.0, 1)
    assert om(np.array([om.a - 1]))[0] == 0
    assert om(np.array([om.b + 1]))[0] == 1
    assert om.sigma == 1.5
    const = cutoff_constants(om, 12)
    assert math.isfinite(const["C_low"]) and math.isfinite(const["C_gevrey"])


def test_refinement_stability():
    # halving the panel width changes the level-1 solution very little
    P = derive_params(0, 1)
    a = build(P, BuildConfig(lmax=2, rho_max=40.0))
    b = build(P, BuildConfig(lmax=2, rho_max=40.0, h_max=0.25))
    rho = np.linspace(13.0, 30.0, 9)
    for p in (0, 1):
        ga = a.levels[(1, p)].hat(0, rho)
        gb = b.levels[(1, p)].hat(0, rho)
        assert np.abs(ga - gb).max() <= 1e-8 * np.abs(gb).max()
