import numpy as np
import pytest
from hypothesis import given, strategies as st

from relaxlab.cd_transform import CDSystem, projectors, to_cd_form
from relaxlab.fourier_solver import (check_wave_cone, default_cutoff, divergence_spectral, expm,
                                     expm_eig, leray_project, low_frequency_condition,
                                     measure_linear_decay, mode_exponentials,
                                     propagate_linear, propagator_bound, split_low_high)
from relaxlab.grid import Grid, GridField
from relaxlab.system_model import make_builtin


def bump(grid, n, centre=0.0):
    g = grid.gaussian(1.0, 1.0, None if grid.m == 1 and centre == 0 else [centre] * grid.m)
    d = np.zeros((n,) + grid.N)
    d[0] = g
    d[-1] = 0.5 * np.roll(g, 3, axis=-1)
    return GridField(grid, d)


def strip_nyquist(f):
    """Remove Nyquist-plane content, where multipliers are averaged, not propagated."""
    spec = f.to_spectral().data.reshape(f.n, -1).copy()
    spec[:, f.grid.nyquist_flat] = 0.0
    return GridField(f.grid, spec.reshape(f.data.shape), True).to_physical()


def test_expm_examples():
    np.testing.assert_array_equal(expm(np.zeros((3, 3))), np.eye(3))
    t = 1.7
    np.testing.assert_allclose(expm(np.diag([-1.0, -2.0]) * t),
                               np.diag([np.exp(-t), np.exp(-2 * t)]), rtol=1e-14)
    np.testing.assert_allclose(expm(np.array([[0.0, 1.0], [0.0, 0.0]])), [[1, 1], [0, 1]])


@given(st.integers(0, 2**31 - 1), st.integers(1, 6))
def test_expm_matches_eigendecomposition(seed, n):
    rng = np.random.default_rng(seed)
    Z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    a, b = expm(Z), expm_eig(Z)
    assert np.linalg.norm(a - b) <= 1e-10 * np.linalg.norm(a)


def test_zero_mode_behaviour(cd21):
    grid = Grid(1, 64, 10.0)
    w0 = bump(grid, 2)
    t = 2.5
    w = propagate_linear(cd21, w0, t)
    np.testing.assert_allclose(w.integral()[0], w0.integral()[0], rtol=1e-13)
    np.testing.assert_allclose(w.integral()[1], np.exp(cd21.D[0, 0] * t) * w0.integral()[1],
                               rtol=1e-12)


def test_undamped_symmetric_system_preserves_l2():
    cd = CDSystem.from_matrices([np.array([[0.3, 1.0], [1.0, -0.2]])], [[-1.0]])
    grid = Grid(1, 128, 10.0)
    w0 = bump(grid, 2)

    class Undamped:
        A_alpha = cd.A_alpha
        B = np.zeros((2, 2))
        key = "undamped"

    for t in (0.5, 3.0, 11.0):
        assert propagate_linear(Undamped, w0, t).norm(2) == pytest.approx(w0.norm(2), rel=1e-12)


def test_p_system_single_mode_closed_form(cd10):
    grid = Grid(1, 64, 8.0)
    t = 1.3
    mult = mode_exponentials(cd10, grid, t)
    for k in range(1, 31):
        xi = grid.xi_flat[k, 0]
        E = np.array([[0, -1j * xi], [-1j * xi, -1]])
        s = np.sqrt(complex(1 - 4 * xi**2))
        lp, lm = (-1 + s) / 2, (-1 - s) / 2
        # Sylvester formula for a 2x2 matrix with distinct eigenvalues
        expected = ((lp * np.exp(lm * t) - lm * np.exp(lp * t)) * np.eye(2)
                    + (np.exp(lp * t) - np.exp(lm * t)) * E) / (lp - lm)
        np.testing.assert_allclose(mult[k], expected, atol=1e-10)


@pytest.mark.parametrize("name,params,m", [("p_system", (2, 1), 1), ("euler_damping", (2,), 2)])
def test_semigroup(name, params, m):
    cd = to_cd_form(make_builtin(name, params))[1]
    grid = Grid(m, 64 if m == 1 else 32, 12.0)
    w0 = strip_nyquist(bump(grid, cd.n))
    direct = propagate_linear(cd, w0, 2.2)
    composed = propagate_linear(cd, propagate_linear(cd, w0, 0.9), 1.3)
    assert np.max(np.abs(direct.data - composed.data)) <= 1e-9


def test_mass_conservation_and_boundedness():
    cd = to_cd_form(make_builtin("euler_relaxation", (2,)))[1]
    grid = Grid(2, 16, 6.0)
    w0 = bump(grid, cd.n)
    m0 = w0.integral()[: cd.n1]
    for t in (1.0, 5.0, 20.0):
        np.testing.assert_allclose(propagate_linear(cd, w0, t).integral()[: cd.n1], m0,
                                   atol=1e-12 * max(1, np.abs(m0).max()))
    bound = propagator_bound(cd, grid, np.linspace(0, 100, 11))
    assert np.isfinite(bound) and bound < 10.0


def test_split_additivity_and_truncation(cd21):
    grid = Grid(1, 1024, 100.0)
    w0 = bump(grid, 2)
    t = 10.0
    full = propagate_linear(cd21, w0, t)
    defects = []
    for a in (0.2, 0.1, 0.05):
        sp = split_low_high(cd21, w0, t, a)
        np.testing.assert_allclose(sp.kpart.data + sp.kcalpart.data, full.data, atol=1e-12)
        recon = sp.kpart.data + sp.kcal_principal.data - full.data
        assert GridField(grid, recon).norm(2) == pytest.approx(sp.truncation_defect, rel=1e-6,
                                                               abs=1e-14)
        defects.append(sp.truncation_defect)
    assert defects[0] > defects[1] > defects[2]
    assert defects[2] <= 1e-2 * w0.norm(2)


def test_split_transport_part_decays_exponentially(cd10):
    grid = Grid(1, 2048, 128.0)
    w0 = bump(grid, 2)
    a = default_cutoff(cd10)
    times = np.linspace(20.0, 60.0, 9)
    norms = [split_low_high(cd10, w0, t, a).kcal_principal.norm(2) for t in times]
    rate = -np.polyfit(times, np.log(norms), 1)[0]
    c = 0.5
    assert rate >= 0.9 * min(1.0, c * a**2 / (1 + a**2))


def test_split_conservative_and_dissipative_rates(cd10):
    grid = Grid(1, 2048, 128.0)
    w0 = bump(grid, 2)
    ps = projectors(cd10)
    # the dissipative rate is asymptotic; earlier windows are still transient
    times = np.geomspace(50.0, 200.0, 10)
    cons, diss = [], []
    for t in times:
        kp = split_low_high(cd10, w0, t).kpart
        cons.append(GridField(grid, ps.L0 @ kp.data.reshape(2, -1)).norm(2))
        diss.append(GridField(grid, ps.Lminus @ kp.data.reshape(2, -1)).norm(2))
    assert np.polyfit(np.log(times), np.log(cons), 1)[0] == pytest.approx(-0.25, abs=0.1)
    assert np.polyfit(np.log(times), np.log(diss), 1)[0] == pytest.approx(-0.75, abs=0.1)


def test_cutoff_too_large(cd10):
    # the first-order projectors of the p-system are singular on |xi| = 1
    grid = Grid(1, 64, 10.0)
    assert low_frequency_condition(cd10, 50.0) > 1e3
    assert low_frequency_condition(cd10, 0.25) < 2.0
    with pytest.raises(ValueError):
        split_low_high(cd10, bump(grid, 2), 1.0, a=50.0)
    split_low_high(cd10, bump(grid, 2), 1.0, a=0.25)


def test_default_cutoff_rule(cd10):
    assert default_cutoff(cd10) == 0.25
    cd = CDSystem.from_matrices([np.array([[0.0, 10.0], [10.0, 0.0]])], [[-1.0]])
    assert default_cutoff(cd) == pytest.approx(0.05)


def test_wave_cone_guard(cd10):
    with pytest.raises(ValueError):
        check_wave_cone(cd10, Grid(1, 64, 20.0), 50.0)
    check_wave_cone(cd10, Grid(1, 64, 200.0), 50.0)


def test_leray_examples():
    g = Grid(2, 32, np.pi)
    X, Y = g.coords
    psi = np.sin(X) * np.cos(2 * Y)
    grad = GridField(g, np.stack([np.cos(X) * np.cos(2 * Y), -2 * np.sin(X) * np.sin(2 * Y)]))
    assert np.max(np.abs(leray_project(grad).data)) <= 1e-12
    divfree = GridField(g, np.stack([-2 * np.sin(X) * np.sin(2 * Y) * 0 + np.cos(Y),
                                     np.sin(X)]))
    np.testing.assert_allclose(leray_project(divfree).data, divfree.data, atol=1e-12)
    assert psi.shape == g.N


@given(st.integers(0, 2**31 - 1))
def test_leray_idempotent_and_divergence_free(seed):
    g = Grid(2, 16, 3.0)
    v = GridField(g, np.random.default_rng(seed).normal(size=(2,) + g.N))
    p1 = leray_project(v)
    p2 = leray_project(p1)
    assert np.max(np.abs(p2.data - p1.data)) <= 1e-12
    assert divergence_spectral(p1) <= 1e-10


def test_linear_decay_rates_one_dimensional(cd10):
    grid = Grid(1, 2048, 128.0)
    w0 = GridField(grid, np.stack([grid.gaussian(), np.zeros(grid.N)]))
    rep = measure_linear_decay(cd10, w0, np.geomspace(10, 50, 16))
    assert rep.passed, rep.table()


def test_nyquist_plane_multipliers_are_hermitian_pairs(cd10):
    cd = to_cd_form(make_builtin("euler_damping", (2,)))[1]
    grid = Grid(2, 16, 5.0)
    mult = mode_exponentials(cd, grid, 0.7)
    np.testing.assert_allclose(mult[grid.partner_flat], np.conj(mult), atol=1e-14)
    rng = np.random.default_rng(4)
    w = propagate_linear(cd, GridField(grid, rng.normal(size=(cd.n,) + grid.N)), 0.7)
    assert np.all(np.isfinite(w.data))
