import numpy as np
import pytest
from hypothesis import given, strategies as st

from relaxlab.system_model import (BUILTIN_NAMES, RawSystem, assemble_symbol, fd_jacobian,
                                   make_builtin, validate_h1)

BUILTINS = [("p_system", (2, 1)), ("p_system", (1, 0)), ("euler_damping", (1,)),
            ("euler_damping", (2,)), ("euler_damping", (3,)), ("euler_relaxation", (1,)),
            ("euler_relaxation", (2,)), ("euler_relaxation", (3,)), ("jin_xin", (2,))]


def test_p_system_21_matrices(psys21):
    np.testing.assert_array_equal(psys21.A_alpha[0], [[0, 1], [4, 0]])
    np.testing.assert_array_equal(psys21.B, [[0, 0], [1, -1]])
    np.testing.assert_array_equal(psys21.A0, [[1, 1], [1, 4]])


def test_p_system_10_matrices(psys10):
    np.testing.assert_array_equal(psys10.A_alpha[0], [[0, 1], [1, 0]])
    np.testing.assert_array_equal(psys10.B, [[0, 0], [0, -1]])
    np.testing.assert_array_equal(psys10.A0, np.eye(2))


def test_euler_damping_3d_structure():
    s = make_builtin("euler_damping", (3,))
    assert (s.n1, s.n2, s.m) == (1, 3, 3)
    np.testing.assert_array_equal(s.B, np.diag([0, -1, -1, -1]))
    for alpha, A in enumerate(s.A_alpha):
        expected = np.zeros((4, 4))
        expected[0, 1 + alpha] = expected[1 + alpha, 0] = 1.0
        np.testing.assert_array_equal(A, expected)


def test_h1_p_system_21(psys21):
    rep = validate_h1(psys21)
    assert rep.passes and rep.a0_spd and rep.ba0_block_ok
    np.testing.assert_allclose(rep.d_spectrum, [-3.0], atol=1e-12)


def test_h1_trivial_cd_system():
    s = RawSystem(1, 1, 1, (np.array([[1.0, 2.0], [2.0, 0.5]]),), np.diag([0.0, -1.0]),
                  np.eye(2))
    assert validate_h1(s).passes


def test_subcharacteristic_violation_rejected():
    with pytest.raises(ValueError, match="subcharacteristic"):
        make_builtin("p_system", (1, 1))


def test_singular_symmetrizer_reported():
    s = RawSystem(1, 1, 1, (np.array([[0.0, 1.0], [1.0, 0.0]]),),
                  np.array([[0.0, 0.0], [1.0, -1.0]]), np.array([[1.0, 1.0], [1.0, 1.0]]))
    rep = validate_h1(s)
    assert not rep.a0_spd and not rep.passes


def test_symbol_examples(psys10):
    np.testing.assert_array_equal(assemble_symbol(psys10, [0.0]), psys10.B)
    np.testing.assert_allclose(assemble_symbol(psys10, [1.0]), [[0, -1j], [-1j, -1]])
    s = make_builtin("euler_damping", (2,))
    E = assemble_symbol(s, [1.0, 0.0])
    expected = np.array([[0, -1j, 0], [-1j, -1, 0], [0, 0, -1]])
    np.testing.assert_allclose(E, expected)


@pytest.mark.parametrize("name,params", BUILTINS)
def test_builtins_pass_h1(name, params):
    assert validate_h1(make_builtin(name, params)).passes


@pytest.mark.parametrize("name,params", [b for b in BUILTINS if b[0] != "euler_relaxation"]
                         + [("euler_relaxation", (2,))])
def test_finite_difference_jacobians_match_linearization(name, params):
    s = make_builtin(name, params)
    assert s.has_nonlinearity
    u = np.zeros(s.n)
    jf = fd_jacobian(s.flux, u)
    for alpha in range(s.m):
        np.testing.assert_allclose(jf[alpha], s.A_alpha[alpha], atol=1e-6)
    np.testing.assert_allclose(fd_jacobian(s.source, u), s.B, atol=1e-6)


def test_jin_xin_has_nonsymmetric_relaxation_block():
    s = make_builtin("jin_xin", (2,))
    rep = validate_h1(s)
    D = (s.B @ s.A0)[1:, 1:]
    assert np.linalg.norm(D - D.T) > 0.1
    assert rep.passes


def test_unknown_builtin():
    with pytest.raises(ValueError, match="unknown"):
        make_builtin("shallow_water", ())
    assert "p_system" in BUILTIN_NAMES


def test_b_top_rows_must_vanish():
    with pytest.raises(ValueError, match="first n1 rows"):
        RawSystem(1, 1, 1, (np.eye(2),), np.array([[1.0, 0.0], [0.0, -1.0]]), np.eye(2))


def test_linearization_mismatch_rejected():
    A = np.array([[0.0, 1.0], [1.0, 0.0]])
    B = np.diag([0.0, -1.0])
    with pytest.raises(ValueError):
        RawSystem(1, 1, 1, (A,), B, np.eye(2),
                  flux=lambda u: np.array([2 * A @ u]), source=lambda u: B @ u)


def test_custom_pressure_override():
    s = make_builtin("p_system", (1, 0), sigma=lambda u: u, h=lambda u: 0.0 * u)
    np.testing.assert_allclose(s.flux(np.array([0.3, 0.2])), [[0.2, 0.3]])


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=2))
def test_symbol_parity(xi):
    s = make_builtin("euler_damping", (2,))
    xi = np.array(xi)
    total = assemble_symbol(s, xi) + assemble_symbol(s, -xi)
    np.testing.assert_allclose(total, 2 * s.B, atol=1e-12)
