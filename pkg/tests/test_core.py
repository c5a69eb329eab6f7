import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nsit.analysis import composite_grid, feature_markers
from nsit.core import (
    SystemParams,
    WeakExcitationWarning,
    eit_susceptibility,
    reference_params,
    make_detunings,
    steady_state,
    steady_state_linear_solve,
    susceptibility,
    susceptibility_linear_solve,
    system_matrix,
)
from nsit.errors import DegenerateSystem, InvalidParameters

# frozen from an independent 50-digit mpmath solve (see test_matches_mpmath_oracle)
CHI_REF_AT_ZERO = -1.9980020479009016e-3j


def mp_steady_state(params, delta_e, dps=50):
    """3x3 solve in extended precision, sharing no code with the package."""
    with mpmath.workdps(dps):
        de = mpmath.mpf(delta_e)
        ds = de + mpmath.mpf(params.gyro_s) * mpmath.mpf(params.b_tilde)
        dk = de + mpmath.mpf(params.gyro_k) * mpmath.mpf(params.b_tilde)
        om = mpmath.mpc(params.omega_c_rabi)
        j = mpmath.mpf(params.j_exchange)
        i = mpmath.mpc(0, 1)
        m = mpmath.matrix([
            [-(mpmath.mpf(params.gamma_e) / 2 + i * de), -i * om, 0],
            [-i * mpmath.conj(om), -(mpmath.mpf(params.gamma_s) / 2 + i * ds), -i * j],
            [0, -i * j, -(mpmath.mpf(params.gamma_k) / 2 + i * dk)],
        ])
        f = mpmath.matrix([i * mpmath.mpc(params.omega_p_rabi) * params.source_scale, 0, 0])
        x = mpmath.lu_solve(m, f)
        return [complex(x[k]) for k in range(3)]


def test_reference_center_value_frozen():
    chi = susceptibility(reference_params(), 0.0)
    assert chi == pytest.approx(CHI_REF_AT_ZERO, rel=1e-13)


@pytest.mark.parametrize("zk", [0.0, 1e-6])
@pytest.mark.parametrize("delta", [0.0, -9.9e-7, 1.3e-7, -1e-4, 2e-5, 450.0])
def test_matches_mpmath_oracle(zk, delta):
    p = reference_params().with_zeeman_k(zk)
    ref = mp_steady_state(p, delta)
    got = steady_state(p, delta).as_array()
    np.testing.assert_allclose(got, ref, rtol=1e-12, atol=0)


def test_nested_form_matches_linear_solve_on_composite_grid():
    p = reference_params()
    grid, _ = composite_grid((-3e3, 3e3), feature_markers(p), n_coarse=4000, n_feature=2000)
    a = susceptibility(p, grid)
    b = susceptibility_linear_solve(p, grid)
    assert np.max(np.abs(a - b) / np.abs(b)) < 1e-12


def test_all_components_match_linear_solve():
    p = reference_params(b_tilde=3e-7)
    d = np.linspace(-1e-5, 1e-5, 101)
    a = steady_state(p, d)
    b = steady_state_linear_solve(p, d)
    for x, y in ((a.x_dp, b.x_dp), (a.x_ds, b.x_ds), (a.x_nk, b.x_nk)):
        np.testing.assert_allclose(x, y, rtol=1e-10)


def test_residual_of_linear_system_vanishes():
    p = reference_params(b_tilde=1e-6)
    for d in (0.0, -1e-6, 3.0):
        x = steady_state(p, d).as_array()
        m = system_matrix(p, d)
        f = np.array([-1j * p.omega_p_rabi, 0, 0])
        r = m @ x + f
        assert np.max(np.abs(r)) < 1e-12 * np.max(np.abs(m @ np.abs(x)))


@pytest.mark.parametrize("bt", [0.0, 1e-7, -4e-6])
def test_j_zero_reduces_to_eit_closed_form(bt):
    p = reference_params(j_exchange=0.0, b_tilde=bt)
    d = np.linspace(-2e-4, 2e-4, 301)
    np.testing.assert_allclose(susceptibility(p, d), eit_susceptibility(p, d), rtol=1e-12)


def test_susceptibility_independent_of_probe_amplitude():
    d = np.array([0.0, 1e-7, 5.0])
    a = susceptibility(reference_params(omega_p_rabi=1.0), d)
    b = susceptibility(reference_params(omega_p_rabi=1e-3 + 2e-3j), d)
    np.testing.assert_allclose(a, b, rtol=1e-13)


def test_zero_probe_still_defines_susceptibility():
    assert susceptibility(reference_params(omega_p_rabi=0.0), 0.0) == pytest.approx(CHI_REF_AT_ZERO, rel=1e-13)


def test_no_control_gives_bare_lorentzian():
    p = reference_params(omega_c_rabi=0.0)
    d = np.array([-700.0, 0.0, 250.0])
    expected = -1j / (p.gamma_e / 2 + 1j * d)
    np.testing.assert_allclose(susceptibility(p, d), expected, rtol=1e-14)


def test_control_phase_does_not_change_chi():
    d = np.linspace(-1e-5, 1e-5, 11)
    a = susceptibility(reference_params(omega_c_rabi=0.1), d)
    b = susceptibility(reference_params(omega_c_rabi=0.1j), d)
    np.testing.assert_allclose(a, b, rtol=1e-13)


def test_detunings():
    det = make_detunings(reference_params(b_tilde=2e-8), 1e-7)
    assert det.delta_s == pytest.approx(1e-7 + 2e-6)
    assert det.delta_k == pytest.approx(1e-7 + 2e-8)


def test_invalid_parameters_lists_every_problem():
    with pytest.raises(InvalidParameters) as info:
        SystemParams(gamma_e=-1.0, gamma_k=-1e-10, gyro_s=0.5, eta=float("nan"))
    text = str(info.value)
    for word in ("gamma_e", "gamma_k", "gyro_s", "eta"):
        assert word in text
    assert len(info.value.problems) >= 4


def test_degenerate_system_raises():
    p = reference_params(gamma_k=0.0, b_tilde=1e-6)
    with pytest.raises(DegenerateSystem):
        steady_state(p, -p.zeeman_k)
    with pytest.raises(DegenerateSystem):
        steady_state_linear_solve(p, -p.zeeman_k)


def test_weak_excitation_warning():
    with pytest.warns(WeakExcitationWarning):
        SystemParams(gamma_e=1.0, omega_c_rabi=2.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        reference_params()


def test_array_shapes_broadcast():
    d = np.zeros((4, 5))
    st_ = steady_state(reference_params(), d)
    assert st_.x_dp.shape == (4, 5)
    assert steady_state_linear_solve(reference_params(), d).x_nk.shape == (4, 5)


@settings(max_examples=60, deadline=None)
@given(
    log_j=st.floats(-9, -5),
    log_om=st.floats(-2, 0),
    zk=st.floats(-3e-6, 3e-6),
    delta=st.floats(-1e3, 1e3),
)
def test_passive_medium_absorbs(log_j, log_om, zk, delta):
    p = reference_params(j_exchange=10**log_j, omega_c_rabi=10**log_om).with_zeeman_k(zk)
    assert -np.imag(susceptibility(p, delta)) >= 0


@settings(max_examples=40, deadline=None)
@given(delta=st.floats(-10, 10), log_j=st.floats(-8, -5))
def test_nested_and_linear_agree_property(delta, log_j):
    p = reference_params(j_exchange=10**log_j, b_tilde=1e-8)
    a = susceptibility(p, delta)
    b = susceptibility_linear_solve(p, delta)
    assert abs(a - b) <= 1e-10 * abs(b)
