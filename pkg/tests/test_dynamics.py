import numpy as np
import pytest

from nsit.core import SystemParams, reference_params, steady_state
from nsit.dynamics import (
    PolarizationState,
    Trajectory,
    TrajectoryConfig,
    effective_params,
    integrate_to_steady_state,
    relax,
    system_eigenvalues,
    write_trajectory_csv,
)
from nsit.decomposition import nsit_width
from nsit.errors import InvalidParameters, NoConvergence, StiffnessFailure

# moderate rate spread so the explicit pair is usable
TOY = SystemParams(gamma_e=2.0, gamma_s=0.2, gamma_k=0.05, omega_c_rabi=0.5, j_exchange=0.1, b_tilde=0.01)


def rel_err(a, b):
    return np.max(np.abs(a.as_array() - b.as_array()) / np.abs(b.as_array()))


@pytest.mark.parametrize("method", ["rk45", "expm", "auto"])
def test_toy_system_all_methods(method):
    cfg = TrajectoryConfig(method=method)
    got = relax(TOY, 0.3, cfg)
    assert rel_err(got, steady_state(TOY, 0.3)) < 1e-7
    assert got.t_settle > 0


def test_auto_uses_exponential_for_stiff_set():
    traj = Trajectory()
    p = reference_params()
    got = relax(p, 0.0, TrajectoryConfig(), traj)
    assert traj.method == "expm"
    assert rel_err(got, steady_state(p, 0.0)) < 1e-6


def test_auto_picks_rk45_when_cheap():
    traj = Trajectory()
    relax(TOY, 0.0, TrajectoryConfig(), traj)
    assert traj.method == "rk45"


def test_forced_rk45_on_stiff_set_fails():
    with pytest.raises(StiffnessFailure):
        relax(reference_params(), 0.0, TrajectoryConfig(method="rk45", max_steps=2000))


def test_no_convergence_before_t_max():
    with pytest.raises(NoConvergence):
        relax(reference_params(), 0.0, TrajectoryConfig(t_max=1.0))


@pytest.mark.parametrize("zk", [0.0, 1e-6])
def test_eigenvalues_are_damped(zk):
    p = reference_params().with_zeeman_k(zk)
    for d in (0.0, -1e-6, 1e-4, 300.0):
        assert np.all(system_eigenvalues(p, d).real < 0)


def test_settling_time_set_by_slow_mode():
    p = reference_params()
    got = relax(p, 0.0)
    slow = 1.0 / nsit_width(p)
    assert slow < got.t_settle < 200 * slow


def test_zero_drive_is_fixed_point():
    p = reference_params(omega_p_rabi=0.0)
    got = relax(p, 0.0)
    assert got.as_array().tolist() == [0j, 0j, 0j]


def test_polarization_scaling():
    p = reference_params()
    assert effective_params(p, PolarizationState()) is p
    q = effective_params(p, PolarizationState(p_a=0.64, p_b=1.0))
    assert q.j_exchange == pytest.approx(0.8e-6)
    assert q.source_scale == 0.64
    r = effective_params(p, PolarizationState(p_a=1.0, p_b=1.0, j_full=2e-6))
    assert r.j_exchange == 2e-6


def test_polarization_validation():
    with pytest.raises(InvalidParameters):
        PolarizationState(p_a=1.2)
    with pytest.raises(InvalidParameters):
        PolarizationState(p_b=-0.1, j_full=-1.0)


def test_integrate_applies_polarization():
    p = reference_params(b_tilde=1e-6)
    pol = PolarizationState(p_a=0.9, p_b=0.85)
    got = integrate_to_steady_state(p, pol, TrajectoryConfig(), -9.9e-7)
    ref = steady_state(effective_params(p, pol), -9.9e-7)
    assert rel_err(got, ref) < 1e-6


def test_trajectory_csv(tmp_path):
    traj = Trajectory()
    relax(TOY, 0.0, TrajectoryConfig(method="expm"), traj)
    path = write_trajectory_csv(tmp_path / "t.csv", traj)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,x_dp_re,x_dp_im,x_ds_re,x_ds_im,x_nk_re,x_nk_im"
    assert len(lines) == len(traj.times) + 1
    assert lines[1].split(",")[0] == "0"


def test_config_validation():
    with pytest.raises(InvalidParameters):
        TrajectoryConfig(method="euler")
    with pytest.raises(InvalidParameters):
        TrajectoryConfig(tol_rel=1.0, steady_eps=0.0)
