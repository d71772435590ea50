import numpy as np
import pytest

from hop.system_sim import (LtiSystem, marginally_stable_system, noise_stream,
                            noiseless_trajectory, output_variance, scalar_system, simulate,
                            write_trajectory_csv)


def test_system_validation():
    with pytest.raises(ValueError, match="Q"):
        LtiSystem(A=[[0.5]], B=[[1.0]], C=[[1.0]], Q=[[-1.0]], R=[[1.0]])
    with pytest.raises(ValueError, match="R"):
        LtiSystem(A=[[0.5]], B=[[1.0]], C=[[1.0]], Q=[[1.0]], R=[[0.0]])
    with pytest.raises(ValueError, match="marginally stable"):
        LtiSystem(A=[[1.1]], B=[[1.0]], C=[[1.0]], Q=[[1.0]], R=[[1.0]])
    with pytest.raises(ValueError, match="B"):
        LtiSystem(A=np.eye(2), B=[[1.0]], C=[[1.0, 0.0]], Q=np.eye(2), R=[[1.0]])


def test_dims():
    s = marginally_stable_system()
    assert (s.dims.n, s.dims.m, s.dims.n_u) == (3, 1, 1)


def test_noiseless_zero_orbit():
    traj = noiseless_trajectory(marginally_stable_system(), 50, H=3)
    assert np.all(traj.outputs == 0)


def test_marginal_constant():
    traj = noiseless_trajectory(scalar_system(a=1.0, b=0.0), 20, x0=[1.0])
    assert np.all(traj.outputs == 1.0)


def test_lengths_and_input_lead():
    for H in (1, 2, 5):
        traj = simulate(marginally_stable_system(), 100, H=H, seed=1)
        assert traj.states.shape == (101, 3)
        assert traj.outputs.shape == (101, 1)
        assert traj.inputs.shape[0] - traj.outputs.shape[0] == H - 1


def test_recursion_holds():
    s = marginally_stable_system()
    traj = simulate(s, 30, H=2, seed=4)
    w = traj.states[1:] - traj.states[:-1] @ s.A.T - traj.inputs[:30] @ s.B.T
    ss_w, ss_v, ss_u = np.random.SeedSequence(4).spawn(3)
    expected_w = noise_stream(ss_w, 3, 30) @ np.linalg.cholesky(s.Q).T
    assert np.allclose(w, expected_w, atol=1e-12)
    v = traj.outputs - traj.states @ s.C.T
    assert np.allclose(v, noise_stream(ss_v, 1, 31) * 0.1, atol=1e-15)
    assert np.array_equal(traj.inputs, noise_stream(ss_u, 1, 32))


def test_determinism():
    s = marginally_stable_system()
    a = simulate(s, 500, H=3, seed=11)
    b = simulate(s, 500, H=3, seed=11)
    assert a.checksum() == b.checksum()
    assert np.array_equal(a.outputs, b.outputs)
    assert a.checksum() != simulate(s, 500, H=3, seed=12).checksum()


def test_horizon_does_not_shift_noise():
    s = marginally_stable_system()
    a = simulate(s, 300, H=2, seed=5)
    b = simulate(s, 300, H=7, seed=5)
    assert np.array_equal(a.outputs, b.outputs)
    assert np.array_equal(a.inputs, b.inputs[:a.inputs.shape[0]])


class TestNoiseStream:
    def test_empty(self):
        assert noise_stream(0, 3, 0).shape == (0, 3)

    def test_mean_clt(self):
        n = 100_000
        draws = noise_stream(123, 3, n)
        assert np.all(np.abs(draws.mean(axis=0)) <= 3 / np.sqrt(n))

    def test_seed_sensitivity(self):
        assert not np.array_equal(noise_stream(1, 2, 10), noise_stream(2, 2, 10))

    def test_prefix_stable(self):
        assert np.array_equal(noise_stream(9, 2, 10), noise_stream(9, 2, 50)[:10])

    def test_negative_count(self):
        with pytest.raises(ValueError):
            noise_stream(0, 1, -1)


def test_noise_shaping_moments():
    # with A = B = 0 the next state is exactly the process noise
    Q = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.3], [0.0, 0.3, 0.5]])
    R = np.array([[0.4, 0.1], [0.1, 0.2]])
    C = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    s = LtiSystem(A=np.zeros((3, 3)), B=np.zeros((3, 1)), C=C, Q=Q, R=R)
    traj = simulate(s, 100_000, seed=3)
    w = traj.states[1:]
    v = traj.outputs - traj.states @ C.T
    for sample, cov in ((w, Q), (v, R)):
        emp = sample.T @ sample / sample.shape[0]
        assert np.linalg.norm(emp - cov) / np.linalg.norm(cov) < 0.05


def test_output_variance_grows_like_closed_form():
    s = marginally_stable_system()
    K = 40
    finals = np.array([simulate(s, K, seed=seed).outputs[[10, 25, 40], 0] for seed in range(3000)])
    emp = finals.var(axis=0)
    theo = np.array([output_variance(s, k)[0, 0] for k in (10, 25, 40)])
    assert np.all(np.abs(emp / theo - 1) < 0.1)
    assert theo[2] > theo[1] > theo[0]


def test_explosive_state_detected():
    # bypass the stability check to exercise the guard
    s = scalar_system(a=1.0, b=0.0)
    object.__setattr__(s, "A", np.array([[1e200]]))
    with pytest.raises(FloatingPointError):
        with np.errstate(over="ignore", invalid="ignore"):
            simulate(s, 10, seed=0, x0=[1e200])


def test_csv_export(tmp_path):
    traj = simulate(marginally_stable_system(), 5, H=3, seed=0)
    path = tmp_path / "traj.csv"
    write_trajectory_csv(traj, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "k,u0,y0"
    assert len(lines) == 1 + traj.inputs.shape[0]
    assert lines[-1].endswith(",")
