import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netrack.analysis import build_error_system, replay_errors
from netrack.engine import (EstimateState, SimulationSetup, run_monte_carlo, run_replica,
                            step_estimates)
from netrack.sensing import DimensionError, ObservationModel, anchored_matrices, assemble_system
from netrack.topology import MixingMatrix, build_graph, build_mixing_matrix
from netrack.trajectory import Trajectory, generate_trajectory

HALF = MixingMatrix.from_array([[0.5, 0.5], [0.5, 0.5]])


def system(Hs, sigmas=None, **kw):
    sigmas = sigmas or [0.0] * len(Hs)
    return assemble_system([ObservationModel(i, H, s) for i, (H, s) in enumerate(zip(Hs, sigmas))],
                           **kw)


def test_step_fixed_point():
    P = build_mixing_matrix(build_graph("ring", 3))
    s = system([[[1.0, 0.0]], [[0.0, 1.0]], [[1.0, 1.0]]])
    theta = np.array([2.0, -3.0])
    prev = EstimateState(4, np.tile(theta, (3, 1)))
    obs = [mdl.H @ theta for mdl in s.models]
    nxt = step_estimates(P, s, 0.3, prev, obs)
    assert nxt.t == 5
    np.testing.assert_allclose(nxt.estimates, prev.estimates, atol=1e-15)


def test_step_scalar():
    s = system([[[1.0]]])
    nxt = step_estimates(MixingMatrix.from_array([[1.0]]), s, 0.5,
                         EstimateState(1, np.zeros((1, 1))), [np.array([1.0])])
    assert nxt.estimates[0, 0] == 0.5


def test_step_two_agents_by_hand():
    s = system([[[1.0]], [[0.0]]], require_identifiable=False)
    nxt = step_estimates(HALF, s, 0.1, EstimateState(1, np.array([[1.0], [3.0]])),
                         [np.array([2.0]), np.array([0.0])])
    np.testing.assert_allclose(nxt.estimates[:, 0], [2.1, 2.0], atol=1e-15)


def test_step_dimension_error():
    s = system([[[1.0]], [[1.0]]])
    with pytest.raises(DimensionError):
        step_estimates(HALF, s, 0.1, EstimateState(1, np.zeros((2, 1))), [np.zeros(2)] * 2)


def random_setup(seed, noisy=True, init=None):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(1, 7)), int(rng.integers(1, 4))
    P = build_mixing_matrix(build_graph(["ring", "complete", "star", "path"][seed % 4], n))
    Hs = [rng.standard_normal((int(rng.integers(1, 3)), d)) for _ in range(n)]
    sig = list(rng.uniform(0.1, 1.0, n)) if noisy else None
    s = system(Hs, sig, require_identifiable=False)
    limit = (1 + P.lambda_n) / np.max(s.H_norm_sq)
    alpha = float(rng.uniform(0.1, 0.9) * limit)
    return SimulationSetup(P, s, alpha, init or {"kind": "gaussian", "std": 1.0})


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.booleans())
def test_vectorized_engine_matches_literal_update(seed, noisy):
    setup = random_setup(seed, noisy)
    d = setup.system.d
    traj = generate_trajectory({"kind": "random_walk", "step_std": 0.3}, d, 30, seed=seed)
    tr = run_replica(setup, traj, seed, 0, retain_noise=True, keep_estimates=True)
    state = EstimateState(1, tr.estimates[0])
    for t in range(2, traj.T + 1):
        w = tr.noise[t - 2]
        obs = [mdl.H @ traj.points[t - 2] + w[i, :mdl.m]
               for i, mdl in enumerate(setup.system.models)]
        state = step_estimates(setup.P, setup.system, setup.alpha, state, obs)
        np.testing.assert_allclose(state.estimates, tr.estimates[t - 1], rtol=1e-12, atol=1e-12)


def test_errors_are_estimates_minus_target_bitwise():
    setup = random_setup(3)
    traj = generate_trajectory({"kind": "sinusoid", "amplitude": 2.0, "period": 13},
                               setup.system.d, 40)
    tr = run_replica(setup, traj, 1, 0, keep_estimates=True)
    n, d = setup.system.n, setup.system.d
    stacked = tr.estimates - traj.points[:, None, :]
    np.testing.assert_array_equal(tr.errors, stacked.reshape(traj.T, n * d))
    assert np.all(tr.regret >= 0)


def test_lemma1_recursion_reproduces_trace():
    setup = random_setup(7)
    traj = generate_trajectory({"kind": "random_walk", "step_std": 0.5}, setup.system.d, 200,
                               seed=2)
    tr = run_replica(setup, traj, 5, 3, retain_noise=True)
    es = build_error_system(setup.P, setup.system, setup.alpha)
    ref = replay_errors(es, tr.errors[0], traj, tr.noise, setup.system)
    scale = np.max(np.linalg.norm(tr.errors, axis=1))
    assert np.max(np.linalg.norm(ref - tr.errors, axis=1)) / scale <= 1e-9


def test_noiseless_static_geometric_decay():
    P = build_mixing_matrix(build_graph("ring", 5))
    s = system(anchored_matrices(5, 3, 2, np.random.default_rng(1)))
    from netrack.analysis import alpha_max
    a = alpha_max(P, s)
    setup = SimulationSetup(P, s, a, {"kind": "zero"})
    traj = generate_trajectory({"kind": "static", "theta": [1.0, 2.0, -1.0]}, 3, 150)
    tr = run_replica(setup, traj, 0, 0)
    q = build_error_system(P, s, a).q_norm
    norms = np.linalg.norm(tr.errors, axis=1)
    t = np.arange(traj.T)
    assert np.all(norms <= (q + 1e-12) ** t * norms[0] + 1e-300)


def test_exact_start_noiseless_zero_regret():
    P = build_mixing_matrix(build_graph("complete", 4))
    s = system([np.eye(2)] * 4)
    setup = SimulationSetup(P, s, 0.2, {"kind": "exact"})
    traj = generate_trajectory({"kind": "static", "theta": [3.0, 1.0]}, 2, 50)
    tr = run_replica(setup, traj, 0, 0)
    assert np.all(tr.regret == 0)
    mc = run_monte_carlo(setup, traj, 5, 0)
    assert mc.reg_mean == 0.0 and mc.reg_stderr == 0.0


def test_pure_consensus_reaches_average():
    P = build_mixing_matrix(build_graph("ring", 8))
    s = system([np.eye(2)] * 8, [1.0] * 8)
    setup = SimulationSetup(P, s, 0.0, {"kind": "gaussian", "std": 3.0})
    rate = max(abs(P.lambda_2), abs(P.lambda_n))
    T = int(np.ceil(np.log(1e-10) / np.log(rate))) + 20
    traj = generate_trajectory({"kind": "static"}, 2, T)
    tr = run_replica(setup, traj, 4, 0, keep_estimates=True)
    avg = tr.estimates[0].mean(axis=0)
    assert np.max(np.abs(tr.estimates[-1] - avg)) <= 1e-8


def test_divergence_truncates():
    s = system([[[1.0]], [[1.0]]], [0.1, 0.1])
    setup = SimulationSetup(HALF, s, 2.5, {"kind": "gaussian"})
    traj = generate_trajectory({"kind": "random_walk"}, 1, 500, seed=0)
    tr = run_replica(setup, traj, 0, 0)
    assert tr.diverged and tr.rounds == tr.diverged_at - 1 < 500
    assert np.all(np.isfinite(tr.errors))
    mc = run_monte_carlo(setup, traj, 3, 0)
    assert mc.unstable and mc.diverged == [0, 1, 2] and mc.excluded == []
    with pytest.raises(RuntimeError):
        run_monte_carlo(setup, traj, 3, 0, exclude_diverged=True)


def test_monte_carlo_single_replica_and_determinism():
    setup = random_setup(11, init={"kind": "zero"})
    traj = generate_trajectory({"kind": "linear_drift", "velocity": 0.05}, setup.system.d, 60)
    tr = run_replica(setup, traj, 9, 0)
    mc = run_monte_carlo(setup, traj, 1, 9)
    assert mc.reg_mean == tr.reg_T and mc.reg_stderr == 0.0
    np.testing.assert_array_equal(mc.r_mean, tr.regret)

    a = run_monte_carlo(setup, traj, 12, 9, threads=1)
    b = run_monte_carlo(setup, traj, 12, 9, threads=4)
    np.testing.assert_array_equal(a.reg_T, b.reg_T)
    np.testing.assert_array_equal(a.r_stderr, b.r_stderr)
    # replica 5 in isolation is the same as replica 5 inside the batch
    assert run_replica(setup, traj, 9, 5).reg_T == a.reg_T[5]


def test_regret_below_lemma2_per_realization():
    setup = random_setup(21)
    traj = generate_trajectory({"kind": "random_walk", "step_std": 0.2}, setup.system.d, 80,
                               seed=1)
    tr = run_replica(setup, traj, 0, 0)
    S = setup.system.sum_HnormSq
    assert np.all(tr.regret <= S * tr.err_sq / setup.system.n * (1 + 1e-12) + 1e-15)


def test_trajectory_dimension_mismatch():
    setup = random_setup(2)
    with pytest.raises(DimensionError):
        run_replica(setup, Trajectory(np.zeros((5, setup.system.d + 1))), 0, 0)
