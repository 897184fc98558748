import numpy as np
import pytest
from scipy.optimize import minimize

from fadingctl.learner import (LearnerDiverged, LearnerState, StepSchedule, control_action, f_hat,
                               martingale_diagnostics, run_online, sa_step, sample_noise, trajectory_gap,
                               value_estimate)
from fadingctl.model import (ChannelConfig, ChannelDraw, ChannelSamples, CostWeights, ExtendedState, PlantModel,
                             plant_step, sample_channel, sample_set, stage_cost)
from fadingctl.nme import NMEOperator

from conftest import random_pd, random_psd


def _st(x, H, d):
    return ExtendedState(np.asarray(x, float), ChannelDraw(np.asarray(H, float), d))


def test_schedule():
    s = StepSchedule(0.5, 100, 0.7)
    assert s.alpha(0) == 0.5 and s.alpha(100) == pytest.approx(0.5 / 2 ** 0.7)
    for bad in ((0, 1, 0.7), (1, 1, 0.5), (1, 1, 1.1), (1, -1, 0.7)):
        with pytest.raises(ValueError):
            StepSchedule(*bad)


def test_f_hat_without_access_is_lyapunov_map(fig3, rng):
    P = random_psd(rng, 3)
    A = fig3.plant.A
    got = f_hat(P, ChannelDraw(rng.standard_normal((2, 3)), 0), fig3.plant, fig3.weights)
    assert np.allclose(got, A.T @ P @ A - P + np.eye(3), atol=1e-12)


def test_zero_step_leaves_state(fig3, rng):
    st = LearnerState(np.eye(3), 0, StepSchedule(a0=1e-300, tau=1.0, gamma_exp=1.0))
    out = sa_step(st, sample_channel(rng, fig3.channel), fig3.plant, fig3.weights)
    assert np.allclose(out.p_k, st.p_k, rtol=0, atol=1e-290) and out.k == 1


def test_sa_step_divergence_guard(fig3, rng):
    st = LearnerState(1e12 * np.eye(3), 0, StepSchedule(a0=0.9))
    with pytest.raises(LearnerDiverged):
        sa_step(st, ChannelDraw(rng.standard_normal((2, 3)), 0), fig3.plant, fig3.weights)


def test_control_action_examples(fig3, rng):
    H = rng.standard_normal((2, 3))
    assert np.all(control_action(np.eye(3), _st(np.zeros(3), H, 1), fig3.plant, fig3.weights) == 0)
    assert np.all(control_action(np.zeros((3, 3)), _st(rng.standard_normal(3), H, 1), fig3.plant,
                                 fig3.weights) == 0)
    assert np.all(control_action(np.eye(3), _st(np.ones(3), H, 0), fig3.plant, fig3.weights) == 0)
    literal = control_action(np.eye(3), _st(np.ones(3), H, 0), fig3.plant, fig3.weights, literal_eq9=True)
    assert np.allclose(literal, -(fig3.plant.B @ H).T @ fig3.plant.A @ np.ones(3))


def test_scalar_control_is_certainty_equivalent_lqr():
    a, b, q, r, m = 1.3, 0.8, 1.0, 0.5, 0.7
    model, w = PlantModel([[a]], [[b]], [[0.1]]), CostWeights([[q]], [[r]], [[m]])
    p = 2.7
    u = control_action([[p]], _st([1.5], [[1.0]], 1), model, w)
    assert u[0] == pytest.approx(-(b * p * a * 1.5) / (b * b * p + m + r), rel=1e-14)


def test_control_action_is_argmin_of_bellman_quadratic(rng):
    """Numerical minimization of the one-step Bellman objective over u."""
    for _ in range(20):
        S, n_r, n_t = (int(v) for v in rng.integers(1, 4, size=3))
        A, B = rng.standard_normal((S, S)), rng.standard_normal((S, n_r))
        model = PlantModel(A, B, 0.1 * np.eye(S))
        w = CostWeights(random_pd(rng, S), random_pd(rng, n_t), random_pd(rng, n_r))
        P = random_psd(rng, S)
        x, H = rng.standard_normal(S), rng.standard_normal((n_r, n_t))

        def phi(u):
            nxt = A @ x + B @ H @ u
            return u @ w.R @ u + (H @ u) @ w.M @ (H @ u) + nxt @ P @ nxt

        def grad(u):
            nxt = A @ x + B @ H @ u
            return 2 * (w.R @ u + H.T @ w.M @ H @ u + (B @ H).T @ P @ nxt)

        res = minimize(phi, np.zeros(n_t), jac=grad, method="BFGS", options={"gtol": 1e-13, "maxiter": 1000})
        u = control_action(P, _st(x, H, 1), model, w)
        assert np.linalg.norm(u - res.x) <= 1e-8 * max(1.0, np.linalg.norm(u))


def test_value_estimate(rng):
    x = rng.standard_normal(4)
    assert value_estimate(np.eye(4), np.zeros(4)) == 0
    assert value_estimate(np.eye(4), x) == pytest.approx(x @ x)
    P = random_psd(rng, 4)
    lam, Q = np.linalg.eigh(P)
    assert abs(value_estimate(P, x) - np.sum(lam * (Q.T @ x) ** 2)) <= 1e-12 * max(1, abs(value_estimate(P, x)))


def test_unbiased_single_draw_estimate(fig3, rng):
    ref = sample_set(fig3.channel, 100_000, seed=77)
    op = NMEOperator(fig3.plant, fig3.weights, ref)
    fresh = sample_set(fig3.channel, 100_000, seed=78)
    op_fresh = NMEOperator(fig3.plant, fig3.weights, fresh)
    for _ in range(20):
        P = random_psd(rng, 3)
        per = op_fresh.per_draw_residual(P, fresh.delta)
        se_fresh = per.std(axis=0, ddof=1) / np.sqrt(len(fresh))
        per_ref = op.per_draw_residual(P, ref.delta)
        se_ref = per_ref.std(axis=0, ddof=1) / np.sqrt(len(ref))
        gap = np.abs(per.mean(axis=0) - per_ref.mean(axis=0))
        assert np.all(gap <= 3 * np.hypot(se_fresh, se_ref) + 1e-12)


def test_single_slot_matches_public_functions(fig3):
    """One slot of the fused loop equals control_action, plant_step and sa_step in sequence."""
    for seed in range(5):
        log = run_online(fig3.plant, fig3.weights, fig3.channel, fig3.schedule, 1, seed, p_ref=np.eye(3) * 2)
        rng = np.random.default_rng(seed)
        draw = sample_channel(rng, fig3.channel)
        state = ExtendedState(fig3.plant.x0, draw)
        u = control_action(np.eye(3), state, fig3.plant, fig3.weights)
        nxt = sa_step(LearnerState(np.eye(3), 0, fig3.schedule), draw, fig3.plant, fig3.weights)
        assert np.allclose(log.final_p, nxt.p_k, rtol=1e-13, atol=1e-14)
        assert log.stage_cost[0] == pytest.approx(stage_cost(state, u, fig3.weights), rel=1e-13)
        u_ref = control_action(2 * np.eye(3), state, fig3.plant, fig3.weights)
        assert log.u_err_sq[0] == pytest.approx(np.sum((u - u_ref) ** 2), rel=1e-9, abs=1e-24)
        x1 = plant_step(fig3.plant, state, u, rng)
        two = run_online(fig3.plant, fig3.weights, fig3.channel, fig3.schedule, 2, seed)
        assert two.x_norm_sq[1] == pytest.approx(x1 @ x1, rel=1e-12)


def test_multi_slot_loop_matches_public_functions(fig3):
    horizon = 30
    log = run_online(fig3.plant, fig3.weights, fig3.channel, fig3.schedule, horizon, 5)
    rng = np.random.default_rng(5)
    st = LearnerState(np.eye(3), 0, fig3.schedule)
    x = fig3.plant.x0
    for j in range(horizon):
        d = sample_channel(rng, fig3.channel)
        assert log.x_norm_sq[j] == pytest.approx(x @ x, rel=1e-10)
        u = control_action(st.p_k, ExtendedState(x, d), fig3.plant, fig3.weights)
        x = plant_step(fig3.plant, ExtendedState(x, d), u, rng)
        st = sa_step(st, d, fig3.plant, fig3.weights)
    assert np.allclose(log.final_p, st.p_k, rtol=1e-10)


def test_learned_kernel_stays_symmetric(fig3):
    log = run_online(fig3.plant, fig3.weights, fig3.channel, fig3.schedule, 500, 1)
    assert np.array_equal(log.final_p, log.final_p.T)


def test_frozen_kernel_without_plant(fig3, fig3_pstar):
    log = run_online(fig3.plant, fig3.weights, fig3.channel, fig3.schedule, 50, 3, apply_to_plant=False,
                     p0=fig3_pstar, p_ref=fig3_pstar, learn=False)
    assert np.allclose(log.x_norm_sq, 3.0)
    assert np.all(log.u_err_sq == 0) and np.all(log.p_err == 0)
    with pytest.raises(ValueError):
        run_online(fig3.plant, fig3.weights, fig3.channel, fig3.schedule, 0, 3)


def test_martingale_static_channel_has_no_noise():
    from fadingctl.learner import NoiseLog
    model = PlantModel([[1.1, 0.2], [0.0, 0.9]], np.eye(2), 0.1 * np.eye(2))
    w = CostWeights(np.eye(2), np.eye(2), np.eye(2))
    static = ChannelSamples.static(10, 2)
    log = NoiseLog(NMEOperator(model, w, static), static.delta)
    P = np.eye(2)
    for d in static:
        log.record(P, f_hat(P, d, model, w))
        P = P + 0.1 * f_hat(P, d, model, w)
    assert np.allclose(log.noise, 0, atol=1e-12)
    rep = martingale_diagnostics(log, model)
    assert np.allclose(rep.mean, 0, atol=1e-12) and rep.bound_holds


def test_martingale_diagnostics_on_fig3(fig3):
    log = sample_noise(np.eye(3), fig3.plant, fig3.weights, fig3.channel, 10_000, seed=5)
    rep = martingale_diagnostics(log, fig3.plant)
    assert rep.mean_covers_zero and rep.bound_holds


def test_trajectory_gap_scaling(rng):
    model = PlantModel([[0.9, 0.3], [0.0, 1.1]], np.eye(2), 0.1 * np.eye(2))
    w = CostWeights(np.eye(2), np.eye(2), np.eye(2))
    static = ChannelSamples.static(2, 2)
    g1 = trajectory_gap(0.1, 5.0, model, w, ChannelConfig(2, 2, 1.0), 0, samples=static)
    g2 = trajectory_gap(0.05, 5.0, model, w, ChannelConfig(2, 2, 1.0), 0, samples=static)
    assert 1.8 < g1 / g2 < 2.2
    with pytest.raises(ValueError):
        trajectory_gap(1.0, 5.0, model, w, ChannelConfig(2, 2, 1.0), 0, samples=static)
