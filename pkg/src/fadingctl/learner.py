"""Online stochastic-approximation learning of the value kernel.

Each slot uses the current draw ``(H_k, delta_k)`` twice: once for the
control action computed from ``P_k`` and once for the single-draw estimate
``f_hat(P_k)`` in the update ``P_{k+1} = P_k + alpha_k f_hat(P_k)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .model import ChannelConfig, ChannelDraw, CostWeights, ExtendedState, PlantModel, sample_set
from .nme import DIVERGENCE_NORM, NMEOperator
from .numerics import spectral_norm, symmetrize

STATE_DIVERGENCE = 1e12


class LearnerDiverged(RuntimeError):
    def __init__(self, slot: int):
        super().__init__(f"learner diverged at slot {slot}")
        self.slot = slot


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes ``alpha_k = a0 / (1 + k/tau)^gamma_exp``."""

    a0: float = 0.5
    tau: float = 100.0
    gamma_exp: float = 0.7

    def __post_init__(self):
        if self.a0 <= 0 or self.tau <= 0:
            raise ValueError("a0 and tau must be positive")
        if not 0.5 < self.gamma_exp <= 1.0:
            raise ValueError("gamma_exp must lie in (0.5, 1]")

    def alpha(self, k: int) -> float:
        return self.a0 / (1.0 + k / self.tau) ** self.gamma_exp


@dataclass
class NoiseLog:
    """Samples of ``N_k = f_hat(P_k) - f(P_k)`` with ``f`` taken on a reference set."""

    reference: NMEOperator
    reference_delta: np.ndarray
    noise: list = field(default_factory=list)
    ref_var: list = field(default_factory=list)   # variance of the reference mean, per coordinate
    p_norm: list = field(default_factory=list)

    def record(self, P: np.ndarray, f_hat: np.ndarray) -> None:
        per_draw = self.reference.per_draw_residual(P, self.reference_delta)
        iu = np.triu_indices(P.shape[0])
        self.noise.append((f_hat - per_draw.mean(axis=0))[iu])
        self.ref_var.append(per_draw[:, iu[0], iu[1]].var(axis=0, ddof=1) / len(per_draw))
        self.p_norm.append(spectral_norm(P))

    @classmethod
    def build(cls, model, weights, cfg, reference_count: int, seed) -> "NoiseLog":
        samples = sample_set(cfg, reference_count, seed)
        return cls(NMEOperator(model, weights, samples), samples.delta)


@dataclass(frozen=True, eq=False)
class LearnerState:
    p_k: np.ndarray
    k: int
    schedule: StepSchedule
    noise_log: NoiseLog | None = None


def f_hat(P: np.ndarray, draw: ChannelDraw, model: PlantModel, weights: CostWeights) -> np.ndarray:
    """Single-draw unbiased estimate of the NME residual."""
    A = model.A
    PA = P @ A
    out = A.T @ PA - P + weights.Q
    if draw.delta:
        H = draw.H
        BH = model.B @ H
        K = BH.T @ PA
        inner = BH.T @ P @ BH + H.T @ weights.M @ H + weights.R
        out = out - K.T @ np.linalg.solve(inner, K)
    return symmetrize(out)


def sa_step(state: LearnerState, draw: ChannelDraw, model: PlantModel, weights: CostWeights) -> LearnerState:
    F = f_hat(state.p_k, draw, model, weights)
    if state.noise_log is not None:
        state.noise_log.record(state.p_k, F)
    P = symmetrize(state.p_k + state.schedule.alpha(state.k) * F)
    if not np.all(np.isfinite(P)) or spectral_norm(P) > DIVERGENCE_NORM:
        raise LearnerDiverged(state.k)
    return replace(state, p_k=P, k=state.k + 1)


def control_action(p, state: ExtendedState, model: PlantModel, weights: CostWeights,
                   literal_eq9: bool = False) -> np.ndarray:
    """Optimal linear feedback for kernel ``p`` at the current channel state.

    With ``delta = 0`` the input never reaches the plant, so the action is
    zero.  ``literal_eq9`` keeps the closed-form gain without the access-bit
    factor in the numerator, i.e. ``-R^{-1} H'B'PA x`` when ``delta = 0``.
    """
    draw = state.draw
    n_t = weights.R.shape[0]
    if not draw.delta and not literal_eq9:
        return np.zeros(n_t)
    P = np.asarray(p, dtype=float)
    BH = model.B @ draw.H
    inner = weights.R + draw.delta * (BH.T @ P @ BH + draw.H.T @ weights.M @ draw.H)
    return -np.linalg.solve(inner, BH.T @ (P @ (model.A @ state.x)))


def value_estimate(p, x) -> float:
    x = np.asarray(x, dtype=float)
    return float(x @ np.asarray(p, dtype=float) @ x)


@dataclass
class TrajectoryLog:
    """Per-slot log of one closed-loop run (slots numbered from 1)."""

    x_norm_sq: np.ndarray
    u_err_sq: np.ndarray
    p_err: np.ndarray
    stage_cost: np.ndarray
    final_p: np.ndarray
    diverged_at: int | None = None   # first slot whose state norm exceeded the threshold

    @property
    def k(self) -> np.ndarray:
        return np.arange(1, self.x_norm_sq.size + 1)

    @property
    def completed(self) -> int:
        """Number of slots actually simulated."""
        return self.x_norm_sq.size if self.diverged_at is None else self.diverged_at


def run_online(model: PlantModel, weights: CostWeights, cfg: ChannelConfig, schedule: StepSchedule,
               horizon: int, seed, apply_to_plant: bool = True, p_ref=None, p0=None,
               literal_eq9: bool = False, noise_free: bool = False, learn: bool = True,
               p_err_slots=None) -> TrajectoryLog:
    """Closed loop of plant, channel and SA learner.

    Per slot: draw ``(H, delta)``, act with the current kernel, step the
    plant, then update the kernel with the same draw.  The arithmetic is
    inlined (one shared solve for the action and the update) but is
    identical to :func:`control_action`, :func:`plant_step` and
    :func:`sa_step`, consuming the stream in the same order.

    ``learn=False`` freezes the kernel at ``p0``, which gives the genie-aided
    controller when ``p0`` is the NME solution.  ``p_err_slots`` (1-based)
    limits where ``||P_k - P_ref||`` is evaluated; by default every slot.
    Slots after divergence (state norm above 1e12) are left as NaN.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    A, B, L = model.A, model.B, model.noise_factor
    Q, R, M = weights.Q, weights.R, weights.M
    S, n_r, n_t, p_acc = model.S, cfg.n_r, cfg.n_t, cfg.p_access
    tr_M = float(np.trace(M))
    P = np.eye(S) if p0 is None else symmetrize(np.asarray(p0, dtype=float))
    P_ref = None if p_ref is None else np.asarray(p_ref, dtype=float)
    err_at = None if p_err_slots is None else set(p_err_slots)
    x = model.x0.copy()
    logs = np.full((4, horizon), np.nan)
    zero_u = np.zeros(n_t)
    diverged_at = None
    warned = False
    for j in range(horizon):
        H = rng.standard_normal((n_r, n_t))
        delta = rng.random() < p_acc
        Ax = A @ x
        if delta:
            BH = B @ H
            HMH_R = H.T @ M @ H + R
            PBH = P @ BH
            K = PBH.T @ A
            G = np.linalg.solve(BH.T @ PBH + HMH_R, K)
            u = -(G @ x)
        else:
            u = zero_u
        if literal_eq9:
            u = control_action(P, ExtendedState(x, ChannelDraw(H, int(delta))), model, weights, True)
        if P_ref is not None:
            if literal_eq9:
                u_star = control_action(P_ref, ExtendedState(x, ChannelDraw(H, int(delta))), model, weights, True)
            elif delta:
                # same operation order as the learner's own action, so a
                # kernel equal to the reference gives exactly zero error
                RBH = P_ref @ BH
                u_star = -(np.linalg.solve(BH.T @ RBH + HMH_R, RBH.T @ A) @ x)
            else:
                u_star = zero_u
            d = u - u_star
            logs[1, j] = d @ d
        cost = x @ Q @ x + u @ R @ u + tr_M
        if delta:
            hu = H @ u
            cost += hu @ M @ hu
        logs[0, j] = x @ x
        logs[3, j] = cost
        if apply_to_plant:
            if not np.all(np.isfinite(u)):
                raise ValueError("control input is not finite")
            x_next = Ax + BH @ u if delta else Ax
            if not noise_free:
                x_next = x_next + B @ rng.standard_normal(n_r) + L @ rng.standard_normal(S)
            x = x_next
        if learn:
            F = A.T @ P @ A - P + Q
            if delta:
                F = F - K.T @ G
            P = P + schedule.alpha(j) * (0.5 * (F + F.T))
            fro = np.sqrt(np.sum(P * P))
            if not np.isfinite(fro) or (fro > DIVERGENCE_NORM and spectral_norm(P) > DIVERGENCE_NORM):
                raise LearnerDiverged(j + 1)
            if not warned and j % 100 == 99 and np.linalg.eigvalsh(P)[0] < -1e-6:
                warnings.warn("learned kernel left the PSD cone", RuntimeWarning)
                warned = True
        if P_ref is not None and (err_at is None or j + 1 in err_at):
            logs[2, j] = spectral_norm(P - P_ref)
        if not np.all(np.isfinite(x)) or x @ x > STATE_DIVERGENCE ** 2:
            diverged_at = j + 1
            break
    return TrajectoryLog(logs[0], logs[1], logs[2], logs[3], P, diverged_at)


def sample_noise(p, model: PlantModel, weights: CostWeights, cfg: ChannelConfig, n: int, seed,
                 reference_count: int = 100_000) -> NoiseLog:
    """Record ``n`` noise samples at a fixed kernel ``p``."""
    ss = np.random.SeedSequence(seed)
    ref_seed, draw_seed = ss.spawn(2)
    log = NoiseLog.build(model, weights, cfg, reference_count, ref_seed)
    P = symmetrize(np.asarray(p, dtype=float))
    draws = sample_set(cfg, n, draw_seed)
    per_draw = NMEOperator(model, weights, draws).per_draw_residual(P, draws.delta)
    ref = log.reference.per_draw_residual(P, log.reference_delta)
    iu = np.triu_indices(model.S)
    mean_ref = ref.mean(axis=0)[iu]
    var_ref = ref[:, iu[0], iu[1]].var(axis=0, ddof=1) / len(ref)
    p_norm = spectral_norm(P)
    for F in per_draw:
        log.noise.append(F[iu] - mean_ref)
        log.ref_var.append(var_ref)
        log.p_norm.append(p_norm)
    return log


@dataclass(frozen=True)
class MartingaleReport:
    mean: np.ndarray
    std_error: np.ndarray
    mean_covers_zero: bool
    second_moment: float
    bound: float
    bound_holds: bool


def martingale_diagnostics(noise_log: NoiseLog, model: PlantModel, z: float = 3.0,
                           slack: float = 1.1) -> MartingaleReport:
    """Check zero mean (per coordinate, within ``z`` standard errors) and the
    second-moment bound ``E||N||^2 <= 2||A||^2 (1 + ||P||^2)`` up to ``slack``.

    Coordinates are the upper-triangular entries of the symmetric noise.
    The standard error combines sampling spread and the reference-set error.
    """
    if not noise_log.noise:
        raise ValueError("noise log is empty")
    N = np.asarray(noise_log.noise)
    n = N.shape[0]
    mean = N.mean(axis=0)
    se = np.sqrt(N.var(axis=0, ddof=1) / n + np.mean(noise_log.ref_var, axis=0))
    covers = bool(np.all(np.abs(mean) <= z * se))
    S = model.S
    full = np.zeros((n, S, S))
    iu = np.triu_indices(S)
    full[:, iu[0], iu[1]] = N
    full = full + np.swapaxes(np.triu(full, 1), 1, 2)
    second = float(np.mean(np.linalg.norm(full, 2, axis=(1, 2)) ** 2))
    a2 = spectral_norm(model.A) ** 2
    bound = float(np.mean(2 * a2 * (1 + np.asarray(noise_log.p_norm) ** 2)))
    return MartingaleReport(mean, se, covers, second, bound, second <= slack * bound)


def _virtual_path(op: NMEOperator, xi: float, n_steps: int, p0) -> np.ndarray:
    path = np.empty((n_steps + 1,) + p0.shape)
    P = p0
    path[0] = P
    for i in range(n_steps):
        P = P + xi * op.residual(P)
        path[i + 1] = P
    return path


def trajectory_gap(xi: float, horizon: float, model: PlantModel, weights: CostWeights, cfg: ChannelConfig,
                   seed, sample_count: int = 20_000, samples=None, p0=None) -> float:
    """Sup-norm gap between the virtual fixed-point paths with steps ``xi`` and ``xi/2``.

    ``horizon`` is the length of the interpolation-time interval; the coarse
    path takes ``round(horizon/xi)`` steps.  The coarse path is linearly
    interpolated at the fine grid points.
    """
    if not 0 < xi < 1:
        raise ValueError("xi must lie in (0, 1)")
    op = NMEOperator(model, weights, samples if samples is not None else sample_set(cfg, sample_count, seed))
    p0 = np.eye(model.S) if p0 is None else np.asarray(p0, dtype=float)
    n = int(round(horizon / xi))
    coarse = _virtual_path(op, xi, n, p0)
    fine = _virtual_path(op, xi / 2, 2 * n, p0)
    interp = np.empty_like(fine)
    interp[0::2] = coarse
    interp[1::2] = 0.5 * (coarse[:-1] + coarse[1:])
    return float(np.max(np.linalg.norm(interp - fine, 2, axis=(1, 2))))
