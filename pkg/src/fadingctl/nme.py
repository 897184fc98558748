"""Offline solvers for the nonlinear matrix equation (NME) of the value kernel.

With ``delta, H`` random the kernel ``P`` of the value function x'Px solves

    P = E[ A'PA - delta A'PBH (delta H'B'PBH + delta H'MH + R)^{-1} H'B'PA ] + Q.

``f(P)`` denotes right side minus ``P`` and ``g(P) = f(P) + P``.  All
expectations here are averages over a frozen sample set (common random
numbers), which makes every solver output deterministic.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .cone import EffectiveInput, batch_decomp_basis, batch_effective_input
from .model import ChannelConfig, CostWeights, PlantModel, as_samples, sample_set
from .numerics import DEFAULT_TOL, ToleranceProfile, spectral_norm, symmetrize

DIVERGENCE_NORM = 1e12
MAX_ITER = 100_000


class Trilean(str, Enum):
    YES = "yes"
    NO = "no"
    INCONCLUSIVE = "inconclusive"


@dataclass
class SolveReport:
    p_star: np.ndarray
    iterations: int
    residual_norm: float
    converged: bool
    bracket_gap: float | None = None
    diagnosis: str = ""
    monotonicity: float | None = None   # worst PSD-order violation seen along a monotone sequence
    history: np.ndarray = field(default=None, repr=False)


@dataclass(frozen=True)
class ExistenceCertificate:
    estimate: float
    ci_halfwidth: float
    n_samples: int
    satisfied: Trilean


class NMEOperator:
    """The map ``P -> f(P)`` averaged over a fixed stack of channel draws.

    Draw-dependent pieces (``BH`` and ``H'MH + R``) are computed once; only
    draws with ``delta = 1`` carry the control term.
    """

    def __init__(self, model: PlantModel, weights: CostWeights, samples):
        samples = as_samples(samples)
        self.model, self.weights = model, weights
        self.n = len(samples)
        active = samples.delta.astype(bool)
        H = samples.H[active]
        self.BH = model.B @ H
        self.BHt = np.swapaxes(self.BH, 1, 2)
        self.HMH_R = np.swapaxes(H, 1, 2) @ weights.M @ H + weights.R
        self.A = model.A
        self.Q = weights.Q

    def control_term(self, P: np.ndarray) -> np.ndarray:
        """Per-draw matrices A'PBH (.)^{-1} H'B'PA for the active draws."""
        K = self.BHt @ (P @ self.A)
        inner = self.BHt @ P @ self.BH + self.HMH_R
        return np.swapaxes(K, 1, 2) @ np.linalg.solve(inner, K)

    def g(self, P: np.ndarray) -> np.ndarray:
        P = symmetrize(P)
        out = self.A.T @ P @ self.A + self.Q
        if self.BH.shape[0]:
            out = out - self.control_term(P).sum(axis=0) / self.n
        return symmetrize(out)

    def residual(self, P: np.ndarray) -> np.ndarray:
        return self.g(P) - symmetrize(P)

    def per_draw_residual(self, P: np.ndarray, delta: np.ndarray) -> np.ndarray:
        """Single-draw estimates of f(P), shape (n, S, S); ``delta`` aligns them."""
        P = symmetrize(P)
        base = self.A.T @ P @ self.A + self.Q - P
        out = np.broadcast_to(base, (self.n,) + base.shape).copy()
        if self.BH.shape[0]:
            out[delta.astype(bool)] -= self.control_term(P)
        return symmetrize(out)


def f_residual(p, sample_set, model: PlantModel, weights: CostWeights) -> np.ndarray:
    """Sample-average NME residual ``f(p)`` over the given draws."""
    return NMEOperator(model, weights, sample_set).residual(np.asarray(p, dtype=float))


def woodbury_check(p, psi: EffectiveInput | np.ndarray, model: PlantModel) -> float:
    """Gap between the Riccati form and the ``(psi psi' + p^{-1})^{-1}`` form for one draw."""
    p = symmetrize(np.asarray(p, dtype=float))
    psi = psi.psi if isinstance(psi, EffectiveInput) else np.asarray(psi, dtype=float)
    A = model.A
    p_inv = np.linalg.inv(p)  # raises LinAlgError on singular p
    inner = psi.T @ p @ psi + np.eye(psi.shape[1])
    riccati = A.T @ p @ A - A.T @ p @ psi @ np.linalg.solve(inner, psi.T @ p @ A)
    compact = A.T @ np.linalg.inv(psi @ psi.T + p_inv) @ A
    return spectral_norm(riccati - compact)


def _converged(res_norm, P, tol):
    return res_norm <= tol.residual_tol * max(1.0, spectral_norm(P))


def solve_dare(model: PlantModel, weights: CostWeights, tol: ToleranceProfile = DEFAULT_TOL,
               max_iter: int = 10_000) -> SolveReport:
    """Riccati value iteration for the static channel ``H = I, delta = 1``."""
    A, B = model.A, model.B
    if weights.R.shape != weights.M.shape:
        raise ValueError("static channel needs N_t = N_r")
    RM = weights.R + weights.M
    P = weights.Q.copy()
    hist = []
    for it in range(1, max_iter + 1):
        BtPA = B.T @ P @ A
        P_new = symmetrize(A.T @ P @ A - BtPA.T @ np.linalg.solve(B.T @ P @ B + RM, BtPA) + weights.Q)
        step = spectral_norm(P_new - P)
        hist.append(step)
        P = P_new
        if not np.all(np.isfinite(P)) or spectral_norm(P) > DIVERGENCE_NORM:
            return SolveReport(P, it, np.inf, False, diagnosis="Riccati iteration diverged", history=np.array(hist))
        if _converged(step, P, tol):
            return SolveReport(P, it, step, True, history=np.array(hist))
    return SolveReport(P, max_iter, hist[-1], False, diagnosis="iteration cap reached", history=np.array(hist))


def _frozen(model, cfg, sample_count, seed, samples):
    if samples is not None:
        return as_samples(samples)
    return sample_set(cfg, sample_count, seed)


def solve_fixed_point(model: PlantModel, weights: CostWeights, cfg: ChannelConfig, xi: float = 0.5,
                      sample_count: int = 100_000, seed=0, *, samples=None, p0=None,
                      tol: ToleranceProfile = DEFAULT_TOL, max_iter: int = MAX_ITER) -> SolveReport:
    """Damped iteration ``P <- P + xi f(P)`` on a frozen sample set, from ``P0 = I``."""
    if not 0 < xi < 1:
        raise ValueError("xi must lie in (0, 1)")
    op = NMEOperator(model, weights, _frozen(model, cfg, sample_count, seed, samples))
    P = np.eye(model.S) if p0 is None else symmetrize(np.asarray(p0, dtype=float))
    hist = []
    for it in range(max_iter + 1):
        F = op.residual(P)
        res = spectral_norm(F)
        hist.append(res)
        if _converged(res, P, tol):
            return SolveReport(P, it, res, True, history=np.array(hist))
        P = P + xi * F
        if not np.all(np.isfinite(P)) or spectral_norm(P) > DIVERGENCE_NORM:
            return SolveReport(P, it + 1, np.inf, False, diagnosis="existence condition likely violated",
                               history=np.array(hist))
    return SolveReport(P, max_iter, res, False, diagnosis="iteration cap reached", history=np.array(hist))


def existence_condition(model: PlantModel, weights: CostWeights, cfg: ChannelConfig, n_samples: int = 10_000,
                        seed=0, *, samples=None, tol: ToleranceProfile = DEFAULT_TOL,
                        n_batches: int = 10, z: float = 2.58) -> ExistenceCertificate:
    """Monte-Carlo estimate of ``||E[A' V'(I - Pi) V A]||`` with a batch-means interval."""
    if samples is None and n_samples < 100:
        raise ValueError("n_samples must be at least 100")
    samples = _frozen(model, cfg, n_samples, seed, samples)
    terms = _uncontrollable_projections(model, weights, samples, tol)
    A = model.A
    est = spectral_norm(A.T @ terms.mean(axis=0) @ A)
    n_b = min(n_batches, len(terms))   # tiny explicit sample sets get fewer batches
    batch = [spectral_norm(A.T @ b.mean(axis=0) @ A) for b in np.array_split(terms, n_b)]
    half = z * np.std(batch, ddof=1) / np.sqrt(n_b) if n_b > 1 else 0.0
    if est + half < 1:
        verdict = Trilean.YES
    elif est - half >= 1:
        verdict = Trilean.NO
    else:
        verdict = Trilean.INCONCLUSIVE
    return ExistenceCertificate(float(est), float(half), len(samples), verdict)


def _uncontrollable_projections(model, weights, samples, tol):
    """Stack of ``V'(I - Pi)V`` (projector onto the unreachable directions)."""
    psi = batch_effective_input(model, samples, weights)
    V, _, gamma = batch_decomp_basis(psi, tol)
    keep = (np.arange(model.S)[None, :] >= gamma[:, None]).astype(float)
    return np.swapaxes(V, 1, 2) @ (keep[:, :, None] * V)


def _upper_seed(model, weights, samples, cert, tol):
    if cert.satisfied is not Trilean.YES:
        warnings.warn("existence certificate not satisfied; using heuristic upper seed 1e6*I", RuntimeWarning)
        return 1e6
    psi = batch_effective_input(model, samples, weights)
    _, lam, gamma = batch_decomp_basis(psi, tol)
    inv_tr = np.array([np.sum(1.0 / l[:g]) for l, g in zip(lam, gamma)])
    a2 = spectral_norm(model.A) ** 2
    return (spectral_norm(weights.Q) + a2 * inv_tr.mean()) / (1.0 - cert.estimate)


def _monotone_sequence(op, P, sign, tol, max_iter):
    """Iterate ``g`` and track the worst PSD-order violation of ``sign*(P_k+1 - P_k)``."""
    worst = np.inf
    hist = []
    for it in range(1, max_iter + 1):
        P_new = op.g(P)
        step = P_new - P
        worst = min(worst, float(np.linalg.eigvalsh(sign * step)[0]))
        res = spectral_norm(step)
        hist.append(res)
        P = P_new
        if not np.all(np.isfinite(P)) or spectral_norm(P) > DIVERGENCE_NORM:
            return SolveReport(P, it, np.inf, False, diagnosis="sequence diverged", monotonicity=worst,
                               history=np.array(hist))
        if _converged(res, P, tol):
            return SolveReport(P, it, res, True, monotonicity=worst, history=np.array(hist))
    return SolveReport(P, max_iter, res, False, diagnosis="iteration cap reached", monotonicity=worst,
                       history=np.array(hist))


def solve_bracket(model: PlantModel, weights: CostWeights, cfg: ChannelConfig, sample_count: int = 100_000,
                  seed=0, *, samples=None, tol: ToleranceProfile = DEFAULT_TOL, max_iter: int = MAX_ITER,
                  monotone_slack: float = 1e-9):
    """Ascending sequence from 0 and descending sequence from ``theta I`` under ``g``.

    Returns ``(lower, upper)`` reports, both carrying ``bracket_gap``.
    """
    samples = _frozen(model, cfg, sample_count, seed, samples)
    op = NMEOperator(model, weights, samples)
    cert = existence_condition(model, weights, cfg, samples=samples, tol=tol)
    theta = _upper_seed(model, weights, samples, cert, tol)
    lower = _monotone_sequence(op, np.zeros((model.S, model.S)), 1.0, tol, max_iter)
    upper = _monotone_sequence(op, theta * np.eye(model.S), -1.0, tol, max_iter)
    for name, rep in (("lower", lower), ("upper", upper)):
        scale = monotone_slack * max(1.0, spectral_norm(rep.p_star))
        if rep.monotonicity is not None and rep.monotonicity < -scale:
            warnings.warn(f"{name} bracket sequence not monotone (worst eigenvalue {rep.monotonicity:.3g})",
                          RuntimeWarning)
    gap = spectral_norm(upper.p_star - lower.p_star)
    lower.bracket_gap = upper.bracket_gap = gap
    return lower, upper


def average_cost(p_star, model: PlantModel, weights: CostWeights) -> float:
    """Long-run average cost ``Tr(M + P W + B'PB)`` of the optimal policy."""
    P = np.asarray(p_star, dtype=float)
    return float(np.trace(weights.M) + np.trace(P @ model.W) + np.trace(model.B.T @ P @ model.B))
