"""Controllable / uncontrollable PSD cone decomposition of a value kernel.

For one channel draw the effective input is

    psi = delta B H (delta H'MH + R)^{-1/2},

and ``psi psi' = V' diag(lambda) V`` with ``lambda`` descending and rank
``gamma``.  A kernel ``P`` is split as ``P = P_c + P_uc`` where
``psi psi' P_uc = 0`` and ``P_c`` only lives on directions the input can reach.

The ``batch_*`` functions do the same computations over a stack of draws.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .model import ChannelDraw, ChannelSamples, CostWeights, PlantModel, as_samples
from .numerics import DEFAULT_TOL, ToleranceProfile, is_psd, symmetrize

SIGMA_COND_WARN = 1e12


@dataclass(frozen=True, eq=False)
class EffectiveInput:
    psi: np.ndarray  # S x Nt


@dataclass(frozen=True, eq=False)
class DecompBasis:
    V: np.ndarray       # rows are eigenvectors of psi psi'
    lam: np.ndarray     # eigenvalues, descending
    gamma: int

    @property
    def Pi(self) -> np.ndarray:
        return np.diag((np.arange(self.lam.size) < self.gamma).astype(float))


@dataclass(frozen=True, eq=False)
class ConeSplit:
    p_c: np.ndarray
    p_uc: np.ndarray
    sigma_coupling: np.ndarray  # gamma x (S - gamma)


def _inv_sqrt_stack(m: np.ndarray) -> np.ndarray:
    w, q = np.linalg.eigh(symmetrize(m))
    return (q / np.sqrt(w)[..., None, :]) @ np.swapaxes(q, -1, -2)


def batch_effective_input(model: PlantModel, samples: ChannelSamples, weights: CostWeights) -> np.ndarray:
    """Stack of effective inputs, shape (n, S, Nt)."""
    d = samples.delta[:, None, None].astype(float)
    H = samples.H
    inner = d * (np.swapaxes(H, 1, 2) @ weights.M @ H) + weights.R
    return d * (model.B @ H) @ _inv_sqrt_stack(inner)


def effective_input(model: PlantModel, draw: ChannelDraw, weights: CostWeights) -> EffectiveInput:
    return EffectiveInput(batch_effective_input(model, as_samples(draw), weights)[0])


def batch_decomp_basis(psi: np.ndarray, tol: ToleranceProfile = DEFAULT_TOL):
    """Return ``(V, lam, gamma)`` stacks for a stack of effective inputs."""
    G = psi @ np.swapaxes(psi, 1, 2)
    w, q = np.linalg.eigh(symmetrize(G))
    w, q = w[:, ::-1], q[:, :, ::-1]
    w = np.clip(w, 0.0, None)
    top = w[:, :1]
    gamma = np.sum((w > tol.rank_rel_tol * top) & (top > 0), axis=1)
    return np.swapaxes(q, 1, 2), w, gamma


def decomp_basis(psi: EffectiveInput, tol: ToleranceProfile = DEFAULT_TOL) -> DecompBasis:
    V, lam, gamma = batch_decomp_basis(psi.psi[None], tol)
    return DecompBasis(V[0], lam[0], int(gamma[0]))


def _split_group(P: np.ndarray, V: np.ndarray, g: int):
    """Split for a stack of kernels sharing the same rank ``g``.

    ``P`` is (n, S, S) or (S, S) broadcast against ``V`` (n, S, S).
    """
    Vt = np.swapaxes(V, 1, 2)
    Pr = symmetrize(V @ P @ Vt)
    n, S = V.shape[0], V.shape[1]
    if g == 0:
        return np.zeros((n, S, S)), Vt @ Pr @ V, np.zeros((n, 0, S))
    if g == S:
        return Vt @ Pr @ V, np.zeros((n, S, S)), np.zeros((n, S, 0))
    P11, P12 = Pr[:, :g, :g], Pr[:, :g, g:]
    if np.any(np.linalg.cond(P11) > SIGMA_COND_WARN):
        warnings.warn("ill-conditioned leading block in cone split; using pseudo-inverse", RuntimeWarning)
    sigma = np.linalg.pinv(P11, hermitian=True) @ P12
    top = np.concatenate([P11, P11 @ sigma], axis=2)
    bottom = np.concatenate([np.swapaxes(P11 @ sigma, 1, 2),
                             np.swapaxes(sigma, 1, 2) @ P11 @ sigma], axis=2)
    rot_c = np.concatenate([top, bottom], axis=1)
    rot_uc = np.zeros_like(Pr)
    rot_uc[:, g:, g:] = Pr[:, g:, g:] - np.swapaxes(sigma, 1, 2) @ P11 @ sigma
    p_c = symmetrize(Vt @ rot_c @ V)
    p_uc = symmetrize(Vt @ rot_uc @ V)
    return p_c, p_uc, sigma


def batch_cone_decompose(P: np.ndarray, V: np.ndarray, gamma: np.ndarray):
    """Split ``P`` against every basis in the stack; returns (p_c, p_uc) stacks."""
    n, S = V.shape[0], V.shape[1]
    P = np.broadcast_to(P, (n, S, S)) if P.ndim == 2 else P
    p_c = np.empty((n, S, S))
    p_uc = np.empty((n, S, S))
    for g in np.unique(gamma):
        idx = np.flatnonzero(gamma == g)
        p_c[idx], p_uc[idx], _ = _split_group(P[idx], V[idx], int(g))
    return p_c, p_uc


def cone_decompose(p, basis: DecompBasis, tol: ToleranceProfile = DEFAULT_TOL) -> ConeSplit:
    """Split a PSD kernel into its controllable and uncontrollable parts."""
    p = np.asarray(p, dtype=float)
    if not is_psd(p, tol):
        raise ValueError("kernel must be symmetric positive semidefinite")
    p_c, p_uc, sigma = _split_group(p[None], basis.V[None], basis.gamma)
    return ConeSplit(p_c[0], p_uc[0], sigma[0])


def decomposed_nme_residual(p, sample_set, model: PlantModel, weights: CostWeights,
                            tol: ToleranceProfile = DEFAULT_TOL) -> np.ndarray:
    """NME residual evaluated through the cone split of every draw.

    Each draw contributes ``A' P_uc A`` plus a Riccati-type term built from
    ``P_c`` only; the average minus ``p`` is returned.  Used as an
    independent cross-check of :func:`fadingctl.nme.f_residual`.
    """
    p = symmetrize(np.asarray(p, dtype=float))
    samples = as_samples(sample_set)
    psi = batch_effective_input(model, samples, weights)
    V, _, gamma = batch_decomp_basis(psi, tol)
    p_c, p_uc = batch_cone_decompose(p, V, gamma)

    A, B = model.A, model.B
    d = samples.delta[:, None, None].astype(float)
    H = samples.H
    BH = B @ H
    BHt = np.swapaxes(BH, 1, 2)
    inner = d * (BHt @ p_c @ BH + np.swapaxes(H, 1, 2) @ weights.M @ H) + weights.R
    gain = np.linalg.solve(inner, BHt @ p_c)
    reach = p_c - d * (p_c @ BH @ gain)
    per_draw = A.T @ (p_uc + reach) @ A
    return symmetrize(per_draw.mean(axis=0) + weights.Q - p)
