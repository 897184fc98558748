"""Controllability regimes of ``(A, delta B H)`` under fading and random access.

The classifier follows the structural conditions stated for the three
regimes (almost-sure, intermittent, almost-sure uncontrollable).  A separate
sampling check (:func:`kalman_rank_profile`) reports what actually happens
draw by draw, so the two can be compared.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .model import ChannelConfig, PlantModel, sample_channel
from .numerics import DEFAULT_TOL, ToleranceProfile, numeric_rank, svd_descending


class Regime(str, Enum):
    ALMOST_SURE = "AlmostSureControllable"
    INTERMITTENT = "IntermittentlyControllable"
    UNCONTROLLABLE = "AlmostSureUncontrollable"


_REGIME_OF = {"a": Regime.ALMOST_SURE, "b": Regime.INTERMITTENT, "c": Regime.UNCONTROLLABLE}


@dataclass(frozen=True)
class Verdict:
    regime: Regime
    matched_condition: str
    details: str = ""

    def __post_init__(self):
        if _REGIME_OF.get(self.matched_condition[:1]) is not self.regime:
            raise ValueError(f"condition {self.matched_condition} does not belong to {self.regime.value}")


@dataclass(frozen=True, eq=False)
class StructureData:
    """Basis of range(B) and the matching block partition of A."""

    U: np.ndarray        # columns: left singular vectors of B B^T, descending
    xi: np.ndarray       # singular values of B B^T
    eta_B: int
    A_tilde: np.ndarray  # U^T A U

    @property
    def A11(self):
        return self.A_tilde[: self.eta_B, : self.eta_B]

    @property
    def A12(self):
        return self.A_tilde[: self.eta_B, self.eta_B:]

    @property
    def A21(self):
        return self.A_tilde[self.eta_B:, : self.eta_B]

    @property
    def A22(self):
        return self.A_tilde[self.eta_B:, self.eta_B:]


def pbh_controllable(a, b, tol: ToleranceProfile = DEFAULT_TOL) -> bool:
    """PBH test: ``rank [a - lambda I | b] = S`` at every eigenvalue of ``a``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float).reshape(a.shape[0], -1)
    S = a.shape[0]
    if S == 0:
        return True
    for lam in np.linalg.eigvals(a):
        if numeric_rank(np.hstack([a - lam * np.eye(S), b]), tol) < S:
            return False
    return True


def kalman_rank(a, b, tol: ToleranceProfile = DEFAULT_TOL) -> int:
    """Rank of the controllability matrix ``[b, ab, ..., a^{S-1} b]``."""
    a = np.asarray(a, dtype=float)
    blocks, blk = [], np.asarray(b, dtype=float)
    for _ in range(a.shape[0]):
        blocks.append(blk)
        blk = a @ blk
    return numeric_rank(np.hstack(blocks), tol)


def structure_transform(model: PlantModel, tol: ToleranceProfile = DEFAULT_TOL) -> StructureData:
    eta = numeric_rank(model.B, tol)
    if eta == 0:
        raise ValueError("B = 0 leaves no block structure")
    U, xi, _ = svd_descending(model.B @ model.B.T)
    return StructureData(U=U, xi=xi, eta_B=eta, A_tilde=U.T @ model.A @ U)


def _eigen_ranks(a_tilde, tol):
    """Rank of (A_tilde - lambda I) at each eigenvalue.

    Off the spectrum the matrix is nonsingular, so checking eigenvalues is
    enough for conditions quantified over every complex lambda.
    """
    S = a_tilde.shape[0]
    return [(lam, numeric_rank(a_tilde - lam * np.eye(S), tol)) for lam in np.linalg.eigvals(a_tilde)]


def classify(model: PlantModel, cfg: ChannelConfig, tol: ToleranceProfile = DEFAULT_TOL) -> Verdict:
    """Map ``(A, B, N_t, p_access)`` to one of the three controllability regimes."""
    sd = structure_transform(model, tol)
    S, eta, n_t, p = model.S, sd.eta_B, cfg.n_t, cfg.p_access
    threshold = S - eta + n_t
    ranks = _eigen_ranks(sd.A_tilde, tol)
    table = "; ".join(f"lambda={lam:.4g}: rank={r}" for lam, r in ranks)
    info = f"S={S}, eta_B={eta}, N_t={n_t}, p={p}; {table}"

    # tail pair (A22, A12^T); empty tail counts as controllable
    tail_ok = sd.A22.size == 0 or pbh_controllable(sd.A22, sd.A12.T, tol)
    if eta <= n_t < S and not tail_ok:
        return Verdict(Regime.UNCONTROLLABLE, "c.1", info)
    if n_t < eta and any(r <= threshold for _, r in ranks):
        return Verdict(Regime.UNCONTROLLABLE, "c.2", info)
    # the structural (c) tests come first; an uncontrollable (A, B) that
    # matches neither of them has no regime
    if not pbh_controllable(model.A, model.B, tol):
        raise ValueError("pair (A,B) uncontrollable; classification inapplicable")

    if p <= 0:
        raise ValueError("p_access must be positive to separate regimes (a) and (b)")
    letter = "a" if p >= 1 else "b"
    if n_t >= S:
        idx = 1
    elif eta <= n_t:
        idx = 2
    else:
        idx = 3
    return Verdict(_REGIME_OF[letter], f"{letter}.{idx}", info)


def kalman_rank_profile(model: PlantModel, cfg: ChannelConfig, n_draws: int, rng: np.random.Generator,
                        tol: ToleranceProfile = DEFAULT_TOL) -> np.ndarray:
    """Per-draw controllability of ``(A, delta B H)`` as a boolean array."""
    out = np.empty(n_draws, dtype=bool)
    for i in range(n_draws):
        d = sample_channel(rng, cfg)
        out[i] = bool(d.delta) and kalman_rank(model.A, model.B @ d.H, tol) == model.S
    return out
