"""Plant dynamics, fading/random-access channel sampling and stage cost.

The plant evolves as

    x' = A x + delta B H u + B v + w,   v ~ N(0, I_Nr),  w ~ N(0, W)

where ``H`` (Nr x Nt) has i.i.d. standard normal entries and ``delta`` is a
Bernoulli(p_access) access bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .numerics import psd_sqrt


def _matrix(m, name: str) -> np.ndarray:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.ndim != 2:
        raise ValueError(f"{name} must be a matrix")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def _check_square(m, name, n):
    if m.shape != (n, n):
        raise ValueError(f"{name} must be {n}x{n}, got {m.shape[0]}x{m.shape[1]}")


@dataclass(frozen=True, eq=False)
class PlantModel:
    """Linear plant ``(A, B, W)`` with initial state ``x0``."""

    A: np.ndarray
    B: np.ndarray
    W: np.ndarray
    x0: np.ndarray | None = None

    def __post_init__(self):
        A, B, W = _matrix(self.A, "A"), _matrix(self.B, "B"), _matrix(self.W, "W")
        S = A.shape[0]
        _check_square(A, "A", S)
        _check_square(W, "W", S)
        if B.shape[0] != S:
            raise ValueError(f"B must have {S} rows, got {B.shape[0]}")
        if not np.allclose(W, W.T, atol=1e-12):
            raise ValueError("W must be symmetric")
        if np.linalg.eigvalsh(W)[0] < -1e-12 * max(1.0, np.abs(W).max()):
            raise ValueError("W must be positive semidefinite")
        x0 = np.ones(S) if self.x0 is None else np.asarray(self.x0, dtype=float).ravel()
        if x0.shape != (S,):
            raise ValueError(f"x0 must have length {S}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "x0", x0)

    @property
    def S(self) -> int:
        return self.A.shape[0]

    @property
    def n_r(self) -> int:
        return self.B.shape[1]

    @cached_property
    def noise_factor(self) -> np.ndarray:
        """Matrix L with L L^T = W, used to draw plant noise."""
        return psd_sqrt(self.W)


@dataclass(frozen=True, eq=False)
class CostWeights:
    """Positive definite state (Q), transmission (R) and actuation (M) weights."""

    Q: np.ndarray
    R: np.ndarray
    M: np.ndarray

    def __post_init__(self):
        for name in ("Q", "R", "M"):
            m = _matrix(getattr(self, name), name)
            _check_square(m, name, m.shape[0])
            if not np.allclose(m, m.T, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(m)[0] <= 0:
                raise ValueError(f"{name} must be positive definite")
            object.__setattr__(self, name, m)

    def check_dims(self, model: PlantModel, n_t: int) -> None:
        _check_square(self.Q, "Q", model.S)
        _check_square(self.R, "R", n_t)
        _check_square(self.M, "M", model.n_r)


@dataclass(frozen=True, eq=False)
class ChannelDraw:
    """One fading realization ``H`` together with the access bit ``delta``."""

    H: np.ndarray
    delta: int

    def __post_init__(self):
        if self.delta not in (0, 1):
            raise ValueError("delta must be 0 or 1")


@dataclass(frozen=True)
class ChannelConfig:
    n_r: int
    n_t: int
    p_access: float

    def __post_init__(self):
        if self.n_r < 1 or self.n_t < 1:
            raise ValueError("n_r and n_t must be positive")
        if not 0.0 <= self.p_access <= 1.0:
            raise ValueError("p_access must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class ExtendedState:
    """Plant state together with the channel/access state of the current slot."""

    x: np.ndarray
    draw: ChannelDraw


@dataclass(frozen=True, eq=False)
class ChannelSamples:
    """A frozen batch of channel draws used for common-random-number averages.

    ``H`` has shape (n, Nr, Nt) and ``delta`` shape (n,).
    """

    H: np.ndarray
    delta: np.ndarray = field(repr=False)

    def __len__(self):
        return self.H.shape[0]

    def __iter__(self):
        for h, d in zip(self.H, self.delta):
            yield ChannelDraw(h, int(d))

    @classmethod
    def from_draws(cls, draws) -> "ChannelSamples":
        draws = list(draws)
        if not draws:
            raise ValueError("sample set must be nonempty")
        return cls(np.stack([d.H for d in draws]).astype(float),
                   np.array([d.delta for d in draws], dtype=int))

    @classmethod
    def static(cls, n: int, n_r: int) -> "ChannelSamples":
        """``n`` copies of the static channel ``H = I, delta = 1``."""
        return cls(np.broadcast_to(np.eye(n_r), (n, n_r, n_r)).copy(), np.ones(n, dtype=int))


def as_samples(sample_set) -> ChannelSamples:
    if isinstance(sample_set, ChannelSamples):
        return sample_set
    if isinstance(sample_set, ChannelDraw):
        return ChannelSamples.from_draws([sample_set])
    return ChannelSamples.from_draws(sample_set)


def sample_channel(rng: np.random.Generator, cfg: ChannelConfig) -> ChannelDraw:
    """Draw one ``(H, delta)`` pair: H entries N(0,1), delta ~ Bernoulli(p)."""
    H = rng.standard_normal((cfg.n_r, cfg.n_t))
    delta = int(rng.random() < cfg.p_access)
    return ChannelDraw(H, delta)


def sample_set(cfg: ChannelConfig, n: int, seed) -> ChannelSamples:
    """Vectorized batch of ``n`` independent draws from a fresh seeded stream."""
    rng = np.random.default_rng(seed)
    H = rng.standard_normal((n, cfg.n_r, cfg.n_t))
    delta = (rng.random(n) < cfg.p_access).astype(int)
    return ChannelSamples(H, delta)


def plant_step(model: PlantModel, state: ExtendedState, u, rng: np.random.Generator | None = None,
               noise_free: bool = False) -> np.ndarray:
    """Advance the plant one slot.

    In noise-free mode both the channel noise ``v`` and plant noise ``w`` are
    zero and ``rng`` is not touched.
    """
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError("control input is not finite")
    x = model.A @ state.x
    if state.draw.delta:
        x = x + model.B @ (state.draw.H @ u)
    if noise_free:
        return x
    v = rng.standard_normal(model.n_r)
    w = model.noise_factor @ rng.standard_normal(model.S)
    return x + model.B @ v + w


def stage_cost(state: ExtendedState, u, weights: CostWeights) -> float:
    """x'Qx + u'Ru + delta u'H'MHu + Tr(M).

    This is the conditional expectation of x'Qx + u'Ru + (dHu+v)'M(dHu+v)
    over the channel noise v.
    """
    x, u = state.x, np.asarray(u, dtype=float)
    cost = x @ weights.Q @ x + u @ weights.R @ u + np.trace(weights.M)
    if state.draw.delta:
        hu = state.draw.H @ u
        cost += hu @ weights.M @ hu
    return float(cost)
