"""Comparison controllers.

Baselines 1 and 2 learn a quadratic Q-function ``Q(z) = z' Psi z`` by
recursive least-squares temporal differences (instrumental-variable form)
with an average-cost offset:

    c_k = (phi(z_k) - phi(z'_{k+1}))' theta + avg_cost,

where ``z'_{k+1}`` carries the current policy's action at the next state.
The policy is the greedy minimizer of the fitted Q-function, refreshed every
``improve_every`` slots (Q-function policy iteration).  Baseline 1
uses ``z = [x; u]`` and ignores the channel; Baseline 2 uses
``z = [x; delta; vec(H); u]``.  Baseline 3 is the genie that knows the NME
solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .learner import control_action
from .model import CostWeights, ExtendedState, PlantModel


@dataclass
class QKernel:
    """Quadratic Q-model ``z' Psi z`` plus the RLS-TD state that fits it.

    The last ``n_u`` coordinates of ``z`` are the action.
    """

    dim: int
    n_u: int
    forgetting: float = 0.995
    init_scale: float = 0.01
    rls_init: float = 100.0
    explore_var: float = 0.1
    explore_decay: float = 0.5
    improve_every: int = 50
    theta: np.ndarray = field(init=False)
    rls: np.ndarray = field(init=False)
    gain: np.ndarray = field(init=False)
    steps: int = field(default=0, init=False)
    fallback_events: int = field(default=0, init=False)

    def __post_init__(self):
        self._iu = np.triu_indices(self.dim)
        self._scale = np.where(self._iu[0] == self._iu[1], 1.0, 2.0)
        n_par = self._iu[0].size + 1   # last parameter is the average-cost offset
        psi0 = self.init_scale * np.eye(self.dim)
        self.theta = np.append(psi0[self._iu], 0.0)
        self.rls = self.rls_init * np.eye(n_par)
        self.gain = self._greedy_gain()

    @property
    def psi_mat(self) -> np.ndarray:
        m = np.zeros((self.dim, self.dim))
        m[self._iu] = self.theta[:-1]
        return m + np.triu(m, 1).T

    def features(self, z: np.ndarray) -> np.ndarray:
        return np.outer(z, z)[self._iu] * self._scale

    def _greedy_gain(self) -> np.ndarray:
        """Gain of the minimizer over ``u`` of ``[rest; u]' Psi [rest; u]``; zero if Psi_uu is not PD."""
        psi = self.psi_mat
        nu = self.n_u
        Puu, Pur = psi[-nu:, -nu:], psi[-nu:, :-nu]
        try:
            np.linalg.cholesky(Puu)
        except np.linalg.LinAlgError:
            self.fallback_events += 1
            return np.zeros((nu, self.dim - nu))
        return -np.linalg.solve(Puu, Pur)

    def policy(self, rest: np.ndarray) -> np.ndarray:
        return self.gain @ rest

    def maybe_improve(self) -> None:
        if self.steps % self.improve_every == 0:
            self.gain = self._greedy_gain()

    def td_update(self, z: np.ndarray, z_next: np.ndarray, cost: float) -> None:
        phi = np.append(self.features(z), 1.0)
        reg = phi - np.append(self.features(z_next), 0.0)
        Pphi = self.rls @ phi
        gain = Pphi / (self.forgetting + reg @ Pphi)
        self.theta = self.theta + gain * (cost - reg @ self.theta)
        self.rls = (self.rls - np.outer(gain, reg @ self.rls)) / self.forgetting
        self.steps += 1

    def explore(self, rng: np.random.Generator) -> np.ndarray:
        std = np.sqrt(self.explore_var * (1.0 + self.steps) ** -self.explore_decay)
        return std * rng.standard_normal(self.n_u)


@dataclass(frozen=True)
class Transition:
    x: np.ndarray
    u: np.ndarray
    cost: float
    x_next: np.ndarray


@dataclass(frozen=True)
class ExtendedTransition:
    x: np.ndarray
    delta: int
    H: np.ndarray
    u: np.ndarray
    cost: float
    x_next: np.ndarray
    delta_next: int
    H_next: np.ndarray


def baseline1_kernel(S: int, n_t: int, **kw) -> QKernel:
    return QKernel(S + n_t, n_t, **kw)


def baseline2_kernel(S: int, n_r: int, n_t: int, **kw) -> QKernel:
    return QKernel(1 + S + n_r * n_t + n_t, n_t, **kw)


def _channel_context(x, delta, H):
    # vec(H) stacks columns
    return np.concatenate([x, [float(delta)], np.asarray(H).ravel(order="F")])


def _step(qk: QKernel, z, rest_next, cost, rng):
    qk.td_update(z, np.concatenate([rest_next, qk.policy(rest_next)]), cost)
    qk.maybe_improve()
    action = qk.policy(rest_next)
    if rng is not None:
        action = action + qk.explore(rng)
    return qk, action


def baseline1_step(qk: QKernel, obs: Transition, rng: np.random.Generator | None = None):
    """One TD update on ``[x; u]``, then the (exploratory) action at ``x_next``."""
    return _step(qk, np.concatenate([obs.x, obs.u]), obs.x_next, obs.cost, rng)


def baseline2_step(qk: QKernel, obs: ExtendedTransition, rng: np.random.Generator | None = None):
    """Same machinery over ``[x; delta; vec(H); u]``."""
    z = np.concatenate([_channel_context(obs.x, obs.delta, obs.H), obs.u])
    return _step(qk, z, _channel_context(obs.x_next, obs.delta_next, obs.H_next), obs.cost, rng)


def baseline1_action(qk: QKernel, x) -> np.ndarray:
    return qk.policy(np.asarray(x, dtype=float))


def baseline2_action(qk: QKernel, x, delta, H) -> np.ndarray:
    return qk.policy(_channel_context(np.asarray(x, dtype=float), delta, H))


def baseline3_action(p_star, state: ExtendedState, model: PlantModel, weights: CostWeights) -> np.ndarray:
    """Genie-aided action: the optimal feedback with the true NME solution."""
    return control_action(p_star, state, model, weights)
