"""Scenario configuration files.

Configs are INI-style text with one section per concern.  Matrices are
row-major bracketed lists (``[[1, 0], [0, 1]]``); ``eye(n)`` and
``c * eye(n)`` are accepted as shorthand for scaled identities.

    [plant]
    A = [[0.01, -1.02, 0.3], [-0.1, 1.01, 0.2], [-0.5, 0.1, 0.2]]
    B = [[1.1, 0.2], [-0.2, 0.6], [-0.3, 0.2]]
    W = 0.05 * eye(3)
"""

from __future__ import annotations

import ast
import configparser
import hashlib
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from ..learner import StepSchedule
from ..model import ChannelConfig, CostWeights, PlantModel
from ..numerics import ToleranceProfile


class ConfigError(ValueError):
    """Base class for configuration problems."""


class ConfigParseError(ConfigError):
    pass


class DimensionError(ConfigError):
    pass


class WeightError(ConfigError):
    pass


@dataclass(frozen=True)
class SolverSettings:
    xi: float = 0.5
    sample_count: int = 100_000
    seed: int = 0
    tol: ToleranceProfile = field(default_factory=ToleranceProfile)


@dataclass(frozen=True)
class BaselineSettings:
    forgetting: float = 0.995
    explore_var: float = 0.1
    explore_decay: float = 0.5
    init_scale: float = 0.01
    improve_every: int = 50


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    name: str
    plant: PlantModel
    weights: CostWeights
    channel: ChannelConfig
    schedule: StepSchedule = field(default_factory=StepSchedule)
    horizon: int = 10_000
    runs: int = 100
    master_seed: int = 0
    noise_free: bool = False
    literal_eq9: bool = False
    window_frac: float = 0.1   # trailing-window fraction used when aggregating per-slot metrics
    solver: SolverSettings = field(default_factory=SolverSettings)
    baselines: BaselineSettings = field(default_factory=BaselineSettings)
    sweep: str = ""            # name of the swept dimension for benchmark families (S, Nt or Nr)

    def sweep_value(self) -> int | None:
        return {"S": self.plant.S, "Nt": self.channel.n_t, "Nr": self.channel.n_r}.get(self.sweep)

    def canonical(self) -> dict:
        """JSON-serializable view used for hashing."""
        arr = lambda m: np.asarray(m).tolist()
        return {
            "name": self.name,
            "plant": {"A": arr(self.plant.A), "B": arr(self.plant.B), "W": arr(self.plant.W),
                      "x0": arr(self.plant.x0)},
            "weights": {"Q": arr(self.weights.Q), "R": arr(self.weights.R), "M": arr(self.weights.M)},
            "channel": [self.channel.n_r, self.channel.n_t, self.channel.p_access],
            "schedule": [self.schedule.a0, self.schedule.tau, self.schedule.gamma_exp],
            "horizon": self.horizon, "runs": self.runs, "master_seed": self.master_seed,
            "noise_free": self.noise_free, "literal_eq9": self.literal_eq9, "window_frac": self.window_frac,
            "solver": [self.solver.xi, self.solver.sample_count, self.solver.seed],
            "baselines": [self.baselines.forgetting, self.baselines.explore_var, self.baselines.explore_decay,
                          self.baselines.init_scale, self.baselines.improve_every],
        }

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_EYE = re.compile(r"^\s*(?:([-+0-9.eE]+)\s*\*\s*)?eye\(\s*(\d+)\s*\)\s*$")


def parse_matrix(text: str, path: str) -> np.ndarray:
    m = _EYE.match(text)
    if m:
        scale = float(m.group(1)) if m.group(1) else 1.0
        return scale * np.eye(int(m.group(2)))
    try:
        value = ast.literal_eval(text.strip())
    except (ValueError, SyntaxError) as exc:
        raise ConfigParseError(f"{path}: cannot parse matrix literal ({exc})") from None
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None] if path.endswith(".B") else arr
    if arr.ndim > 2 or not np.all(np.isfinite(arr)):
        raise ConfigParseError(f"{path}: expected a finite row-major matrix")
    return arr


def _get(cp, section, key, conv, default=None):
    path = f"{section}.{key}"
    if not cp.has_option(section, key):
        if default is None:
            raise ConfigParseError(f"{path}: missing required field")
        return default
    raw = cp.get(section, key)
    try:
        return conv(raw)
    except ValueError:
        raise ConfigParseError(f"{path}: cannot parse value {raw!r}") from None


def _bool(s: str) -> bool:
    s = s.strip().lower()
    if s in ("true", "yes", "1", "on"):
        return True
    if s in ("false", "no", "0", "off"):
        return False
    raise ValueError(s)


def _check_shape(m, shape, path):
    if m.shape != shape:
        raise DimensionError(f"{path}: expected shape {shape[0]}x{shape[1]}, got {m.shape[0]}x{m.shape[1]}")


def _check_pd(m, path):
    if not np.allclose(m, m.T, atol=1e-12):
        raise WeightError(f"{path}: weight matrix must be symmetric")
    if np.linalg.eigvalsh(m)[0] <= 0:
        raise WeightError(f"{path}: weight matrix must be positive definite")


def parse_scenario(text: str, name: str = "scenario") -> ScenarioConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigParseError(f"malformed config: {exc}") from None

    mat = lambda sec, key: parse_matrix(_get(cp, sec, key, str), f"{sec}.{key}")
    A, B, W = mat("plant", "A"), mat("plant", "B"), mat("plant", "W")
    S = A.shape[0]
    _check_shape(A, (S, S), "plant.A")
    if B.ndim != 2 or B.shape[0] != S:
        raise DimensionError(f"plant.B: expected {S} rows, got shape {B.shape}")
    _check_shape(W, (S, S), "plant.W")
    x0 = np.ones(S)
    if cp.has_option("plant", "x0"):
        x0 = np.asarray(parse_matrix(cp.get("plant", "x0"), "plant.x0"), dtype=float).ravel()
        if x0.shape != (S,):
            raise DimensionError(f"plant.x0: expected length {S}, got {x0.size}")
    if np.any(np.linalg.eigvalsh(0.5 * (W + W.T)) < -1e-12) or not np.allclose(W, W.T, atol=1e-12):
        raise WeightError("plant.W: noise covariance must be symmetric positive semidefinite")

    n_r = B.shape[1]
    n_t = _get(cp, "channel", "n_t", int)
    if _get(cp, "channel", "n_r", int, n_r) != n_r:
        raise DimensionError(f"channel.n_r: must equal the number of columns of plant.B ({n_r})")
    p = _get(cp, "channel", "p_access", float)
    if not 0.0 <= p <= 1.0:
        raise ConfigParseError("channel.p_access: must lie in [0, 1]")

    Q, R, M = mat("weights", "Q"), mat("weights", "R"), mat("weights", "M")
    _check_shape(Q, (S, S), "weights.Q")
    _check_shape(R, (n_t, n_t), "weights.R")
    _check_shape(M, (n_r, n_r), "weights.M")
    for m, path in ((Q, "weights.Q"), (R, "weights.R"), (M, "weights.M")):
        _check_pd(m, path)

    sec = "learner"
    schedule = StepSchedule(_get(cp, sec, "a0", float, 0.5), _get(cp, sec, "tau", float, 100.0),
                            _get(cp, sec, "gamma_exp", float, 0.7))
    sec = "solver"
    solver = SolverSettings(_get(cp, sec, "xi", float, 0.5), _get(cp, sec, "sample_count", int, 100_000),
                            _get(cp, sec, "seed", int, 0),
                            ToleranceProfile(_get(cp, sec, "rank_rel_tol", float, 1e-10),
                                             _get(cp, sec, "psd_eig_tol", float, 1e-9),
                                             _get(cp, sec, "residual_tol", float, 1e-8)))
    sec = "baselines"
    base = BaselineSettings(_get(cp, sec, "forgetting", float, 0.995), _get(cp, sec, "explore_var", float, 0.1),
                            _get(cp, sec, "explore_decay", float, 0.5), _get(cp, sec, "init_scale", float, 0.01),
                            _get(cp, sec, "improve_every", int, 50))
    sec = "experiment"
    return ScenarioConfig(
        name=_get(cp, sec, "name", str, name),
        plant=PlantModel(A, B, W, x0),
        weights=CostWeights(Q, R, M),
        channel=ChannelConfig(n_r, n_t, p),
        schedule=schedule,
        horizon=_get(cp, sec, "horizon", int, 10_000),
        runs=_get(cp, sec, "runs", int, 100),
        master_seed=_get(cp, sec, "master_seed", int, 0),
        noise_free=_get(cp, sec, "noise_free", _bool, False),
        literal_eq9=_get(cp, sec, "literal_eq9", _bool, False),
        window_frac=_get(cp, sec, "window_frac", float, 0.1),
        solver=solver,
        baselines=base,
        sweep=_get(cp, sec, "sweep", str, ""),
    )


def bundled_path(name: str) -> Path:
    """Path of a config shipped with the package (e.g. ``fig3.cfg``)."""
    return Path(str(resources.files("fadingctl").joinpath("configs", name)))


def load_scenario(path) -> ScenarioConfig:
    """Read a scenario file; bare names fall back to the bundled configs."""
    p = Path(path)
    if not p.exists():
        alt = bundled_path(p.name)
        if not alt.exists():
            raise FileNotFoundError(f"config not found: {path}")
        p = alt
    return parse_scenario(p.read_text(), name=p.stem)


def bundled_family(prefix: str) -> list[Path]:
    """Bundled sweep configs whose file names start with ``prefix`` (sorted by swept value)."""
    root = bundled_path("")
    files = [f for f in root.iterdir() if f.name.startswith(prefix) and f.suffix == ".cfg"]
    return sorted(files, key=lambda f: int(re.search(r"(\d+)\.cfg$", f.name).group(1)))
