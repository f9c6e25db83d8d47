"""Experiment configuration: a flat, typed key-value file with sections.

Every knob the pipeline reads lives here as one ``key = value`` line under a
section named after the module it feeds. Unknown sections or keys are errors
(silently ignored typos are how reproductions go wrong). Floats are written
with shortest round-trip repr, so ``write_config(read_config(text)) == text``
for canonical files and the sha256 of the canonical text identifies the
configuration in every artifact the pipeline produces.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, replace

import numpy as np

from .control import MpcConfig
from .diffeo import TrainConfig
from .sim import CartPoleParams, CollectionProtocol, NoiseConfig
from .util import format_float


class ConfigError(ValueError):
    """Malformed configuration file or inconsistent values."""


@dataclass(frozen=True)
class ExperimentConfig:
    # experiment
    system: str = "cartpole"
    seed: int = 0
    # cartpole
    cart_mass: float = 1.0
    pole_mass: float = 0.1
    pole_length: float = 0.5
    gravity: float = 9.81
    poles: tuple = (-1.5, -2.5, -3.5, -4.5)
    # example (planar system with one slow and one fast direction)
    mu: float = -1.0
    lam: float = -5.0
    # protocol
    n_trajectories: int = 40
    duration: float = 2.0
    sample_rate: float = 100.0
    initial_box: tuple = ((-2.5, 2.5), (-0.25, 0.25), (-0.05, 0.05), (-0.05, 0.05))
    noise_variance: float = 0.5
    # Collection references are planned with a heavier input penalty than the
    # control task: pure state feedback has to track them on the true
    # nonlinear plant, and minimum-time style plans tip the pole over.
    plan_input_weight: float = 0.5
    plan_terminal_weight: float = 3000.0
    # diffeo
    hidden: tuple = (50, 50, 50)
    learning_rate: float = 1e-4
    momentum: float = 0.9
    epochs: int = 200
    batch_size: int = 128
    holdout_fraction: float = 0.2
    alpha: float = 1.0
    weight_decay: float = 1e-6
    # basis
    n_functions: int = 81
    max_degree: int = 5
    margin: float = 1.1
    # regression
    l1_grid: tuple = (0.0, 1e-4, 1e-3, 1e-2)
    l2_grid: tuple = (0.0, 1e-4, 1e-2)
    folds: int = 5
    reg_tol: float = 1e-8
    reg_max_iter: int = 100_000
    tracking: bool = True
    # rbf
    n_centers: int = 81
    # mpc
    horizon: int = 200
    q_diag: tuple = (1.0, 1.0, 0.1, 0.1)
    r_diag: tuple = (0.001,)
    # wide enough that only the input box actually binds; a tight state box
    # can make the long-horizon prediction infeasible from far-out states
    x_min: tuple = (-10.0, -10.0, -10.0, -10.0)
    x_max: tuple = (10.0, 10.0, 10.0, 10.0)
    u_min: tuple = (-4.0,)
    u_max: tuple = (4.0,)
    terminal_weight: float = 1000.0
    solver_tol: float = 1e-6
    solver_max_iter: int = 4000
    # eval
    n_test_trajectories: int = 40
    test_duration: float = 2.0
    task_x0: tuple = (2.0, 0.25, 0.0, 0.0)
    task_duration: float = 2.0

    def __post_init__(self):
        if self.system not in ("cartpole", "example"):
            raise ConfigError(f"unknown system {self.system!r}")
        d = len(self.initial_box)
        want_d = 4 if self.system == "cartpole" else 2
        if d != want_d:
            raise ConfigError(f"system {self.system!r} needs a {want_d}-dimensional initial_box")
        if self.system == "cartpole" and len(self.poles) != d:
            raise ConfigError(f"need {d} poles for pole placement, got {len(self.poles)}")
        for name in ("q_diag", "x_min", "x_max", "task_x0"):
            if len(getattr(self, name)) != d:
                raise ConfigError(f"{name} must have {d} entries")
        m = len(self.r_diag)
        if len(self.u_min) != m or len(self.u_max) != m:
            raise ConfigError("r_diag, u_min, u_max must agree on the input dimension")
        if self.folds < 2:
            raise ConfigError("cross-validation needs at least 2 folds")
        if self.n_trajectories < self.folds:
            raise ConfigError("need at least one trajectory per fold")
        if any(v < 0 for grid in (self.l1_grid, self.l2_grid) for v in grid):
            raise ConfigError("regularization grids must be nonnegative")
        if not self.l1_grid or not self.l2_grid:
            raise ConfigError("regularization grids must be nonempty")
        if self.plan_input_weight <= 0:
            raise ConfigError("plan_input_weight must be positive")

    @property
    def state_dim(self) -> int:
        return len(self.initial_box)

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    def cartpole(self) -> CartPoleParams:
        return CartPoleParams(
            cart_mass=self.cart_mass,
            pole_mass=self.pole_mass,
            pole_length=self.pole_length,
            gravity=self.gravity,
        )

    def protocol(self) -> CollectionProtocol:
        return CollectionProtocol(
            n_trajectories=self.n_trajectories,
            duration=self.duration,
            sample_rate=self.sample_rate,
            initial_box=np.asarray(self.initial_box, dtype=float),
        )

    def noise(self) -> NoiseConfig | None:
        if self.noise_variance == 0.0:
            return None
        return NoiseConfig(variance=self.noise_variance, seed=self.seed)

    def diffeo_config(self) -> TrainConfig:
        return TrainConfig(
            hidden=self.hidden,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            epochs=self.epochs,
            batch_size=self.batch_size,
            holdout_fraction=self.holdout_fraction,
            alpha=self.alpha,
            weight_decay=self.weight_decay,
            seed=self.seed,
        )

    def mpc(self) -> MpcConfig:
        return MpcConfig(
            horizon=self.horizon,
            Q=np.diag(self.q_diag),
            R=np.diag(self.r_diag),
            x_min=np.asarray(self.x_min, dtype=float),
            x_max=np.asarray(self.x_max, dtype=float),
            u_min=np.asarray(self.u_min, dtype=float),
            u_max=np.asarray(self.u_max, dtype=float),
            dt=self.dt,
            terminal_weight=self.terminal_weight,
        )

    def plan_mpc(self) -> MpcConfig:
        """MPC settings for planning collection references (see plan_input_weight)."""
        return replace(
            self.mpc(),
            R=np.diag([self.plan_input_weight] * len(self.r_diag)),
            terminal_weight=self.plan_terminal_weight,
        )


# (section, key in file, attribute, type tag); file order is canonical order
_SCHEMA = (
    ("experiment", "system", "system", "str"),
    ("experiment", "seed", "seed", "int"),
    ("cartpole", "cart_mass", "cart_mass", "float"),
    ("cartpole", "pole_mass", "pole_mass", "float"),
    ("cartpole", "pole_length", "pole_length", "float"),
    ("cartpole", "gravity", "gravity", "float"),
    ("cartpole", "poles", "poles", "floats"),
    ("example", "mu", "mu", "float"),
    ("example", "lam", "lam", "float"),
    ("protocol", "n_trajectories", "n_trajectories", "int"),
    ("protocol", "duration", "duration", "float"),
    ("protocol", "sample_rate", "sample_rate", "float"),
    ("protocol", "initial_box", "initial_box", "box"),
    ("protocol", "noise_variance", "noise_variance", "float"),
    ("protocol", "plan_input_weight", "plan_input_weight", "float"),
    ("protocol", "plan_terminal_weight", "plan_terminal_weight", "float"),
    ("diffeo", "hidden", "hidden", "ints"),
    ("diffeo", "learning_rate", "learning_rate", "float"),
    ("diffeo", "momentum", "momentum", "float"),
    ("diffeo", "epochs", "epochs", "int"),
    ("diffeo", "batch_size", "batch_size", "int"),
    ("diffeo", "holdout_fraction", "holdout_fraction", "float"),
    ("diffeo", "alpha", "alpha", "float"),
    ("diffeo", "weight_decay", "weight_decay", "float"),
    ("basis", "n_functions", "n_functions", "int"),
    ("basis", "max_degree", "max_degree", "int"),
    ("basis", "margin", "margin", "float"),
    ("regression", "l1_grid", "l1_grid", "floats"),
    ("regression", "l2_grid", "l2_grid", "floats"),
    ("regression", "folds", "folds", "int"),
    ("regression", "tol", "reg_tol", "float"),
    ("regression", "max_iter", "reg_max_iter", "int"),
    ("regression", "tracking", "tracking", "bool"),
    ("rbf", "n_centers", "n_centers", "int"),
    ("mpc", "horizon", "horizon", "int"),
    ("mpc", "q_diag", "q_diag", "floats"),
    ("mpc", "r_diag", "r_diag", "floats"),
    ("mpc", "x_min", "x_min", "floats"),
    ("mpc", "x_max", "x_max", "floats"),
    ("mpc", "u_min", "u_min", "floats"),
    ("mpc", "u_max", "u_max", "floats"),
    ("mpc", "terminal_weight", "terminal_weight", "float"),
    ("mpc", "solver_tol", "solver_tol", "float"),
    ("mpc", "solver_max_iter", "solver_max_iter", "int"),
    ("eval", "n_test_trajectories", "n_test_trajectories", "int"),
    ("eval", "test_duration", "test_duration", "float"),
    ("eval", "task_x0", "task_x0", "floats"),
    ("eval", "task_duration", "task_duration", "float"),
)


def default_config(system: str = "cartpole") -> ExperimentConfig:
    """Shipped defaults per system; the cart pole carries the benchmark values."""
    if system == "cartpole":
        return ExperimentConfig()
    if system == "example":
        return ExperimentConfig(
            system="example",
            n_trajectories=100,
            duration=1.0,
            sample_rate=100.0,
            initial_box=((-1.0, 1.0), (-1.0, 1.0)),
            noise_variance=0.0,
            learning_rate=1e-3,
            n_functions=10,
            max_degree=4,
            l1_grid=(0.0, 1e-4),
            l2_grid=(0.0, 1e-4),
            q_diag=(1.0, 1.0),
            x_min=(-10.0, -10.0),
            x_max=(10.0, 10.0),
            task_x0=(0.5, 0.5),
        )
    raise ConfigError(f"unknown system {system!r}")


def _format_value(value, kind: str) -> str:
    if kind == "str":
        return str(value)
    if kind == "int":
        return str(int(value))
    if kind == "bool":
        return "true" if value else "false"
    if kind == "float":
        return format_float(value)
    if kind == "floats":
        return ",".join(format_float(v) for v in value)
    if kind == "ints":
        return ",".join(str(int(v)) for v in value)
    if kind == "box":
        return ";".join(f"{format_float(lo)},{format_float(hi)}" for lo, hi in value)
    raise AssertionError(kind)


def _parse_value(text: str, kind: str, where: str):
    try:
        if kind == "str":
            return text.strip()
        if kind == "int":
            return int(text.strip())
        if kind == "bool":
            flag = text.strip().lower()
            if flag not in ("true", "false"):
                raise ValueError("expected true or false")
            return flag == "true"
        if kind == "float":
            return float(text.strip())
        if kind == "floats":
            return tuple(float(p) for p in text.split(","))
        if kind == "ints":
            return tuple(int(p) for p in text.split(","))
        if kind == "box":
            rows = []
            for part in text.split(";"):
                lo, hi = part.split(",")
                rows.append((float(lo), float(hi)))
            return tuple(rows)
    except ValueError as err:
        raise ConfigError(f"bad value for {where}: {text.strip()!r} ({err})") from err
    raise AssertionError(kind)


def write_config(cfg: ExperimentConfig) -> str:
    """Canonical text form; its sha256 is the configuration's identity."""
    lines = []
    current = None
    for section, key, attr, kind in _SCHEMA:
        if section != current:
            if current is not None:
                lines.append("")
            lines.append(f"[{section}]")
            current = section
        lines.append(f"{key} = {_format_value(getattr(cfg, attr), kind)}")
    return "\n".join(lines) + "\n"


def read_config(text: str) -> ExperimentConfig:
    """Parse a config file; unknown sections or keys are errors."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ConfigError(f"cannot parse config: {err}") from err

    known = {(section, key): (attr, kind) for section, key, attr, kind in _SCHEMA}
    unknown = []
    for section in parser.sections():
        for key in parser[section]:
            if (section, key) not in known:
                unknown.append(f"[{section}] {key}")
    if unknown:
        raise ConfigError("unknown config keys: " + ", ".join(sorted(unknown)))

    system = "cartpole"
    if parser.has_option("experiment", "system"):
        system = parser.get("experiment", "system").strip()
    base = default_config(system)
    values = {}
    for section, key, attr, kind in _SCHEMA:
        if parser.has_option(section, key):
            values[attr] = _parse_value(parser.get(section, key), kind, f"[{section}] {key}")
    try:
        return replace(base, **values)
    except ConfigError:
        raise
    except ValueError as err:
        raise ConfigError(str(err)) from err


def save_config(path, cfg: ExperimentConfig) -> None:
    with open(path, "w") as fh:
        fh.write(write_config(cfg))


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return read_config(fh.read())


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(write_config(cfg).encode("utf-8")).hexdigest()
