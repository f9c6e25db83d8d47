"""Reference systems, integration, and the data-collection protocol.

Two benchmark systems live here: a cart pole in its pinned solved form and a
two-state system with a known slow manifold, handy because its Koopman
eigenfunctions have closed forms. Closed-loop simulation applies a feedback
law plus zero-order-hold Gaussian perturbation and records everything the
regression stage needs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .edmd import SnapshotDataset, Trajectory
from .util import derive_rng


class Diverged(RuntimeError):
    """State norm left the trust region mid-simulation.

    Carries the partial logs recorded before the blow-up.
    """

    def __init__(self, step: int, t, x, u, u_nom):
        super().__init__(f"state norm exceeded 1e3 at step {step}")
        self.step = step
        self.t = t
        self.x = x
        self.u = u
        self.u_nom = u_nom


@dataclass(frozen=True)
class CartPoleParams:
    """Cart mass, pole tip mass, pole length, gravity (SI units)."""

    cart_mass: float = 1.0
    pole_mass: float = 0.1
    pole_length: float = 0.5
    gravity: float = 9.81

    def __post_init__(self):
        for name in ("cart_mass", "pole_mass", "pole_length", "gravity"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class NoiseConfig:
    """Zero-order-hold Gaussian control perturbation."""

    variance: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError("variance must be nonnegative")


@dataclass(frozen=True)
class CollectionProtocol:
    """How many runs, how long, how fast, and where they start."""

    n_trajectories: int = 40
    duration: float = 2.0
    sample_rate: float = 100.0
    initial_box: np.ndarray = None  # (d, 2) rows of [lo, hi]

    def __post_init__(self):
        box = np.asarray(self.initial_box, dtype=float)
        if box.ndim != 2 or box.shape[1] != 2:
            raise ValueError("initial_box must be (d, 2) rows of [lo, hi]")
        if np.any(box[:, 0] > box[:, 1]):
            raise ValueError("initial_box lower bounds exceed upper bounds")
        object.__setattr__(self, "initial_box", box)
        if self.n_trajectories < 1:
            raise ValueError("need at least one trajectory")
        n = self.duration * self.sample_rate
        if abs(n - round(n)) > 1e-9 or round(n) < 3:
            raise ValueError("duration times sample rate must be a whole sample count >= 3")

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))

    @property
    def state_dim(self) -> int:
        return self.initial_box.shape[0]


def cartpole_deriv(x, force: float, params: CartPoleParams) -> np.ndarray:
    """Time derivative of (position, angle, velocity, angular rate).

    The coupled pair

        (M + m) a = m l w_dot cos(theta) - m l w^2 + F
        l w_dot = g sin(theta) + a cos(theta)

    is solved algebraically for the accelerations; the denominator
    M + m sin^2(theta) never vanishes.
    """
    _, angle, vel, angrate = np.asarray(x, dtype=float)
    F = float(np.squeeze(force))
    M = params.cart_mass
    m = params.pole_mass
    length = params.pole_length
    g = params.gravity
    s = np.sin(angle)
    c = np.cos(angle)
    acc = (m * g * s * c - m * length * angrate**2 + F) / (M + m * s**2)
    angacc = (g * s + acc * c) / length
    return np.array([vel, angrate, acc, angacc])


def cartpole_linearization(params: CartPoleParams):
    """Analytic (A, B) of the solved-form dynamics at the origin."""
    M = params.cart_mass
    m = params.pole_mass
    length = params.pole_length
    g = params.gravity
    A = np.zeros((4, 4))
    A[0, 2] = 1.0
    A[1, 3] = 1.0
    A[2, 1] = m * g / M
    A[3, 1] = g * (M + m) / (M * length)
    B = np.array([[0.0], [0.0], [1.0 / M], [1.0 / (M * length)]])
    return A, B


def cartpole_field(params: CartPoleParams):
    """Wrap the cart pole as a generic ``deriv(x, u)`` with u a length-1 array."""

    def deriv(x, u):
        return cartpole_deriv(x, u[0], params)

    return deriv


def example_deriv(x, mu: float, lam: float) -> np.ndarray:
    """Two-state system with a quadratic slow manifold:
    dx1 = mu x1, dx2 = lam (x2 - x1^2)."""
    x = np.asarray(x, dtype=float)
    return np.array([mu * x[0], lam * (x[1] - x[0] ** 2)])


def example_linearization(mu: float, lam: float) -> np.ndarray:
    return np.diag([float(mu), float(lam)])


def example_eigenfunction_coefficient(mu: float, lam: float) -> float:
    """Coefficient a such that x2 + a x1^2 evolves exactly as e^{lam t}.

    Derived from the flow: x2(t) = e^{lam t} x2(0) - [lam/(2 mu - lam)]
    x1(0)^2 (e^{2 mu t} - e^{lam t}), so a = lam / (2 mu - lam). The same
    constant with opposite sign describes the invariant manifold
    x2 = -a x1^2.
    """
    if abs(2 * mu - lam) < 1e-12:
        raise ValueError("resonant pair 2*mu == lambda has no such eigenfunction")
    return lam / (2.0 * mu - lam)


def example_field(mu: float, lam: float):
    """Autonomous field as a generic ``deriv(x, u)`` (input ignored)."""

    def deriv(x, u):
        return example_deriv(x, mu, lam)

    return deriv


def rk4_step(deriv, x: np.ndarray, u: np.ndarray, dt: float) -> np.ndarray:
    """One classical fourth-order step with the input held constant."""
    k1 = deriv(x, u)
    k2 = deriv(x + 0.5 * dt * k1, u)
    k3 = deriv(x + 0.5 * dt * k2, u)
    k4 = deriv(x + dt * k3, u)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass
class SimResult:
    """Raw logs from one closed-loop run (reference handled by the caller)."""

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    u_nom: np.ndarray


def simulate_closed_loop(
    deriv,
    controller,
    x0,
    duration: float,
    dt: float,
    noise: NoiseConfig | None = None,
    rng: np.random.Generator | None = None,
) -> SimResult:
    """Roll out ``controller(x, t) -> u_nom`` with held Gaussian perturbation.

    Samples land at t = 0, dt, ..., duration - dt. The applied input is
    ``u_nom + w`` with ``w ~ N(0, variance)`` redrawn each sample and held
    over the step. Raises :class:`Diverged` with partial logs if the state
    norm passes 1e3 or stops being finite.
    """
    n = duration / dt
    if abs(n - round(n)) > 1e-9:
        raise ValueError("duration must be a whole number of steps")
    n = int(round(n))
    std = 0.0 if noise is None else float(np.sqrt(noise.variance))
    if std > 0.0 and rng is None:
        rng = np.random.default_rng(noise.seed)
    x = np.asarray(x0, dtype=float).copy()
    t = np.arange(n) * dt
    X = np.empty((n, x.size))
    U = None
    U_nom = None
    for k in range(n):
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > 1e3:
            raise Diverged(k, t[:k], X[:k], U[:k], U_nom[:k])
        X[k] = x
        u_nom = np.atleast_1d(np.asarray(controller(x, t[k]), dtype=float))
        if U is None:
            U = np.empty((n, u_nom.size))
            U_nom = np.empty((n, u_nom.size))
        w = rng.normal(0.0, std, size=u_nom.shape) if std > 0.0 else 0.0
        u = u_nom + w
        U[k] = u
        U_nom[k] = u_nom
        if k < n - 1:
            x = rk4_step(deriv, x, u, dt)
    return SimResult(t=t, x=X, u=U, u_nom=U_nom)


def collect_dataset(
    protocol: CollectionProtocol,
    deriv,
    gain: np.ndarray,
    noise: NoiseConfig | None,
    seed: int,
    make_reference,
    max_resamples: int = 3,
):
    """Run the collection protocol: sample starts, track references, log.

    Each trajectory samples an initial state uniformly from the box, asks
    ``make_reference(x0)`` for an (n_samples, d) reference to track, and runs
    the feedback ``u_nom = K (x - tau_k)`` plus perturbation. A diverged run
    is resampled (fresh start, fresh noise) up to ``max_resamples`` times,
    then dropped with a warning. Returns ``(dataset, n_dropped)``.

    The generator for trajectory j, attempt a derives from
    (seed, "collect", j, a), so trajectories are reproducible independently
    and in any order.
    """
    gain = np.atleast_2d(np.asarray(gain, dtype=float))
    d = protocol.state_dim
    dt = protocol.dt
    if gain.shape[1] != d:
        raise ValueError(f"gain has {gain.shape[1]} columns, state dimension is {d}")
    trajectories = []
    dropped = 0
    for j in range(protocol.n_trajectories):
        for attempt in range(max_resamples + 1):
            rng = derive_rng(seed, "collect", j, attempt)
            x0 = rng.uniform(protocol.initial_box[:, 0], protocol.initial_box[:, 1])
            tau = np.asarray(make_reference(x0), dtype=float)
            if tau.shape != (protocol.n_samples, d):
                raise ValueError(
                    f"reference shape {tau.shape}, expected {(protocol.n_samples, d)}"
                )

            def controller(x, t, tau=tau):
                k = min(int(round(t / dt)), tau.shape[0] - 1)
                return gain @ (x - tau[k])

            try:
                res = simulate_closed_loop(
                    deriv, controller, x0, protocol.duration, dt, noise=noise, rng=rng
                )
            except Diverged:
                continue
            trajectories.append(
                Trajectory(t=res.t, x=res.x, u=res.u, u_nom=res.u_nom, tau=tau)
            )
            break
        else:
            dropped += 1
    if dropped:
        warnings.warn(
            f"{dropped} of {protocol.n_trajectories} trajectories diverged after "
            f"{max_resamples} resamples and were dropped"
        )
    if not trajectories:
        raise Diverged(0, None, None, None, None)
    return SnapshotDataset(trajectories), dropped


def collect_autonomous_dataset(protocol: CollectionProtocol, deriv, seed: int) -> SnapshotDataset:
    """Free-decay runs with a zero scalar input column (for autonomous systems)."""
    d = protocol.state_dim

    def zero_reference(x0):
        return np.zeros((protocol.n_samples, d))

    dataset, dropped = collect_dataset(
        protocol,
        deriv,
        gain=np.zeros((1, d)),
        noise=None,
        seed=seed,
        make_reference=zero_reference,
    )
    if dropped:
        raise Diverged(0, None, None, None, None)
    # u_nom from the zero gain is exactly zero; strip the logged reference,
    # a free-decay run tracks nothing
    return SnapshotDataset(
        [Trajectory(t=tr.t, x=tr.x, u=tr.u, u_nom=tr.u_nom, tau=None) for tr in dataset.trajectories]
    )
