"""Learned diffeomorphism ``c(x) = x + h(x)`` between a nonlinear system and
its closed-loop linearization.

``h`` is a small tanh network trained by empirical risk minimization of

    ||Dh(x) xdot - A_cl h(x) - (A_cl x - xdot) + F tau||^2
        + alpha ||Dh(0)||_F^2

over samples ``(x, xdot[, tau])`` from closed-loop trajectories, where ``F``
is an optional forcing gain (``B K`` when the data tracked a reference).
``h(0) = 0`` holds structurally: the model output is ``net(x) - net(0)``.

The directional derivative ``Dh(x) xdot`` is computed by exact forward-mode
propagation, and gradients of the loss with respect to every weight flow
through that term as well (forward-over-reverse); no autodiff framework is
involved, so a finite-difference check pins the implementation.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .util import derive_rng


class TrainingDiverged(RuntimeError):
    """Holdout loss blew past 10x its initial value."""


@dataclass
class DiffeoModel:
    """Feedforward tanh network; all layers stored as (out, in) weight matrices.

    The modeled map is ``h(x) = net(x) - net(0)``; ``Dh = Dnet`` since the
    shift is constant.
    """

    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)

    @property
    def layer_sizes(self) -> list:
        return [self.weights[0].shape[1]] + [W.shape[0] for W in self.weights]

    def predict(self, X: np.ndarray) -> np.ndarray:
        """h(X) for states in rows; mirrors the input's 1-D/2-D shape."""
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        out = _forward(self, X)[-1]
        out0 = _forward(self, np.zeros((1, X.shape[1])))[-1]
        h = out - out0
        return h[0] if single else h

    def jvp(self, X: np.ndarray, V: np.ndarray) -> np.ndarray:
        """Directional derivative ``Dh(x) v`` per row, forward mode, exact."""
        X = np.asarray(X, dtype=float)
        V = np.asarray(V, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        V = np.atleast_2d(V)
        acts = _forward(self, X)
        jout = _forward_jvp(self, acts, V)[0]
        return jout[0] if single else jout

    def to_dict(self) -> dict:
        return {
            "activation": "tanh",
            "layer_sizes": self.layer_sizes,
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @staticmethod
    def from_dict(data: dict) -> "DiffeoModel":
        if data.get("activation", "tanh") != "tanh":
            raise ValueError(f"unsupported activation {data['activation']!r}")
        return DiffeoModel(
            weights=[np.array(W, dtype=float) for W in data["weights"]],
            biases=[np.array(b, dtype=float) for b in data["biases"]],
        )


def init_model(layer_sizes, rng: np.random.Generator) -> DiffeoModel:
    """Glorot-uniform hidden layers; the final layer starts at zero so the
    initial map is exactly ``h = 0``."""
    weights, biases = [], []
    n_layers = len(layer_sizes) - 1
    for i in range(n_layers):
        n_in, n_out = layer_sizes[i], layer_sizes[i + 1]
        if i == n_layers - 1:
            W = np.zeros((n_out, n_in))
        else:
            bound = np.sqrt(6.0 / (n_in + n_out))
            W = rng.uniform(-bound, bound, size=(n_out, n_in))
        weights.append(W)
        biases.append(np.zeros(n_out))
    return DiffeoModel(weights=weights, biases=biases)


def _forward(model: DiffeoModel, X: np.ndarray) -> list:
    """Activations [A_0 .. A_{L-1}, out]; tanh on all but the final layer."""
    acts = [X]
    n_layers = len(model.weights)
    for i in range(n_layers - 1):
        acts.append(np.tanh(acts[-1] @ model.weights[i].T + model.biases[i]))
    acts.append(acts[-1] @ model.weights[-1].T + model.biases[-1])
    return acts


def _forward_jvp(model: DiffeoModel, acts: list, V: np.ndarray):
    """Forward-mode sweep along `acts`; returns (jout, T, S) caches.

    T[i] is the tangent entering layer i, S[i] the pre-activation tangent of
    hidden layer i.
    """
    T = [V]
    S = []
    n_layers = len(model.weights)
    for i in range(n_layers - 1):
        S_i = T[-1] @ model.weights[i].T
        S.append(S_i)
        T.append((1.0 - acts[i + 1] ** 2) * S_i)
    jout = T[-1] @ model.weights[-1].T
    return jout, T, S


def _backward(model: DiffeoModel, acts: list, jcache, Gh, Gj, gW, gb) -> None:
    """Accumulate gradients for output cotangent Gh and jvp cotangent Gj.

    Reverse sweep over both the plain forward graph and the forward-mode
    tangent graph; the tangent path feeds back into the activation cotangent
    through the tanh-derivative factors (the mixed second-order path).
    """
    n_layers = len(model.weights)
    last = n_layers - 1
    if Gh is not None:
        gW[last] += Gh.T @ acts[last]
        gb[last] += Gh.sum(axis=0)
        Gamma = Gh @ model.weights[last]
    else:
        Gamma = None
    if Gj is not None:
        _, T, S = jcache
        gW[last] += Gj.T @ T[last]
        TauC = Gj @ model.weights[last]
    else:
        TauC = None
    for i in range(n_layers - 2, -1, -1):
        D = 1.0 - acts[i + 1] ** 2
        if TauC is not None:
            Cs = D * TauC
            extra = -2.0 * acts[i + 1] * S[i] * TauC
            Gamma = extra if Gamma is None else Gamma + extra
        Delta = D * Gamma
        gW[i] += Delta.T @ acts[i]
        gb[i] += Delta.sum(axis=0)
        if TauC is not None:
            gW[i] += Cs.T @ T[i]
        if i > 0:
            Gamma = Delta @ model.weights[i]
            if TauC is not None:
                TauC = Cs @ model.weights[i]


def _residual(model, X, Xdot, A_cl, tau, forcing, caches=False):
    """E = Dh(x) xdot - A_cl h(x) - (A_cl x - xdot) [+ F tau], rowwise."""
    acts = _forward(model, X)
    jcache = _forward_jvp(model, acts, Xdot)
    acts0 = _forward(model, np.zeros((1, X.shape[1])))
    h = acts[-1] - acts0[-1]
    E = jcache[0] - h @ A_cl.T - (X @ A_cl.T - Xdot)
    if tau is not None:
        if forcing is None:
            raise ValueError("tau given without a forcing gain")
        E = E + tau @ forcing.T
    if caches:
        return E, acts, jcache, acts0
    return E


def _jacobian_penalty_cache(model: DiffeoModel, d: int):
    """Forward/jvp caches at the origin along all coordinate directions."""
    acts0 = _forward(model, np.zeros((d, d)))
    jcache0 = _forward_jvp(model, acts0, np.eye(d))
    return acts0, jcache0


def diffeo_loss(
    model: DiffeoModel,
    X: np.ndarray,
    Xdot: np.ndarray,
    A_cl: np.ndarray,
    tau: np.ndarray | None = None,
    forcing: np.ndarray | None = None,
    alpha: float = 1.0,
) -> float:
    """Mean conjugacy residual plus the Jacobian-at-origin penalty.

    Returns ``mean_k ||E_k||^2 + alpha ||Dh(0)||_F^2``. Invariant to sample
    order up to floating-point summation.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Xdot = np.atleast_2d(np.asarray(Xdot, dtype=float))
    A_cl = np.asarray(A_cl, dtype=float)
    E = _residual(model, X, Xdot, A_cl, tau, forcing)
    data = float(np.sum(E * E)) / X.shape[0]
    if alpha == 0.0:
        return data
    J0 = _jacobian_penalty_cache(model, X.shape[1])[1][0]
    return data + alpha * float(np.sum(J0 * J0))


def loss_and_grad(
    model: DiffeoModel,
    X: np.ndarray,
    Xdot: np.ndarray,
    A_cl: np.ndarray,
    tau: np.ndarray | None = None,
    forcing: np.ndarray | None = None,
    alpha: float = 1.0,
    weight_decay: float = 0.0,
):
    """Total training loss and its exact gradients.

    Total = mean ||E||^2 + alpha ||Dh(0)||_F^2 + (weight_decay/2) sum ||W_l||^2.
    Returns (loss, gW list, gb list).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Xdot = np.atleast_2d(np.asarray(Xdot, dtype=float))
    A_cl = np.asarray(A_cl, dtype=float)
    B = X.shape[0]
    d = X.shape[1]
    E, acts, jcache, acts0 = _residual(model, X, Xdot, A_cl, tau, forcing, caches=True)
    loss = float(np.sum(E * E)) / B

    gW = [np.zeros_like(W) for W in model.weights]
    gb = [np.zeros_like(b) for b in model.biases]
    GE = (2.0 / B) * E
    # batch term: through net(x) (h path) and through the directional derivative
    _backward(model, acts, jcache, Gh=-(GE @ A_cl), Gj=GE, gW=gW, gb=gb)
    # the subtracted net(0) inside h
    _backward(model, acts0, None, Gh=(GE @ A_cl).sum(axis=0, keepdims=True), Gj=None, gW=gW, gb=gb)
    if alpha != 0.0:
        acts_p, jcache_p = _jacobian_penalty_cache(model, d)
        J0 = jcache_p[0]
        loss += alpha * float(np.sum(J0 * J0))
        _backward(model, acts_p, jcache_p, Gh=None, Gj=2.0 * alpha * J0, gW=gW, gb=gb)
    if weight_decay != 0.0:
        for i, W in enumerate(model.weights):
            loss += 0.5 * weight_decay * float(np.sum(W * W))
            gW[i] += weight_decay * W
    return loss, gW, gb


@dataclass
class TrainConfig:
    hidden: tuple = (50, 50, 50)
    learning_rate: float = 1e-3
    momentum: float = 0.9
    epochs: int = 200
    batch_size: int = 128
    holdout_fraction: float = 0.2
    alpha: float = 1.0
    weight_decay: float = 1e-6
    seed: int = 0


def train_diffeo(
    X: np.ndarray,
    Xdot: np.ndarray,
    A_cl: np.ndarray,
    config: TrainConfig,
    tau: np.ndarray | None = None,
    forcing: np.ndarray | None = None,
):
    """Fit the diffeomorphism by minibatch SGD with momentum.

    Splits off a holdout set, tracks the holdout loss every epoch, and returns
    the weights from the best holdout epoch.

    Returns
    -------
    (DiffeoModel, dict)
        The best model and a history dict with per-epoch train/holdout losses
        and the selected epoch.

    Raises
    ------
    TrainingDiverged
        If the holdout loss exceeds 10x its initial value.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Xdot = np.atleast_2d(np.asarray(Xdot, dtype=float))
    A_cl = np.asarray(A_cl, dtype=float)
    n, d = X.shape
    if Xdot.shape != X.shape:
        raise ValueError(f"Xdot shape {Xdot.shape} does not match X {X.shape}")
    if tau is not None and tau.shape != X.shape:
        raise ValueError(f"tau shape {tau.shape} does not match X {X.shape}")

    perm = derive_rng(config.seed, "diffeo-holdout").permutation(n)
    n_hold = int(round(config.holdout_fraction * n))
    hold_idx, train_idx = perm[:n_hold], perm[n_hold:]
    if train_idx.size == 0:
        raise ValueError("holdout fraction leaves no training samples")
    eval_idx = hold_idx if hold_idx.size else train_idx

    def holdout_loss(m):
        return diffeo_loss(
            m,
            X[eval_idx],
            Xdot[eval_idx],
            A_cl,
            tau=None if tau is None else tau[eval_idx],
            forcing=forcing,
            alpha=config.alpha,
        )

    model = init_model([d, *config.hidden, d], derive_rng(config.seed, "diffeo-init"))
    vel_W = [np.zeros_like(W) for W in model.weights]
    vel_b = [np.zeros_like(b) for b in model.biases]
    initial = holdout_loss(model)
    best = (initial, copy.deepcopy(model), 0)
    history = {"train_loss": [], "holdout_loss": [initial], "initial_holdout_loss": initial}

    batch_rng = derive_rng(config.seed, "diffeo-batches")
    for epoch in range(1, config.epochs + 1):
        order = batch_rng.permutation(train_idx.size)
        epoch_loss = 0.0
        for start in range(0, order.size, config.batch_size):
            idx = train_idx[order[start : start + config.batch_size]]
            loss, gW, gb = loss_and_grad(
                model,
                X[idx],
                Xdot[idx],
                A_cl,
                tau=None if tau is None else tau[idx],
                forcing=forcing,
                alpha=config.alpha,
                weight_decay=config.weight_decay,
            )
            epoch_loss += loss * idx.size
            for i in range(len(model.weights)):
                vel_W[i] = config.momentum * vel_W[i] - config.learning_rate * gW[i]
                vel_b[i] = config.momentum * vel_b[i] - config.learning_rate * gb[i]
                model.weights[i] = model.weights[i] + vel_W[i]
                model.biases[i] = model.biases[i] + vel_b[i]
        hold = holdout_loss(model)
        history["train_loss"].append(epoch_loss / train_idx.size)
        history["holdout_loss"].append(hold)
        if hold < best[0]:
            best = (hold, copy.deepcopy(model), epoch)
        if not np.isfinite(hold) or hold > 10.0 * max(initial, 1e-12):
            raise TrainingDiverged(
                f"holdout loss {hold:.3e} exceeds 10x initial {initial:.3e} at epoch {epoch}"
            )
    history["best_epoch"] = best[2]
    history["best_holdout_loss"] = best[0]
    return best[1], history
