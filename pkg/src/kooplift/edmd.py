"""Snapshot datasets, regression data matrices, and lifted linear models.

A lifted model advances ``z = [x; phi(x)]`` linearly: ``zdot = A z + B u``,
``x = C z``. Two fitting routes are provided:

* :func:`fit_keedmd` exploits eigenfunction structure. Positions integrate
  velocities exactly, velocity rows are regressed on the full lifted state,
  and each eigenfunction row is diagonal with its known eigenvalue plus an
  input coupling, closing the loop over the nominal feedback:

      A = [ 0        I        0      ]      B = [B_p  ]
          [ A_vp     A_vv     A_vphi ]          [B_v  ]
          [-B_phi K  0        Lambda ]          [B_phi]

* :func:`fit_edmd_rbf` is the unstructured baseline: one joint regression of
  the lifted-state derivative on lifted state and input over a radial basis
  function dictionary, with ``C`` fitted by least squares.

Derivatives come from the samples themselves (second-order finite
differences per trajectory), never from the simulator.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .koopman import EigenfunctionBasis
from .linalg import elastic_net_multi, expm, lstsq, ridge
from .util import dump_json, format_float, load_json


@dataclass
class Trajectory:
    """One uniformly sampled closed-loop trajectory.

    ``u`` is the applied input (nominal plus perturbation), ``u_nom`` the
    nominal control alone, ``tau`` the tracked reference (None when the run
    had none).
    """

    t: np.ndarray  # (M,)
    x: np.ndarray  # (M, d)
    u: np.ndarray  # (M, m)
    u_nom: np.ndarray  # (M, m)
    tau: np.ndarray | None = None  # (M, d)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.u = np.atleast_2d(np.asarray(self.u, dtype=float))
        self.u_nom = np.atleast_2d(np.asarray(self.u_nom, dtype=float))
        if self.tau is not None:
            self.tau = np.atleast_2d(np.asarray(self.tau, dtype=float))
        M = self.t.shape[0]
        for name in ("x", "u", "u_nom", "tau"):
            arr = getattr(self, name)
            if arr is not None and arr.shape[0] != M:
                raise ValueError(f"{name} has {arr.shape[0]} rows, expected {M}")
        if self.u.shape[1] != self.u_nom.shape[1]:
            raise ValueError("u and u_nom disagree on input dimension")
        if self.tau is not None and self.tau.shape[1] != self.x.shape[1]:
            raise ValueError("tau and x disagree on state dimension")
        if M < 2:
            raise ValueError("a trajectory needs at least two samples")
        dts = np.diff(self.t)
        if np.max(np.abs(dts - dts[0])) > 1e-9 * max(abs(dts[0]), 1.0):
            raise ValueError("samples are not uniformly spaced")
        if dts[0] <= 0:
            raise ValueError("time must be strictly increasing")
        for name in ("t", "x", "u", "u_nom", "tau"):
            arr = getattr(self, name)
            if arr is not None and not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])


@dataclass
class SnapshotDataset:
    """Trajectories sharing sample rate and dimensions."""

    trajectories: list

    def __post_init__(self):
        if not self.trajectories:
            raise ValueError("dataset has no trajectories")
        first = self.trajectories[0]
        for traj in self.trajectories[1:]:
            if abs(traj.dt - first.dt) > 1e-12:
                raise ValueError("trajectories disagree on sample interval")
            if traj.x.shape[1] != first.x.shape[1] or traj.u.shape[1] != first.u.shape[1]:
                raise ValueError("trajectories disagree on dimensions")

    @property
    def dt(self) -> float:
        return self.trajectories[0].dt

    @property
    def state_dim(self) -> int:
        return self.trajectories[0].x.shape[1]

    @property
    def input_dim(self) -> int:
        return self.trajectories[0].u.shape[1]

    def __len__(self) -> int:
        return len(self.trajectories)


def numerical_derivative(Y: np.ndarray, dt: float) -> np.ndarray:
    """Second-order finite differences along axis 0.

    Central differences in the interior, one-sided three-point stencils at
    both ends; needs at least three samples.
    """
    Y = np.asarray(Y, dtype=float)
    single = Y.ndim == 1
    Y = Y[:, None] if single else Y
    if Y.shape[0] < 3:
        raise ValueError("need at least three samples to differentiate")
    D = np.empty_like(Y)
    D[1:-1] = (Y[2:] - Y[:-2]) / (2.0 * dt)
    D[0] = (-3.0 * Y[0] + 4.0 * Y[1] - Y[2]) / (2.0 * dt)
    D[-1] = (3.0 * Y[-1] - 4.0 * Y[-2] + Y[-3]) / (2.0 * dt)
    return D[:, 0] if single else D


# ---------------------------------------------------------------------------
# trajectory CSV format: header `t,x0..x{d-1},u0..u{m-1},unom0..unom{m-1}
# [,tau0..tau{d-1}]`, one row per sample, optional leading `# key=value`
# comment lines.
# ---------------------------------------------------------------------------


def write_trajectory_csv(path, traj: Trajectory, config_hash: str | None = None) -> None:
    d = traj.x.shape[1]
    m = traj.u.shape[1]
    names = (
        ["t"]
        + [f"x{i}" for i in range(d)]
        + [f"u{i}" for i in range(m)]
        + [f"unom{i}" for i in range(m)]
        + ([f"tau{i}" for i in range(d)] if traj.tau is not None else [])
    )
    blocks = [traj.t[:, None], traj.x, traj.u, traj.u_nom]
    if traj.tau is not None:
        blocks.append(traj.tau)
    table = np.hstack(blocks)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        if config_hash is not None:
            fh.write(f"# config_hash={config_hash}\n")
        fh.write(",".join(names) + "\n")
        for row in table:
            fh.write(",".join(format_float(v) for v in row) + "\n")


def read_trajectory_csv(path) -> Trajectory:
    comments = {}
    header = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                match = re.match(r"#\s*(\w+)\s*=\s*(\S+)", line)
                if match:
                    comments[match.group(1)] = match.group(2)
                continue
            if header is None:
                header = [c.strip() for c in line.split(",")]
                continue
            rows.append([float(v) for v in line.split(",")])
    if header is None:
        raise ValueError(f"{path}: no header row")
    table = np.array(rows, dtype=float)
    if table.shape[1] != len(header):
        raise ValueError(f"{path}: rows do not match header width")
    counts = {key: sum(1 for c in header if re.fullmatch(f"{key}\\d+", c)) for key in ("x", "u", "unom", "tau")}
    expected = (
        ["t"]
        + [f"x{i}" for i in range(counts["x"])]
        + [f"u{i}" for i in range(counts["u"])]
        + [f"unom{i}" for i in range(counts["unom"])]
        + [f"tau{i}" for i in range(counts["tau"])]
    )
    if header != expected:
        raise ValueError(f"{path}: unexpected columns {header}")
    d, m = counts["x"], counts["u"]
    cols = {}
    start = 1
    for key, width in (("x", d), ("u", m), ("unom", m), ("tau", counts["tau"])):
        cols[key] = table[:, start : start + width]
        start += width
    return Trajectory(
        t=table[:, 0],
        x=cols["x"],
        u=cols["u"],
        u_nom=cols["unom"],
        tau=cols["tau"] if counts["tau"] else None,
    )


def write_dataset(dirpath, dataset: SnapshotDataset, manifest: dict) -> None:
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    for j, traj in enumerate(dataset.trajectories):
        write_trajectory_csv(
            dirpath / f"traj_{j:03d}.csv", traj, config_hash=manifest.get("config_hash")
        )
    dump_json(manifest, dirpath / "manifest.json")


def read_dataset(dirpath):
    dirpath = Path(dirpath)
    paths = sorted(dirpath.glob("traj_*.csv"))
    if not paths:
        raise FileNotFoundError(f"no traj_*.csv files under {dirpath}")
    manifest_path = dirpath / "manifest.json"
    manifest = load_json(manifest_path) if manifest_path.exists() else None
    return SnapshotDataset([read_trajectory_csv(p) for p in paths]), manifest


@dataclass
class DataMatrices:
    """Row-aligned sample matrices pooled across trajectories."""

    X: np.ndarray
    Xdot: np.ndarray
    P: np.ndarray
    V: np.ndarray
    Pdot: np.ndarray
    Vdot: np.ndarray
    U: np.ndarray
    U_nom: np.ndarray
    Tau: np.ndarray | None
    Phi: np.ndarray | None
    Phidot: np.ndarray | None


def build_data_matrices(dataset: SnapshotDataset, basis: EigenfunctionBasis | None = None) -> DataMatrices:
    """Stack states, inputs, eigenfunction values and their sample-based
    derivatives across all trajectories."""
    d = dataset.state_dim
    if d % 2 != 0:
        raise ValueError("state must stack positions over velocities (even dimension)")
    half = d // 2
    has_tau = all(traj.tau is not None for traj in dataset.trajectories)
    use_basis = basis is not None and basis.n_functions > 0
    parts = {key: [] for key in ("X", "Xdot", "U", "U_nom", "Tau", "Phi", "Phidot")}
    for traj in dataset.trajectories:
        xdot = numerical_derivative(traj.x, traj.dt)
        parts["X"].append(traj.x)
        parts["Xdot"].append(xdot)
        parts["U"].append(traj.u)
        parts["U_nom"].append(traj.u_nom)
        if has_tau:
            parts["Tau"].append(traj.tau)
        if use_basis:
            phi = basis.evaluate(traj.x)
            parts["Phi"].append(phi)
            parts["Phidot"].append(numerical_derivative(phi, traj.dt))
    X = np.vstack(parts["X"])
    Xdot = np.vstack(parts["Xdot"])
    return DataMatrices(
        X=X,
        Xdot=Xdot,
        P=X[:, :half],
        V=X[:, half:],
        Pdot=Xdot[:, :half],
        Vdot=Xdot[:, half:],
        U=np.vstack(parts["U"]),
        U_nom=np.vstack(parts["U_nom"]),
        Tau=np.vstack(parts["Tau"]) if has_tau else None,
        Phi=np.vstack(parts["Phi"]) if use_basis else None,
        Phidot=np.vstack(parts["Phidot"]) if use_basis else None,
    )


def _fit(X, Y, l1, l2, tol, max_iter):
    """Per-column penalized regression; closed form when the l1 term is off."""
    Y = np.asarray(Y, dtype=float)
    Y2 = Y if Y.ndim == 2 else Y[:, None]
    if l1 == 0.0:
        coef = ridge(X, Y2, l2)
    else:
        coef = elastic_net_multi(X, Y2, l1, l2, tol=tol, max_iter=max_iter)
    return coef  # (p, q)


@dataclass(frozen=True)
class RbfDictionary:
    """Gaussian radial basis functions plus nothing else; the raw state is
    appended by the lifted model itself."""

    centers: np.ndarray  # (N, d)
    bandwidth: float

    @property
    def n_functions(self) -> int:
        return self.centers.shape[0]

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        diff = X[:, None, :] - self.centers[None, :, :]
        sq = np.sum(diff * diff, axis=2)
        out = np.exp(-sq / (2.0 * self.bandwidth**2))
        return out[0] if single else out

    def to_dict(self) -> dict:
        return {"centers": self.centers.tolist(), "bandwidth": self.bandwidth}

    @staticmethod
    def from_dict(data: dict) -> "RbfDictionary":
        return RbfDictionary(
            centers=np.array(data["centers"], dtype=float), bandwidth=float(data["bandwidth"])
        )


def rbf_from_box(n_centers: int, low, high, rng: np.random.Generator) -> RbfDictionary:
    """Centers drawn uniformly over a box; bandwidth from the median pairwise
    center distance."""
    low = np.asarray(low, dtype=float)
    high = np.asarray(high, dtype=float)
    centers = rng.uniform(low, high, size=(n_centers, low.size))
    if n_centers >= 2:
        diff = centers[:, None, :] - centers[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=2))
        bandwidth = float(np.median(dist[np.triu_indices(n_centers, k=1)]))
    else:
        bandwidth = 1.0
    return RbfDictionary(centers=centers, bandwidth=bandwidth)


@dataclass
class LiftedLinearModel:
    """Linear dynamics on the lifted state ``z = [x; phi(x)]``.

    ``dt`` is None for a continuous-time model; :func:`discretize` produces
    the zero-order-hold discrete counterpart.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    kind: str  # "keedmd" | "edmd_rbf" | "nominal"
    lifting: object | None = None  # EigenfunctionBasis | RbfDictionary | None
    dt: float | None = None
    gain: np.ndarray | None = None  # nominal feedback active in the data
    config_hash: str | None = None
    meta: dict = field(default_factory=dict)

    @property
    def lifted_dim(self) -> int:
        return self.A.shape[0]

    @property
    def state_dim(self) -> int:
        return self.C.shape[0]

    @property
    def input_dim(self) -> int:
        return self.B.shape[1]

    def lift(self, X: np.ndarray) -> np.ndarray:
        """Map states to lifted states (appends basis values, if any)."""
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if self.lifting is None or self.lifting.n_functions == 0:
            Z = X
        else:
            Z = np.hstack([X, self.lifting.evaluate(X)])
        if Z.shape[1] != self.lifted_dim:
            raise ValueError(f"lifted dimension mismatch: {Z.shape[1]} != {self.lifted_dim}")
        return Z[0] if single else Z


def nominal_model(A: np.ndarray, B: np.ndarray, config_hash: str | None = None) -> LiftedLinearModel:
    """Wrap plain linearized dynamics as a (trivially) lifted model."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    return LiftedLinearModel(
        A=A, B=B, C=np.eye(A.shape[0]), kind="nominal", config_hash=config_hash
    )


def fit_keedmd(
    dataset: SnapshotDataset,
    basis: EigenfunctionBasis | None,
    gain: np.ndarray,
    l1: float = 0.0,
    l2: float = 0.0,
    tracking: bool = False,
    tol: float = 1e-8,
    max_iter: int = 100_000,
    config_hash: str | None = None,
) -> LiftedLinearModel:
    """Fit the structured lifted model.

    Three independent regressions: position-row input correction ``B_p`` from
    ``pdot - v`` on ``u``; velocity rows on ``[p v phi u]``; eigenfunction-row
    input coupling ``B_phi`` from ``phidot - Lambda phi`` on the input
    perturbation. In ``tracking`` mode the perturbation is measured against
    pure state feedback, ``u - K [p; v]``; otherwise against the recorded
    nominal input.
    """
    gain = np.atleast_2d(np.asarray(gain, dtype=float))
    data = build_data_matrices(dataset, basis)
    d = dataset.state_dim
    m = dataset.input_dim
    half = d // 2
    N = 0 if basis is None else basis.n_functions
    if gain.shape != (m, d):
        raise ValueError(f"gain shape {gain.shape}, expected {(m, d)}")

    Bp = _fit(data.U, data.Pdot - data.V, l1, l2, tol, max_iter).T  # (half, m)
    vel_regressors = [data.P, data.V] + ([data.Phi] if N else []) + [data.U]
    coef_v = _fit(np.hstack(vel_regressors), data.Vdot, l1, l2, tol, max_iter).T
    Av = coef_v[:, : d + N]  # (half, d+N)
    Bv = coef_v[:, d + N :]  # (half, m)

    if N:
        if tracking:
            U_eff = data.U - data.X @ gain.T
        else:
            U_eff = data.U - data.U_nom
        Yphi = data.Phidot - data.Phi * basis.eigenvalues[None, :]
        if np.max(np.abs(U_eff)) <= 1e-12:
            warnings.warn(
                "input matches the nominal feedback everywhere; no excitation "
                "to identify the eigenfunction input coupling, using zeros"
            )
            Bphi = np.zeros((N, m))
        else:
            Bphi = _fit(U_eff, Yphi, l1, l2, tol, max_iter).T  # (N, m)

    n = d + N
    A = np.zeros((n, n))
    A[:half, half:d] = np.eye(half)
    A[half:d, : d + N] = Av
    B_rows = [Bp, Bv]
    if N:
        A[d:, :d] = -Bphi @ gain
        A[d:, d:] = np.diag(basis.eigenvalues)
        B_rows.append(Bphi)
    B = np.vstack(B_rows)
    C = np.hstack([np.eye(d), np.zeros((d, N))])
    return LiftedLinearModel(
        A=A,
        B=B,
        C=C,
        kind="keedmd",
        lifting=basis if N else None,
        gain=gain,
        config_hash=config_hash,
    )


def fit_edmd_rbf(
    dataset: SnapshotDataset,
    dictionary: RbfDictionary,
    l1: float = 0.0,
    l2: float = 0.0,
    tol: float = 1e-8,
    max_iter: int = 100_000,
    config_hash: str | None = None,
) -> LiftedLinearModel:
    """Fit the unstructured baseline over ``z = [x; rbf(x)]``.

    One joint regression of the lifted-state derivative on ``[z u]`` gives
    ``[A B]``; the output map ``C`` is fitted by least squares rather than
    assumed, even though the raw state sits inside the lift.
    """
    Z_parts, Zdot_parts, U_parts, X_parts = [], [], [], []
    for traj in dataset.trajectories:
        z = np.hstack([traj.x, dictionary.evaluate(traj.x)])
        Z_parts.append(z)
        Zdot_parts.append(numerical_derivative(z, traj.dt))
        U_parts.append(traj.u)
        X_parts.append(traj.x)
    Z = np.vstack(Z_parts)
    Zdot = np.vstack(Zdot_parts)
    U = np.vstack(U_parts)
    Xs = np.vstack(X_parts)
    n = Z.shape[1]
    coef = _fit(np.hstack([Z, U]), Zdot, l1, l2, tol, max_iter)  # (n+m, n)
    A = coef[:n].T
    B = coef[n:].T
    C = lstsq(Z, Xs).T  # (d, n)
    return LiftedLinearModel(
        A=A, B=B, C=C, kind="edmd_rbf", lifting=dictionary, config_hash=config_hash
    )


def discretize(model: LiftedLinearModel, dt: float) -> LiftedLinearModel:
    """Zero-order-hold discretization via the augmented matrix exponential."""
    if model.dt is not None:
        raise ValueError("model is already discrete")
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = model.lifted_dim
    m = model.input_dim
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = model.A * dt
    aug[:n, n:] = model.B * dt
    E = expm(aug)
    return LiftedLinearModel(
        A=E[:n, :n],
        B=E[:n, n:],
        C=model.C,
        kind=model.kind,
        lifting=model.lifting,
        dt=dt,
        gain=model.gain,
        config_hash=model.config_hash,
        meta=dict(model.meta),
    )


def predict_openloop(model: LiftedLinearModel, x0: np.ndarray, U: np.ndarray):
    """Replay an input sequence through a discrete lifted model.

    Returns ``(states, overflowed)`` where states is (len(U)+1, d) starting at
    ``x0``. A state magnitude beyond 1e6 flags the trajectory as overflowed;
    remaining rows hold the last finite prediction instead of crashing.
    """
    if model.dt is None:
        raise ValueError("discretize the model before prediction")
    U = np.atleast_2d(np.asarray(U, dtype=float))
    z = model.lift(np.asarray(x0, dtype=float))
    states = np.empty((U.shape[0] + 1, model.state_dim))
    states[0] = model.C @ z
    overflowed = False
    for k, u in enumerate(U):
        z = model.A @ z + model.B @ u
        if not np.all(np.isfinite(z)) or np.max(np.abs(z)) > 1e6:
            overflowed = True
            states[k + 1 :] = states[k]
            break
        states[k + 1] = model.C @ z
    return states, overflowed


def model_to_dict(model: LiftedLinearModel) -> dict:
    if isinstance(model.lifting, EigenfunctionBasis):
        lifting = {"type": "eigenfunction_basis", **model.lifting.to_dict()}
    elif isinstance(model.lifting, RbfDictionary):
        lifting = {"type": "rbf", **model.lifting.to_dict()}
    elif model.lifting is None:
        lifting = None
    else:
        raise TypeError(f"cannot serialize lifting of type {type(model.lifting)!r}")
    return {
        "kind": model.kind,
        "A": model.A.tolist(),
        "B": model.B.tolist(),
        "C": model.C.tolist(),
        "dt": model.dt,
        "gain": None if model.gain is None else model.gain.tolist(),
        "config_hash": model.config_hash,
        "meta": model.meta,
        "lifting": lifting,
    }


def model_from_dict(data: dict) -> LiftedLinearModel:
    lifting_data = data.get("lifting")
    if lifting_data is None:
        lifting = None
    elif lifting_data["type"] == "eigenfunction_basis":
        lifting = EigenfunctionBasis.from_dict(lifting_data)
    elif lifting_data["type"] == "rbf":
        lifting = RbfDictionary.from_dict(lifting_data)
    else:
        raise ValueError(f"unknown lifting type {lifting_data['type']!r}")
    return LiftedLinearModel(
        A=np.array(data["A"], dtype=float),
        B=np.array(data["B"], dtype=float),
        C=np.array(data["C"], dtype=float),
        kind=data["kind"],
        lifting=lifting,
        dt=data.get("dt"),
        gain=None if data.get("gain") is None else np.array(data["gain"], dtype=float),
        config_hash=data.get("config_hash"),
        meta=data.get("meta", {}),
    )


def save_model(path, model: LiftedLinearModel) -> None:
    dump_json(model_to_dict(model), path)


def load_model(path) -> LiftedLinearModel:
    return model_from_dict(load_json(path))
