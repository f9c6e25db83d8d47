"""Pipeline commands: collect, train, evaluate open loop, evaluate MPC, report.

Each command reads and writes a fixed layout under one output directory:

    data/     traj_000.csv ... + manifest.json
    models/   basis.json, keedmd.json, edmd_rbf.json, nominal.json,
              training_report.json
    eval/     openloop.csv/.json, mpc_trajectories.csv, mpc.json
    report/   report.txt, fig_openloop.csv/.png, fig_tracking.csv/.png

Every artifact records the sha256 of the canonical config text, and commands
that consume artifacts refuse a hash mismatch unless explicitly overridden.
Wall-clock runtimes appear only in the eval JSON files so that datasets,
models, and CSVs are bitwise reproducible for a fixed seed.
"""

from __future__ import annotations

import math
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, config_hash
from .control import MpcController, generate_reference, place_poles
from .diffeo import train_diffeo
from .linalg import NotConverged
from .edmd import (
    SnapshotDataset,
    build_data_matrices,
    discretize,
    fit_edmd_rbf,
    fit_keedmd,
    load_model,
    nominal_model,
    numerical_derivative,
    predict_openloop,
    read_dataset,
    rbf_from_box,
    save_model,
    write_dataset,
)
from .koopman import build_basis
from .sim import (
    cartpole_field,
    cartpole_linearization,
    collect_autonomous_dataset,
    collect_dataset,
    example_field,
    example_linearization,
    rk4_step,
)
from .util import derive_rng, dump_json, format_float, load_json

MODEL_NAMES = ("keedmd", "edmd_rbf", "nominal")

CART_STATE_NAMES = ("position [m]", "angle [rad]", "velocity [m/s]", "angular rate [rad/s]")


class PipelineError(RuntimeError):
    """A numerical failure inside a pipeline stage, labeled by stage."""

    def __init__(self, stage: str, err: BaseException):
        super().__init__(f"stage {stage!r}: {err}")
        self.stage = stage


class HashMismatch(ValueError):
    """An artifact was produced under a different configuration."""


@contextmanager
def _stage(name: str):
    try:
        yield
    except (ConfigError, HashMismatch, FileNotFoundError):
        raise
    except Exception as err:
        raise PipelineError(name, err) from err


def _check_hash(found: str | None, expected: str, what: str, allow: bool) -> None:
    if found == expected or allow:
        return
    shown = "missing" if found is None else found[:12]
    raise HashMismatch(
        f"{what} carries config hash {shown}, current config hashes to "
        f"{expected[:12]}; rerun the producing command or pass --allow-hash-mismatch"
    )


def _linearized_loop(cfg: ExperimentConfig):
    """(A, B, gain, A_cl) of the nominal closed loop for the selected system."""
    if cfg.system == "cartpole":
        A, B = cartpole_linearization(cfg.cartpole())
        gain = place_poles(A, B, cfg.poles).K
        return A, B, gain, A + B @ gain
    A = example_linearization(cfg.mu, cfg.lam)
    B = np.zeros((cfg.state_dim, 1))
    gain = np.zeros((1, cfg.state_dim))
    return A, B, gain, A


def _true_field(cfg: ExperimentConfig):
    if cfg.system == "cartpole":
        return cartpole_field(cfg.cartpole())
    return example_field(cfg.mu, cfg.lam)


# ---------------------------------------------------------------------------
# collect
# ---------------------------------------------------------------------------


def cmd_collect(cfg: ExperimentConfig, out_dir) -> dict:
    """Run the collection protocol and write trajectory CSVs plus a manifest."""
    out = Path(out_dir)
    chash = config_hash(cfg)
    protocol = cfg.protocol()
    started = time.perf_counter()
    with _stage("collect"):
        if cfg.system == "cartpole":
            A, B, gain, _ = _linearized_loop(cfg)
            planner = discretize(nominal_model(A, B), cfg.dt)
            mpc_cfg = cfg.plan_mpc()

            def make_reference(x0):
                return generate_reference(
                    planner, x0, cfg.duration, mpc_cfg, cfg.solver_tol, cfg.solver_max_iter
                )

            dataset, dropped = collect_dataset(
                protocol, _true_field(cfg), gain, cfg.noise(), cfg.seed, make_reference
            )
        else:
            dataset = collect_autonomous_dataset(protocol, _true_field(cfg), cfg.seed)
            dropped = 0
            gain = np.zeros((1, cfg.state_dim))
    manifest = {
        "config_hash": chash,
        "system": cfg.system,
        "seed": cfg.seed,
        "n_trajectories": len(dataset.trajectories),
        "n_samples": protocol.n_samples,
        "dropped": dropped,
        "gain": gain.tolist(),
        "poles": list(cfg.poles) if cfg.system == "cartpole" else None,
        "protocol": {
            "n_trajectories": protocol.n_trajectories,
            "duration": protocol.duration,
            "sample_rate": protocol.sample_rate,
            "initial_box": [list(row) for row in protocol.initial_box],
            "noise_variance": cfg.noise_variance,
        },
    }
    write_dataset(out / "data", dataset, manifest)
    return {
        "path": str(out / "data"),
        "n_trajectories": len(dataset.trajectories),
        "dropped": dropped,
        "seconds": time.perf_counter() - started,
    }


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _lifted_matrices(trajectories, lift):
    """Stacked lifted states, their sample derivatives, and inputs."""
    Z, Zdot, U = [], [], []
    for traj in trajectories:
        z = lift(traj.x)
        Z.append(z)
        Zdot.append(numerical_derivative(z, traj.dt))
        U.append(traj.u)
    return np.vstack(Z), np.vstack(Zdot), np.vstack(U)


def _fold_bounds(n: int, k: int):
    edges = np.round(np.linspace(0, n, k + 1)).astype(int)
    return [(int(edges[i]), int(edges[i + 1])) for i in range(k)]


def _cross_validate(trajectories, fit, lift, l1_grid, l2_grid, k):
    """Pick (l1, l2) by k-fold validation with contiguous trajectory folds.

    The score is the mean squared residual of the fitted continuous model's
    derivative prediction, ``zdot - (A z + B u)``, on the held-out fold. Ties
    keep the first (smallest) grid entry.

    A grid point whose fit fails to converge on some fold is scored as
    infinity rather than aborting the search: near-collinear dictionary
    columns can stall the l1 solver without any useful solution existing at
    that penalty, while the closed-form l1 = 0 fits are always available.
    """
    folds = _fold_bounds(len(trajectories), k)
    held_out = [_lifted_matrices(trajectories[a:b], lift) for a, b in folds]
    table = []
    best = None
    for l1 in l1_grid:
        for l2 in l2_grid:
            scores = []
            for (a, b), (Zv, Zdotv, Uv) in zip(folds, held_out):
                try:
                    model = fit(trajectories[:a] + trajectories[b:], l1, l2)
                except NotConverged:
                    scores = [math.inf]
                    break
                resid = Zdotv - (Zv @ model.A.T + Uv @ model.B.T)
                scores.append(float(np.mean(resid * resid)))
            mean_score = float(np.mean(scores))
            table.append({
                "l1": l1, "l2": l2,
                "score": mean_score if math.isfinite(mean_score) else None,
            })
            if best is None or mean_score < best[0]:
                best = (mean_score, l1, l2)
    if not math.isfinite(best[0]):
        raise ValueError("no regularisation grid point produced a convergent fit")
    return best[1], best[2], table


def cmd_train(
    cfg: ExperimentConfig,
    out_dir,
    dataset_path=None,
    allow_hash_mismatch: bool = False,
) -> dict:
    """Train the diffeomorphism, build the basis, fit and save all models."""
    out = Path(out_dir)
    data_dir = Path(dataset_path) if dataset_path else out / "data"
    models_dir = out / "models"
    chash = config_hash(cfg)
    started = time.perf_counter()

    dataset, manifest = read_dataset(data_dir)
    _check_hash(
        manifest.get("config_hash") if manifest else None, chash, "dataset", allow_hash_mismatch
    )
    A, B, gain, A_cl = _linearized_loop(cfg)

    with _stage("differentiation"):
        data = build_data_matrices(dataset)

    with _stage("diffeo"):
        forcing = B @ gain if cfg.system == "cartpole" else None
        diffeo, history = train_diffeo(
            data.X, data.Xdot, A_cl, cfg.diffeo_config(), tau=data.Tau, forcing=forcing
        )

    with _stage("basis"):
        basis = build_basis(
            A_cl, data.X, cfg.n_functions, cfg.max_degree, cfg.margin, diffeo
        )

    trajectories = list(dataset.trajectories)

    with _stage("cross-validation"):
        # Selection budget: grid points that need more sweeps than this are
        # scored as non-convergent instead of stalling the search for the
        # full budget. Useful fits converge within a few hundred sweeps; the
        # final fit below still gets the configured budget.
        cv_iter = min(cfg.reg_max_iter, 2000)

        def keedmd_fit(train, l1, l2):
            return fit_keedmd(
                SnapshotDataset(train), basis, gain, l1, l2,
                tracking=cfg.tracking, tol=cfg.reg_tol, max_iter=cv_iter,
            )

        def keedmd_lift(X):
            return np.hstack([X, basis.evaluate(X)])

        k_l1, k_l2, k_table = _cross_validate(
            trajectories, keedmd_fit, keedmd_lift, cfg.l1_grid, cfg.l2_grid, cfg.folds
        )

        box = np.asarray(cfg.initial_box, dtype=float)
        dictionary = rbf_from_box(
            cfg.n_centers, box[:, 0], box[:, 1], derive_rng(cfg.seed, "rbf-centers")
        )

        def rbf_fit(train, l1, l2):
            return fit_edmd_rbf(
                SnapshotDataset(train), dictionary, l1, l2,
                tol=cfg.reg_tol, max_iter=cv_iter,
            )

        def rbf_lift(X):
            return np.hstack([X, dictionary.evaluate(X)])

        r_l1, r_l2, r_table = _cross_validate(
            trajectories, rbf_fit, rbf_lift, cfg.l1_grid, cfg.l2_grid, cfg.folds
        )

    with _stage("fit"):
        keedmd = fit_keedmd(
            dataset, basis, gain, k_l1, k_l2,
            tracking=cfg.tracking, tol=cfg.reg_tol, max_iter=cfg.reg_max_iter,
            config_hash=chash,
        )
        rbf_model = fit_edmd_rbf(
            dataset, dictionary, r_l1, r_l2,
            tol=cfg.reg_tol, max_iter=cfg.reg_max_iter, config_hash=chash,
        )
        nominal = nominal_model(A, B, config_hash=chash)

    models_dir.mkdir(parents=True, exist_ok=True)
    dump_json({"config_hash": chash, **basis.to_dict()}, models_dir / "basis.json")
    save_model(models_dir / "keedmd.json", keedmd)
    save_model(models_dir / "edmd_rbf.json", rbf_model)
    save_model(models_dir / "nominal.json", nominal)
    report = {
        "config_hash": chash,
        "diffeo": {
            "best_epoch": history["best_epoch"],
            "best_holdout_loss": history["best_holdout_loss"],
            "initial_holdout_loss": history["initial_holdout_loss"],
            "train_loss": history["train_loss"],
            "holdout_loss": history["holdout_loss"],
        },
        "cross_validation": {
            "keedmd": {"l1": k_l1, "l2": k_l2, "table": k_table},
            "edmd_rbf": {"l1": r_l1, "l2": r_l2, "table": r_table},
        },
    }
    dump_json(report, models_dir / "training_report.json")
    return {
        "path": str(models_dir),
        "keedmd_l1": k_l1,
        "keedmd_l2": k_l2,
        "edmd_rbf_l1": r_l1,
        "edmd_rbf_l2": r_l2,
        "diffeo_best_epoch": history["best_epoch"],
        "diffeo_holdout_loss": history["best_holdout_loss"],
        "seconds": time.perf_counter() - started,
    }


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def _load_models(cfg: ExperimentConfig, out_dir, model_paths, allow: bool) -> dict:
    chash = config_hash(cfg)
    if model_paths:
        paths = [Path(p) for p in model_paths]
    else:
        paths = [Path(out_dir) / "models" / f"{name}.json" for name in MODEL_NAMES]
    models = {}
    for path in paths:
        if not path.exists():
            raise FileNotFoundError(f"model file {path} not found; run train first")
        model = load_model(path)
        if model.kind in models:
            raise ConfigError(f"two model files of kind {model.kind!r} given")
        _check_hash(model.config_hash, chash, f"model {path.name}", allow)
        models[model.kind] = model
    missing = [name for name in MODEL_NAMES if name not in models]
    if missing:
        raise ConfigError(f"missing model kinds: {', '.join(missing)}")
    return models


def _write_curve_csv(path, chash, t, curves: dict) -> None:
    names = [name for name in MODEL_NAMES if name in curves]
    header = "t," + ",".join(f"{n}_mean,{n}_std" for n in names)
    lines = [f"# config_hash={chash}", header]
    for k in range(len(t)):
        row = [format_float(t[k])]
        for name in names:
            mean, std = curves[name]
            row.append(format_float(mean[k]))
            row.append(format_float(std[k]))
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def _write_tracking_csv(path, chash, t, reference, runs: dict, inputs: dict) -> None:
    d = reference.shape[1]
    names = [name for name in MODEL_NAMES if name in runs]
    cols = ["t"] + [f"tau{i}" for i in range(d)]
    for name in names:
        cols += [f"{name}_x{i}" for i in range(d)]
        cols += [f"{name}_u{i}" for i in range(inputs[name].shape[1])]
    lines = [f"# config_hash={chash}", ",".join(cols)]
    for k in range(len(t)):
        row = [format_float(t[k])] + [format_float(v) for v in reference[k]]
        for name in names:
            row += [format_float(v) for v in runs[name][k]]
            row += [format_float(v) for v in inputs[name][k]]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def _closed_loop(deriv, controller, x0, n_steps, dt):
    """Roll the true dynamics under an MPC controller; returns (X, U, flags)."""
    d = np.asarray(x0, dtype=float).size
    X = np.empty((n_steps, d))
    U = np.empty((n_steps, controller.model.input_dim))
    flags = 0
    x = np.asarray(x0, dtype=float).copy()
    for k in range(n_steps):
        X[k] = x
        u, info = controller.step(x, k)
        U[k] = u
        flags += int(info.flagged)
        if k < n_steps - 1:
            x = rk4_step(deriv, x, u, dt)
    return X, U, flags


def cmd_eval_openloop(
    cfg: ExperimentConfig,
    out_dir,
    model_paths=None,
    test_seed: int | None = None,
    allow_hash_mismatch: bool = False,
) -> dict:
    """Replay controls from fresh closed-loop test runs through every model.

    Test trajectories regulate the true system to the origin with an MPC on
    the nominal model; each fitted model then predicts the whole run open
    loop from the initial state and the logged inputs.
    """
    if cfg.system != "cartpole":
        raise ConfigError("open-loop evaluation is defined for the cartpole system")
    out = Path(out_dir)
    chash = config_hash(cfg)
    models = _load_models(cfg, out, model_paths, allow_hash_mismatch)
    test_seed = cfg.seed if test_seed is None else int(test_seed)
    started = time.perf_counter()

    dt = cfg.dt
    n = int(round(cfg.test_duration / dt))
    box = np.asarray(cfg.initial_box, dtype=float)
    deriv = _true_field(cfg)
    mpc_cfg = cfg.mpc()

    with _stage("test-trajectories"):
        planner = discretize(models["nominal"], dt)
        reference = np.zeros((n, cfg.state_dim))
        logs = []
        for j in range(cfg.n_test_trajectories):
            rng = derive_rng(test_seed, "test-trajectories", j)
            x0 = rng.uniform(box[:, 0], box[:, 1])
            controller = MpcController(
                planner, mpc_cfg, reference, cfg.solver_tol, cfg.solver_max_iter
            )
            X, U, _ = _closed_loop(deriv, controller, x0, n, dt)
            logs.append((X, U))

    with _stage("openloop-replay"):
        t = np.arange(n) * dt
        curves = {}
        overflow = {}
        for name, model in models.items():
            disc = discretize(model, dt)
            errs = np.empty((len(logs), n))
            overflowed = 0
            for j, (X, U) in enumerate(logs):
                pred, over = predict_openloop(disc, X[0], U[:-1])
                overflowed += int(over)
                errs[j] = np.linalg.norm(pred - X, axis=1)
            curves[name] = (errs.mean(axis=0), errs.std(axis=0))
            overflow[name] = overflowed

    eval_dir = out / "eval"
    eval_dir.mkdir(parents=True, exist_ok=True)
    _write_curve_csv(eval_dir / "openloop.csv", chash, t, curves)
    fragment = {
        "config_hash": chash,
        "test_seed": test_seed,
        "n_trajectories": cfg.n_test_trajectories,
        "duration": cfg.test_duration,
        "t": t.tolist(),
        "models": {
            name: {
                "mean": curves[name][0].tolist(),
                "std": curves[name][1].tolist(),
                "final_mean_error": float(curves[name][0][-1]),
                "overflowed": overflow[name],
            }
            for name in MODEL_NAMES
        },
        "runtime_seconds": time.perf_counter() - started,
    }
    dump_json(fragment, eval_dir / "openloop.json")
    return {
        "path": str(eval_dir / "openloop.csv"),
        "final_mean_error": {name: float(curves[name][0][-1]) for name in MODEL_NAMES},
        "overflowed": overflow,
        "seconds": fragment["runtime_seconds"],
    }


def _percent_improvement(cost_base: float, cost_new: float) -> float:
    return (cost_base - cost_new) / cost_base * 100.0


def cmd_eval_mpc(
    cfg: ExperimentConfig,
    out_dir,
    model_paths=None,
    allow_hash_mismatch: bool = False,
) -> dict:
    """Track the nominal plan with an MPC per model; compare realized costs."""
    if cfg.system != "cartpole":
        raise ConfigError("MPC evaluation is defined for the cartpole system")
    out = Path(out_dir)
    chash = config_hash(cfg)
    models = _load_models(cfg, out, model_paths, allow_hash_mismatch)
    started = time.perf_counter()

    dt = cfg.dt
    n = int(round(cfg.task_duration / dt))
    x0 = np.asarray(cfg.task_x0, dtype=float)
    deriv = _true_field(cfg)
    mpc_cfg = cfg.mpc()

    with _stage("reference"):
        planner = discretize(models["nominal"], dt)
        reference = generate_reference(
            planner, x0, cfg.task_duration, mpc_cfg, cfg.solver_tol, cfg.solver_max_iter
        )

    t = np.arange(n) * dt
    runs, inputs, costs, flagged = {}, {}, {}, {}
    for name in MODEL_NAMES:
        with _stage(f"mpc-{name}"):
            disc = discretize(models[name], dt)
            controller = MpcController(
                disc, mpc_cfg, reference, cfg.solver_tol, cfg.solver_max_iter
            )
            X, U, flags = _closed_loop(deriv, controller, x0, n, dt)
            Q, R = mpc_cfg.Q, mpc_cfg.R
            err = X - reference[:n]
            cost = float(np.sum(np.einsum("ki,ij,kj->k", err, Q, err)))
            cost += float(np.sum(np.einsum("ki,ij,kj->k", U, R, U)))
            runs[name], inputs[name], costs[name], flagged[name] = X, U, cost, flags

    improvements = {
        "keedmd_vs_nominal": _percent_improvement(costs["nominal"], costs["keedmd"]),
        "edmd_rbf_vs_nominal": _percent_improvement(costs["nominal"], costs["edmd_rbf"]),
        "keedmd_vs_edmd_rbf": _percent_improvement(costs["edmd_rbf"], costs["keedmd"]),
    }
    eval_dir = out / "eval"
    eval_dir.mkdir(parents=True, exist_ok=True)
    _write_tracking_csv(
        eval_dir / "mpc_trajectories.csv", chash, t, reference[:n], runs, inputs
    )
    result = {
        "config_hash": chash,
        "task_x0": list(cfg.task_x0),
        "task_duration": cfg.task_duration,
        "t": t.tolist(),
        "reference": reference[:n].tolist(),
        "costs": costs,
        "improvements": improvements,
        "flagged_steps": flagged,
        "trajectories": {name: runs[name].tolist() for name in MODEL_NAMES},
        "inputs": {name: inputs[name].tolist() for name in MODEL_NAMES},
        "runtime_seconds": time.perf_counter() - started,
    }
    dump_json(result, eval_dir / "mpc.json")
    return {
        "path": str(eval_dir / "mpc.json"),
        "costs": costs,
        "improvements": improvements,
        "flagged_steps": flagged,
        "seconds": result["runtime_seconds"],
    }


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def _openloop_header() -> str:
    return "t," + ",".join(f"{n}_mean,{n}_std" for n in MODEL_NAMES)


def cmd_report(out_dir) -> dict:
    """Render the evaluation outputs as text tables, figure CSVs, and figures.

    Missing evaluation files produce a headers-only report rather than an
    error, so the command is safe to run at any pipeline stage.
    """
    from . import plotting

    out = Path(out_dir)
    eval_dir = out / "eval"
    report_dir = out / "report"
    report_dir.mkdir(parents=True, exist_ok=True)

    openloop_path = eval_dir / "openloop.json"
    mpc_path = eval_dir / "mpc.json"
    openloop = load_json(openloop_path) if openloop_path.exists() else None
    mpc = load_json(mpc_path) if mpc_path.exists() else None

    lines = ["model evaluation report", "=" * 24, ""]
    figures = []

    lines.append("open-loop prediction")
    lines.append("-" * 20)
    if openloop is None:
        lines.append("(no data: run eval-openloop)")
        (report_dir / "fig_openloop.csv").write_text(_openloop_header() + "\n")
    else:
        t = np.asarray(openloop["t"], dtype=float)
        curves = {
            name: (
                np.asarray(openloop["models"][name]["mean"], dtype=float),
                np.asarray(openloop["models"][name]["std"], dtype=float),
            )
            for name in MODEL_NAMES
        }
        chash = openloop["config_hash"]
        lines.append(f"config_hash: {chash}")
        lines.append(
            f"{openloop['n_trajectories']} test trajectories of {openloop['duration']} s"
        )
        lines.append(f"{'model':<12} {'final mean error':>18} {'overflowed':>12}")
        for name in MODEL_NAMES:
            entry = openloop["models"][name]
            lines.append(
                f"{name:<12} {entry['final_mean_error']:>18.6f} {entry['overflowed']:>12d}"
            )
        _write_curve_csv(report_dir / "fig_openloop.csv", chash, t, curves)
        plotting.plot_openloop_errors(t, curves, report_dir / "fig_openloop.png")
        figures.append(str(report_dir / "fig_openloop.png"))
    lines.append("")

    lines.append("closed-loop MPC cost")
    lines.append("-" * 20)
    if mpc is None:
        lines.append("(no data: run eval-mpc)")
        (report_dir / "fig_tracking.csv").write_text("t\n")
    else:
        chash = mpc["config_hash"]
        lines.append(f"config_hash: {chash}")
        x0 = ", ".join(format_float(v) for v in mpc["task_x0"])
        lines.append(f"task: reach the origin from ({x0}) in {mpc['task_duration']} s")
        lines.append(f"{'model':<12} {'realized cost':>16} {'flagged steps':>14}")
        for name in MODEL_NAMES:
            lines.append(
                f"{name:<12} {mpc['costs'][name]:>16.4f} {mpc['flagged_steps'][name]:>14d}"
            )
        lines.append("")
        lines.append("cost change vs baseline (negative is better):")
        lines.append(f"{'comparison':<26} {'cost change':>12}")
        for pair, improvement in mpc["improvements"].items():
            lines.append(f"{pair:<26} {-improvement:>11.2f}%")
        t = np.asarray(mpc["t"], dtype=float)
        reference = np.asarray(mpc["reference"], dtype=float)
        runs = {n: np.asarray(mpc["trajectories"][n], dtype=float) for n in MODEL_NAMES}
        inputs = {n: np.asarray(mpc["inputs"][n], dtype=float) for n in MODEL_NAMES}
        _write_tracking_csv(
            report_dir / "fig_tracking.csv", chash, t, reference, runs, inputs
        )
        names = CART_STATE_NAMES if reference.shape[1] == 4 else None
        plotting.plot_tracking(
            t, reference, runs, report_dir / "fig_tracking.png", state_names=names
        )
        figures.append(str(report_dir / "fig_tracking.png"))
    lines.append("")

    (report_dir / "report.txt").write_text("\n".join(lines) + "\n")
    return {"path": str(report_dir / "report.txt"), "figures": figures}
