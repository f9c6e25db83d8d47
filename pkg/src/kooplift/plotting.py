"""Report figures: open-loop error curves and closed-loop tracking panels."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

STYLE = {
    "keedmd": ("tab:blue", "eigenfunction lift"),
    "edmd_rbf": ("tab:orange", "RBF lift"),
    "nominal": ("tab:green", "nominal linear"),
}


def _style(name: str):
    return STYLE.get(name, ("tab:gray", name))


def plot_openloop_errors(t, curves: dict, path) -> None:
    """Mean prediction error against time, one band per model.

    ``curves`` maps a model name to ``(mean, std)`` arrays aligned with ``t``.
    """
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    for name in sorted(curves):
        mean, std = (np.asarray(a, dtype=float) for a in curves[name])
        color, label = _style(name)
        ax.plot(t, mean, color=color, label=label)
        ax.fill_between(t, mean - std, mean + std, color=color, alpha=0.2, linewidth=0)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("state prediction error")
    ax.set_ylim(bottom=0.0)
    ax.legend(loc="upper left")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata={"Software": None})
    plt.close(fig)


def plot_tracking(t, reference, runs: dict, path, state_names=None) -> None:
    """Closed-loop states per model against the planned reference.

    ``runs`` maps a model name to an (n, d) state log; ``reference`` is the
    (n, d) plan all controllers were tracking.
    """
    reference = np.asarray(reference, dtype=float)
    d = reference.shape[1]
    if state_names is None:
        state_names = [f"state {i}" for i in range(d)]
    fig, axes = plt.subplots(d, 1, sharex=True, figsize=(7.0, 1.9 * d))
    axes = np.atleast_1d(axes)
    for i, ax in enumerate(axes):
        ax.plot(t, reference[:, i], color="black", linestyle="--", label="reference")
        for name in sorted(runs):
            states = np.asarray(runs[name], dtype=float)
            color, label = _style(name)
            ax.plot(t, states[:, i], color=color, label=label)
        ax.set_ylabel(state_names[i])
        ax.grid(alpha=0.3)
    axes[-1].set_xlabel("time [s]")
    axes[0].legend(loc="upper right", fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata={"Software": None})
    plt.close(fig)
