"""Matplotlib figures written next to the CSV outputs.

Everything renders off-screen (Agg) so the CLI works headless.
"""
import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "lines.linewidth": 1.2,
}
COLORS = {"eco-dmpc": "tab:green", "dmpc": "tab:red", "idm": "tab:blue", "hdv": "0.5"}
FOLLOWER_COLORS = ("tab:orange", "tab:purple", "tab:brown")


def _save(fig, path):
    # no timestamp in the metadata keeps repeated renders byte-stable
    fig.savefig(path, metadata={"Software": None}, bbox_inches="tight")
    plt.close(fig)
    return path


def leader_profiles(logs, path):
    """Leader speed, acceleration and gap for each strategy (HDV speed for reference)."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(3, 1, figsize=(7, 6.5), sharex=True)
        first = next(iter(logs.values()))
        n = first.n_cycle
        axes[0].plot(first.t[:n], first.hdv_speed[:n], color=COLORS["hdv"], ls="--", label="HDV")
        for name, log in logs.items():
            n = log.n_cycle
            color = COLORS.get(name.split("#")[0])
            axes[0].plot(log.t[:n], log.v[:n, 0], color=color, label=name)
            axes[1].plot(log.t[:n], log.a[:n, 0], color=color, label=name)
            axes[2].plot(log.t[:n], log.gap[:n, 0], color=color, label=name)
        axes[0].set_ylabel("speed [m/s]")
        axes[1].set_ylabel("acceleration [m/s$^2$]")
        axes[2].set_ylabel("gap to HDV [m]")
        axes[2].set_xlabel("time [s]")
        axes[0].legend(ncol=4, loc="upper right")
        return _save(fig, path)


def follower_errors(log, path):
    """Spacing error, speed error and acceleration of each follower, tail included."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(3, 1, figsize=(7, 6.5), sharex=True)
        for j in range(1, log.v.shape[1]):
            c = FOLLOWER_COLORS[(j - 1) % len(FOLLOWER_COLORS)]
            axes[0].plot(log.t, log.dd[:, j], color=c, label=f"FT{j}")
            axes[1].plot(log.t, log.dv[:, j], color=c, label=f"FT{j}")
            axes[2].plot(log.t, log.a[:, j], color=c, label=f"FT{j}")
        for ax in axes:
            ax.axvline(log.t[log.tail_start] if log.tail_start < log.n_steps else log.t[-1], color="0.6", lw=0.8, ls=":")
        axes[0].set_ylabel(r"$\Delta d$ [m]")
        axes[1].set_ylabel(r"$\Delta v$ [m/s]")
        axes[2].set_ylabel("acceleration [m/s$^2$]")
        axes[2].set_xlabel("time [s]")
        axes[0].legend(ncol=3, loc="upper right")
        axes[0].set_title(f"{log.strategy}: follower errors (dotted line: start of constant-speed tail)")
        return _save(fig, path)


def trip_overview(log, path):
    """Speeds and gaps of all four trucks for a single run."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
        axes[0].plot(log.t, log.hdv_speed, color=COLORS["hdv"], ls="--", label="HDV")
        for i in range(log.v.shape[1]):
            label = "leader" if i == 0 else f"FT{i}"
            axes[0].plot(log.t, log.v[:, i], label=label)
            axes[1].plot(log.t, log.gap[:, i], label=label)
        axes[0].set_ylabel("speed [m/s]")
        axes[1].set_ylabel("gap [m]")
        axes[1].set_xlabel("time [s]")
        axes[0].legend(ncol=5, loc="upper right")
        axes[0].set_title(log.strategy)
        return _save(fig, path)


def gap_sweep(curve, path):
    """Total platoon fuel against desired inter-truck gap."""
    gaps = [g for g, _ in curve]
    fuel = [f for _, f in curve]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(gaps, fuel, "o-", color=COLORS["eco-dmpc"])
        ax.set_xlabel("desired gap [m]")
        ax.set_ylabel("total platoon fuel [L]")
        return _save(fig, path)


def fuel_bars(report, path):
    """Per-truck trip fuel grouped by strategy."""
    names = [n for n in report.names if n in report.fuel]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 3.5))
        width = 0.8 / max(len(names), 1)
        x = np.arange(4)
        for j, n in enumerate(names):
            ax.bar(x + j * width, report.fuel[n]["per_truck"], width, label=n, color=COLORS.get(n.split("#")[0]))
        ax.set_xticks(x + 0.4 - width / 2, ["Leader", "FT1", "FT2", "FT3"])
        ax.set_ylabel("trip fuel [L]")
        ax.legend()
        return _save(fig, path)
