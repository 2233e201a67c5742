"""Render figures from run artifacts: queue traces, rewards, the V frontier.

Consumes the CSV/JSON files a run directory already contains and writes PNG
files alongside them. Purely cosmetic — nothing here feeds back into the
simulation or its tests.
"""

from __future__ import annotations

import csv
import glob
import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _read_csv(path: str) -> dict[str, list[float]]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    cols: dict[str, list[float]] = {name: [] for name in reader.fieldnames or []}
    for row in reader:
        for name, value in row.items():
            cols[name].append(float(value))
    return cols


def _save(fig, path: str, written: list[str]) -> None:
    fig.savefig(path, dpi=130, bbox_inches="tight")
    plt.close(fig)
    written.append(path)


def render_trace_figures(trace_path: str, out_dir: str, written: list[str]) -> None:
    cols = _read_csv(trace_path)
    if not cols:
        return
    stem = os.path.splitext(os.path.basename(trace_path))[0]
    slots = cols["slot"]
    devices = sorted(int(c.split("_")[-1]) for c in cols if c.startswith("q_local_"))

    fig, axes = plt.subplots(3, 1, figsize=(8, 8), sharex=True)
    for k in devices:
        axes[0].plot(slots, cols[f"q_local_{k}"], lw=0.7, label=f"local {k}")
        axes[0].plot(slots, cols[f"q_remote_{k}"], lw=0.7, ls="--", label=f"remote {k}")
        axes[1].plot(slots, cols[f"z_{k}"], lw=0.8, label=f"device {k}")
        axes[2].plot(slots, cols[f"accuracy_{k}"], lw=0.7, label=f"device {k}")
    axes[0].set_ylabel("patterns")
    axes[0].legend(fontsize=7, ncol=2)
    axes[1].set_ylabel("accuracy deficit queue")
    axes[2].set_ylabel("accuracy")
    axes[2].set_xlabel("slot")
    fig.suptitle(stem)
    _save(fig, os.path.join(out_dir, f"{stem}_queues.png"), written)

    fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    axes[0].plot(slots, cols["reward"], lw=0.6)
    axes[0].set_ylabel("reward")
    total_power = [sum(cols[f"tx_power_w_{k}"][i] for k in devices) for i in range(len(slots))]
    axes[1].plot(slots, total_power, lw=0.6, color="tab:red")
    axes[1].set_ylabel("transmit power [W]")
    axes[1].set_xlabel("slot")
    fig.suptitle(stem)
    _save(fig, os.path.join(out_dir, f"{stem}_reward_power.png"), written)


def render_curve_figure(curve_path: str, out_dir: str, written: list[str]) -> None:
    cols = _read_csv(curve_path)
    if not cols.get("episode"):
        return
    stem = os.path.splitext(os.path.basename(curve_path))[0]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(cols["end_step"], cols["mean_reward"], lw=1.0)
    ax.set_xlabel("environment step")
    ax.set_ylabel("episode mean reward")
    ax.set_title(stem)
    _save(fig, os.path.join(out_dir, f"{stem}.png"), written)


def render_frontier_figure(frontier_path: str, out_dir: str, written: list[str]) -> None:
    cols = _read_csv(frontier_path)
    if not cols.get("v"):
        return
    stem = os.path.splitext(os.path.basename(frontier_path))[0]
    fig, ax = plt.subplots(figsize=(6, 5))
    ax.scatter(cols["avg_power_w"], [d * 1e3 for d in cols["littles_delay_s"]], c="tab:blue")
    for v, x, y in zip(cols["v"], cols["avg_power_w"], cols["littles_delay_s"]):
        ax.annotate(f"V={v:.3g}", (x, y * 1e3), fontsize=8,
                    textcoords="offset points", xytext=(4, 4))
    ax.set_xlabel("average transmit power [W]")
    ax.set_ylabel("average E2E delay [ms]")
    ax.set_xscale("log")
    ax.set_title("delay vs power trade-off")
    _save(fig, os.path.join(out_dir, f"{stem}.png"), written)


def render_run_dir(run_dir: str, out_dir: str | None = None) -> list[str]:
    """Render every recognized artifact in run_dir; returns written paths."""
    out_dir = out_dir or run_dir
    os.makedirs(out_dir, exist_ok=True)
    written: list[str] = []
    for path in sorted(glob.glob(os.path.join(run_dir, "trace_*.csv"))):
        render_trace_figures(path, out_dir, written)
    for path in sorted(glob.glob(os.path.join(run_dir, "curve_*.csv"))):
        render_curve_figure(path, out_dir, written)
    for path in sorted(glob.glob(os.path.join(run_dir, "frontier_*.csv"))):
        render_frontier_figure(path, out_dir, written)
    for path in sorted(glob.glob(os.path.join(run_dir, "summary_*.json"))):
        with open(path) as fh:
            json.load(fh)  # validate, nothing rendered per-summary yet
    return written
