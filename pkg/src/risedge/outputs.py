"""Run artifacts: slot-trace CSV, summary JSON, curve CSV, checkpoints.

Every file carries the config hash and seed. Floats are written with
shortest-roundtrip repr and rows in a fixed column order, so re-running the
same (config, seed) pair reproduces each file byte for byte on one platform.
"""

from __future__ import annotations

import json
import os

from risedge.sim import RunRecorder


def run_tag(policy: str, v: float, seed: int) -> str:
    return f"{policy}_v{v:.6g}_seed{seed}"


def _fmt(x: float) -> str:
    as_int = int(x)
    if x == as_int and abs(x) < 2**53:
        return str(as_int)
    return repr(float(x))


def write_trace_csv(path: str, recorder: RunRecorder, config_hash: str, seed: int,
                    policy: str, v: float) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash} seed={seed} policy={policy} v={v:.6g}\n")
        fh.write(",".join(recorder.columns()) + "\n")
        for row in recorder.rows():
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def write_summary_json(path: str, summary: dict) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_curve_csv(path: str, episode_curve: list[dict], config_hash: str, seed: int) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash} seed={seed}\n")
        fh.write("episode,end_step,mean_reward\n")
        for row in episode_curve:
            fh.write(f"{row['episode']},{row['end_step']},{_fmt(row['mean_reward'])}\n")


def write_update_stats_csv(path: str, stats: list[dict], config_hash: str, seed: int) -> None:
    cols = ("update", "step", "policy_loss", "value_loss", "entropy",
            "clip_fraction", "approx_kl", "grad_clip_events")
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash} seed={seed}\n")
        fh.write(",".join(cols) + "\n")
        for row in stats:
            fh.write(",".join(_fmt(row[c]) for c in cols) + "\n")


def write_frontier_csv(path: str, rows: list[dict], config_hash: str, seed: int) -> None:
    cols = ("v", "avg_power_w", "littles_delay_s", "avg_accuracy", "avg_reward")
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash} seed={seed}\n")
        fh.write(",".join(cols) + "\n")
        for row in rows:
            delay = row["littles_delay_s"]
            delay = max(delay) if isinstance(delay, list) else delay
            values = (row["v"], row["avg_power_w"], delay, row["avg_accuracy"], row["avg_reward"])
            fh.write(",".join(_fmt(v) for v in values) + "\n")


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
