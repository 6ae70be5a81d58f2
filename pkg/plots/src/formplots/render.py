"""Render figures from the simulator CLI's CSV artifacts.

Pure consumer: the artifacts carry everything these plots need (positions,
formation offsets, attacker location, attack flags, metric cells), so no
simulation code is imported or duplicated. Whatever a figure derives from
the raw columns is said on the figure itself.

Four kinds:

    reward_curve     training curve.csv  -> reward vs step with a std band
    error_curve      trace.csv           -> per-follower slot error vs time,
                                            DoS-active spans shaded
    trajectory3d     trace.csv           -> 3D flight paths plus attacker
    comparison_bars  compare.csv         -> grouped e_f bars per controller

Output is deterministic: fixed geometry, no timestamps embedded.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "formplots"  # stable SVG element ids

import matplotlib.pyplot as plt  # noqa: E402

PLOT_KINDS = ("reward_curve", "error_curve", "trajectory3d", "comparison_bars")

LEADER_COLOR = "#222222"
FOLLOWER_CMAP = "viridis"
ATTACK_SHADE = "#d62728"


class SchemaError(ValueError):
    """Input CSV does not match the documented artifact schema."""


def read_artifact(path: str | Path) -> tuple[dict, list[str], list[list[str]]]:
    """Parse an artifact CSV: leading '# key=value' comments, then a header
    row, then data rows."""
    header: dict[str, str] = {}
    body: list[str] = []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                if value:
                    header[key.strip()] = value.strip()
            else:
                body.append(line)
    rows = [r for r in csv.reader(body) if r]
    if not rows:
        raise SchemaError(f"{path}: empty artifact, no column header found")
    return header, rows[0], rows[1:]


def require_columns(columns: list[str], needed: tuple[str, ...],
                    path) -> dict[str, int]:
    missing = [c for c in needed if c not in columns]
    if missing:
        raise SchemaError(
            f"{path}: missing columns: {', '.join(missing)} "
            f"(found: {', '.join(columns)})")
    return {c: columns.index(c) for c in columns}


def _finite(value: str) -> float | None:
    x = float(value)
    return x if math.isfinite(x) else None


def render_reward_curve(path, out, ax) -> None:
    header, columns, rows = read_artifact(path)
    idx = require_columns(columns, ("step", "reward_mean", "reward_std"), path)
    steps, means, stds = [], [], []
    for row in rows:
        mean = _finite(row[idx["reward_mean"]])
        if mean is None:
            continue  # update window without a finished episode
        steps.append(float(row[idx["step"]]))
        means.append(mean)
        stds.append(_finite(row[idx["reward_std"]]) or 0.0)
    if not steps:
        raise SchemaError(f"{path}: no finite reward rows to plot")
    lo = [m - s for m, s in zip(means, stds)]
    hi = [m + s for m, s in zip(means, stds)]
    ax.fill_between(steps, lo, hi, alpha=0.25, color="#1f77b4",
                    label="episode std in window", linewidth=0)
    ax.plot(steps, means, color="#1f77b4", label="mean episode reward")
    ax.set_xlabel("environment steps")
    ax.set_ylabel("episode reward")
    title = "training reward"
    if "task" in header:
        title += f" ({header['task']})"
    ax.set_title(title)
    ax.legend(loc="lower right")
    ax.grid(True, alpha=0.3)


def _trace_frames(columns, rows, path):
    idx = require_columns(columns, ("t", "id", "px", "py", "pz", "attacked"),
                          path)
    by_id: dict[int, dict[str, list[float]]] = {}
    for row in rows:
        i = int(row[idx["id"]])
        d = by_id.setdefault(i, {"t": [], "px": [], "py": [], "pz": [],
                                 "attacked": []})
        d["t"].append(float(row[idx["t"]]))
        for c in ("px", "py", "pz"):
            d[c].append(float(row[idx[c]]))
        d["attacked"].append(float(row[idx["attacked"]]))
    if 0 not in by_id or len(by_id) < 2:
        raise SchemaError(f"{path}: trace needs a leader (id 0) and followers")
    return by_id


def _attack_spans(times, flags):
    spans = []
    start = None
    for t, flag in zip(times, flags):
        if flag > 0 and start is None:
            start = t
        elif flag <= 0 and start is not None:
            spans.append((start, t))
            start = None
    if start is not None:
        spans.append((start, times[-1]))
    return spans


def render_error_curve(path, out, ax) -> None:
    """Distance of each follower to its slot relative to the recorded
    leader position (derived from trace columns and header offsets)."""
    header, columns, rows = read_artifact(path)
    if "formation_offsets" not in header:
        raise SchemaError(
            f"{path}: missing columns: formation_offsets header entry")
    offsets = {int(k): v for k, v in
               json.loads(header["formation_offsets"]).items()}
    frames = _trace_frames(columns, rows, path)
    leader = frames[0]
    followers = sorted(i for i in frames if i != 0)
    cmap = plt.get_cmap(FOLLOWER_CMAP)
    attacked_id = int(header.get("attacked_agent", -1))
    for k, i in enumerate(followers):
        f = frames[i]
        off = offsets.get(i, [0.0, 0.0, 0.0])
        err = [math.dist((x, y, z), (lx + off[0], ly + off[1], lz + off[2]))
               for x, y, z, lx, ly, lz in zip(
                   f["px"], f["py"], f["pz"],
                   leader["px"], leader["py"], leader["pz"])]
        style = dict(color=cmap(k / max(len(followers) - 1, 1)), linewidth=1.2)
        if i == attacked_id:
            style.update(linewidth=2.0, zorder=5)
        ax.plot(f["t"], err, label=f"follower {i}"
                + (" (attacked)" if i == attacked_id else ""), **style)
    agent = frames.get(attacked_id)
    if agent is not None:
        for t0, t1 in _attack_spans(agent["t"], agent["attacked"]):
            ax.axvspan(t0, t1, color=ATTACK_SHADE, alpha=0.12, linewidth=0)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("distance to slot vs leader (m)")
    title = "formation error over time"
    if "mission" in header and "controller" in header:
        title = f"{header['mission']} / {header['controller']}"
    ax.set_title(title + "  [shaded: DoS active]")
    ax.legend(loc="upper right", fontsize=8)
    ax.grid(True, alpha=0.3)


def render_trajectory3d(path, out, fig) -> None:
    header, columns, rows = read_artifact(path)
    frames = _trace_frames(columns, rows, path)
    ax = fig.add_subplot(projection="3d")
    followers = sorted(i for i in frames if i != 0)
    cmap = plt.get_cmap(FOLLOWER_CMAP)
    attacked_id = int(header.get("attacked_agent", -1))
    leader = frames[0]
    ax.plot(leader["px"], leader["pz"], leader["py"], color=LEADER_COLOR,
            linewidth=2.0, label="leader")
    for k, i in enumerate(followers):
        f = frames[i]
        label = f"follower {i}" + (" (attacked)" if i == attacked_id else "")
        ax.plot(f["px"], f["pz"], f["py"],
                color=cmap(k / max(len(followers) - 1, 1)),
                linewidth=1.6 if i == attacked_id else 1.0, label=label)
    if "attacker" in header:
        ax_, ay_, az_ = json.loads(header["attacker"])
        ax.scatter([ax_], [az_], [ay_], color=ATTACK_SHADE, marker="X",
                   s=80, label="attacker", depthshade=False)
    ax.set_xlabel("x (m)")
    ax.set_ylabel("z (m)")
    ax.set_zlabel("y (m)")  # up
    title = "flight paths"
    if "mission" in header:
        title = f"{header['mission']} flight paths"
    ax.set_title(title)
    ax.legend(loc="upper left", fontsize=8)


def render_comparison_bars(path, out, ax) -> None:
    header, columns, rows = read_artifact(path)
    require_columns(columns, ("mission",), path)
    controllers = [c for c in columns if c != "mission"]
    if not controllers:
        raise SchemaError(f"{path}: missing columns: at least one controller")
    missions = [row[columns.index("mission")] for row in rows]
    width = 0.8 / len(controllers)
    cmap = plt.get_cmap("tab10")
    for k, controller in enumerate(controllers):
        col = columns.index(controller)
        values = []
        for row in rows:
            cell = row[col]
            left = cell.split("/")[0].strip()
            values.append(float(left))
        xs = [m + k * width for m in range(len(missions))]
        ax.bar(xs, values, width=width, label=controller,
               color=cmap(k % 10))
    ax.set_xticks([m + width * (len(controllers) - 1) / 2
                   for m in range(len(missions))])
    ax.set_xticklabels(missions, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("formation error e_f (m)")
    ax.set_title("formation error by mission and controller")
    ax.legend(fontsize=8)
    ax.grid(True, axis="y", alpha=0.3)


def render(input_path: str | Path, kind: str, output_path: str | Path) -> Path:
    if kind not in PLOT_KINDS:
        raise SchemaError(
            f"unknown plot kind {kind!r}; expected one of {PLOT_KINDS}")
    out = Path(output_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig = plt.figure(figsize=(8, 5), dpi=120)
    try:
        if kind == "trajectory3d":
            render_trajectory3d(input_path, out, fig)
        else:
            ax = fig.add_subplot()
            {"reward_curve": render_reward_curve,
             "error_curve": render_error_curve,
             "comparison_bars": render_comparison_bars}[kind](input_path, out, ax)
        fig.tight_layout()
        # strip volatile metadata so identical inputs give comparable bytes
        metadata = {"Date": None} if out.suffix == ".svg" else {}
        fig.savefig(out, metadata=metadata)
    finally:
        plt.close(fig)
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="formplots",
        description="render figures from formation-control CSV artifacts")
    parser.add_argument("--input", required=True, type=Path,
                        help="source CSV artifact")
    parser.add_argument("--kind", required=True, choices=PLOT_KINDS)
    parser.add_argument("--output", required=True, type=Path,
                        help="image path (.png or .svg)")
    args = parser.parse_args(argv)
    try:
        out = render(args.input, args.kind, args.output)
    except (SchemaError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
