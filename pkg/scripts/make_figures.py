"""Produce the full artifact set for a trained checkpoint: comparison table,
single-episode traces, and (if the formplots package is installed) rendered
figures for each CSV kind."""

import argparse
import subprocess
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from resiform.cli import main as resiform_main

MISSIONS = ("circle", "circle_no_attack", "figure_eight", "line_x",
            "line_z", "square", "lemniscate")


def render(src: Path, kind: str, dst: Path) -> None:
    proc = subprocess.run(
        [sys.executable, "-m", "formplots.render", "--input", str(src),
         "--kind", kind, "--output", str(dst)],
        capture_output=True, text=True)
    if proc.returncode != 0:
        print(f"  render {kind} skipped: {proc.stderr.strip()}")
    else:
        print(f"  {dst}")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--run", type=Path, required=True,
                    help="training output directory (for curve.csv and the "
                         "final checkpoint)")
    ap.add_argument("--checkpoint", type=Path, default=None,
                    help="checkpoint to evaluate; defaults to the newest in "
                         "--run")
    ap.add_argument("--out", type=Path, default=Path("runs/figures"))
    ap.add_argument("--episodes", type=int, default=10)
    ap.add_argument("--seed", type=int, default=123)
    args = ap.parse_args()

    ckpt = args.checkpoint or sorted(args.run.glob("checkpoint_*.npz"))[-1]
    args.out.mkdir(parents=True, exist_ok=True)

    compare = args.out / "compare.csv"
    argv = ["compare", "--checkpoint", str(ckpt), "--episodes",
            str(args.episodes), "--seed", str(args.seed), "--out",
            str(compare)]
    for m in MISSIONS:
        argv += ["--mission", m]
    if resiform_main(argv) != 0:
        return 1

    trace = args.out / "trace_circle_gat.csv"
    rc = resiform_main(["trace", "--mission", "circle", "--controller", "gat",
                        "--checkpoint", str(ckpt), "--seed", str(args.seed),
                        "--out", str(trace)])
    if rc != 0:
        return rc

    render(args.run / "curve.csv", "reward_curve", args.out / "reward.png")
    render(trace, "error_curve", args.out / "error.png")
    render(trace, "trajectory3d", args.out / "paths.png")
    render(compare, "comparison_bars", args.out / "bars.png")
    return 0


if __name__ == "__main__":
    sys.exit(main())
