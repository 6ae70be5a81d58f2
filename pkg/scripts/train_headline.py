"""Full resilience experiment: train the attacked agent, score every
checkpoint on the circle mission under attack, and compare the final
policy against the classical displacement baseline."""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from resiform.config import from_dict, load_config, save_config
from resiform.metrics import evaluate_checkpoints, run_mission
from resiform.train import train_formation

DESK = {
    "net": {"hidden": [64, 64], "gat_dim": 16},
    "ppo": {"total_steps": 500_000, "buffer_size": 4096, "batch_size": 256,
            "horizon": 128, "epochs": 6, "lr": 1e-3, "checkpoints": 10},
}


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("runs/headline"))
    ap.add_argument("--config", type=Path, default=None,
                    help="YAML config; defaults to the desk-scale preset")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--mission", default="circle")
    ap.add_argument("--episodes", type=int, default=5,
                    help="evaluation episodes per checkpoint")
    ap.add_argument("--eval-seed", type=int, default=123)
    args = ap.parse_args()

    cfg = load_config(args.config) if args.config else from_dict(DESK)
    args.out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, args.out / "config.yaml")

    t0 = time.time()
    result = train_formation(cfg, args.out, seed=args.seed,
                             mission=args.mission)
    print(f"trained {result.total_steps} steps in {time.time() - t0:.0f}s "
          f"({len(result.episode_returns)} episodes)")

    rows = evaluate_checkpoints(cfg, args.mission, result.checkpoint_paths,
                                episodes=args.episodes, seed=args.eval_seed)
    print(f"{'ckpt':>4} {'step':>8} {'reward':>10} {'std':>8} "
          f"{'e_f':>8} {'cr':>8}")
    for i, row in enumerate(rows):
        print(f"{i:>4} {row['step']:>8} {row['reward_mean']:>10.3f} "
              f"{row['reward_std']:>8.3f} {row['e_agent']:>8.3f} "
              f"{row['collision_rate']:>8.4f}")

    baseline = run_mission(cfg, args.mission, "displacement",
                           episodes=args.episodes, seed=args.eval_seed)
    base_ef = float(np.mean([r.e_agent for r in baseline.episodes]))
    final_ef = rows[-1]["e_agent"]
    print(f"displacement baseline e_f {base_ef:.3f}; "
          f"trained e_f {final_ef:.3f} "
          f"({final_ef / base_ef:.2f}x baseline)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
