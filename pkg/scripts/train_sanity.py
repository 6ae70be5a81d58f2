"""Point-mass PPO sanity run: a single agent learns to hover at the origin.
Reports the improvement of the final checkpoint over the untrained policy."""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from resiform.config import from_dict
from resiform.metrics import evaluate_pointmass
from resiform.train import train_pointmass

PRESET = {
    "net": {"hidden": [64, 64]},
    "ppo": {"total_steps": 100_000, "buffer_size": 2048, "batch_size": 256,
            "horizon": 64, "epochs": 4, "lr": 3e-3, "checkpoints": 4},
}


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("runs/sanity"))
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--episodes", type=int, default=20)
    ap.add_argument("--eval-seed", type=int, default=900)
    args = ap.parse_args()

    cfg = from_dict(PRESET)
    t0 = time.time()
    result = train_pointmass(cfg, args.out, seed=args.seed)
    print(f"trained {result.total_steps} steps in {time.time() - t0:.0f}s")

    init = evaluate_pointmass(cfg, result.initial_checkpoint,
                              episodes=args.episodes, seed=args.eval_seed)
    final = evaluate_pointmass(cfg, result.final_checkpoint,
                               episodes=args.episodes, seed=args.eval_seed)
    gain = (final["reward_mean"] - init["reward_mean"]) / abs(init["reward_mean"])
    print(f"mean episode reward: {init['reward_mean']:.2f} -> "
          f"{final['reward_mean']:.2f} (+{gain:.0%}); "
          f"success rate {final['success_rate']:.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
