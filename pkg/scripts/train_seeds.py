"""Train the default configuration for several seeds, one after another.

    python scripts/train_seeds.py --seeds 0 1 2 --root runs
"""

import argparse
import sys

from pregrasp.cli import main


def run(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--root", default="runs")
    ap.add_argument("--config", default="configs/default.ini")
    args = ap.parse_args(argv)
    status = 0
    for seed in args.seeds:
        rc = main(["-v", "train", "--config", args.config, "--seed", str(seed),
                   "--out", f"{args.root}/seed{seed}"])
        status = status or rc
    return status


if __name__ == "__main__":
    sys.exit(run())
