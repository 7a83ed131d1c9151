"""Mass and friction sweeps of a checkpoint, written as CSV files.

    python scripts/run_sweeps.py --checkpoint runs/seed0/checkpoints/best.ckpt --out results
"""

import argparse
import sys
from pathlib import Path

from pregrasp import ACCEPTED_CHECKPOINT
from pregrasp.cli import main

GRIDS = {
    "mass": "0.02,0.04,0.06,0.08,0.10",
    "friction": "0.2,0.35,0.5,0.65,0.8",
    "width": "0.12,0.15,0.17,0.20,0.22",
    "support_inclination": "1.3090,1.3963,1.4835,1.5707",
}


def run(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--checkpoint", default=str(ACCEPTED_CHECKPOINT))
    ap.add_argument("--out", default="results")
    ap.add_argument("--episodes", type=int, default=10)
    ap.add_argument("--axes", nargs="+", default=["mass", "friction"], choices=sorted(GRIDS))
    args = ap.parse_args(argv)
    status = 0
    for axis in args.axes:
        out = Path(args.out) / f"sweep_{axis}.csv"
        rc = main(["sweep", "--checkpoint", args.checkpoint, "--axis", axis, "--grid", GRIDS[axis],
                   "--episodes", str(args.episodes), "--out", str(out)])
        status = status or rc
    return status


if __name__ == "__main__":
    sys.exit(run())
