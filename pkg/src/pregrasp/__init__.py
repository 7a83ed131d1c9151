"""Push-and-pivot pregrasp learning in a planar simulator."""

from pathlib import Path

__version__ = "0.1.0"

# best checkpoint of the seed-0 reference training run, shipped for evaluation
ACCEPTED_CHECKPOINT = Path(__file__).with_name("data") / "accepted.ckpt"
