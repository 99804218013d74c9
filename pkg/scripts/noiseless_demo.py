"""Generate a noiseless, fully visible sequence, track it and print the metrics.

    python scripts/noiseless_demo.py --frames 200 --points 2000
"""

import argparse
import time

from hocue.config import RunConfig
from hocue.metrics import evaluate
from hocue.synth import SynthConfig, generate
from hocue.tracking import track


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--frames", type=int, default=200)
    ap.add_argument("--points", type=int, default=2000)
    ap.add_argument("--rate", type=float, default=3.0, help="rotation rate in degrees per frame")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    seq = generate(SynthConfig(n_frames=args.frames, n_points=args.points, rot_rate_deg=args.rate, seed=args.seed))
    start = time.perf_counter()
    result = track(seq.observations, RunConfig())
    elapsed = time.perf_counter() - start
    print(evaluate(result.trajectory, seq.ground_truth).table())
    print(f"tracking time: {elapsed:.2f} s")


if __name__ == "__main__":
    main()
