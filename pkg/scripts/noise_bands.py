"""Monte-Carlo run of the noisy preset through the CLI pipeline and a short
summary of the final band row per algorithm and mirror map."""

import argparse
import csv
from pathlib import Path

from maarp.cli import execute
from maarp.config import parse_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--samples", type=int, default=50)
    ap.add_argument("--iters", type=int, default=10_000)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="out/noise_bands")
    args = ap.parse_args()

    cfg = parse_config("fig5")
    cfg.run.samples, cfg.run.iters, cfg.run.workers = args.samples, args.iters, args.workers
    cfg.run.algorithms = ["maarp", "anarchy"]
    cfg.output.emit = ["rnccv_ergodic", "rnccv_state"]
    code = execute(cfg.validate(), args.out)
    for path in sorted(Path(args.out).glob("*__bands.csv")):
        with path.open() as fh:
            last = list(csv.DictReader(fh))[-1]
        cols = "  ".join(f"{k}={float(last[k]):.3e}" for k in ("mean", "p25", "p50", "p75", "p90"))
        print(f"{path.stem:<45} n={last['iter']}  {cols}")
    raise SystemExit(code)


if __name__ == "__main__":
    main()
