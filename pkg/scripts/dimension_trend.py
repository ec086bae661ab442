"""Compare entropy and Euclidean mirror maps under MAARP across game seeds on
a given preset (default: D = R = 50, N = 100, d = 8.5)."""

import argparse

import numpy as np

from maarp.cli import build_problem
from maarp.config import parse_config
from maarp.dynamics import NoiseModel, Schedule, run
from maarp.geometry import Regularizer


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--preset", default="fig2")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--iters", type=int, default=None)
    args = ap.parse_args()

    cfg = parse_config(args.preset)
    iters = args.iters or cfg.run.iters
    sched = Schedule(cfg.schedule.gamma0, cfg.schedule.p, cfg.schedule.alpha)
    rows = []
    for seed in range(1, args.seeds + 1):
        cfg.game.seed = seed
        spec, cs = build_problem(cfg)
        vals = []
        for mirror in ("entropy", "euclidean"):
            res = run("maarp", spec, cs, sched, NoiseModel(), Regularizer(mirror, cfg.game.D), iters,
                      record_every=iters)
            vals.append(res.series["rnccv_ergodic"][-1])
        rows.append(vals)
        print(f"seed {seed}: entropy {vals[0]:.4e}  euclidean {vals[1]:.4e}")
    m = np.mean(rows, axis=0)
    print(f"mean:   entropy {m[0]:.4e}  euclidean {m[1]:.4e}")


if __name__ == "__main__":
    main()
