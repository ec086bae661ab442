"""Run the D = R = 20, N = 50 preset for both mirror maps and print the
terminal RANCCV values of the state and of the ergodic average."""

import argparse

from maarp.cli import build_problem
from maarp.config import parse_config
from maarp.dynamics import NoiseModel, Schedule, run
from maarp.geometry import Regularizer


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--iters", type=int, default=100_000)
    ap.add_argument("--preset", default="fig1")
    args = ap.parse_args()

    cfg = parse_config(args.preset)
    spec, cs = build_problem(cfg)
    sched = Schedule(cfg.schedule.gamma0, cfg.schedule.p, cfg.schedule.alpha)
    checkpoints = [n for n in (10**3, 10**4, 10**5, 10**6) if n <= args.iters]
    print(f"{'algorithm':<10} {'mirror':<10} " + " ".join(f"{'n=' + format(n, '.0e'):>22}" for n in checkpoints))
    for alg in ("maarp", "anarchy"):
        for mirror in ("entropy", "euclidean"):
            res = run(alg, spec, cs, sched, NoiseModel(), Regularizer(mirror, cfg.game.D), args.iters,
                      record_every=min(checkpoints))
            s = res.series
            cells = []
            for n in checkpoints:
                j = list(s["iter"]).index(n)
                cells.append(f"{s['rnccv_ergodic'][j]:.3e}/{s['rnccv_state'][j]:.3e}")
            print(f"{alg:<10} {mirror:<10} " + " ".join(f"{c:>22}" for c in cells))
    print("cells: ergodic-average RANCCV / state RANCCV")


if __name__ == "__main__":
    main()
