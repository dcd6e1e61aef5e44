"""The raw example laws: the explicit 2-d speed and the walk that gets stuck."""
import numpy as np

from rwpre.environment import build_d2_renewal, build_example_ex1, d2_renewal_speed
from rwpre.simulate import quenched_walk, speed_estimate


def main():
    for p in (0.3, 0.5, 0.8):
        est = speed_estimate(build_d2_renewal(p), 200_000, 20, seed=3)
        exact = d2_renewal_speed(p)
        print(f"p={p}: mc {np.round(est.point, 4)} +- {np.round(est.ci_halfwidth, 4)}  exact {np.round(exact, 4)}")
    t = quenched_walk(build_example_ex1(0.5), seed=0, n=100_000)
    tail = t.positions()[-10_000:]
    sites = np.unique(tail, axis=0)
    print(f"ex1: last 10^4 steps visit {len(sites)} sites: {sites.tolist()}")


if __name__ == "__main__":
    main()
