"""Sweep Delta, n and the share of heavy sparse vertices; print one row per cell.

Heavy vertices (S-degree near Delta) need about sqrt(Delta) repeated colors
from slack generation, which small Delta cannot supply; the sweep shows
where runs switch from success to explicit aborts.
"""
import argparse
import dataclasses
import itertools

from artifact.pipeline import RunConfig, flagship_params, run_batch


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--deltas", type=int, nargs="*", default=[32, 64, 100])
    ap.add_argument("--sizes", type=int, nargs="*", default=[2000, 5000])
    ap.add_argument("--heavy", type=float, nargs="*", default=[0.0, 0.01])
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()

    print("delta     n  heavy  ok/runs  codes                largest(med)  wall(mean)")
    for delta, n, h in itertools.product(args.deltas, args.sizes, args.heavy):
        gen = dataclasses.replace(flagship_params(delta, n), heavy_fraction=h)
        agg = run_batch(RunConfig(gen=gen, keep_coloring=False), seeds=range(args.seeds)).aggregate()
        print(f"{delta:5d} {n:5d}  {h:5.2f}  {agg['successes']:>3}/{agg['runs']:<3}  {str(agg['exit_codes']):<20} "
              f"{agg['largest_component']['median']:>12}  {agg['wall_time']['mean']:9.2f}s")


if __name__ == "__main__":
    main()
