"""Flagship batch: many seeds per Delta family, aggregate statistics to stdout and an optional JSON file.

    python3 scripts/flagship_batch.py --per-family 34 --out flagship.json
"""
import argparse
import json

from artifact.pipeline import RunConfig, flagship_params, run_batch

FAMILIES = {32: 2000, 64: 5000, 100: 8000}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--per-family", type=int, default=34)
    ap.add_argument("--deltas", type=int, nargs="*", default=sorted(FAMILIES))
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out")
    args = ap.parse_args()

    summary = {}
    for delta in args.deltas:
        n = FAMILIES.get(delta, 50 * delta)
        cfg = RunConfig(gen=flagship_params(delta, n), keep_coloring=False)
        b = run_batch(cfg, workers=args.workers, seeds=range(args.per_family))
        agg = b.aggregate()
        agg["largest_component"].pop("values")
        summary[f"delta={delta},n={n}"] = agg
        print(f"Delta={delta:>3} n={n:>5}: {agg['successes']}/{agg['runs']} ok, "
              f"wilson95=({agg['wilson95'][0]:.3f}, {agg['wilson95'][1]:.3f}), "
              f"median largest component {agg['largest_component']['median']}, "
              f"max CC utilization {agg['max_cc_utilization']:.2f}, mean wall {agg['wall_time']['mean']:.2f}s")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(summary, fh, indent=1)


if __name__ == "__main__":
    main()
