"""Monte Carlo exceedance curve for the rejection rate on Example 1.

  python scripts/concentration_probe.py --seeds 200 --out probe.csv

For each grid time t, reports the fraction of seeds whose q_t(theta1) at the
chosen agent sits at or below K - eps, next to the reference slope eps^2/(8 L^2).
Only the decay is meaningful; the slope is shown for comparison, never asserted.
"""
import argparse
import csv

from hypelim import metrics, presets
from hypelim.engine import sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=5)
    ap.add_argument("--seeds", type=int, default=200)
    ap.add_argument("--agent", type=int, default=2, help="0-based agent index")
    ap.add_argument("--eps-fraction", type=float, default=0.5, help="eps as a fraction of K")
    ap.add_argument("--grid", default="100,200,500,1000,2000,5000,10000")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="probe.csv")
    args = ap.parse_args()

    grid = [int(x) for x in args.grid.split(",")]
    cfg = presets.example1_config(args.n, "min_rule", horizon=max(grid), stride=100)
    cfg = cfg.replace(record=frozenset({"beliefs"}))
    if any(t % cfg.stride and t != cfg.horizon for t in grid):
        cfg = cfg.replace(stride=1)
    kbar = metrics.theoretical_bounds(cfg.model, mode="best_source").per_hypothesis[0]
    records = sweep(cfg, range(args.seeds), workers=args.workers)
    curve = metrics.concentration_probe(records, cfg.model, 0, args.eps_fraction * kbar, grid, args.agent)
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["t", "fraction", "threshold", "reference_slope", "seeds"])
        w.writeheader()
        w.writerows(curve.to_rows())
    for t, f in zip(curve.times, curve.fraction):
        print(f"t={t:>6}  fraction={f:.4f}")
    print(f"threshold K-eps = {curve.threshold:.5f}, reference slope {curve.reference_slope:.3e}; wrote {args.out}")


if __name__ == "__main__":
    main()
