"""Regenerate the data behind the simulation figures as CSV (and PNG with --plot).

  python scripts/reproduce_figures.py --out figures [--seed 0] [--plot]

Files written:
  networks.csv        edge lists of the two example graphs
  example1_n5.csv     agent 3 belief on theta2 and q(theta1), three rules
  example1_n10.csv    same with ten agents
  example2_theta1.csv agent 7 belief on the truth under attack, three rules
  example2_theta2.csv same with theta2 true

Agents are numbered from 1 in the CSVs to match the figure captions.
"""
import argparse
import csv
from pathlib import Path

import numpy as np

from hypelim import presets
from hypelim.engine import run

RULES1 = ("min_rule", "linear", "loglinear")
RULES2 = ("lfrhe", "linear", "loglinear")


def example1_rows(n, seed, horizon, stride, agent=2):
    rows = []
    for rule in RULES1:
        rec = run(presets.example1_config(n, rule, horizon, seed, stride))
        for k, t in enumerate(rec.times):
            lm = rec.log_actual[k, agent]
            q = -lm[0] / t if t else float("nan")
            rows.append({"t": int(t), "rule": rule, "agent": agent + 1,
                         "mu_true": float(np.exp(lm[1])), "q_theta1": float(q)})
    return rows


def example2_rows(star, seed, horizon, stride, agent=6):
    rows = []
    for rule in RULES2:
        rec = run(presets.example2_config(star, rule, horizon=horizon, seed=seed, stride=stride))
        for k, t in enumerate(rec.times):
            rows.append({"t": int(t), "rule": rule, "agent": agent + 1,
                         "mu_true": float(np.exp(rec.log_actual[k, agent, star]))})
    return rows


def write(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {path} ({len(rows)} rows)")


def plot(out):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    def load(name):
        with open(out / name) as fh:
            return list(csv.DictReader(fh))

    for name in ("example1_n5", "example1_n10"):
        rows = load(f"{name}.csv")
        fig, (a, b) = plt.subplots(1, 2, figsize=(10, 3.5))
        for rule in RULES1:
            sel = [r for r in rows if r["rule"] == rule]
            t = [int(r["t"]) for r in sel]
            a.plot(t, [float(r["mu_true"]) for r in sel], label=rule)
            b.plot(t[1:], [float(r["q_theta1"]) for r in sel][1:], label=rule)
        a.set(xlabel="t", ylabel="agent 3 belief on theta2")
        b.set(xlabel="t", ylabel="q(theta1)", ylim=(0, 0.2))
        b.legend()
        fig.tight_layout()
        fig.savefig(out / f"{name}.png", dpi=120)
    fig, axes = plt.subplots(1, 2, figsize=(10, 3.5))
    for ax, name in zip(axes, ("example2_theta1", "example2_theta2")):
        rows = load(f"{name}.csv")
        for rule in RULES2:
            sel = [r for r in rows if r["rule"] == rule]
            ax.plot([int(r["t"]) for r in sel], [float(r["mu_true"]) for r in sel], label=rule)
        ax.set(xlabel="t", ylabel="agent 7 belief on the truth", title=name, ylim=(0, 1.05))
    axes[0].legend()
    fig.tight_layout()
    fig.savefig(out / "example2.png", dpi=120)
    print(f"wrote plots to {out}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="figures")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--horizon1", type=int, default=10_000)
    ap.add_argument("--horizon2", type=int, default=5_000)
    ap.add_argument("--stride", type=int, default=10)
    ap.add_argument("--plot", action="store_true", help="also draw PNGs (needs matplotlib)")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    nets = []
    for name, g in (("example1", presets.example1_graph(5)), ("example2", presets.example2_graph())):
        nets += [{"network": name, "from": i + 1, "to": j + 1} for i, j in sorted(g.edges) if i < j]
    write(out / "networks.csv", nets)
    for n in (5, 10):
        write(out / f"example1_n{n}.csv", example1_rows(n, args.seed, args.horizon1, args.stride))
    for star in (0, 1):
        write(out / f"example2_theta{star + 1}.csv", example2_rows(star, args.seed, args.horizon2, args.stride))
    if args.plot:
        plot(out)


if __name__ == "__main__":
    main()
