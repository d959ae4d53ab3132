"""Command line entry point: ``hypelim {check,run,sweep,rates,list,show}``.

Exit codes: 0 success (or certification pass), 2 certification failure, 1 error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__, metrics
from .config import ConfigError, build, bundled_names, certify_mode, digest_of, dump, load
from .engine import ConfigValidationError, SimulationError, TrajectoryRecord, run, sweep
from .graphs import certify
from .rules import UnsupportedBaselineError, lazy_metropolis_weights

log = logging.getLogger("hypelim")

OUT_ENV = "HYPELIM_OUT"
CONSISTENT_AT = 0.99
RECOVERED_AT = 0.5
RATE_TOLERANCE = 0.02


class CliError(Exception):
    pass


def _out_dir(arg) -> Path:
    return Path(arg or os.environ.get(OUT_ENV, "out"))


def _prepare(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise CliError(f"cannot write to output directory {path}: {exc}") from None
    return path


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")


def _stem(config_arg: str) -> str:
    return Path(config_arg).stem


def _overrides(args) -> dict:
    out = {}
    for key in ("seed", "horizon", "stride", "rule", "f"):
        value = getattr(args, key, None)
        if value is not None:
            out[key] = value
    if out.get("rule") == "lfrhe" and "f" not in out:
        out["f"] = 1
    return out


def _manifest(digest, seeds, outputs, started, verdicts) -> dict:
    return {
        "config_digest": digest,
        "version": __version__,
        "seeds": seeds,
        "outputs": [str(p) for p in outputs],
        "wall_clock_s": round(time.time() - started, 3),
        "verdicts": verdicts,
    }


# --- check ------------------------------------------------------------------------

def cmd_check(args) -> int:
    started = time.time()
    canon = load(args.config)
    cfg = build(canon)
    mode = certify_mode(canon)
    if args.f is not None:
        mode = {"mode": "lfrhe", "f": args.f}
    if args.T is not None:
        mode = {"mode": "min_rule_timevarying", "T": args.T}
    if mode["mode"] == "min_rule_timevarying" and mode.get("T") is None:
        raise CliError("time-varying graph: set graph.T in the config or pass --T")
    report = certify(cfg.model, cfg.schedule, mode["mode"], T=mode.get("T"), f=mode.get("f"))

    extra = {}
    if cfg.adversary.byzantine and mode["mode"] == "lfrhe":
        from .adversary import f_local

        ok = f_local(cfg.adversary, cfg.schedule.graph_at(0), mode["f"])
        report.network_checks["f_local_adversary"] = {
            "holds": ok,
            "detail": f"byzantine set {sorted(cfg.adversary.byzantine)} is "
                      f"{'' if ok else 'not '}{mode['f']}-local",
        }
        extra["byzantine"] = sorted(cfg.adversary.byzantine)

    print(report.to_text(cfg.model.hypotheses.names))
    out = _prepare(_out_dir(args.out))
    path = out / f"{_stem(args.config)}_check.json"
    body = {"config": args.config, "digest": cfg.digest, **report.to_dict(), **extra}
    _write_json(path, body)
    verdict = "pass" if report.verdict else "fail"
    _write_json(out / f"{_stem(args.config)}_check_manifest.json",
                _manifest(cfg.digest, [], [path], started, {"certification": verdict}))
    return 0 if report.verdict else 2


# --- run --------------------------------------------------------------------------

def bounds_for(cfg):
    """Bound the run is compared against, by rule and graph."""
    model, schedule = cfg.model, cfg.schedule
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", metrics.IdentifiabilityWarning)
        if cfg.rule == "lfrhe":
            return metrics.theoretical_bounds(model, schedule, "regular_source", cfg.adversary.regular(model.n))
        if cfg.rule == "min_rule" and schedule.is_static:
            return metrics.theoretical_bounds(model, schedule, "reachable_source")
        if cfg.rule == "min_rule":
            return metrics.theoretical_bounds(model, schedule, "best_source")
    return None


def run_summary(cfg, record: TrajectoryRecord, name: str, tolerance: float = RATE_TOLERANCE) -> dict:
    final = record.log_actual[-1]
    mu = np.exp(final)
    star = record.true_index
    names = cfg.model.hypotheses.names
    status = []
    for i in range(record.n):
        if i in record.byzantine:
            status.append("byzantine")
        elif mu[i, star] > CONSISTENT_AT:
            status.append("consistent")
        elif mu[i, star] < RECOVERED_AT:
            status.append("not_recovered")
        else:
            status.append("undecided")
    regular = record.regular
    summary = {
        "config": name,
        "digest": record.digest,
        "rule": record.rule,
        "f": cfg.f,
        "seed": record.seed,
        "horizon": record.horizon,
        "hypotheses": list(names),
        "true_hypothesis": names[star],
        "byzantine": sorted(record.byzantine),
        "final_mu": mu.tolist(),
        "final_q": (-final / record.horizon).tolist(),
        "status": status,
        "consistent": all(status[i] == "consistent" for i in regular),
        "recovered": not any(status[i] == "not_recovered" for i in regular),
        "social_learning_rate": metrics.social_learning_rate(record, regular_only=bool(record.byzantine)),
    }
    bounds = bounds_for(cfg)
    if bounds is not None:
        rep = metrics.rate_report(record, bounds, tolerance)
        summary["bounds"] = {
            **bounds.to_dict(),
            "tolerance": tolerance,
            "rate_check": [[bool(x) for x in row] for row in rep.passed],
            "all_within_bound": rep.all_passed,
        }
    else:
        try:
            ref = metrics.baseline_reference_rates(cfg.model, lazy_metropolis_weights(cfg.schedule.graph_at(0)))
            summary["baseline_reference"] = {names[k]: v for k, v in ref.items()}
        except (ValueError, UnsupportedBaselineError):
            pass
    return summary


def write_trajectory_csv(path: Path, record: TrajectoryRecord, names):
    mu = record.log_actual
    pi = record.log_local
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "agent", "hypothesis", "mu", "pi", "q"])
        for k, t in enumerate(record.times):
            t = int(t)
            for i in range(record.n):
                for p in range(record.m):
                    q = repr(float(-mu[k, i, p] / t)) if t >= 1 else ""
                    w.writerow([
                        t, i, names[p],
                        repr(float(np.exp(mu[k, i, p]))),
                        repr(float(np.exp(pi[k, i, p]))) if pi is not None else "",
                        q,
                    ])


def cmd_run(args) -> int:
    started = time.time()
    canon = load(args.config)
    cfg = build(canon, **_overrides(args))
    mode = certify_mode(canon)
    if cfg.rule == "lfrhe":
        mode = {"mode": "lfrhe", "f": cfg.f}
    if mode["mode"] != "min_rule_timevarying" or mode.get("T"):
        report = certify(cfg.model, cfg.schedule, mode["mode"], T=mode.get("T"), f=mode.get("f"))
        if not report.verdict:
            log.warning("configuration is not certified (%s); simulating anyway", mode["mode"])

    out = _prepare(_out_dir(args.out))
    name = _stem(args.config)
    record = run(cfg)
    names = cfg.model.hypotheses.names
    csv_path = out / f"{name}_seed{cfg.seed}.csv"
    json_path = out / f"{name}_seed{cfg.seed}_summary.json"
    write_trajectory_csv(csv_path, record, names)
    summary = run_summary(cfg, record, name, args.tolerance)
    _write_json(json_path, summary)
    _write_json(out / f"{name}_seed{cfg.seed}_manifest.json",
                _manifest(cfg.digest, [cfg.seed], [csv_path, json_path], started,
                          {"consistent": summary["consistent"], "recovered": summary["recovered"]}))
    print(f"wrote {csv_path} and {json_path}")
    print(f"final belief on {names[cfg.model.true_index]}: "
          + ", ".join(f"{i}:{v:.4f}" for i, v in enumerate(np.exp(record.log_actual[-1][:, cfg.model.true_index]))))
    return 0


# --- sweep ------------------------------------------------------------------------

def _parse_seeds(text: str) -> list[int]:
    lo, sep, hi = text.partition("..")
    try:
        if not sep:
            return [int(x) for x in text.split(",")]
        lo, hi = int(lo), int(hi)
    except ValueError:
        raise CliError(f"bad seed range {text!r}; use a..b or a,b,c") from None
    if hi < lo:
        raise CliError(f"empty seed range {text!r}")
    return list(range(lo, hi + 1))


def cmd_sweep(args) -> int:
    started = time.time()
    canon = load(args.config)
    overrides = _overrides(args)
    cfg = build(canon, **overrides)
    seeds = _parse_seeds(args.seeds)
    grid = [int(x) for x in args.grid.split(",")] if args.grid else None
    if grid:
        bad = [t for t in grid if t < 1 or t > cfg.horizon]
        if bad:
            raise CliError(f"grid times {bad} outside 1..{cfg.horizon}")
        stride = cfg.stride
        if any(t % stride for t in grid):
            raise CliError(f"grid times must be multiples of the stride ({stride})")

    out = _prepare(_out_dir(args.out) / f"{_stem(args.config)}_sweep")
    records = sweep(cfg, seeds, workers=args.workers)
    written = []
    name = _stem(args.config)
    for rec in records:
        path = out / f"seed_{rec.seed}.json"
        _write_json(path, run_summary(cfg.replace(seed=rec.seed), rec, name, args.tolerance))
        written.append(path)

    verdicts = {}
    star = cfg.model.true_index
    theta = args.hypothesis if args.hypothesis is not None else next(p for p in range(cfg.model.m) if p != star)
    if theta == star:
        raise CliError("--hypothesis must be a false hypothesis")
    if grid and len(seeds) >= metrics.MIN_PROBE_SEEDS:
        kbar = metrics.theoretical_bounds(cfg.model, mode="best_source").per_hypothesis[theta]
        eps = args.eps if args.eps is not None else kbar / 2
        curve = metrics.concentration_probe(records, cfg.model, theta, eps, grid, args.agent)
        path = out / "exceedance.csv"
        with path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["t", "fraction", "threshold", "reference_slope", "seeds"])
            w.writeheader()
            for row in curve.to_rows():
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
        written.append(path)
        verdicts["exceedance_nonincreasing_tail"] = bool(np.all(np.diff(curve.fraction) <= 0))
        print(f"exceedance fraction (agent {args.agent}, eps={eps:.5g}): "
              + ", ".join(f"t={t}: {f:.3f}" for t, f in zip(curve.times, curve.fraction)))
    elif grid:
        print(f"note: concentration probe skipped (needs >= {metrics.MIN_PROBE_SEEDS} seeds)")
    _write_json(out / "manifest.json", _manifest(cfg.digest, seeds, written, started, verdicts))
    print(f"wrote {len(records)} seed summaries to {out}")
    return 0


# --- rates ------------------------------------------------------------------------

def rates_table(cfg) -> dict:
    model, schedule = cfg.model, cfg.schedule
    names = model.hypotheses.names
    star = model.true_index
    caught = []
    with warnings.catch_warnings(record=True) as seen:
        warnings.simplefilter("always", metrics.IdentifiabilityWarning)
        cols = {"best_source": metrics.theoretical_bounds(model, schedule, "best_source")}
        if schedule.is_static:
            cols["reachable_source"] = metrics.theoretical_bounds(model, schedule, "reachable_source")
        if cfg.adversary.byzantine or cfg.rule == "lfrhe":
            cols["regular_source"] = metrics.theoretical_bounds(model, schedule, "regular_source", cfg.adversary.regular(model.n))
        caught = sorted({str(w.message) for w in seen})
    rows = []
    reference = None
    if schedule.is_static:
        try:
            reference = metrics.baseline_reference_rates(model, lazy_metropolis_weights(schedule.graph_at(0)))
        except (ValueError, UnsupportedBaselineError):
            reference = None
    for theta in range(model.m):
        if theta == star:
            continue
        row = {"hypothesis": names[theta]}
        for key, b in cols.items():
            row[key] = b.per_hypothesis[theta]
        row["baseline"] = reference[theta] if reference else None
        rows.append(row)
    network = {key: b.network for key, b in cols.items()}
    return {"true_hypothesis": names[star], "rows": rows, "network": network, "warnings": caught}


def cmd_rates(args) -> int:
    cfg = build(load(args.config), **_overrides(args))
    table = rates_table(cfg)
    if args.json:
        print(json.dumps(table, indent=2))
        return 0
    keys = [k for k in ("best_source", "reachable_source", "regular_source", "baseline")
            if any(r.get(k) is not None for r in table["rows"])]
    W = 18
    print(f"true hypothesis: {table['true_hypothesis']} (rates in nats per step)")
    print("hypothesis".ljust(W) + "".join(k.rjust(W) for k in keys))
    for r in table["rows"]:
        print(r["hypothesis"].ljust(W) + "".join(
            (f"{r[k]:.6f}" if r.get(k) is not None else "-").rjust(W) for k in keys))
    print("network".ljust(W) + "".join(
        (f"{table['network'][k]:.6f}" if k in table["network"] else "-").rjust(W) for k in keys))
    for w in table["warnings"]:
        print(f"warning: {w}")
    return 0


# --- misc -------------------------------------------------------------------------

def cmd_list(args) -> int:
    for name in bundled_names():
        print(name)
    return 0


def cmd_show(args) -> int:
    canon = load(args.config)
    print(f"# digest {digest_of(canon)}")
    print(dump(canon), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hypelim", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def overrides(sp):
        sp.add_argument("--tolerance", type=float, default=RATE_TOLERANCE,
                        help="finite-horizon band (nats) when comparing rates to bounds")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--horizon", type=int)
        sp.add_argument("--stride", type=int)
        sp.add_argument("--rule", choices=["min_rule", "lfrhe", "linear", "loglinear"])
        sp.add_argument("--f", type=int, help="trimming parameter for lfrhe")

    sp = sub.add_parser("check", help="certify the graph/identifiability conditions")
    sp.add_argument("config", help="config path or bundled config name")
    sp.add_argument("--out")
    sp.add_argument("--f", type=int, help="certify for lfrhe with this f")
    sp.add_argument("--T", type=int, help="certify joint strong connectivity with window T")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("run", help="simulate one seed, write CSV + JSON summary")
    sp.add_argument("config")
    sp.add_argument("--out")
    overrides(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="simulate many seeds; optional concentration probe")
    sp.add_argument("config")
    sp.add_argument("--seeds", required=True, help="a..b (inclusive) or a,b,c")
    sp.add_argument("--out")
    sp.add_argument("--grid", help="comma-separated times for the exceedance curve")
    sp.add_argument("--agent", type=int, default=0)
    sp.add_argument("--hypothesis", type=int, help="false hypothesis index for the probe")
    sp.add_argument("--eps", type=float, help="default: half the best KL")
    sp.add_argument("--workers", type=int, default=1)
    overrides(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("rates", help="theoretical rate bounds and baseline reference")
    sp.add_argument("config")
    sp.add_argument("--json", action="store_true")
    overrides(sp)
    sp.set_defaults(func=cmd_rates)

    sp = sub.add_parser("list", help="list bundled configs")
    sp.set_defaults(func=cmd_list)

    sp = sub.add_parser("show", help="print the canonical form of a config")
    sp.add_argument("config")
    sp.set_defaults(func=cmd_show)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ConfigValidationError, CliError, SimulationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
