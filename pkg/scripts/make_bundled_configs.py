"""Regenerate the bundled reproduction configs in src/hypelim/configs/."""
from pathlib import Path

from hypelim import presets
from hypelim.config import BUNDLED_DIR, dump, to_canonical

HEADER = "# Generated by scripts/make_bundled_configs.py; agents are 0-based.\n"


def variants():
    for n in (5, 10):
        for rule in ("min_rule", "linear", "loglinear", "lfrhe"):
            name = f"example1_n{n}" + ("" if rule == "min_rule" else f"_{rule}")
            yield name, presets.example1_config(n, rule, horizon=10_000)
    for k, label in ((0, "theta1"), (1, "theta2")):
        for rule in ("lfrhe", "min_rule", "linear", "loglinear"):
            name = f"example2_{label}" + ("" if rule == "lfrhe" else f"_{rule}")
            yield name, presets.example2_config(k, rule, horizon=5_000)
        yield f"example2_{label}_noattack", presets.example2_config(k, "lfrhe", attack=False, horizon=5_000)
    yield "example2", presets.example2_config(0, "lfrhe", horizon=5_000)


def main(out: Path = BUNDLED_DIR):
    out.mkdir(parents=True, exist_ok=True)
    for name, cfg in variants():
        (out / f"{name}.yaml").write_text(HEADER + dump(to_canonical(cfg)))
        print(f"wrote {out / name}.yaml")


if __name__ == "__main__":
    main()
