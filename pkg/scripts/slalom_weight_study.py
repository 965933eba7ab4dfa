"""Sweep the rear-axle steering weight on the slalom and report how rear usage and sign agreement change."""
import argparse
from pathlib import Path

from mpcguide.harness import compare_weight_profiles, format_table
from mpcguide.scenario import load_scenario

ROOT = Path(__file__).resolve().parents[1]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--weights", type=float, nargs="+", default=[0.1, 0.5, 2.0, 5.0, 20.0, 50.0])
    args = ap.parse_args()
    sc = load_scenario(ROOT / "scenarios" / "slalom.json")
    profiles = [(f"w_delta_r={w:g}", {"w_delta_r": w}) for w in args.weights]
    print(format_table(compare_weight_profiles(sc, profiles)))


if __name__ == "__main__":
    main()
