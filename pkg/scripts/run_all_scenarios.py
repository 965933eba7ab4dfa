"""Run every shipped scenario, write traces and plots, and print a summary table."""
import argparse
from pathlib import Path

from mpcguide.harness import run_scenario
from mpcguide.plots import emit_plots
from mpcguide.scenario import load_scenario

ROOT = Path(__file__).resolve().parents[1]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(ROOT / "results"), help="output directory (one subfolder per scenario)")
    args = ap.parse_args()
    print(f"{'scenario':<16}{'status':<18}{'pos err':>9}{'yaw err':>9}{'infeas':>8}{'relax':>7}{'cycle ms':>10}")
    for path in sorted((ROOT / "scenarios").glob("*.json")):
        if path.stem.endswith("profiles"):
            continue
        r = run_scenario(load_scenario(path))
        emit_plots(r, Path(args.out) / path.stem)
        pos, yaw = r.final_pose_error
        print(f"{r.name:<16}{r.status:<18}{pos:>9.3f}{yaw:>9.3f}{r.infeasible_cycles:>8}"
              f"{r.relaxation_requests:>7}{r.mean_cycle_time * 1e3:>10.1f}")


if __name__ == "__main__":
    main()
