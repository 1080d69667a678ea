"""Run every experiment in configs/ and print its summary table.

    python scripts/run_configs.py [--out runs] [--threads 4]
"""
import argparse
from pathlib import Path

from pcaloc.config import load_config
from pcaloc.harness import run_monte_carlo, summarize, write_outputs

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    for path in sorted((ROOT / "configs").glob("*.yaml")):
        cfg = load_config(path)
        records = run_monte_carlo(cfg, threads=args.threads)
        out = write_outputs(cfg, records, Path(args.out) / path.stem)
        print(f"# {path.stem} -> {out}")
        for row in summarize(records, cfg.failure_radius):
            print(f"  {cfg.sweep_axis}={row['sweep_value']:g}  {row['estimator']:<16} "
                  f"rmse {row['rmse_m']:.3f} m  failures {row['failure_rate']:.2f}")


if __name__ == "__main__":
    main()
