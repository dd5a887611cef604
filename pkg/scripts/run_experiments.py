"""Run the shipped experiment specs (setting comparison and three sensitivity sweeps).

Usage::

    python3 scripts/run_experiments.py                    # every spec in configs/experiments
    python3 scripts/run_experiments.py efficiency_sweep    # selected specs
    python3 scripts/run_experiments.py --reps 200 --workers 4 reduced_settings

Results land in ``results/<name>/`` (sweep.csv plus one kpi_*.json per point).
Full-scale setting A takes about ten minutes per solve on one core; the
``reduced_settings`` spec finishes in a few minutes.
"""

import argparse
import sys
from pathlib import Path

from ghp.cli import main as ghp

ROOT = Path(__file__).resolve().parents[1]
SPECS = ROOT / "configs" / "experiments"


def parse_args(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("names", nargs="*", help="spec names (file stems); default all")
    p.add_argument("--reps", type=int, default=None, help="override replications")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out-root", default=str(ROOT / "results"))
    return p.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    names = args.names or sorted(f.stem for f in SPECS.glob("*.json"))
    status = 0
    for name in names:
        spec = SPECS / f"{name}.json"
        if not spec.exists():
            print(f"no such spec: {spec}", file=sys.stderr)
            return 1
        cmd = ["sweep", "--config", str(spec), "--out-dir", str(Path(args.out_root) / name)]
        if args.reps is not None:
            cmd += ["--reps", str(args.reps)]
        if args.workers is not None:
            cmd += ["--workers", str(args.workers)]
        print(f"== {name}", flush=True)
        status = max(status, ghp(cmd))
    return status


if __name__ == "__main__":
    sys.exit(main())
