"""Print a KPI overview (profit, hydrogen sold, losses, action frequencies) of all settings.

Usage::

    python3 scripts/settings_table.py                 # reduced scale, 10^4 replications
    python3 scripts/settings_table.py --base base --reps 1000
"""

import argparse
import time

from ghp.experiments import point_config, resolve_base
from ghp.model import BENCHMARK_SETTINGS
from ghp.simulate import simulate
from ghp.solver import backward_induction, build_problem

COLUMNS = ("setting", "V0", "profit", "+/-", "h2_MWh", "lost_MWh", "P(h2)", "P(buy)", "P(sell)", "P(ppa)", "sec")


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--base", default="reduced", help='"base", "reduced" or a config path')
    p.add_argument("--reps", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--settings", nargs="*", default=list(BENCHMARK_SETTINGS))
    args = p.parse_args(argv)

    base = resolve_base(args.base)
    print(("{:<12}" + "{:>11}" * (len(COLUMNS) - 1)).format(*COLUMNS))
    for s in args.settings:
        start = time.perf_counter()
        table = backward_induction(build_problem(point_config(base, s)))
        r = simulate(table, seed=args.seed, replications=args.reps)
        row = (s, table.initial_value(), r.profit.mean, r.profit.half_width, r.h2_sold_mwh, r.energy_lost_mwh,
               r.p_h2, r.p_buy, r.p_sell, r.p_ppa, time.perf_counter() - start)
        print(("{:<12}" + "{:>11,.0f}" * 5 + "{:>11.3f}" * 4 + "{:>11.1f}").format(*row), flush=True)


if __name__ == "__main__":
    main()
