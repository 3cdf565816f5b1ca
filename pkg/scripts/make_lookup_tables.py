#!/usr/bin/env python3
"""Build the three standard sleep-count lookup tables plus the value map.

Emits one CSV per reward setting over the default 20x20 grid of
(stationary good probability, mean bad-burst length), and a JSON copy
of each for consumption by the learner.
"""

import argparse
from pathlib import Path

import numpy as np

from rfharvest.beliefs import RewardConfig
from rfharvest.threshold import build_lookup_table

SETTINGS = [
    ("cheap_failure", RewardConfig(r1=10.0, r0=1.0, gamma=0.99)),
    ("symmetric", RewardConfig(r1=10.0, r0=10.0, gamma=0.99)),
    ("expensive_failure", RewardConfig(r1=1.0, r0=10.0, gamma=0.99)),
]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--output-dir", default="results")
    parser.add_argument("--pi-g-steps", type=int, default=20)
    parser.add_argument("--t-b-steps", type=int, default=20)
    args = parser.parse_args()

    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    pi_g_axis = np.linspace(0.05, 0.95, args.pi_g_steps)
    t_b_axis = np.linspace(1.1, 20.0, args.t_b_steps)
    for name, cfg in SETTINGS:
        table = build_lookup_table(pi_g_axis, t_b_axis, cfg)
        csv_path = out / f"sleep_table_{name}.csv"
        with open(csv_path, "w") as fh:
            table.write_csv(fh)
        with open(out / f"sleep_table_{name}.json", "w") as fh:
            table.dump_json(fh)
        n_never = sum(1 for c in table.cells if c.valid and c.policy.never_harvest)
        print(f"{csv_path}: r1={cfg.r1} r0={cfg.r0}, {n_never} never-harvest cells")


if __name__ == "__main__":
    main()
