#!/usr/bin/env python3
"""End-to-end demo: synthetic A/B data, linear model, binned-lift descent.

Generates 10k rows where the outcome gains 0.5 * r3 under treatment, starts a
linear model far from the generating coefficients, trains for 100 steps, and
writes per-snapshot bin tables (mean prediction vs measured lift) that show
the bins spreading out and lining up over the run.
"""

import argparse
from pathlib import Path

import numpy as np

from liftloss import (
    DataGenConfig,
    GradConfig,
    ModelKind,
    ModelSpec,
    TrainConfig,
    generate,
    train,
)
from liftloss.loss import write_loss_report


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--steps", type=int, default=100)
    ap.add_argument("--bins", type=int, default=5)
    ap.add_argument("--lr", type=float, default=0.1)
    ap.add_argument("--out-dir", default="demo_out")
    args = ap.parse_args()

    dataset = generate(
        DataGenConfig(n_rows=args.rows, treatment_fraction=0.7, seed=args.seed)
    )
    spec = ModelSpec(ModelKind.LINEAR, 2)
    init = np.array([1.0, 0.1, 1.0])  # slopes for (r1, r3), then offset
    snapshots = tuple(sorted({0, 1, min(10, args.steps), args.steps}))
    config = TrainConfig(
        step_size=args.lr,
        steps=args.steps,
        grad=GradConfig(n_bins=args.bins),
        snapshot_steps=snapshots,
    )
    params, trace = train(dataset, spec, init, config)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for t, report in sorted(trace.snapshots.items()):
        write_loss_report(report, out_dir / f"bins_t{t}.csv")

    print(f"start  params (slope_r1, slope_r3, offset) = {np.round(init, 4)}")
    print(f"final  params (slope_r1, slope_r3, offset) = {np.round(params, 4)}")
    print(f"target params (slope_r1, slope_r3, offset) = [0.  0.5 0. ]")
    print()
    print(f"{'step':>6} {'loss':>12} {'bias':>12} {'separation':>12}")
    for e in trace.entries:
        if e.step in snapshots:
            print(f"{e.step:>6} {e.loss:>12.6f} {e.bias_term:>12.6f} {e.separation_term:>12.6f}")
    for event in trace.events:
        print(f"note: {event}")
    print(f"\nper-snapshot bin tables written to {out_dir}/")


if __name__ == "__main__":
    main()
