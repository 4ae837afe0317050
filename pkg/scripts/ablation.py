"""Loss / shifting / TV ablation on the overfit scene with equal iteration budgets.

    python scripts/ablation.py --iterations 2000 --out runs/ablation
    python scripts/ablation.py --only local global
"""

import argparse
import json
import logging
from dataclasses import replace
from pathlib import Path

from lfsynth.experiments import ABLATIONS, run_overfit
from lfsynth.training import TrainConfig


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--iterations", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--only", nargs="*", choices=sorted(ABLATIONS), default=None)
    ap.add_argument("--out", default="runs/ablation")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    base = TrainConfig(iterations=args.iterations, seed=args.seed)
    rows = {}
    for name in args.only or ABLATIONS:
        logging.info("== %s", name)
        rep = run_overfit(replace(base, **ABLATIONS[name]), out_dir=out / name)
        rows[name] = {k: rep[k] for k in ("loss_first", "loss_last", "psnr", "mean_ssim",
                                           "flow_energy", "slopes")}
        (out / name / "summary.json").write_text(json.dumps(rows[name], indent=2) + "\n")
    print(f"{'variant':14s} {'psnr':>8s} {'ssim':>7s} {'loss':>9s} {'flow_energy':>12s}")
    for name, r in rows.items():
        print(f"{name:14s} {r['psnr']:8.2f} {r['mean_ssim']:7.4f} {r['loss_last']:9.5f} {r['flow_energy']:12.5f}")


if __name__ == "__main__":
    main()
