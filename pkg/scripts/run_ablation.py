"""Train ablation variants on the synthetic sets and print held-out F1/AUC.

    python scripts/run_ablation.py                 # full vs -CP on cross-path data, full vs -BR on bridge data
    python scripts/run_ablation.py --all --seed 1  # every variant on both sets
"""

import argparse
import logging
from dataclasses import replace

from crossre.experiments import BRIDGE_DEPENDENT, CROSS_PATH, TOY, compare_variants

ALL = ("full", "-IC", "-BR", "-CP", "-TH")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--all", action="store_true", help="run all five variants on each set")
    ap.add_argument("--seed", type=int, default=TOY.seed)
    ap.add_argument("--epochs", type=int, default=TOY.epochs)
    args = ap.parse_args()
    logging.basicConfig(level=logging.ERROR)
    cfg = replace(TOY, seed=args.seed, epochs=args.epochs)
    plans = [("cross-path-only", CROSS_PATH, ALL if args.all else ("full", "-CP")),
             ("bridge-dependent", BRIDGE_DEPENDENT, ALL if args.all else ("full", "-BR"))]
    print(f"{'data':18s} {'variant':8s} {'eval F1':>8s} {'eval AUC':>9s} {'train F1':>9s} {'sec':>6s}")
    for label, spec, variants in plans:
        for r in compare_variants(spec, cfg, variants).values():
            print(f"{label:18s} {r.variant:8s} {r.f1:8.3f} {r.auc:9.3f} {r.train_f1:9.3f} {r.seconds:6.0f}")


if __name__ == "__main__":
    main()
