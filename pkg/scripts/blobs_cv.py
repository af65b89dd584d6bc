"""Cross-validated mAP of UNN against plain k-NN on overlapping Gaussian blobs.

    python3 scripts/blobs_cv.py --spreads 0.3,0.45,0.6 --seeds 5
"""

import argparse

import numpy as np

from leveraged_knn import FilterSpec, TrainConfig, cross_validate, gen_blobs
from leveraged_knn.serialization import text_table


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--classes", type=int, default=8)
    ap.add_argument("--per-class", type=int, default=100)
    ap.add_argument("--dim", type=int, default=16)
    ap.add_argument("--spreads", default="0.3,0.45,0.6")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--k", type=int, default=11)
    ap.add_argument("--alpha-tilde", type=float, default=0.0)
    args = ap.parse_args()

    rows = []
    for spread in (float(s) for s in args.spreads.split(",")):
        unn, knn, sampled, theta = [], [], [], []
        for seed in range(args.seeds):
            ds = gen_blobs(args.classes, args.per_class, args.dim, spread, seed)
            s = cross_validate(ds, 3, TrainConfig(k=args.k), FilterSpec.threshold(args.alpha_tilde), seed).summary
            unn.append(s["unn_mAP"])
            knn.append(s["knn_mAP"])
            sampled.append(s["knn_sampled_mAP"])
            theta.append(s["theta"])
        rows.append([spread, float(np.mean(theta)), float(np.mean(unn)), float(np.mean(knn)),
                     float(np.mean(sampled))])
    print(text_table(["spread", "theta", "unn_mAP", "knn_mAP", "sampled_knn_mAP"], rows))


if __name__ == "__main__":
    main()
