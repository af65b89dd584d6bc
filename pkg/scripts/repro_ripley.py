"""Ripley test error of filtered UNN against plain k-NN, averaged over seeds.

    python3 scripts/repro_ripley.py --seeds 10 --k 9 --thetas 0.1,0.25,0.5,1
"""

import argparse

import numpy as np

from leveraged_knn import FilterSpec, TrainConfig, build_graph, evaluate, filter_model, gen_ripley, train
from leveraged_knn.classify import random_subsample
from leveraged_knn.dataset import ripley_bayes_predict
from leveraged_knn.evaluation import evaluate_prototypes
from leveraged_knn.serialization import text_table


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--k", type=int, default=9)
    ap.add_argument("--thetas", default="0.1,0.25,0.5,1")
    ap.add_argument("--loss", default="exp")
    args = ap.parse_args()
    thetas = [float(t) for t in args.thetas.split(",")]

    err = {t: {"unn": [], "random": []} for t in thetas}
    knn, bayes = [], []
    for seed in range(args.seeds):
        tr, te = gen_ripley(250, 1000, seed)
        model, _ = train(tr, build_graph(tr, args.k), TrainConfig(k=args.k, loss=args.loss))
        knn.append(evaluate_prototypes(tr, te, args.k).error_rate)
        bayes.append(float(np.mean(ripley_bayes_predict(te.X) != te.labels)))
        for t in thetas:
            err[t]["unn"].append(evaluate(filter_model(model, FilterSpec.fraction(t)), te).error_rate)
            sub, _ = random_subsample(tr, t, seed)
            err[t]["random"].append(evaluate_prototypes(sub, te, args.k).error_rate)

    rows = [[t, float(np.mean(e["unn"])), float(np.mean(e["random"])), float(np.mean(knn))]
            for t, e in err.items()]
    print(text_table(["theta", "unn", "random_knn", "full_knn"], rows))
    print(f"Bayes rule on the same test sets: {np.mean(bayes):.4f}")


if __name__ == "__main__":
    main()
