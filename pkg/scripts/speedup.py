"""Batch prediction time against the retained fraction theta.

    python3 scripts/speedup.py --prototypes 10000 --dim 64 --queries 1000
"""

import argparse
import time

import numpy as np

from leveraged_knn import Dataset, FilterSpec, LeveragedModel, filter_model, predict_leveraged
from leveraged_knn.serialization import text_table


def best_time(Q, model, backend, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        predict_leveraged(Q, model, backend=backend)
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--prototypes", type=int, default=10_000)
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--queries", type=int, default=1000)
    ap.add_argument("--k", type=int, default=9)
    ap.add_argument("--thetas", default="1,0.5,0.25,0.1,0.0625")
    ap.add_argument("--backend", default="exhaustive")
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    m = args.prototypes
    protos = Dataset(rng.random((m, args.dim)), rng.integers(0, 2, m), ("a", "b"))
    full = LeveragedModel(protos, rng.normal(size=(m, 2)), args.k)
    Q = rng.random((args.queries, args.dim))
    base = None
    rows = []
    for t in (float(x) for x in args.thetas.split(",")):
        model = filter_model(full, FilterSpec.fraction(t))
        secs = best_time(Q, model, args.backend, args.repeats)
        base = base or secs
        rows.append([t, model.m, secs, base / secs])
    print(text_table(["theta", "prototypes", "seconds", "speedup"], rows))


if __name__ == "__main__":
    main()
