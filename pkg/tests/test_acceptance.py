"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line with the measured numbers
before asserting, so ``pytest -v -s tests/test_acceptance.py`` doubles as a
results table.
"""

import time

import numpy as np
import pytest

from helpers import coordinate_descent_exp, exp_surrogate, finite_instances, make_dataset
from leveraged_knn import (
    FilterSpec,
    LeveragedModel,
    TrainConfig,
    build_graph,
    check_theorem2,
    cross_validate,
    evaluate,
    filter_model,
    gen_blobs,
    gen_ripley,
    predict_classic,
    predict_leveraged,
    solve_delta_closed,
    solve_delta_exact,
    train,
    update_weight,
    weight_from_edge,
)
from leveraged_knn.cli import main
from leveraged_knn.evaluation import evaluate_prototypes

RIPLEY_SEEDS = range(10)
BLOB_SEEDS = range(5)


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail

    return emit


@pytest.fixture(scope="module")
def ripley_runs():
    """Criterion 1 runs: trained UNN and plain 9-NN on each seed's split."""
    start = time.perf_counter()
    runs = []
    for seed in RIPLEY_SEEDS:
        train_set, test_set = gen_ripley(250, 1000, seed)
        graph = build_graph(train_set, 9)
        model, diag = train(train_set, graph, TrainConfig(k=9))
        filtered = filter_model(model, FilterSpec.fraction(0.25))
        runs.append({
            "diag": diag,
            "unn": evaluate(filtered, test_set, "leveraged").error_rate,
            "knn": evaluate_prototypes(train_set, test_set, 9).error_rate,
        })
    return runs, time.perf_counter() - start


@pytest.fixture(scope="module")
def blob_run():
    ds = gen_blobs(8, 100, 16, 0.45, seed=0)
    return train(ds, build_graph(ds, 11), TrainConfig(k=11))[1]


def test_criterion_01_ripley_accuracy(ripley_runs, verdict):
    runs, elapsed = ripley_runs
    unn = float(np.mean([r["unn"] for r in runs]))
    knn = float(np.mean([r["knn"] for r in runs]))
    parts = {"error <= 0.11": unn <= 0.11, "error <= plain 9-NN": unn <= knn, "runtime < 30s": elapsed < 30}
    verdict(1, all(parts.values()),
            f"UNN theta=0.25 mean error {unn:.4f}, plain 9-NN {knn:.4f}, runtime {elapsed:.1f}s; "
            + ", ".join(f"{k}: {'ok' if v else 'no'}" for k, v in parts.items()))


def test_criterion_02_monotone_surrogate(ripley_runs, blob_run, verdict):
    runs, _ = ripley_runs
    worst = -np.inf
    for diag in [r["diag"] for r in runs] + [blob_run]:
        for tr in diag.traces:
            worst = max(worst, float(np.max(np.diff(tr.surrogate))))
    verdict(2, worst <= 1e-12, f"largest per-iteration surrogate increase {worst:.3e} (<= 1e-12) "
                               f"over {len(runs)} Ripley runs and 8-class blobs")


def test_criterion_03_global_optimum(verdict):
    start = time.perf_counter()
    gaps = []
    for ds, g, R in finite_instances(20, seed=0):
        _, d = train(ds, g, TrainConfig(k=g.k, T=20000, convergence_tol=0.0))
        gaps.append(abs(d.traces[0].surrogate[-1] - exp_surrogate(R, coordinate_descent_exp(R))))
    elapsed = time.perf_counter() - start
    worst = max(gaps)
    verdict(3, len(gaps) >= 20 and worst <= 1e-6 and elapsed < 10,
            f"{len(gaps)} instances, max |UNN - oracle| {worst:.3e} (<= 1e-6), runtime {elapsed:.1f}s (< 10s)")


def test_criterion_04_theorem2(ripley_runs, blob_run, verdict):
    runs, _ = ripley_runs
    reports = [check_theorem2(r["diag"]) for r in runs] + [check_theorem2(blob_run)]
    n_viol = sum(len(rep.violations) for rep in reports)
    verdict(4, n_viol == 0, f"{n_viol} bound violations over {len(reports)} training runs")


def test_criterion_05_bregman_identity(ripley_runs, verdict):
    diag = ripley_runs[0][0]["diag"]
    plain, smoothed = [], []
    for tr in diag.traces:
        res = np.array(tr.bregman_residual)
        corr = np.array(tr.bregman_correction)
        sm = np.array(tr.smoothed)
        plain.extend(np.abs(res[~sm]))
        # smoothing moves the step off the stationary point; the leftover is
        # delta * sum_i r_i w_new_i / m, recorded alongside the residual
        smoothed.extend(np.abs(res[sm] - corr[sm]))
    worst_plain = max(plain, default=0.0)
    worst_sm = max(smoothed, default=0.0)
    verdict(5, worst_plain <= 1e-8 and worst_sm <= 1e-8,
            f"{len(plain)} unsmoothed steps max residual {worst_plain:.3e}; "
            f"{len(smoothed)} smoothed steps max residual after remainder {worst_sm:.3e} (<= 1e-8)")


def test_criterion_06_closed_forms(verdict):
    rng = np.random.default_rng(6)
    exp_gap = sq_gap = 0.0
    for _ in range(1000):
        size = int(rng.integers(2, 12))
        r = rng.choice([-1.0, 1.0], size=size)
        r[:2] = (1.0, -1.0)
        rho = rng.normal(0, 2, size=size)
        w = weight_from_edge("exp", rho)
        closed = solve_delta_closed("exp", w[r > 0].sum(), w[r < 0].sum()).delta
        exp_gap = max(exp_gap, abs(closed - solve_delta_exact("exp", r, rho).delta))
        w = weight_from_edge("squared", rho)
        closed = solve_delta_closed("squared", w[r > 0].sum(), w[r < 0].sum(), np.abs(r).sum()).delta
        sq_gap = max(sq_gap, abs(closed - solve_delta_exact("squared", r, rho).delta))
    rho, delta, r = np.meshgrid(np.linspace(-8, 8, 10), np.linspace(-5, 5, 10), [-1.0, -1 / 7, 1 / 49, 1.0] + [0.5] * 6)
    rho, delta, r = rho.ravel(), delta.ravel(), r.ravel()
    w_new = update_weight("logistic", weight_from_edge("logistic", rho), delta, r)
    shift = weight_from_edge("logistic", rho + delta * r)
    lg_gap = float(np.max(np.abs(w_new - shift)))
    ok = exp_gap <= 1e-10 and sq_gap <= 1e-10 and lg_gap <= 1e-10
    verdict(6, ok, f"exp closed vs exact {exp_gap:.2e}, squared {sq_gap:.2e}, "
                   f"logistic edge shift on {rho.size} points {lg_gap:.2e} (all <= 1e-10)")


def test_criterion_07_uniform_alpha(verdict):
    rng = np.random.default_rng(7)
    mismatches, checked = 0, 0
    for C in (2, 8):
        for k in (1, 3, 11):
            protos = make_dataset(rng.random((300, 3)), rng.integers(0, C, 300), C)
            model = LeveragedModel(protos, np.ones((300, C)), k)
            Q = rng.random((10_000, 3))
            a = predict_leveraged(Q, model).labels
            b = predict_classic(Q, protos, k).labels
            mismatches += int(np.sum(a != b))
            checked += Q.shape[0]
    verdict(7, mismatches == 0, f"{mismatches} argmax mismatches in {checked} queries (C in 2,8; k in 1,3,11)")


def test_criterion_08_speedup(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(8)
    protos = make_dataset(rng.random((10_000, 64)), rng.integers(0, 2, 10_000), 2)
    full = LeveragedModel(protos, rng.normal(size=(10_000, 2)), 9)
    reduced = filter_model(full, FilterSpec.fraction(0.25))
    Q = rng.random((1000, 64))

    def best(model):
        times = []
        for _ in range(3):
            t0 = time.perf_counter()
            predict_leveraged(Q, model, backend="exhaustive")
            times.append(time.perf_counter() - t0)
        return min(times)

    t_full, t_red = best(full), best(reduced)
    elapsed = time.perf_counter() - start
    ratio = t_full / t_red
    verdict(8, ratio >= 3 and elapsed < 60,
            f"theta=1 {t_full:.3f}s vs theta=0.25 {t_red:.3f}s: {ratio:.2f}x (>= 3x), runtime {elapsed:.1f}s (< 60s)")


def test_criterion_09_multiclass(tmp_path, verdict):
    unn, knn = [], []
    for seed in BLOB_SEEDS:
        ds = gen_blobs(8, 100, 16, 0.45, seed=seed)
        rep = cross_validate(ds, 3, TrainConfig(k=11), FilterSpec.threshold(0.0), seed=seed)
        unn.append(rep.summary["unn_mAP"])
        knn.append(rep.summary["knn_mAP"])
    # the Gist path: a 512-dim CSV goes through the cv subcommand end to end
    rng = np.random.default_rng(9)
    gist = tmp_path / "gist.csv"
    rows = ["label," + ",".join(f"g{i}" for i in range(512))]
    for c in range(3):
        for x in rng.normal(c, 1.0, size=(20, 512)):
            rows.append(f"s{c}," + ",".join(repr(float(v)) for v in x))
    gist.write_text("\n".join(rows) + "\n")
    code = main(["cv", "--data", str(gist), "--folds", "3", "--out", str(tmp_path / "cv.json")])
    u, k = float(np.mean(unn)), float(np.mean(knn))
    verdict(9, u >= k and code == 0,
            f"mean mAP UNN {u:.4f} vs plain 11-NN {k:.4f} over {len(unn)} seeds; "
            f"512-dim cv run exit code {code}")


def _pipeline(out):
    out.mkdir()
    steps = [
        ["gen", "ripley", "--seed", "3", "--out-dir", out],
        ["train", "--data", out / "ripley_train.csv", "--model", out / "m.json", "--threads", "2"],
        ["filter", "--model", out / "m.json", "--out", out / "f.json", "--theta", "0.25"],
        ["eval", "--model", out / "f.json", "--data", out / "ripley_test.csv", "--out", out / "r.json"],
        ["predict", "--model", out / "f.json", "--data", out / "ripley_test.csv", "--out", out / "p.csv"],
        ["gen", "blobs", "--classes", "4", "--per-class", "30", "--dim", "4", "--out-dir", out],
        ["cv", "--data", out / "blobs.csv", "--folds", "3", "--out", out / "cv.json", "--traces", out / "cv.csv"],
    ]
    for s in steps:
        assert main([str(a) for a in s]) == 0
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def test_criterion_10_determinism(tmp_path, verdict):
    a, b = _pipeline(tmp_path / "a"), _pipeline(tmp_path / "b")
    differ = [name for name in a if a[name] != b.get(name)]
    verdict(10, a.keys() == b.keys() and not differ,
            f"{len(a)} output files compared, {len(differ)} differ {differ}")
