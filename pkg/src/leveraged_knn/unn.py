"""UNN: boosting the leveraging coefficients of a k-NN rule.

Each class is a separate one-vs-all problem. An iteration picks one
prototype j, computes the signed weight sums over its reciprocal
neighbors, takes a leveraging step delta on alpha[j, c] and updates the
weights of exactly those reciprocal neighbors.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .errors import DivergenceError, DomainError
from .losses import (
    Loss,
    loss_value,
    solve_delta_closed,
    solve_delta_exact,
    update_weight,
    weight_from_edge,
)
from .neighbors import EUCLIDEAN, Metric

ORACLES = ("lazy_random", "lazy_ordered", "boosting", "boosting_once")
SMOOTHING = ("on_zero", "always")
SMOOTHING_SCALE = ("absolute", "normalized")


def _norm_choice(value, choices, what):
    v = str(value).replace("-", "_").lower()
    if v not in choices:
        raise DomainError(f"unknown {what} {value!r}; choose from {choices}")
    return v


@dataclass(frozen=True)
class TrainConfig:
    """Training options; ``T=None`` means m iterations per class."""

    loss: Loss = Loss.EXP
    k: int = 9
    T: int | None = None
    oracle: str = "boosting"
    smoothing: str = "on_zero"
    exact_delta: bool = False
    convergence_tol: float = 1e-8
    smoothing_scale: str = "absolute"
    seed: int = 0
    threads: int = 1
    drift_check_every: int = 0

    def __post_init__(self):
        object.__setattr__(self, "loss", Loss.parse(self.loss))
        object.__setattr__(self, "oracle", _norm_choice(self.oracle, ORACLES, "oracle"))
        object.__setattr__(self, "smoothing", _norm_choice(self.smoothing, SMOOTHING, "smoothing"))
        object.__setattr__(
            self, "smoothing_scale", _norm_choice(self.smoothing_scale, SMOOTHING_SCALE, "smoothing scale")
        )
        if self.k < 1:
            raise DomainError(f"k must be >= 1, got {self.k}")
        if self.T is not None and self.T < 1:
            raise DomainError(f"T must be >= 1, got {self.T}")
        if self.convergence_tol < 0:
            raise DomainError("convergence_tol must be >= 0")

    def iterations(self, m):
        return m if self.T is None else self.T


@dataclass(frozen=True, eq=False)
class LeveragedModel:
    """Prototypes with their (m, C) leveraging coefficients.

    ``ids`` are the prototypes' indices in the training set they came from,
    which survive filtering. ``class_pools``, when set, gives a separate
    retained-prototype mask per class.
    """

    prototypes: Dataset
    alpha: np.ndarray
    k: int
    loss: Loss = Loss.EXP
    metric: Metric = EUCLIDEAN
    ids: np.ndarray | None = None
    class_pools: np.ndarray | None = None

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=np.float64)
        if alpha.shape != (self.prototypes.m, self.prototypes.C):
            raise DomainError(f"alpha shape {alpha.shape} != ({self.prototypes.m}, {self.prototypes.C})")
        if not np.all(np.isfinite(alpha)):
            raise DomainError("alpha must be finite")
        alpha.flags.writeable = False
        ids = np.arange(self.prototypes.m) if self.ids is None else np.array(self.ids, dtype=np.int64)
        ids.flags.writeable = False
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "loss", Loss.parse(self.loss))
        if self.class_pools is not None:
            pools = np.array(self.class_pools, dtype=bool)
            if pools.shape != alpha.shape:
                raise DomainError("class_pools must match alpha's shape")
            object.__setattr__(self, "class_pools", pools)

    @property
    def m(self):
        return self.prototypes.m

    @property
    def C(self):
        return self.prototypes.C

    @property
    def n(self):
        return self.prototypes.n

    @property
    def class_names(self):
        return self.prototypes.class_names


DIAG_COLUMNS = (
    "class", "t", "j", "delta", "surrogate", "gamma", "eta", "bound",
    "bregman_residual", "risk01", "smoothed",
)


@dataclass
class ClassTrace:
    """Per-iteration records for one class; index 0 of ``surrogate`` and
    ``risk01`` is the state before the first iteration."""

    c: int
    m: int
    j: list = field(default_factory=list)
    delta: list = field(default_factory=list)
    surrogate: list = field(default_factory=list)
    risk01: list = field(default_factory=list)
    w_plus: list = field(default_factory=list)
    w_minus: list = field(default_factory=list)
    w_norm1: list = field(default_factory=list)
    smoothed: list = field(default_factory=list)
    bregman_residual: list = field(default_factory=list)
    bregman_correction: list = field(default_factory=list)
    negative_weights: int = 0
    max_drift: float = 0.0
    stopped_early: bool = False

    @property
    def iterations(self):
        return len(self.j)

    @property
    def gamma(self):
        wp, wm = np.array(self.w_plus), np.array(self.w_minus)
        tot = wp + wm
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(tot > 0, np.abs(wp / np.where(tot > 0, tot, 1) - 0.5), 0.0)

    @property
    def eta(self):
        wp, wm, wn = map(np.array, (self.w_plus, self.w_minus, self.w_norm1))
        return np.where(wn > 0, (wp + wm) / np.where(wn > 0, wn, 1), 0.0)

    def wia_mask(self):
        return (self.gamma > 0) & (self.eta > 0)

    def running_bound(self):
        """exp(-2 eta gamma^2 tau) with running minima over WIA iterations."""
        g, e, ok = self.gamma, self.eta, self.wia_mask()
        out = np.ones(len(g))
        gmin = emin = math.inf
        tau = 0
        for t in range(len(g)):
            if ok[t]:
                tau += 1
                gmin, emin = min(gmin, g[t]), min(emin, e[t])
            if tau:
                out[t] = math.exp(-2 * emin * gmin**2 * tau)
        return out


@dataclass
class TrainDiagnostics:
    config: TrainConfig
    traces: list

    def surrogate_trace(self, c):
        return np.array(self.traces[c].surrogate)

    def total_surrogate(self):
        """Surrogate over all classes after each class's final iteration."""
        return float(np.mean([tr.surrogate[-1] for tr in self.traces]))

    def rows(self):
        for tr in self.traces:
            gamma, eta, bound = tr.gamma, tr.eta, tr.running_bound()
            for t in range(tr.iterations):
                yield (
                    tr.c, t + 1, tr.j[t], tr.delta[t], tr.surrogate[t + 1],
                    float(gamma[t]), float(eta[t]), float(bound[t]),
                    tr.bregman_residual[t], tr.risk01[t + 1], int(tr.smoothed[t]),
                )


class _ClassProblem:
    """Sparse column view of the edge matrix for one class."""

    def __init__(self, graph, Y, c):
        m, kk = graph.direct.shape
        y = Y[:, c]
        rows = np.repeat(np.arange(m), kk)
        cols = graph.direct.ravel()
        order = np.lexsort((rows, cols))
        self.m = m
        self.rows = rows[order]
        self.cols = cols[order]
        self.vals = y[self.rows] * y[self.cols]
        self.ptr = np.concatenate([[0], np.cumsum(np.bincount(self.cols, minlength=m))])
        self.covered = np.diff(self.ptr) > 0
        self.pos = self.vals > 0
        self.absval = np.abs(self.vals)
        self.col_l1 = np.bincount(self.cols, weights=self.absval, minlength=m)

    def column(self, j):
        s = slice(self.ptr[j], self.ptr[j + 1])
        return self.rows[s], self.vals[s]

    def partial_sums(self, w):
        wr = w[self.rows]
        wp = np.bincount(self.cols, weights=np.where(self.pos, wr, 0.0), minlength=self.m)
        wm = np.bincount(self.cols, weights=np.where(self.pos, 0.0, wr), minlength=self.m)
        return wp, wm


def smooth(w_plus, w_minus, m, mass=1.0):
    """Add mass/m to both partial sums.

    ``mass=1`` smooths the raw weights; ``mass=||w||_1`` smooths as if the
    weights were first normalized to sum to one.
    """
    if m < 1:
        raise DomainError("m must be >= 1")
    return w_plus + mass / m, w_minus + mass / m


def _needs_smoothing(loss, smoothing, wp, wm):
    if loss is Loss.SQUARED:
        return False
    return smoothing == "always" or wp == 0 or wm == 0


def _closed_deltas(loss, smoothing, wp, wm, l1, m, mass=1.0):
    """Vectorized closed-form steps for every column (0 where uncovered)."""
    if loss is Loss.SQUARED:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(l1 > 0, (wp - wm) / (2.0 * np.where(l1 > 0, l1, 1.0)), 0.0)
    sm = (wp == 0) | (wm == 0) if smoothing == "on_zero" else np.ones(wp.shape, bool)
    a = np.where(sm, wp + mass / m, wp)
    b = np.where(sm, wm + mass / m, wm)
    d = np.log(a) - np.log(b)
    return 0.5 * d if loss is Loss.EXP else d


def _smoothing_mass(cfg, w):
    return float(np.abs(w).sum()) if cfg.smoothing_scale == "normalized" else 1.0


def _step_delta(cfg, prob, j, w, rho, wp, wm, m):
    """Leveraging step for column j; returns (delta, smoothed)."""
    rows, vals = prob.column(j)
    if rows.size == 0:
        return 0.0, False
    if cfg.exact_delta:
        try:
            return solve_delta_exact(cfg.loss, vals, rho[rows]).delta, False
        except DivergenceError:
            pass
    sm = _needs_smoothing(cfg.loss, cfg.smoothing, wp, wm)
    if sm:
        wp, wm = smooth(wp, wm, m, _smoothing_mass(cfg, w))
    sol = solve_delta_closed(cfg.loss, wp, wm, prob.col_l1[j])
    if not math.isfinite(sol.delta):
        raise AssertionError(f"non-finite step at index {j}")
    return sol.delta, sm


def _train_class(graph, Y, c, cfg, T):
    m = Y.shape[0]
    loss = cfg.loss
    prob = _ClassProblem(graph, Y, c)
    rng = np.random.default_rng([cfg.seed, c])
    ordered = np.lexsort((np.arange(m), Y.argmax(axis=1)))
    alpha = np.zeros(m)
    rho = np.zeros(m)
    w = np.full(m, weight_from_edge(loss, 0.0))
    tr = ClassTrace(c, m)
    psi = loss_value(loss, rho)
    tr.surrogate.append(float(psi.mean()))
    tr.risk01.append(float(np.mean(rho < 0)))
    used = np.zeros(m, bool)
    bregman = loss is Loss.EXP and Y.shape[1] == 2

    for t in range(T):
        # [I.0] weak index chooser
        if cfg.oracle == "lazy_ordered":
            j = int(ordered[t % m])
        elif cfg.oracle == "lazy_random":
            j = int(rng.integers(m))
        else:
            cand = prob.covered & ~used if cfg.oracle == "boosting_once" else prob.covered
            if not cand.any():
                tr.stopped_early = True
                break
            if cfg.exact_delta:
                # steepest coordinate; the exact line search fixes the step
                grad = np.abs(np.bincount(prob.cols, weights=prob.vals * w[prob.rows], minlength=m))
                score = np.where(cand, grad, -np.inf)
                j = int(np.argmax(score))
                if score[j] <= 0:
                    tr.stopped_early = True
                    break
            else:
                wp_all, wm_all = prob.partial_sums(w)
                deltas = _closed_deltas(
                    loss, cfg.smoothing, wp_all, wm_all, prob.col_l1, m, _smoothing_mass(cfg, w)
                )
                # realized decrease of sum_i psi(edge_i) for each candidate step
                gain = np.bincount(
                    prob.cols,
                    weights=psi[prob.rows] - loss_value(loss, rho[prob.rows] + deltas[prob.cols] * prob.vals),
                    minlength=m,
                )
                score = np.where(cand, gain, -np.inf)
                j = int(np.argmax(score))
                if cfg.oracle == "boosting":
                    big = np.abs(deltas[cand]).max()
                    if score[j] <= 0 or big < cfg.convergence_tol:
                        tr.stopped_early = True
                        break
            used[j] = True

        # [I.1] partial sums over the reciprocal neighbors of j
        rows, vals = prob.column(j)
        wr = w[rows]
        wp = float(wr[vals > 0].sum())
        wm = float(wr[vals < 0].sum())
        delta, smoothed = _step_delta(cfg, prob, j, w, rho, wp, wm, m)
        if cfg.oracle == "boosting" and cfg.exact_delta and abs(delta) < cfg.convergence_tol:
            tr.stopped_early = True
            break

        # [I.2] weight update on reciprocal neighbors only; [I.3] leverage
        w_old = wr.copy()
        w_norm1 = float(np.abs(w).sum())
        if delta != 0.0 and rows.size:
            w[rows] = update_weight(loss, wr, delta, vals)
            rho[rows] += delta * vals
            psi[rows] = loss_value(loss, rho[rows])
            alpha[j] += delta

        tr.j.append(j)
        tr.delta.append(float(delta))
        tr.w_plus.append(wp)
        tr.w_minus.append(wm)
        tr.w_norm1.append(w_norm1)
        tr.smoothed.append(bool(smoothed))
        s_new = float(psi.mean())
        if bregman:
            w_new = w[rows]
            with np.errstate(divide="ignore", invalid="ignore"):
                div = float(np.sum(w_new * (np.log(w_new) - np.log(w_old)) - w_new + w_old))
            tr.bregman_residual.append((tr.surrogate[-1] - s_new) - div / m)
            # the identity presumes a stationary step; a smoothed step leaves delta * sum r w_new
            tr.bregman_correction.append(delta * float(np.dot(vals, w_new)) / m)
        else:
            tr.bregman_residual.append(math.nan)
            tr.bregman_correction.append(math.nan)
        tr.surrogate.append(s_new)
        tr.risk01.append(float(np.mean(rho < 0)))
        if loss is Loss.SQUARED:
            tr.negative_weights += int(np.sum(w[rows] < 0))
        if cfg.drift_check_every and (t + 1) % cfg.drift_check_every == 0:
            tr.max_drift = max(tr.max_drift, float(np.max(np.abs(w - weight_from_edge(loss, rho)))))
    return alpha, tr


def train(dataset, graph, config=None, **overrides):
    """Fit leveraging coefficients for every class of ``dataset``.

    Returns ``(LeveragedModel, TrainDiagnostics)``.
    """
    cfg = config or TrainConfig()
    if overrides:
        cfg = TrainConfig(**{**cfg.__dict__, **overrides})
    if graph.m != dataset.m:
        raise DomainError(f"graph has {graph.m} nodes but dataset has {dataset.m} examples")
    if graph.direct.size and graph.direct.max() >= dataset.m:
        raise DomainError("graph references examples outside the dataset")
    if graph.k != min(cfg.k, dataset.m - 1):
        warnings.warn(f"graph k={graph.k} differs from config k={cfg.k}", stacklevel=2)
    Y = dataset.Y
    T = cfg.iterations(dataset.m)

    def run(c):
        return _train_class(graph, Y, c, cfg, T)

    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            results = list(pool.map(run, range(dataset.C)))
    else:
        results = [run(c) for c in range(dataset.C)]
    alpha = np.column_stack([a for a, _ in results])
    model = LeveragedModel(dataset, alpha, graph.k, cfg.loss, graph.metric)
    return model, TrainDiagnostics(cfg, [tr for _, tr in results])


def leveraged_edges(alpha, graph, Y):
    """Edges y_ic * sum_{j in NN(i)} alpha_jc y_jc on the training set, (m, C)."""
    Y = Y.Y if hasattr(Y, "Y") else Y
    votes = (np.asarray(alpha) * Y)[graph.direct].sum(axis=1)
    return Y * votes


def surrogate_risk(alpha, graph, Y, loss):
    """Surrogate averaged over examples and classes."""
    return float(np.mean(loss_value(loss, leveraged_edges(alpha, graph, Y))))


def class_surrogate(alpha, graph, Y, loss):
    """Per-class surrogate, shape (C,)."""
    return np.mean(loss_value(loss, leveraged_edges(alpha, graph, Y)), axis=0)


@dataclass
class Theorem2Report:
    violations: list
    per_class: list

    @property
    def ok(self):
        return not self.violations


def check_theorem2(diagnostics, slack=1e-12):
    """Compare each class's 0/1 risk trace with exp(-2 eta gamma^2 tau).

    gamma and eta are the run-wide minima over iterations where both are
    positive, tau counts those iterations so far. Also reports the product of
    per-step normalizers, which for the exponential loss equals the ratio of
    final to initial class surrogate.
    """
    violations, per_class = [], []
    for tr in diagnostics.traces:
        g, e, ok = tr.gamma, tr.eta, tr.wia_mask()
        gmin = float(g[ok].min()) if ok.any() else 0.0
        emin = float(e[ok].min()) if ok.any() else 0.0
        taus = np.concatenate([[0], np.cumsum(ok)])
        bounds = np.exp(-2.0 * emin * gmin**2 * taus)
        risk = np.array(tr.risk01)
        for t in np.flatnonzero(risk > bounds + slack):
            violations.append((tr.c, int(t), float(risk[t]), float(bounds[t])))
        surr = np.array(tr.surrogate)
        normalizers = surr[1:] / surr[:-1] if len(surr) > 1 else np.array([])
        per_class.append({
            "class": tr.c,
            "gamma_min": gmin,
            "eta_min": emin,
            "tau": int(taus[-1]),
            "bound": float(bounds[-1]),
            "risk01": float(risk[-1]),
            "normalizer_product": float(np.prod(normalizers)) if normalizers.size else 1.0,
            "max_normalizer": float(normalizers.max()) if normalizers.size else 1.0,
        })
    return Theorem2Report(violations, per_class)
