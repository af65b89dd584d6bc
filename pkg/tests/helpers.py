import numpy as np

from leveraged_knn import Dataset


def make_dataset(X, labels, C=None):
    labels = np.asarray(labels)
    C = C or int(labels.max()) + 1
    return Dataset(np.asarray(X, dtype=float), labels, tuple(f"c{c}" for c in range(C)))


def edge_matrix(graph, Y, c):
    """Dense R^(c), built entry by entry."""
    Y = Y.Y if hasattr(Y, "Y") else Y
    m = graph.direct.shape[0]
    R = np.zeros((m, m))
    for i in range(m):
        for j in graph.direct[i]:
            R[i, j] = Y[i, c] * Y[j, c]
    return R


def has_finite_minimizer(R, tol=1e-9):
    """False when some direction d has R d >= 0 with R d != 0 (the
    exponential surrogate then decreases forever along d)."""
    from scipy.optimize import linprog

    m = R.shape[1]
    res = linprog(-R.sum(axis=0), A_ub=-R, b_ub=np.zeros(R.shape[0]),
                  bounds=[(-1, 1)] * m, method="highs")
    return res.status == 0 and -res.fun <= tol


def exp_surrogate(R, alpha):
    return float(np.mean(np.exp(-(R @ alpha))))


def coordinate_descent_exp(R, tol=1e-10, max_sweeps=200000):
    """Cyclic exact coordinate descent on mean exp(-R alpha), |R| entries in {0, 1}.

    Stops when the gradient's max-norm drops below ``tol``.
    """
    m = R.shape[1]
    alpha = np.zeros(m)
    cols = [np.flatnonzero(R[:, j]) for j in range(m)]
    for _ in range(max_sweeps):
        for j in range(m):
            rows = cols[j]
            if rows.size == 0:
                continue
            w = np.exp(-(R[rows] @ alpha))
            r = R[rows, j]
            alpha[j] += 0.5 * np.log(w[r > 0].sum() / w[r < 0].sum())
        grad = -R.T @ np.exp(-(R @ alpha)) / R.shape[0]
        if np.max(np.abs(grad)) < tol:
            break
    return alpha


def finite_instances(n, seed=0, m_range=(6, 12), k_range=(2, 3)):
    """``n`` random two-class instances (k random distinct out-neighbors per
    example) whose exponential surrogate has a finite, nonzero minimizer."""
    from leveraged_knn.neighbors import graph_from_direct

    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        m = int(rng.integers(m_range[0], m_range[1] + 1))
        k = int(rng.integers(k_range[0], k_range[1] + 1))
        labels = rng.permutation(np.arange(m) % 2)
        keys = rng.random((m, m))
        np.fill_diagonal(keys, np.inf)
        direct = np.argsort(keys, axis=1)[:, :k]
        y = np.where(labels == 0, 1.0, -1.0)
        R = np.zeros((m, m))
        R[np.repeat(np.arange(m), k), direct.ravel()] = 1.0
        R *= np.outer(y, y)
        used = (R != 0).any(axis=0)
        # cheap necessary condition first: every used column has both signs
        if not np.all(((R > 0).any(axis=0) & (R < 0).any(axis=0)) | ~used):
            continue
        # skip instances where alpha = 0 is already optimal
        if np.abs(R.sum(axis=0)).max() == 0:
            continue
        if has_finite_minimizer(R):
            ds = make_dataset(np.zeros((m, 1)), labels)
            out.append((ds, graph_from_direct(direct, k), R))
    return out
