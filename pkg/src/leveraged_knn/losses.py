"""Surrogate losses, their example weights, and the 1-D leveraging step.

Weights are kept unnormalized as ``w = -psi'(edge)``, so the exponential
loss starts every example at weight 1, squared at 2 and logistic at 1/2,
and each loss's weight update is the same edge shift
``w(rho) -> w(rho + delta * r)``.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from .errors import DivergenceError, DomainError

WEIGHT_CAP = 1e300
DELTA_LIMIT = 50.0
ROOT_TOL = 1e-12


class Loss(str, enum.Enum):
    EXP = "exp"
    SQUARED = "squared"
    LOGISTIC = "logistic"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {"exponential": "exp", "squ": "squared", "sqf": "squared", "log": "logistic"}
        value = aliases.get(str(value).lower(), str(value).lower())
        try:
            return cls(value)
        except ValueError:
            raise DomainError(f"unknown loss {value!r}; choose exp, squared or logistic") from None


def loss_value(kind, x):
    """psi(x): exp(-x), (1 - x)^2 or log(1 + exp(-x))."""
    kind = Loss.parse(kind)
    x = np.asarray(x, dtype=np.float64)
    if kind is Loss.EXP:
        out = np.exp(-x)
    elif kind is Loss.SQUARED:
        out = (1.0 - x) ** 2
    else:
        out = np.logaddexp(0.0, -x)
    return out if out.ndim else float(out)


def weight_from_edge(kind, rho):
    """-psi'(rho), the weight an example with edge ``rho`` carries."""
    kind = Loss.parse(kind)
    rho = np.asarray(rho, dtype=np.float64)
    if kind is Loss.EXP:
        with np.errstate(over="ignore"):
            out = np.exp(-rho)
        out = _cap(out)
    elif kind is Loss.SQUARED:
        out = 2.0 * (1.0 - rho)
    else:
        out = expit(-rho)
    return out if out.ndim else float(out)


def _cap(w):
    if np.any(w > WEIGHT_CAP):
        warnings.warn("exponential weight overflow; clamping at 1e300", RuntimeWarning, stacklevel=3)
        w = np.minimum(w, WEIGHT_CAP)
    return w


def update_weight(kind, w, delta, r):
    """Weight after shifting the edge by ``delta * r``.

    The logistic row uses ``w e / (1 - w (1 - e))`` with ``e = exp(-delta r)``;
    the commonly printed ``1 - w (1 + e)`` denominator does not reproduce the
    edge shift.
    """
    kind = Loss.parse(kind)
    w = np.asarray(w, dtype=np.float64)
    dr = delta * np.asarray(r, dtype=np.float64)
    if kind is Loss.EXP:
        with np.errstate(over="ignore"):
            out = _cap(w * np.exp(-dr))
    elif kind is Loss.SQUARED:
        out = w - 2.0 * dr
    else:
        if np.any((w <= 0) | (w >= 1)):
            raise DomainError("logistic weights must lie in (0, 1)")
        with np.errstate(over="ignore", invalid="ignore"):
            e = np.exp(-dr)
            out = w * e / (1.0 - w * (1.0 - e))
        big = ~np.isfinite(out) | ~np.isfinite(e)
        if np.any(big):
            # exp(-dr) overflowed: w e / (1 - w + w e) -> 1 - (1 - w) / (w e)
            out = np.where(big, 1.0 - (1.0 - w) * np.exp(np.minimum(dr, 700.0)) / w, out)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class DeltaSolution:
    delta: float
    method: str
    residual: float = 0.0


def solve_delta_closed(kind, w_plus, w_minus, r_norm1=None):
    """Closed-form leveraging step from the signed partial weight sums.

    Callers smooth ``w_plus``/``w_minus`` first when either is zero under
    the exponential or logistic loss.
    """
    kind = Loss.parse(kind)
    if w_plus == 0 and w_minus == 0:
        raise DomainError("index has no reciprocal coverage (w+ = w- = 0)")
    if kind is Loss.SQUARED:
        if not r_norm1 or r_norm1 <= 0:
            raise DomainError("squared-loss step needs a positive column L1 norm")
        return DeltaSolution((w_plus - w_minus) / (2.0 * r_norm1), "closed_form")
    if w_plus < 0 or w_minus < 0:
        raise DomainError("partial weight sums must be non-negative")
    if w_plus == 0 or w_minus == 0:
        raise DivergenceError("zero partial weight sum; apply smoothing first")
    ratio = math.log(w_plus) - math.log(w_minus)
    return DeltaSolution(0.5 * ratio if kind is Loss.EXP else ratio, "closed_form")


def stationarity(kind, r, rho, delta):
    """d/d(delta) of sum_i psi(rho_i + delta r_i)."""
    return float(-np.dot(r, weight_from_edge(kind, rho + delta * r)))


def solve_delta_exact(kind, r, rho, tol=ROOT_TOL):
    """Exact minimizer of sum_i psi(rho_i + delta r_i) over delta.

    ``r`` holds the nonzero edge-matrix entries of one column and ``rho``
    the current edges of those examples.
    """
    kind = Loss.parse(kind)
    r = np.asarray(r, dtype=np.float64)
    rho = np.asarray(rho, dtype=np.float64)
    keep = r != 0
    r, rho = r[keep], rho[keep]
    if r.size == 0:
        raise DomainError("need at least one nonzero edge")
    if kind is Loss.SQUARED:
        # quadratic: stationary point in one step
        d = float(np.dot(r, 1.0 - rho) / np.dot(r, r))
        return DeltaSolution(d, "root_find", stationarity(kind, r, rho, d))

    def g(d):
        return stationarity(kind, r, rho, d)

    lo, hi = -1.0, 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        while g(lo) > 0:
            if lo <= -DELTA_LIMIT:
                raise DivergenceError("no finite minimizer (delta -> -inf); smoothing needed")
            lo *= 2
        while g(hi) < 0:
            if hi >= DELTA_LIMIT:
                raise DivergenceError("no finite minimizer (delta -> +inf); smoothing needed")
            hi *= 2
        if g(lo) == 0:
            return DeltaSolution(lo, "root_find", 0.0)
        if g(hi) == 0:
            return DeltaSolution(hi, "root_find", 0.0)
        d = brentq(g, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    res = g(d)
    if abs(res) > tol:
        # brentq stops on the bracket width; polish with Newton on the smooth g
        for _ in range(5):
            slope = float(np.dot(r * r, _curvature(kind, rho + d * r)))
            if slope <= 0:
                break
            d_new = d - res / slope
            res_new = g(d_new)
            if abs(res_new) >= abs(res):
                break
            d, res = d_new, res_new
    return DeltaSolution(float(d), "root_find", res)


def _curvature(kind, x):
    if kind is Loss.EXP:
        return np.exp(-x)
    if kind is Loss.SQUARED:
        return np.full_like(x, 2.0)
    s = expit(-x)
    return s * (1.0 - s)
