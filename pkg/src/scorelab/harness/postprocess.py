"""Statistical postprocessing of ensemble forecasts, plus the smoothed-ensemble baseline.

All fits pool every case in the training window, whatever the station.
The ensemble variance ``s^2`` is the population variance (divisor k).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from ..densities import Mixture, Normal
from ..errors import DegenerateEnsemble, InsufficientTraining, SingularRegression
from .data import ForecastCase, ensemble_matrix

LOG_2PI = math.log(2.0 * math.pi)
MIN_VARIANCE = 1e-12
MAX_LOG_STEP = 5.0


def _members(case_or_ensemble):
    ens = getattr(case_or_ensemble, "ensemble", case_or_ensemble)
    return np.asarray(ens, dtype=float)


def _training(train, k, minimum):
    F, y = ensemble_matrix(list(train))
    if k is not None and F.shape[1] != k:
        raise SingularRegression(f"training cases have {F.shape[1]} members, expected {k}")
    if y.size < minimum(F.shape[1]):
        raise InsufficientTraining(f"{y.size} training cases with observations; need at least {minimum(F.shape[1])}")
    return F, y


def ensemble_moments(F):
    """Row means and population variances of member forecasts."""
    F = np.asarray(F, dtype=float)
    return F.mean(axis=-1), F.var(axis=-1)


# -- BMA ----------------------------------------------------------------------------


@dataclass(frozen=True)
class BmaParams:
    """Mixture of ``N(a_i + b_i f_i, sigma2)`` with weights ``w_i``."""

    a: tuple[float, ...]
    b: tuple[float, ...]
    weights: tuple[float, ...]
    sigma2: float
    loglik: float = math.nan
    iterations: int = 0
    converged: bool = True

    @property
    def k(self):
        return len(self.weights)

    def means(self, F):
        return np.asarray(self.a) + np.asarray(self.b) * np.asarray(F, dtype=float)

    def predictive(self, case) -> Mixture:
        mu = self.means(_members(case))
        sd = math.sqrt(self.sigma2)
        return Mixture(tuple(float(w) for w in self.weights), tuple(Normal(float(m), sd) for m in mu))

    def draw(self, F, rng: np.random.Generator):
        """One observation per row of ``F``."""
        F = np.atleast_2d(F)
        idx = rng.choice(self.k, size=F.shape[0], p=np.asarray(self.weights))
        mu = self.means(F)[np.arange(F.shape[0]), idx]
        return mu + math.sqrt(self.sigma2) * rng.standard_normal(F.shape[0])

    def to_dict(self):
        return {
            "kind": "bma",
            "a": list(self.a),
            "b": list(self.b),
            "weights": list(self.weights),
            "sigma2": self.sigma2,
            "loglik": self.loglik,
            "iterations": self.iterations,
            "converged": self.converged,
        }


def _ols(x, y, w=None):
    w = np.ones_like(y) if w is None else w
    sw = w.sum()
    xm = np.dot(w, x) / sw
    ym = np.dot(w, y) / sw
    sxx = np.dot(w, (x - xm) ** 2)
    if not sxx > 0:
        raise SingularRegression("member forecasts are constant over the training window")
    b = np.dot(w, (x - xm) * (y - ym)) / sxx
    return ym - b * xm, b


def fit_bma(train: Sequence[ForecastCase], k=None, *, update_bias=True, tol=1e-8, max_iter=500) -> BmaParams:
    """Fit BMA by per-member least squares followed by EM.

    The EM uses weights ``1/k`` and the mean OLS residual variance as its
    start. With ``update_bias`` the M-step also refits each ``(a_i, b_i)`` by
    responsibility-weighted least squares (an ECM step), which removes the
    bias that plain OLS has when the truth is a mixture. Members with
    identical forecast columns are merged and their weight split evenly.
    """
    F, y = _training(train, k, lambda k: k + 2)
    n, k = F.shape
    for i in range(k):
        if np.ptp(F[:, i]) == 0:
            raise SingularRegression(f"member f{i + 1} is constant over the training window")

    groups: dict[bytes, list[int]] = {}
    for i in range(k):
        groups.setdefault(F[:, i].tobytes(), []).append(i)
    reps = [g[0] for g in groups.values()]
    X = F[:, reps]
    m = len(reps)

    a = np.empty(m)
    b = np.empty(m)
    resid = []
    for j in range(m):
        a[j], b[j] = _ols(X[:, j], y)
        resid.append(np.mean((y - a[j] - b[j] * X[:, j]) ** 2))
    sigma2 = max(float(np.mean(resid)), MIN_VARIANCE)
    w = np.full(m, 1.0 / m)

    def loglik_terms(a, b, w, sigma2):
        r2 = (y[:, None] - a - b * X) ** 2
        return np.log(w) - 0.5 * (LOG_2PI + math.log(sigma2)) - 0.5 * r2 / sigma2

    with np.errstate(divide="ignore"):
        terms = loglik_terms(a, b, w, sigma2)
    ll = float(np.sum(logsumexp(terms, axis=1)))
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        resp = np.exp(terms - logsumexp(terms, axis=1, keepdims=True))
        w = resp.mean(axis=0)
        w /= w.sum()
        if update_bias:
            for j in range(m):
                if resp[:, j].sum() > 1e-9 * n:
                    try:
                        a[j], b[j] = _ols(X[:, j], y, resp[:, j])
                    except SingularRegression:
                        pass
        sigma2 = max(float(np.sum(resp * (y[:, None] - a - b * X) ** 2) / n), MIN_VARIANCE)
        with np.errstate(divide="ignore"):
            terms = loglik_terms(a, b, w, sigma2)
        new_ll = float(np.sum(logsumexp(terms, axis=1)))
        gain = new_ll - ll
        ll = new_ll
        if gain < tol:
            converged = True
            break

    full_w = np.empty(k)
    full_a = np.empty(k)
    full_b = np.empty(k)
    for j, members in enumerate(groups.values()):
        for i in members:
            full_w[i] = w[j] / len(members)
            full_a[i] = a[j]
            full_b[i] = b[j]
    full_w /= full_w.sum()
    return BmaParams(tuple(full_a.tolist()), tuple(full_b.tolist()), tuple(full_w.tolist()), sigma2, ll, it, converged)


# -- EMOS -----------------------------------------------------------------------------


@dataclass(frozen=True)
class EmosParams:
    """``N(a + b.f, c + d s^2)``."""

    a: float
    b: tuple[float, ...]
    c: float
    d: float
    objective: float = math.nan
    iterations: int = 0
    converged: bool = True
    trace: tuple[float, ...] = ()

    @property
    def k(self):
        return len(self.b)

    def moments(self, F):
        F = np.asarray(F, dtype=float)
        _, s2 = ensemble_moments(F)
        return self.a + F @ np.asarray(self.b), self.c + self.d * s2

    def predictive(self, case) -> Normal:
        m, v = self.moments(_members(case))
        return Normal(float(m), math.sqrt(float(v)))

    def draw(self, F, rng: np.random.Generator):
        m, v = self.moments(np.atleast_2d(F))
        return m + np.sqrt(v) * rng.standard_normal(m.shape[0])

    def to_dict(self):
        return {
            "kind": "emos",
            "a": self.a,
            "b": list(self.b),
            "c": self.c,
            "d": self.d,
            "objective": self.objective,
            "iterations": self.iterations,
            "converged": self.converged,
        }


def params_from_dict(desc: dict):
    kind = desc.get("kind")
    if kind == "bma":
        return BmaParams(tuple(desc["a"]), tuple(desc["b"]), tuple(desc["weights"]), float(desc["sigma2"]))
    if kind == "emos":
        return EmosParams(float(desc["a"]), tuple(desc["b"]), float(desc["c"]), float(desc["d"]))
    raise SingularRegression(f"unknown parameter kind {kind!r}")


def emos_objective(theta, X, s2, y):
    """Mean logarithmic score and its gradient in ``(a, b, ln c, ln d)``."""
    beta = theta[:-2]
    if max(theta[-2], theta[-1]) > 700.0:
        return math.inf, np.full_like(theta, np.nan)
    c, d = math.exp(theta[-2]), math.exp(theta[-1])
    r = y - X @ beta
    v = c + d * s2
    f = 0.5 * np.mean(LOG_2PI + np.log(v) + r * r / v)
    dv = 0.5 / v - 0.5 * r * r / v**2
    grad = np.concatenate([-(X.T @ (r / v)) / y.size, [np.mean(dv) * c, np.mean(dv * s2) * d]])
    return float(f), grad


def _curvature(theta, X, s2, y):
    """Exact Hessian of :func:`emos_objective`, or the Fisher information if that is not positive definite."""
    beta = theta[:-2]
    c, d = math.exp(theta[-2]), math.exp(theta[-1])
    r = y - X @ beta
    v = c + d * s2
    n, p = X.shape
    g1 = 0.5 / v - 0.5 * r * r / v**2
    g2 = -0.5 / v**2 + r * r / v**3
    dv = np.stack([c + 0.0 * s2, d * s2])
    H = np.zeros((p + 2, p + 2))
    H[:p, :p] = (X.T * (1.0 / v)) @ X / n
    H[:p, p:] = (X.T * (r / v**2)) @ dv.T / n
    H[p:, :p] = H[:p, p:].T
    H[p:, p:] = (dv * g2) @ dv.T / n + np.diag([np.mean(g1 * dv[0]), np.mean(g1 * dv[1])])
    try:
        np.linalg.cholesky(H)
        return H
    except np.linalg.LinAlgError:
        H[:p, p:] = 0.0
        H[p:, :p] = 0.0
        H[p:, p:] = 0.5 * (dv / v) @ (dv / v).T / n
        return H


def fit_emos(train: Sequence[ForecastCase], k=None, *, tol=1e-8, max_iter=2000) -> EmosParams:
    """Minimum mean logarithmic score fit of ``N(a + b.f, c + d s^2)``.

    ``c = exp(gamma)`` and ``d = exp(delta)`` keep the variance positive.
    Each step is a descent direction preconditioned by the exact Hessian
    (the Fisher information where the Hessian is indefinite), followed by
    Armijo backtracking, so the objective never increases. Iteration stops
    once the gradient norm drops below ``tol``. The start is least squares
    for ``(a, b)``, the residual variance for ``c`` and ``d = 0.1``.
    ``converged`` is False when ``max_iter`` is hit or the line search
    stalls; the best iterate is returned either way.
    """
    F, y = _training(train, k, lambda k: k + 3)
    n, k = F.shape
    _, s2 = ensemble_moments(F)
    X = np.hstack([np.ones((n, 1)), F])
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    c0 = max(float(np.mean((y - X @ beta) ** 2)), MIN_VARIANCE)
    theta = np.concatenate([beta, [math.log(c0), math.log(0.1)]])

    f, g = emos_objective(theta, X, s2, y)
    trace = [f]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if np.linalg.norm(g) < tol:
            converged = True
            it -= 1
            break
        direction = -np.linalg.lstsq(_curvature(theta, X, s2, y), g, rcond=None)[0]
        if not float(g @ direction) < 0:
            direction = -g
        # Log-variance moves are capped at a factor e^5 per step.
        big = float(np.max(np.abs(direction[-2:])))
        if big > MAX_LOG_STEP:
            direction = direction * (MAX_LOG_STEP / big)
        slope = float(g @ direction)
        # Below this the Armijo test only compares rounding errors.
        flat = abs(slope) < 64.0 * np.finfo(float).eps * max(1.0, abs(f))
        t = 1.0
        while True:
            cand = theta + t * direction
            fc, gc = emos_objective(cand, X, s2, y)
            if np.isfinite(fc) and (fc <= f + 1e-4 * t * slope or (flat and fc <= f)):
                break
            t *= 0.5
            if t < 1e-20:
                cand = None
                break
        if cand is None:
            converged = bool(np.linalg.norm(g) < tol)
            break
        theta, f, g = cand, fc, gc
        trace.append(f)
    else:
        converged = bool(np.linalg.norm(g) < tol)

    return EmosParams(
        float(theta[0]),
        tuple(float(v) for v in theta[1:-2]),
        math.exp(theta[-2]),
        math.exp(theta[-1]),
        f,
        it,
        converged,
        tuple(trace),
    )


# -- smoothed ensemble ----------------------------------------------------------------


def smoothed_ensemble(case) -> Normal:
    """Normal with the ensemble's mean and population variance."""
    f = _members(case)
    var = float(np.var(f))
    if var <= MIN_VARIANCE:
        raise DegenerateEnsemble(f"ensemble variance {var:g} is not positive")
    return Normal(float(np.mean(f)), math.sqrt(var))
