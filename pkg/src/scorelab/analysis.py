"""Expected scores, divergences, propriety scans and Euler residuals."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .densities import DensityModel, Logistic, Normal, mixture
from .errors import DensityZeroAtPoint, MissingPartials
from .grammar import format_density
from .numerics import diff1_5pt, diff2_5pt, integrate
from .scores import LocalScore

QUAD_TOL = 1e-9
STRICTNESS_TOL = 1e-6


def standard_family() -> list[DensityModel]:
    """Three normals, a logistic and two normal mixtures."""
    return [
        Normal(0.0, 1.0),
        Normal(1.0, 1.0),
        Normal(0.0, 2.0),
        Logistic(0.0, 1.0),
        mixture([0.5, 0.5], [Normal(-1.0, 1.0), Normal(1.0, 1.0)]),
        mixture([0.3, 0.7], [Normal(0.0, 1.0), Normal(3.0, 2.0)]),
    ]


def _integrate_under(p: DensityModel, f, tol=QUAD_TOL):
    """``int f(x) p(x) dx`` over the support of ``p``; ``f`` only sees points with p(x) > 0."""

    def integrand(x):
        logp = p.logpdf(x)
        out = np.zeros_like(x)
        ok = np.isfinite(logp)
        if ok.any():
            out[ok] = np.asarray(f(x[ok]), dtype=float) * np.exp(logp[ok])
        return out

    lo, hi = p.support()
    return integrate(integrand, lo, hi, tol=tol, breakpoints=p.breakpoints())


def expected_score(score, p: DensityModel, q: DensityModel, tol=QUAD_TOL) -> float:
    """``S(p, q) = int score(x, q) p(x) dx``; works for local and nonlocal scores."""
    return _integrate_under(p, lambda x: score.score(x, q), tol)


def divergence(score, p: DensityModel, q: DensityModel, tol=QUAD_TOL) -> float:
    return expected_score(score, p, q, tol) - expected_score(score, p, p, tol)


def kl_divergence(p: DensityModel, q: DensityModel, tol=QUAD_TOL) -> float:
    return _integrate_under(p, lambda x: p.logpdf(x) - q.logpdf(x), tol)


def fisher_divergence(p: DensityModel, q: DensityModel, tol=QUAD_TOL) -> float:
    """``int (p'/p - q'/q)^2 p``; needs only the first log-derivatives, so it
    accepts densities with isolated zeros."""

    def f(x):
        d = p.logderivs(x, 1)[1] - q.logderivs(x, 1)[1]
        if np.any(np.isnan(d)):
            raise DensityZeroAtPoint("q vanishes where p does not")
        return d * d

    return _integrate_under(p, f, tol)


@dataclass
class ProprietyReport:
    """Margins ``S(p, q) - S(p, p)`` over all ordered pairs of a family."""

    score: str
    ids: list[str]
    expected: list[list[float]]
    pairs: list[dict]
    min_margin: float
    strict_violations: list[dict]
    strictness_tol: float

    @property
    def min_distinct_margin(self):
        """Smallest margin over pairs with p != q (NaN for a one-density family)."""
        m = [e["margin"] for e in self.pairs if e["p_index"] != e["q_index"]]
        return min(m) if m else math.nan

    @property
    def proper(self):
        return self.min_margin >= -1e-7

    @property
    def strictly_proper(self):
        return self.proper and not self.strict_violations

    def to_dict(self):
        return {
            "score": self.score,
            "ids": self.ids,
            "pairs": self.pairs,
            "min_margin": self.min_margin,
            "min_distinct_margin": self.min_distinct_margin,
            "strict_violations": self.strict_violations,
            "strictness_tol": self.strictness_tol,
            "proper_on_family": self.proper,
            "strictly_proper_on_family": self.strictly_proper,
        }


def propriety_scan(score, family, strictness_tol=STRICTNESS_TOL, threads=1, ids=None, tol=QUAD_TOL) -> ProprietyReport:
    family = list(family)
    if not family:
        raise ValueError("family must be nonempty")
    ids = list(ids) if ids is not None else [format_density(p) for p in family]
    n = len(family)
    jobs = [(i, j) for i in range(n) for j in range(n)]
    run = lambda ij: expected_score(score, family[ij[0]], family[ij[1]], tol)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(run, jobs))
    else:
        values = [run(ij) for ij in jobs]
    E = np.asarray(values).reshape(n, n)

    pairs, violations = [], []
    for i, j in jobs:
        margin = 0.0 if i == j else float(E[i, j] - E[i, i])
        entry = {"p": ids[i], "q": ids[j], "p_index": i, "q_index": j, "margin": margin}
        pairs.append(entry)
        if i != j and margin <= strictness_tol:
            violations.append(entry)
    return ProprietyReport(
        score=getattr(score, "label", str(score)),
        ids=ids,
        expected=E.tolist(),
        pairs=pairs,
        min_margin=min(e["margin"] for e in pairs),
        strict_violations=violations,
        strictness_tol=strictness_tol,
    )


@dataclass
class EulerReport:
    x: np.ndarray
    values: np.ndarray
    c_p_estimate: float
    max_abs_deviation: float
    step: float = field(default=2e-3)

    def to_dict(self):
        return {
            "x": self.x.tolist(),
            "values": self.values.tolist(),
            "c_p_estimate": self.c_p_estimate,
            "max_abs_deviation": self.max_abs_deviation,
            "step": self.step,
        }


def default_euler_grid(p: DensityModel, n=81):
    return np.linspace(p.mean - 4.0 * p.std, p.mean + 4.0 * p.std, n)


def euler_residual(s: LocalScore, p: DensityModel, x_grid=None, h=2e-3, tol=QUAD_TOL) -> EulerReport:
    """Evaluate ``d0 s - (1/p) d/dx[p d1 s] + (1/p) d2/dx2[p d2 s]`` along ``x_grid``.

    For a proper local score this is constant and equal to ``int (d0 s) p``.
    Total derivatives are five-point differences of the composed maps; the
    ratios ``p(x+kh)/p(x)`` are formed in log space.
    """
    if not s.has_partials:
        raise MissingPartials(f"score {s.label!r} needs d0, d1 and d2 partials")
    x = default_euler_grid(p) if x_grid is None else np.asarray(x_grid, dtype=float)
    logp_center = p.logpdf(x)

    def composed(name, xs, weighted):
        z = p.logderivs(xs, 2)
        if np.any(np.isnan(z)):
            raise DensityZeroAtPoint("Euler residual needs a strictly positive density")
        val = s.partial(name, xs, z[0], z[1], z[2])
        return val * np.exp(z[0] - logp_center) if weighted else val

    d0 = composed("d0", x, False)
    flux1 = diff1_5pt(lambda xs: composed("d1", xs, True), x, h)
    flux2 = diff2_5pt(lambda xs: composed("d2", xs, True), x, h)
    values = d0 - flux1 + flux2

    def d0_of(xs):
        z = p.logderivs(xs, 2)
        return s.partial("d0", xs, z[0], z[1], z[2])

    c_p = _integrate_under(p, d0_of, tol)
    return EulerReport(x, values, c_p, float(np.max(np.abs(values - c_p))), h)


def c_p_spread(s: LocalScore, family, x_grid=None) -> float:
    """Range of the Euler constants ``c_p`` across densities."""
    cs = [euler_residual(s, p, x_grid).c_p_estimate for p in family]
    return max(cs) - min(cs) if cs else math.nan
