"""Univariate densities with exact log-derivative chains up to order four.

Everything is evaluated in log space. A mixture combines its components
through the derivative ratios ``p^(j)/p``, weighted by the posterior
component responsibilities, so tails never underflow even when one
component is ``exp(-2000)`` smaller than another.

A numerical class diagnostic is provided for the smoothness/decay class the
theory is stated over (strict positivity, super-polynomial decay of the
density and of its first four derivatives, polynomially bounded derivative
ratios). Those are asymptotic statements, so the diagnostic is a probe,
never a proof.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import DensityZeroAtPoint, InvalidWeights, SpecificationError

LOG_2PI = math.log(2.0 * math.pi)
LOG_GAMMA6 = math.lgamma(6.0)
MAX_ORDER = 4


def ratios_from_logderivs(z):
    """Map log-derivatives ``z1..z4`` to ratios ``p^(j)/p`` (complete Bell polynomials)."""
    z1, z2, z3, z4 = z
    return np.stack([
        z1,
        z2 + z1**2,
        z3 + 3 * z1 * z2 + z1**3,
        z4 + 4 * z1 * z3 + 3 * z2**2 + 6 * z1**2 * z2 + z1**4,
    ])


def logderivs_from_ratios(d):
    """Inverse of :func:`ratios_from_logderivs`."""
    d1, d2, d3, d4 = d
    return np.stack([
        d1,
        d2 - d1**2,
        d3 - 3 * d1 * d2 + 2 * d1**3,
        d4 - 4 * d1 * d3 - 3 * d2**2 + 12 * d1**2 * d2 - 6 * d1**4,
    ])


class DensityModel(ABC):
    """A univariate density known through its log-density and log-derivatives.

    Subclasses implement :meth:`logpdf`, :meth:`_slopes` (the four
    log-derivatives ``z1..z4``), :meth:`cdf`, moments, a support interval
    that carries all but a negligible amount of mass, and a sampler.
    Methods are vectorized over ``x``.
    """

    #: True when the density belongs to the positive, rapidly decaying class
    #: by construction (normal, logistic and their mixtures).
    in_class_p = True

    @abstractmethod
    def logpdf(self, x): ...

    @abstractmethod
    def _slopes(self, x):
        """Return an array of shape ``(4, *x.shape)`` holding ``z1..z4``."""

    @abstractmethod
    def cdf(self, x): ...

    @property
    @abstractmethod
    def mean(self) -> float: ...

    @property
    @abstractmethod
    def variance(self) -> float: ...

    @abstractmethod
    def support(self) -> tuple[float, float]:
        """Finite interval outside which the mass is below ~1e-16."""

    def breakpoints(self) -> tuple[float, ...]:
        return (self.mean,)

    @abstractmethod
    def _draw(self, rng: np.random.Generator, n: int) -> np.ndarray: ...

    @abstractmethod
    def to_dict(self) -> dict: ...

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def ratios(self, x):
        """Derivative ratios ``p^(j)(x)/p(x)`` for j = 1..4; NaN where p(x) = 0."""
        return ratios_from_logderivs(self._slopes(np.asarray(x, dtype=float)))

    def logderivs(self, x, order=MAX_ORDER):
        """Stack ``z0..z_order`` with shape ``(order+1, *x.shape)``; NaN where p(x) = 0."""
        x = np.asarray(x, dtype=float)
        z0 = self.logpdf(x)
        if order == 0:
            return z0[None]
        slopes = self._slopes(x)[:order]
        z0 = np.where(np.isneginf(z0), np.nan, z0)
        return np.concatenate([z0[None], slopes])


@dataclass(frozen=True)
class Normal(DensityModel):
    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.mu) and np.isfinite(self.sigma) and self.sigma > 0):
            raise SpecificationError(f"normal needs finite mu and sigma > 0, got ({self.mu}, {self.sigma})")

    def logpdf(self, x):
        u = (np.asarray(x, dtype=float) - self.mu) / self.sigma
        return -0.5 * u * u - math.log(self.sigma) - 0.5 * LOG_2PI

    def _slopes(self, x):
        u = (x - self.mu) / self.sigma
        zero = np.zeros_like(u)
        return np.stack([-u / self.sigma, zero - 1.0 / self.sigma**2, zero, zero])

    def cdf(self, x):
        return special.ndtr((np.asarray(x, dtype=float) - self.mu) / self.sigma)

    @property
    def mean(self):
        return float(self.mu)

    @property
    def variance(self):
        return float(self.sigma) ** 2

    def support(self):
        return (self.mu - 12.0 * self.sigma, self.mu + 12.0 * self.sigma)

    def _draw(self, rng, n):
        return self.mu + self.sigma * special.ndtri(_open_uniform(rng, n))

    def to_dict(self):
        return {"kind": "normal", "mu": float(self.mu), "sigma": float(self.sigma)}


@dataclass(frozen=True)
class Logistic(DensityModel):
    location: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.location) and np.isfinite(self.scale) and self.scale > 0):
            raise SpecificationError(
                f"logistic needs finite location and scale > 0, got ({self.location}, {self.scale})"
            )

    def logpdf(self, x):
        # ln p = -ln(4s) - 2 ln cosh(t/2)
        half = 0.5 * np.abs((np.asarray(x, dtype=float) - self.location) / self.scale)
        return -math.log(4.0 * self.scale) - 2.0 * (half + np.log1p(np.exp(-2.0 * half)) - math.log(2.0))

    def _slopes(self, x):
        s = self.scale
        th = np.tanh(0.5 * (x - self.location) / s)
        sech2 = 1.0 - th * th
        return np.stack([
            -th / s,
            -0.5 * sech2 / s**2,
            0.5 * sech2 * th / s**3,
            sech2 * (0.5 * sech2 - th * th) / (2.0 * s**4),
        ])

    def cdf(self, x):
        return special.expit((np.asarray(x, dtype=float) - self.location) / self.scale)

    @property
    def mean(self):
        return float(self.location)

    @property
    def variance(self):
        return (math.pi * self.scale) ** 2 / 3.0

    def support(self):
        return (self.location - 40.0 * self.scale, self.location + 40.0 * self.scale)

    def _draw(self, rng, n):
        u = _open_uniform(rng, n)
        return self.location + self.scale * special.logit(u)

    def to_dict(self):
        return {"kind": "logistic", "location": float(self.location), "scale": float(self.scale)}


@dataclass(frozen=True)
class TwoPieceGamma(DensityModel):
    """``alpha*g(x)`` for x >= 0 and ``(1-alpha)*g(-x)`` for x < 0, ``g`` the Gamma(6, 1) density.

    Vanishes at the origin, so it falls outside the positive class; it is the
    fixture on which the Fisher divergence cannot tell different ``alpha`` apart.
    """

    alpha: float = 0.5
    in_class_p = False

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise SpecificationError(f"alpha must lie in (0, 1), got {self.alpha}")

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        side = np.where(x >= 0, math.log(self.alpha), math.log1p(-self.alpha))
        with np.errstate(divide="ignore"):
            out = side + 5.0 * np.log(ax) - ax - LOG_GAMMA6
        return np.where(x == 0, -np.inf, out)

    def _slopes(self, x):
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = np.where(x == 0, np.nan, 1.0 / x)
        return np.stack([5.0 * inv - np.sign(x), -5.0 * inv**2, 10.0 * inv**3, -30.0 * inv**4])

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        pos = (1.0 - self.alpha) + self.alpha * special.gammainc(6.0, np.maximum(x, 0.0))
        neg = (1.0 - self.alpha) * special.gammaincc(6.0, np.maximum(-x, 0.0))
        return np.where(x >= 0, pos, neg)

    @property
    def mean(self):
        return 6.0 * (2.0 * self.alpha - 1.0)

    @property
    def variance(self):
        return 42.0 - self.mean**2

    def support(self):
        return (-60.0, 60.0)

    def breakpoints(self):
        return (-6.0, 0.0, 6.0)

    def _draw(self, rng, n):
        sign = np.where(rng.random(n) < self.alpha, 1.0, -1.0)
        return sign * rng.gamma(6.0, 1.0, size=n)

    def to_dict(self):
        return {"kind": "two_piece_gamma", "alpha": float(self.alpha)}


@dataclass(frozen=True)
class Mixture(DensityModel):
    weights: tuple[float, ...]
    components: tuple[DensityModel, ...]
    _log_weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "components", tuple(self.components))
        check_weights(self.weights, len(self.components))
        with np.errstate(divide="ignore"):
            object.__setattr__(self, "_log_weights", np.log(np.asarray(self.weights)))

    @property
    def in_class_p(self):
        return all(c.in_class_p for w, c in zip(self.weights, self.components) if w > 0)

    def _component_logs(self, x):
        return np.stack([lw + c.logpdf(x) for lw, c in zip(self._log_weights, self.components)])

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return special.logsumexp(self._component_logs(x), axis=0)

    def responsibilities(self, x):
        """Posterior component probabilities ``w_i p_i(x) / p(x)``."""
        logs = self._component_logs(np.asarray(x, dtype=float))
        total = special.logsumexp(logs, axis=0)
        with np.errstate(invalid="ignore"):
            return np.exp(logs - total)

    def _slopes(self, x):
        resp = self.responsibilities(x)
        mixed = 0.0
        for r, c in zip(resp, self.components):
            d = c.ratios(x)
            mixed = mixed + np.where(r > 0, r * d, 0.0)
        z = logderivs_from_ratios(mixed)
        zero = np.isneginf(self.logpdf(x))
        return np.where(zero, np.nan, z)

    def cdf(self, x):
        return sum(w * c.cdf(x) for w, c in zip(self.weights, self.components))

    @property
    def mean(self):
        return math.fsum(w * c.mean for w, c in zip(self.weights, self.components))

    @property
    def variance(self):
        m = self.mean
        return math.fsum(w * (c.variance + (c.mean - m) ** 2) for w, c in zip(self.weights, self.components))

    def support(self):
        active = [c.support() for w, c in zip(self.weights, self.components) if w > 0]
        return (min(lo for lo, _ in active), max(hi for _, hi in active))

    def breakpoints(self):
        pts = set()
        for w, c in zip(self.weights, self.components):
            if w > 0:
                pts.update(c.breakpoints())
        return tuple(sorted(pts))

    def _draw(self, rng, n):
        u = rng.random(n)
        idx = np.searchsorted(np.cumsum(self.weights), u, side="right")
        idx = np.minimum(idx, len(self.components) - 1)
        out = np.empty(n)
        for i, c in enumerate(self.components):
            sel = idx == i
            count = int(sel.sum())
            if count:
                out[sel] = c._draw(rng, count)
        return out

    def to_dict(self):
        return {
            "kind": "mixture",
            "weights": list(self.weights),
            "components": [c.to_dict() for c in self.components],
        }


def check_weights(weights, n_components=None, tol=1e-12):
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise InvalidWeights("mixture needs a non-empty weight vector")
    if n_components is not None and w.size != n_components:
        raise InvalidWeights(f"{w.size} weights for {n_components} components")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise InvalidWeights(f"weights must be finite and nonnegative, got {list(w)}")
    total = math.fsum(w)
    if abs(total - 1.0) > tol:
        raise InvalidWeights(f"weights sum to {total!r}, not 1")


def _open_uniform(rng, n):
    # Strictly inside (0, 1) so the inverse CDF stays finite.
    return (np.floor(rng.random(n) * 2.0**53) + 0.5) / 2.0**53


# -- public operations ------------------------------------------------------


def pdf(p: DensityModel, x):
    value = p.pdf(x)
    return float(value) if np.ndim(value) == 0 else value


def mixture(weights, components) -> Mixture:
    return Mixture(tuple(weights), tuple(components))


@dataclass(frozen=True)
class LogDerivatives:
    """Log-density derivatives ``z[j] = (ln p)^(j)(x)`` for j = 0..order."""

    x: float
    z: tuple[float, ...]

    def __getitem__(self, j):
        return self.z[j]


def log_derivatives(p: DensityModel, x, order=MAX_ORDER):
    """Exact ``(ln p)^(j)(x)`` for j = 0..order; arrays in, arrays out.

    Raises :class:`DensityZeroAtPoint` where the density vanishes.
    """
    if not 0 <= order <= MAX_ORDER:
        raise SpecificationError(f"order must be in 0..{MAX_ORDER}, got {order}")
    z = p.logderivs(x, order)
    if np.any(np.isnan(z)):
        raise DensityZeroAtPoint(f"density is zero at x={x}")
    if np.ndim(x) == 0:
        return LogDerivatives(float(x), tuple(float(v) for v in z))
    return z


def sample(p: DensityModel, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` values with a Philox counter-based generator keyed by ``seed``."""
    if n < 1:
        raise SpecificationError(f"n must be >= 1, got {n}")
    return p._draw(np.random.Generator(np.random.Philox(seed)), int(n))


def from_dict(desc: dict) -> DensityModel:
    """Build a density from its JSON description (see :meth:`DensityModel.to_dict`)."""
    try:
        kind = desc["kind"].lower()
        if kind == "normal":
            return Normal(float(desc["mu"]), float(desc["sigma"]))
        if kind == "logistic":
            return Logistic(float(desc["location"]), float(desc["scale"]))
        if kind == "two_piece_gamma":
            return TwoPieceGamma(float(desc["alpha"]))
        if kind in ("mixture", "mix"):
            return mixture(desc["weights"], [from_dict(c) for c in desc["components"]])
    except (KeyError, TypeError, AttributeError) as exc:
        raise SpecificationError(f"bad density description {desc!r}: {exc}") from None
    raise SpecificationError(f"unknown density kind {desc.get('kind')!r}")


# -- class diagnostics ------------------------------------------------------


@dataclass
class ClassPReport:
    """Per-condition verdicts of the numerical class probe.

    ``positivity`` checks the log-density is finite at every probe,
    ``decay`` that ``|x|^m |p^(j)(x)|`` falls along the outermost probes for
    each ``m`` in ``exponents`` and j = 0..4, and ``ratio_growth`` that
    ``|x|^-a |p^(j)(x)/p(x)|`` falls for j = 1..4. Only the outermost probes
    on each side are used. These are heuristics.
    """

    positivity: bool
    decay: bool
    ratio_growth: bool
    failures: list[str]
    probes: list[float]
    exponents: tuple[int, ...]
    ratio_exponent: float
    heuristic: bool = True

    @property
    def passed(self):
        return self.positivity and self.decay and self.ratio_growth

    def to_dict(self):
        return {
            "P1_positivity": self.positivity,
            "P3_decay": self.decay,
            "P4_ratio_growth": self.ratio_growth,
            "passed": self.passed,
            "failures": self.failures,
            "probes": self.probes,
            "decay_exponents": list(self.exponents),
            "ratio_exponent": self.ratio_exponent,
            "heuristic": True,
        }


DEFAULT_PROBES = (-40.0, -30.0, -20.0, -15.0, -10.0, -5.0, -1.0, 0.0, 1.0, 5.0, 10.0, 15.0, 20.0, 30.0, 40.0)


def class_p_diagnostics(p: DensityModel, probes=DEFAULT_PROBES, exponents=(1, 2, 4), ratio_exponent=6.0, tail=10.0, outermost=3):
    probes = np.asarray(sorted(float(v) for v in probes))
    if not np.any(np.abs(probes) >= tail):
        raise SpecificationError(f"probes must include points with |x| >= {tail}")
    failures = []

    logp = p.logpdf(probes)
    positive = bool(np.all(np.isfinite(logp)))
    if not positive:
        failures.append("P1: density vanishes at x=" + ", ".join(f"{v:g}" for v in probes[~np.isfinite(logp)]))

    decay_ok = True
    ratio_ok = True
    for side in (-1.0, 1.0):
        pts = probes[(side * probes) >= tail]
        pts = pts[np.argsort(np.abs(pts))][-outermost:]
        if pts.size == 0:
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            lp = p.logpdf(pts)
            logr = np.log(np.abs(p.ratios(pts)))
            logx = np.log(np.abs(pts))
            for j in range(MAX_ORDER + 1):
                lderiv = lp if j == 0 else lp + logr[j - 1]
                for m in exponents:
                    if not _falls(m * logx + lderiv):
                        decay_ok = False
                        failures.append(f"P3: |x|^{m} |p^({j})| does not decay as x -> {side * np.inf:+}")
            for j in range(1, MAX_ORDER + 1):
                if not _falls(-ratio_exponent * logx + logr[j - 1]):
                    ratio_ok = False
                    failures.append(f"P4: |x|^-{ratio_exponent:g} |p^({j})/p| does not decay as x -> {side * np.inf:+}")

    return ClassPReport(positive, decay_ok, ratio_ok, failures, probes.tolist(), tuple(exponents), ratio_exponent)


def _falls(logs):
    """Non-increasing along the probes and at most half the first value at the last."""
    logs = np.asarray(logs, dtype=float)
    if np.any(np.isnan(logs)):
        return False
    finite = np.isfinite(logs)
    if not finite.any():
        return True
    if logs.size == 1:
        return bool(logs[0] < math.log(1e-3))
    steps = np.diff(np.where(np.isneginf(logs), -1e300, logs))
    return bool(np.all(steps <= 1e-9) and logs[-1] <= logs[0] - math.log(2.0))
