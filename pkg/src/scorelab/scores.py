"""Scoring rules for density forecasts.

A :class:`LocalScore` is a scoring function ``s(x, y0, y1, y2)`` applied to
``(x, ln q(x), (ln q)'(x), (ln q)''(x))``; scores are negatively oriented.
Built-in local scores carry analytic partial derivatives so that Euler
residuals and kernel recovery do not stack numerical differentiation.
The quadratic and spherical scores are nonlocal and work directly on ``q``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .densities import DensityModel, Mixture, Normal
from .errors import DegenerateNorm, DensityZeroAtPoint, InvalidCoefficient, InvalidOrder, SpecificationError
from .numerics import integrate

ScoringFunction = Callable[..., np.ndarray]

LN2 = math.log(2.0)


def _bcast(value, *args):
    shape = np.broadcast_shapes(*(np.shape(a) for a in args))
    out = np.broadcast_to(np.asarray(value, dtype=float), shape)
    return float(out) if out.ndim == 0 else np.array(out)


@dataclass(frozen=True)
class LocalScore:
    """Scoring function of ``(x, y0, y1, y2)`` with optional partial derivatives.

    ``d0``, ``d1``, ``d2`` are the partials in ``y0``, ``y1``, ``y2`` and ``dx``
    the partial in ``x``. ``order`` is the effective order (0 for the
    logarithmic score, 2 otherwise).
    """

    fn: ScoringFunction
    label: str
    order: int = 2
    d0: Optional[ScoringFunction] = None
    d1: Optional[ScoringFunction] = None
    d2: Optional[ScoringFunction] = None
    dx: Optional[ScoringFunction] = None

    def __call__(self, x, y0, y1, y2):
        return _bcast(self.fn(x, y0, y1, y2), x, y0, y1, y2)

    def partial(self, name, x, y0, y1, y2):
        f = getattr(self, name)
        if f is None:
            return None
        return _bcast(f(x, y0, y1, y2), x, y0, y1, y2)

    @property
    def has_partials(self):
        return self.d0 is not None and self.d1 is not None and self.d2 is not None

    def score(self, x, q: DensityModel):
        return eval_local(self, x, q)


@dataclass(frozen=True)
class NonlocalScore:
    """Score that needs the whole predictive density, e.g. through its L2 norm."""

    fn: Callable[[np.ndarray, DensityModel], np.ndarray]
    label: str

    def score(self, x, q: DensityModel):
        return self.fn(x, q)

    def __call__(self, x, q):
        return self.fn(x, q)


def eval_local(s: LocalScore, x, q: DensityModel):
    """``s(x, z0, z1, z2)`` with the log-derivatives of ``q`` at ``x``."""
    z = q.logderivs(x, 2)
    if np.any(np.isnan(z)):
        raise DensityZeroAtPoint(f"predictive density is zero at x={x}")
    return s(np.asarray(x, dtype=float) if np.ndim(x) else float(x), z[0], z[1], z[2])


# -- built-in local scores --------------------------------------------------


def logarithmic() -> LocalScore:
    return LocalScore(
        fn=lambda x, y0, y1, y2: -y0,
        label="ls",
        order=0,
        d0=lambda x, y0, y1, y2: -1.0,
        d1=lambda x, y0, y1, y2: 0.0,
        d2=lambda x, y0, y1, y2: 0.0,
        dx=lambda x, y0, y1, y2: 0.0,
    )


def hyvarinen() -> LocalScore:
    return LocalScore(
        fn=lambda x, y0, y1, y2: y1 * y1 + 2.0 * y2,
        label="hs",
        d0=lambda x, y0, y1, y2: 0.0,
        d1=lambda x, y0, y1, y2: 2.0 * y1,
        d2=lambda x, y0, y1, y2: 2.0,
        dx=lambda x, y0, y1, y2: 0.0,
    )


def log_cosh_value(y):
    """``ln cosh y`` without overflow."""
    a = np.abs(y)
    return a + np.log1p(np.exp(-2.0 * a)) - LN2


def sech2(y):
    """``1 - tanh(y)**2`` without cancellation for large ``|y|``."""
    e = np.exp(-2.0 * np.abs(y))
    return 4.0 * e / (1.0 + e) ** 2


def log_cosh() -> LocalScore:
    def fn(x, y0, y1, y2):
        return -log_cosh_value(y1) + y1 * np.tanh(y1) + y2 * sech2(y1)

    def d1(x, y0, y1, y2):
        return sech2(y1) * (y1 - 2.0 * y2 * np.tanh(y1))

    return LocalScore(
        fn=fn,
        label="lcs",
        d0=lambda x, y0, y1, y2: 0.0,
        d1=d1,
        d2=lambda x, y0, y1, y2: sech2(y1),
        dx=lambda x, y0, y1, y2: 0.0,
    )


def power_score(n: int, c: float = 0.0) -> LocalScore:
    """``c*y0 + (n-1)*(y1**n + n*y1**(n-2)*y2)`` for even ``n >= 2`` and ``c <= 0``."""
    if not float(n).is_integer() or n < 2 or int(n) % 2:
        raise InvalidOrder(f"n must be even and >= 2, got {n}")
    if not c <= 0:
        raise InvalidCoefficient(f"c must be <= 0, got {c}")
    n = int(n)
    c = float(c) + 0.0

    def fn(x, y0, y1, y2):
        return c * y0 + (n - 1) * (y1**n + n * y1 ** (n - 2) * y2)

    def d1(x, y0, y1, y2):
        if n == 2:
            return 2.0 * y1
        return (n - 1) * (n * y1 ** (n - 1) + n * (n - 2) * y1 ** (n - 3) * y2)

    return LocalScore(
        fn=fn,
        label=f"power:{n}:{_fmt(c)}",
        d0=lambda x, y0, y1, y2: c,
        d1=d1,
        d2=lambda x, y0, y1, y2: (n - 1) * n * y1 ** (n - 2),
        dx=lambda x, y0, y1, y2: 0.0,
    )


def _fmt(v):
    return repr(float(v)).removesuffix(".0") if float(v).is_integer() else repr(float(v))


# -- nonlocal scores ----------------------------------------------------------


def gaussian_components(q: DensityModel):
    """Flatten ``q`` to ``(weights, means, sds)`` if it is a Gaussian mixture, else None."""
    if isinstance(q, Normal):
        return [1.0], [q.mu], [q.sigma]
    if isinstance(q, Mixture):
        ws, ms, ss = [], [], []
        for w, c in zip(q.weights, q.components):
            sub = gaussian_components(c)
            if sub is None:
                return None
            ws.extend(w * v for v in sub[0])
            ms.extend(sub[1])
            ss.extend(sub[2])
        return ws, ms, ss
    return None


@lru_cache(maxsize=4096)
def l2_norm_squared(q: DensityModel, tol=1e-10):
    """``||q||_2^2``, closed form for Gaussian mixtures, adaptive quadrature otherwise.

    Square-integrability of user-defined density kinds is assumed, not checked.
    """
    parts = gaussian_components(q)
    if parts is None:
        return l2_norm_squared_quadrature(q, tol)
    w, m, s = (np.asarray(v, dtype=float) for v in parts)
    var = s[:, None] ** 2 + s[None, :] ** 2
    diff = m[:, None] - m[None, :]
    overlap = np.exp(-0.5 * diff**2 / var) / np.sqrt(2.0 * np.pi * var)
    return math.fsum((w[:, None] * w[None, :] * overlap).ravel())


def l2_norm_squared_quadrature(q: DensityModel, tol=1e-10):
    lo, hi = q.support()
    return integrate(lambda x: np.exp(2.0 * q.logpdf(x)), lo, hi, tol=tol, breakpoints=q.breakpoints())


def quadratic_score(x, q: DensityModel):
    value = l2_norm_squared(q) - 2.0 * q.pdf(x)
    return float(value) if np.ndim(value) == 0 else value


def spherical_score(x, q: DensityModel):
    norm_sq = l2_norm_squared(q)
    if not norm_sq > 0:
        raise DegenerateNorm(f"||q||_2 must be positive, got {norm_sq}")
    value = -q.pdf(x) / math.sqrt(norm_sq)
    return float(value) if np.ndim(value) == 0 else value


def quadratic() -> NonlocalScore:
    return NonlocalScore(quadratic_score, "qs")


def spherical() -> NonlocalScore:
    return NonlocalScore(spherical_score, "sphs")


# -- identifiers ---------------------------------------------------------------

BUILTIN = {
    "ls": logarithmic,
    "hs": hyvarinen,
    "lcs": log_cosh,
    "qs": quadratic,
    "sphs": spherical,
}


def get_score(identifier: str):
    """Resolve ``ls``, ``hs``, ``lcs``, ``qs``, ``sphs`` or ``power:n:c``."""
    key = identifier.strip().lower()
    if key in BUILTIN:
        return BUILTIN[key]()
    if key.startswith("power:"):
        parts = key.split(":")
        if len(parts) != 3:
            raise SpecificationError(f"expected power:n:c, got {identifier!r}")
        try:
            n = float(parts[1])
            c = float(parts[2])
        except ValueError:
            raise SpecificationError(f"expected numbers in {identifier!r}") from None
        if not n.is_integer() or n < 2 or int(n) % 2:
            raise InvalidOrder("n must be even")
        return power_score(int(n), c)
    raise SpecificationError(f"unknown score {identifier!r}; expected one of {', '.join(BUILTIN)} or power:n:c")
