"""Quadrature and finite-difference primitives shared by the other modules.

The integrator is a vectorized adaptive Simpson rule with Richardson
extrapolation: every refinement level evaluates the integrand once, on all
new abscissae at the same time, so integrands must accept numpy arrays.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .errors import QuadratureNonconvergent

EPS = np.finfo(float).eps


MAX_ACTIVE_PANELS = 1 << 18


def integrate(f, a, b, tol=1e-9, breakpoints=(), panels=16, max_depth=45, max_active=MAX_ACTIVE_PANELS):
    """Integrate ``f`` over ``[a, b]`` to absolute tolerance ``tol``.

    ``breakpoints`` inside the interval become panel edges, which keeps kinks
    and narrow mixture components from hiding inside a single coarse panel.
    The tolerance is shared between panels in proportion to their width.
    More than ``max_active`` unresolved panels at one level is treated as
    non-convergence (typically a noisy integrand).
    """
    a = float(a)
    b = float(b)
    if not b > a:
        if a == b:
            return 0.0
        return -integrate(f, b, a, tol, breakpoints, panels, max_depth, max_active)

    edges = sorted({a, b, *(float(x) for x in breakpoints if a < x < b)})
    left = np.concatenate([np.linspace(lo, hi, panels + 1)[:-1] for lo, hi in zip(edges[:-1], edges[1:])])
    right = np.concatenate([np.linspace(lo, hi, panels + 1)[1:] for lo, hi in zip(edges[:-1], edges[1:])])
    mid = 0.5 * (left + right)
    values = _evaluate(f, np.concatenate([left, mid, right]))
    fl, fm, fr = np.split(values, 3)

    span = b - a
    pieces = []
    for _ in range(max_depth):
        q1 = 0.5 * (left + mid)
        q3 = 0.5 * (mid + right)
        fq1, fq3 = np.split(_evaluate(f, np.concatenate([q1, q3])), 2)
        width = right - left
        coarse = width / 6.0 * (fl + 4.0 * fm + fr)
        fine = width / 12.0 * (fl + 4.0 * fq1 + 2.0 * fm + 4.0 * fq3 + fr)
        err = (fine - coarse) / 15.0
        done = np.abs(err) <= tol * width / span
        # Panels at roundoff width cannot be refined usefully.
        done |= width <= 64.0 * EPS * max(abs(a), abs(b), 1.0)
        pieces.append(fine[done] + err[done])

        todo = ~done
        if not todo.any():
            return math.fsum(np.concatenate(pieces))
        if 2 * np.count_nonzero(todo) > max_active:
            raise QuadratureNonconvergent(
                f"adaptive Simpson needs more than {max_active} panels for tol={tol:g} on [{a:g}, {b:g}]"
            )
        l, m, r = left[todo], mid[todo], right[todo]
        a1, a3 = q1[todo], q3[todo]
        left = np.concatenate([l, m])
        mid = np.concatenate([a1, a3])
        right = np.concatenate([m, r])
        fl = np.concatenate([fl[todo], fm[todo]])
        fr = np.concatenate([fm[todo], fr[todo]])
        fm = np.concatenate([fq1[todo], fq3[todo]])

    raise QuadratureNonconvergent(
        f"adaptive Simpson did not reach tol={tol:g} on [{a:g}, {b:g}] within {max_depth} levels"
    )


def _evaluate(f, x):
    y = np.asarray(f(x), dtype=float)
    if y.shape != x.shape:
        y = np.broadcast_to(y, x.shape).copy()
    if not np.all(np.isfinite(y)):
        bad = x[~np.isfinite(y)][0]
        raise QuadratureNonconvergent(f"integrand is not finite at x={bad:g}")
    return y


@lru_cache(maxsize=None)
def gauss_legendre(n):
    """Nodes and weights of the ``n``-point Gauss-Legendre rule on [-1, 1]."""
    nodes, weights = np.polynomial.legendre.leggauss(n)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def step(x, power):
    """Relative step ``max(1, |x|) * eps**power`` for finite differences."""
    return np.maximum(1.0, np.abs(x)) * EPS**power


def diff1(f, x, h):
    """Second-order central first derivative."""
    return (f(x + h) - f(x - h)) / (2.0 * h)


def diff2(f, x, h):
    """Second-order central second derivative."""
    return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)


def diff1_5pt(f, x, h):
    """Fourth-order five-point first derivative."""
    return (f(x - 2 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2 * h)) / (12.0 * h)


def diff2_5pt(f, x, h):
    """Fourth-order five-point second derivative."""
    return (-f(x - 2 * h) + 16.0 * f(x - h) - 30.0 * f(x) + 16.0 * f(x + h) - f(x + 2 * h)) / (12.0 * h * h)
