"""Kernels ``K(x, y0, y1) = c*y0 + K0(x, y1)`` and the scores they induce.

Forward direction: the tangent construction turns a kernel whose functional
``p -> int K(x, ln p, (ln p)') p dx`` is concave into the local proper score

    s = c*y0 + K0 - y1*d1K0 - dx1K0 - y2*d11K0.

Reverse direction: :func:`recover_kernel` rebuilds a ``y2``-free kernel from
a proper score through ``V = int_0^{z1} d2 s(x, z0, t, z2) dt`` and
``K = s - (z1 + d/dx) V``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .densities import DensityModel
from .errors import MissingPartials, QuadratureNonconvergent, RecoveryResidualLarge, SpecificationError
from .numerics import diff1, diff1_5pt, diff2, gauss_legendre, integrate, step
from .scores import LocalScore, _bcast, _fmt, sech2, log_cosh_value

KernelFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Kernel:
    """``c*y0 + K0(x, y1)`` with the partials of ``K0`` the construction needs.

    ``d111K0`` and ``dx11K0`` are optional third partials; when present the
    constructed score gets an analytic ``y1`` partial instead of a numerical one.
    """

    c: float
    K0: KernelFunction
    d1K0: Optional[KernelFunction] = None
    dx1K0: Optional[KernelFunction] = None
    d11K0: Optional[KernelFunction] = None
    label: str = "kernel"
    d111K0: Optional[KernelFunction] = None
    dx11K0: Optional[KernelFunction] = None
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __call__(self, x, y0, y1):
        return self.c * np.asarray(y0, dtype=float) + _bcast(self.K0(x, y1), x, y1)

    @classmethod
    def from_k0(cls, c, K0, label="kernel"):
        """Kernel whose partials are synthesized by :func:`finite_difference_adaptor`."""
        parts = finite_difference_adaptor(K0)
        return cls(float(c), K0, parts.d1, parts.dx1, parts.d11, label)

    def k0_partial(self, name, x, y1):
        f = getattr(self, name)
        return None if f is None else _bcast(f(x, y1), x, y1)


class KernelPartials(NamedTuple):
    d1: KernelFunction
    dx1: KernelFunction
    d11: KernelFunction


def finite_difference_adaptor(K0: KernelFunction) -> KernelPartials:
    """Central-difference partials of ``K0`` with steps scaled by ``eps**(1/3)`` or ``eps**(1/4)``."""

    def d1(x, y1):
        y1 = np.asarray(y1, dtype=float)
        return diff1(lambda t: K0(x, t), y1, step(y1, 1 / 3))

    def d11(x, y1):
        y1 = np.asarray(y1, dtype=float)
        return diff2(lambda t: K0(x, t), y1, step(y1, 1 / 4))

    def dx1(x, y1):
        x = np.asarray(x, dtype=float)
        y1 = np.asarray(y1, dtype=float)
        hx = step(x, 1 / 4)
        hy = step(y1, 1 / 4)
        return (K0(x + hx, y1 + hy) - K0(x + hx, y1 - hy) - K0(x - hx, y1 + hy) + K0(x - hx, y1 - hy)) / (
            4.0 * hx * hy
        )

    return KernelPartials(d1, dx1, d11)


# -- built-in kernels -----------------------------------------------------------


def power_kernel(n: int, c: float = 0.0) -> Kernel:
    """``c*y0 - y1**n``."""
    if not float(n).is_integer() or n < 1:
        raise SpecificationError(f"power kernel needs an integer n >= 1, got {n}")
    n = int(n)
    c = float(c) + 0.0

    def pw(y, k, coef):
        if k < 0 or coef == 0:
            return 0.0 * y
        return coef * y**k

    return Kernel(
        c=c,
        K0=lambda x, y1: -(y1**n),
        d1K0=lambda x, y1: pw(y1, n - 1, -n),
        dx1K0=lambda x, y1: 0.0,
        d11K0=lambda x, y1: pw(y1, n - 2, -n * (n - 1)),
        label=f"power:{n}:{_fmt(c)}",
        d111K0=lambda x, y1: pw(y1, n - 3, -n * (n - 1) * (n - 2)),
        dx11K0=lambda x, y1: 0.0,
    )


def log_cosh_kernel() -> Kernel:
    """``-ln cosh y1``: strictly concave and only linearly growing in ``y1``."""
    return Kernel(
        c=0.0,
        K0=lambda x, y1: -log_cosh_value(y1),
        d1K0=lambda x, y1: -np.tanh(y1),
        dx1K0=lambda x, y1: 0.0,
        d11K0=lambda x, y1: -sech2(y1),
        label="logcosh",
        d111K0=lambda x, y1: 2.0 * sech2(y1) * np.tanh(y1),
        dx11K0=lambda x, y1: 0.0,
    )


def log_kernel(c: float = -1.0) -> Kernel:
    """``c*y0``; with ``c = -1`` its tangent score is the logarithmic score."""
    zero = lambda x, y1: 0.0  # noqa: E731
    c = float(c) + 0.0
    return Kernel(c, zero, zero, zero, zero, "log" if c == -1 else f"log:{_fmt(c)}", zero, zero)


def get_kernel(identifier: str) -> Kernel:
    """Resolve ``power:n:c``, ``logcosh``, ``log`` or ``log:c``."""
    key = identifier.strip().lower()
    parts = key.split(":")
    try:
        if parts[0] == "power" and len(parts) == 3:
            n = float(parts[1])
            if not n.is_integer():
                raise SpecificationError(f"power kernel needs an integer n, got {parts[1]}")
            return power_kernel(int(n), float(parts[2]))
        if key == "logcosh":
            return log_cosh_kernel()
        if parts[0] == "log" and len(parts) <= 2:
            return log_kernel(float(parts[1]) if len(parts) == 2 else -1.0)
    except ValueError as exc:
        if isinstance(exc, SpecificationError):
            raise
        raise SpecificationError(f"bad number in kernel {identifier!r}") from None
    raise SpecificationError(f"unknown kernel {identifier!r}; expected power:n:c, logcosh or log[:c]")


# -- tangent construction ---------------------------------------------------------


def construct_score(K: Kernel) -> LocalScore:
    """Local score of order 2 induced by ``K``; ``d2 s = -d11K0`` is attached exactly."""
    if K.d1K0 is None or K.dx1K0 is None or K.d11K0 is None:
        raise MissingPartials(f"kernel {K.label!r} lacks d1K0/dx1K0/d11K0; use Kernel.from_k0")
    c = float(K.c)

    def fn(x, y0, y1, y2):
        return (
            c * np.asarray(y0, dtype=float)
            + K.K0(x, y1)
            - y1 * K.d1K0(x, y1)
            - K.dx1K0(x, y1)
            - y2 * K.d11K0(x, y1)
        )

    if K.d111K0 is not None and K.dx11K0 is not None:

        def d1(x, y0, y1, y2):
            return -y1 * K.d11K0(x, y1) - K.dx11K0(x, y1) - y2 * K.d111K0(x, y1)

    else:

        def d1(x, y0, y1, y2):
            y1 = np.asarray(y1, dtype=float)
            return diff1_5pt(lambda t: fn(x, y0, t, y2), y1, step(y1, 1 / 5))

    return LocalScore(
        fn=fn,
        label=f"tangent[{K.label}]",
        order=2,
        d0=lambda x, y0, y1, y2: c,
        d1=d1,
        d2=lambda x, y0, y1, y2: -K.d11K0(x, y1),
    )


@dataclass
class ConcavityReport:
    c_ok: bool
    min_d11: float
    max_d11: float
    verdict: str
    x_range: tuple[float, float]
    y1_range: tuple[float, float]
    x_spacing: float
    y1_spacing: float

    @property
    def concave(self):
        return self.verdict in ("concave-on-grid", "strict-on-grid")

    def to_dict(self):
        return {
            "c_ok": self.c_ok,
            "min_d11": self.min_d11,
            "max_d11": self.max_d11,
            "verdict": self.verdict,
            "x_range": list(self.x_range),
            "y1_range": list(self.y1_range),
            "x_spacing": self.x_spacing,
            "y1_spacing": self.y1_spacing,
        }


def concavity_report(K: Kernel, x_grid, y1_grid, tol=1e-12) -> ConcavityReport:
    """Grid check of the sufficient condition ``c <= 0`` and ``y1 -> K0`` concave.

    ``concave-on-grid`` needs ``max d11K0 <= tol``; ``strict-on-grid`` needs
    ``max d11K0 < -tol``. Only the grid is certified.
    """
    x_grid = np.asarray(x_grid, dtype=float).ravel()
    y1_grid = np.asarray(y1_grid, dtype=float).ravel()
    if x_grid.size == 0 or y1_grid.size == 0:
        raise SpecificationError("concavity grids must be nonempty")
    if K.d11K0 is None:
        raise MissingPartials(f"kernel {K.label!r} lacks d11K0")
    X, Y = np.meshgrid(x_grid, y1_grid, indexing="ij")
    d11 = _bcast(K.d11K0(X, Y), X, Y)
    lo, hi = float(np.min(d11)) + 0.0, float(np.max(d11)) + 0.0
    c_ok = bool(K.c <= 0)
    if c_ok and hi < -tol:
        verdict = "strict-on-grid"
    elif c_ok and hi <= tol:
        verdict = "concave-on-grid"
    else:
        verdict = "not-concave"
    return ConcavityReport(
        c_ok,
        lo,
        hi,
        verdict,
        (float(x_grid.min()), float(x_grid.max())),
        (float(y1_grid.min()), float(y1_grid.max())),
        _spacing(x_grid),
        _spacing(y1_grid),
    )


def _spacing(grid):
    g = np.unique(grid)
    return float(np.max(np.diff(g))) if g.size > 1 else 0.0


# -- kernel recovery ---------------------------------------------------------------

GL_NODES = 32
GL_TOL = 1e-9
RESIDUAL_LIMIT = 1e-3

PROBE_X = (-2.0, -1.0, 0.0, 1.0, 2.0)
PROBE_Z0 = (-1.0, 0.0, 1.0)
PROBE_Z1 = (-2.5, -1.5, -0.5, 0.0, 0.5, 1.5, 2.5)


class _Recovery:
    """Numerical pieces of ``K = s - (z1 + d/dx) V`` for one score."""

    def __init__(self, s: LocalScore, nodes=GL_NODES):
        self.s = s
        self.nodes = nodes

    def d2s(self, x, z0, z1, z2):
        return self.s.partial("d2", x, z0, z1, z2)

    def _v(self, x, z0, z1, z2, n):
        xi, wi = gauss_legendre(n)
        x, z0, z1, z2 = (np.asarray(a, dtype=float)[..., None] for a in np.broadcast_arrays(x, z0, z1, z2))
        half = 0.5 * z1
        t = half * (xi + 1.0)
        vals = np.broadcast_to(self.d2s(x, z0, t, z2), t.shape)
        return np.sum(wi * vals, axis=-1) * half[..., 0]

    def V(self, x, z0, z1, z2):
        coarse = self._v(x, z0, z1, z2, self.nodes)
        fine = self._v(x, z0, z1, z2, 2 * self.nodes)
        gap = np.abs(fine - coarse)
        if np.any(gap > GL_TOL * np.maximum(1.0, np.abs(fine))):
            raise QuadratureNonconvergent(
                f"Gauss-Legendre V-integral changed by {float(np.max(gap)):.3g} on doubling {self.nodes} nodes"
            )
        return coarse

    def dV(self, arg, x, z0, z1, z2):
        """Partial of V in ``x``, ``z0`` or ``z2`` by a five-point stencil."""
        args = dict(x=np.asarray(x, float), z0=np.asarray(z0, float), z1=np.asarray(z1, float), z2=np.asarray(z2, float))
        base = args[arg]
        h = step(base, 1 / 5)

        def shifted(v):
            a = dict(args)
            a[arg] = v
            return self.V(a["x"], a["z0"], a["z1"], a["z2"])

        return diff1_5pt(shifted, base, h)

    def kernel(self, x, z0, z1, z2, z3):
        v = self.V(x, z0, z1, z2)
        total = (
            self.dV("x", x, z0, z1, z2)
            + z1 * self.dV("z0", x, z0, z1, z2)
            + z2 * self.d2s(x, z0, z1, z2)  # d1 V = d2 s exactly
            + z3 * self.dV("z2", x, z0, z1, z2)
        )
        return self.s(x, z0, z1, z2) - z1 * v - total


def recover_kernel(
    s: LocalScore,
    z2_probe: float = 0.0,
    z3_probe: float = 0.0,
    *,
    check: bool = True,
    probe_x=PROBE_X,
    probe_z0=PROBE_Z0,
    probe_z1=PROBE_Z1,
) -> Kernel:
    """Rebuild the kernel of a characterized proper score.

    The returned kernel is the slice ``y0 = 0`` evaluated at the given
    ``z2``/``z3`` probes, with ``c`` read off as ``dK/dz0``. Its
    ``diagnostics`` hold the maximal probe residuals ``d0`` (spread of
    ``dK/dz0`` around ``c``), ``d2`` (``|dK/dz2|``), ``d3`` (``|dK/dz3|``)
    and ``d1`` (mismatch between the numerical ``dK0/dy1`` and ``-V``).
    Residuals above ``1e-3`` raise :class:`RecoveryResidualLarge` unless
    ``check`` is false; that signals a score outside the characterized form.
    """
    if s.d2 is None:
        raise MissingPartials(f"score {s.label!r} has no y2 partial")
    rec = _Recovery(s)
    z2p = float(z2_probe)
    z3p = float(z3_probe)

    X, Z0, Z1 = (a.ravel() for a in np.meshgrid(probe_x, probe_z0, probe_z1, indexing="ij"))
    Z2 = np.full_like(X, z2p)
    Z3 = np.full_like(X, z3p)

    def K_at(z0=Z0, z1=Z1, z2=Z2):
        return rec.kernel(X, z0, z1, z2, Z3)

    h0 = step(Z0, 1 / 5)
    dk0 = diff1_5pt(lambda v: K_at(z0=v), Z0, h0)
    c = float(np.mean(dk0))
    dk2 = diff1_5pt(lambda v: K_at(z2=v), Z2, step(Z2, 1 / 5))
    dk3 = -rec.dV("z2", X, Z0, Z1, Z2)

    zeros = np.zeros_like(X)
    k0_slice = lambda t: rec.kernel(X, zeros, t, Z2, Z3)  # noqa: E731
    dk1 = diff1_5pt(k0_slice, Z1, 1e-3 * np.maximum(1.0, np.abs(Z1)))
    d1_mismatch = dk1 + rec.V(X, zeros, Z1, Z2)

    residuals = {
        "d0": float(np.max(np.abs(dk0 - c))),
        "d1": float(np.max(np.abs(d1_mismatch))),
        "d2": float(np.max(np.abs(dk2))),
        "d3": float(np.max(np.abs(dk3))),
    }
    if check and max(residuals.values()) > RESIDUAL_LIMIT:
        raise RecoveryResidualLarge(
            f"kernel recovery residuals {residuals} exceed {RESIDUAL_LIMIT:g}; "
            f"{s.label!r} is not a proper score of the characterized form"
        )

    def K0(x, y1):
        x, y1 = np.broadcast_arrays(np.asarray(x, float), np.asarray(y1, float))
        return rec.kernel(x, 0.0 * x, y1, z2p + 0.0 * x, z3p + 0.0 * x)

    # The partials below use identities valid for characterized scores:
    # d1K0 = -V, d11K0 = -d2 s, dx1K0 = -dV/dx (all at y0 = 0, z2 = z2_probe).
    def d1K0(x, y1):
        x, y1 = np.broadcast_arrays(np.asarray(x, float), np.asarray(y1, float))
        return -rec.V(x, 0.0 * x, y1, z2p + 0.0 * x)

    def d11K0(x, y1):
        x, y1 = np.broadcast_arrays(np.asarray(x, float), np.asarray(y1, float))
        return -rec.d2s(x, 0.0 * x, y1, z2p + 0.0 * x)

    def dx1K0(x, y1):
        x, y1 = np.broadcast_arrays(np.asarray(x, float), np.asarray(y1, float))
        return -rec.dV("x", x, 0.0 * x, y1, z2p + 0.0 * x)

    diagnostics = {
        "c": c,
        "residuals": residuals,
        "z2_probe": z2p,
        "z3_probe": z3p,
        "gauss_legendre_nodes": GL_NODES,
        "n_probes": int(X.size),
    }
    return Kernel(c + 0.0, K0, d1K0, dx1K0, d11K0, f"recovered[{s.label}]", diagnostics=diagnostics)


# -- the induced functional ----------------------------------------------------------


def phi(K: Kernel, p: DensityModel, tol=1e-9) -> float:
    """``int K(x, ln p, (ln p)') p dx`` by adaptive quadrature."""

    def integrand(x):
        z = p.logderivs(x, 1)
        ok = np.isfinite(z[0])
        dens = np.where(ok, np.exp(np.where(ok, z[0], 0.0)), 0.0)
        val = K(x, np.where(ok, z[0], 0.0), np.where(ok, z[1], 0.0))
        return np.where(ok, val * dens, 0.0)

    lo, hi = p.support()
    return integrate(integrand, lo, hi, tol=tol, breakpoints=p.breakpoints())
