"""Adaptive Gauss-Kronrod integration and bracketed root finding.

Integrands are called with a 1-D array of abscissae and must return either
an array of the same length or a 2-D array ``(len(x), m)``; the second form
integrates ``m`` functions at once and refines until every one of them meets
its tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BracketError, ConvergenceError, DivergenceError

# 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK qk15).
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

NODES = np.concatenate((-_XGK[:-1], _XGK[::-1]))
KRONROD_WEIGHTS = np.concatenate((_WGK[:-1], _WGK[::-1]))
_gauss_full = np.zeros(15)
_gauss_full[1:7:2] = _WG[:3]
_gauss_full[7] = _WG[3]
_gauss_full[9:15:2] = _WG[2::-1]
GAUSS_WEIGHTS = _gauss_full

MAX_INTERVALS = 20000


@dataclass(frozen=True)
class QuadratureSpec:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-12
    max_depth: int = 50
    tail_cut: float = 1e-10

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0 and self.tail_cut > 0):
            raise ValueError("tolerances must be positive")
        if self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")


DEFAULT_SPEC = QuadratureSpec()


def _rule(f, a, b):
    """Apply G7/K15 to every interval ``[a_i, b_i]``; returns (kronrod, |K - G|, vector flag)."""
    half = (b - a) / 2.0
    mid = (a + b) / 2.0
    x = (mid[:, None] + half[:, None] * NODES[None, :]).ravel()
    y = np.asarray(f(x), dtype=float)
    if y.shape[0] != x.shape[0]:
        raise ValueError("integrand must return one row per abscissa")
    vector = y.ndim > 1
    y = y.reshape(len(a), 15, -1)
    if not np.all(np.isfinite(y)):
        raise ConvergenceError("integrand returned a non-finite value")
    kron = np.einsum("k,ikm->im", KRONROD_WEIGHTS, y) * half[:, None]
    gauss = np.einsum("k,ikm->im", GAUSS_WEIGHTS, y) * half[:, None]
    return kron, np.abs(kron - gauss), vector


def _finish(total, vector):
    return total if vector else float(total[0])


def integrate(f, a, b, spec: QuadratureSpec = DEFAULT_SPEC, points=None):
    """Integrate ``f`` over ``[a, b]`` to ``max(abs_tol, rel_tol * |I|)``.

    ``points`` are interior abscissae where the integrand may have kinks;
    the initial partition is split there. Intervals are bisected in batches:
    every interval whose error exceeds its width-proportional share of the
    tolerance is split, and all children are evaluated in one call to ``f``.
    """
    a = float(a)
    b = float(b)
    if b < a:
        raise ValueError("integrate requires a <= b")
    edges = [a]
    if points is not None:
        edges += sorted(float(p) for p in points if a < p < b)
    edges.append(b)
    lo = np.array(edges[:-1])
    hi = np.array(edges[1:])
    keep = hi > lo
    lo, hi = lo[keep], hi[keep]
    if len(lo) == 0:
        probe = np.asarray(f(np.array([a])), dtype=float)
        m = 1 if probe.ndim == 1 else probe.shape[1]
        return _finish(np.zeros(m), probe.ndim > 1)

    est, err, vector = _rule(f, lo, hi)
    depth = np.zeros(len(lo), dtype=int)
    width = b - a

    while True:
        total = est.sum(axis=0)
        total_err = err.sum(axis=0)
        tol = np.maximum(spec.abs_tol, spec.rel_tol * np.abs(total))
        if np.all(total_err <= tol):
            return _finish(total, vector)
        share = (hi - lo)[:, None] / width * tol[None, :]
        ratio = err / tol[None, :]
        split = np.any(err > share, axis=1)
        worst = int(np.argmax(ratio.max(axis=1)))
        split[worst] = True
        if np.any(depth[split] >= spec.max_depth) or len(lo) + split.sum() > MAX_INTERVALS:
            raise ConvergenceError(
                f"integration on [{a}, {b}] did not converge (error {total_err.max():.3g})",
                estimate=_finish(total, vector),
                error=_finish(total_err, vector),
            )
        s_lo, s_hi = lo[split], hi[split]
        s_mid = (s_lo + s_hi) / 2.0
        c_lo = np.concatenate((s_lo, s_mid))
        c_hi = np.concatenate((s_mid, s_hi))
        c_est, c_err, _ = _rule(f, c_lo, c_hi)
        c_depth = np.concatenate((depth[split], depth[split])) + 1
        keep = ~split
        lo = np.concatenate((lo[keep], c_lo))
        hi = np.concatenate((hi[keep], c_hi))
        est = np.concatenate((est[keep], c_est))
        err = np.concatenate((err[keep], c_err))
        depth = np.concatenate((depth[keep], c_depth))


def _check_decay(f, a, scale):
    """Raise DivergenceError unless ``|f(u)| * u`` shrinks at large ``u``."""
    u = a + scale * np.array([1e4, 1e6, 1e8])
    y = np.abs(np.asarray(f(u), dtype=float))
    if y.ndim > 1:
        y = y.max(axis=1)
    mass = y * (u - a)
    if not np.all(np.isfinite(mass)):
        raise DivergenceError("integrand is not finite far from the lower limit")
    if mass[0] > 0 and mass[2] > 0.5 * mass[0] and mass[2] >= mass[1]:
        raise DivergenceError("integrand does not decay faster than 1/u")


def integrate_to_infinity(f, a, spec: QuadratureSpec = DEFAULT_SPEC, scale=1.0, points=None,
                          method="substitution"):
    """Integrate ``f`` over ``[a, inf)``.

    ``scale`` is the length over which the integrand is expected to vary near
    ``a``. ``method="substitution"`` maps ``u = a + scale * t / (1 - t)`` onto
    ``[0, 1)``; ``method="panels"`` sums panels of doubling width until one
    contributes less than ``tail_cut`` of the running total.
    """
    a = float(a)
    scale = float(scale)
    if not scale > 0:
        raise ValueError("scale must be positive")
    if method == "substitution":
        _check_decay(f, a, scale)

        def g(t):
            one_minus = 1.0 - t
            u = a + scale * t / one_minus
            y = np.asarray(f(u), dtype=float)
            jac = scale / one_minus**2
            return y * (jac if y.ndim == 1 else jac[:, None])

        mapped = None
        if points is not None:
            mapped = [(p - a) / (p - a + scale) for p in points if p > a and math.isfinite(p)]
        return integrate(g, 0.0, 1.0, spec, points=mapped)
    if method == "panels":
        return _panel_doubling(f, a, spec, scale, points)
    raise ValueError(f"unknown method {method!r}")


def _panel_doubling(f, a, spec, scale, points):
    total = None
    previous = None
    growing = 0
    lo = a
    width = scale
    inner = list(points) if points is not None else []
    for _ in range(200):
        hi = lo + width
        part = np.atleast_1d(integrate(f, lo, hi, spec, points=[p for p in inner if lo < p < hi]))
        total = part if total is None else total + part
        size = np.abs(part)
        if np.all(size <= np.maximum(spec.tail_cut * np.abs(total), spec.abs_tol * spec.tail_cut)):
            return float(total[0]) if total.shape == (1,) else total
        if previous is not None and np.any(size >= 0.999 * previous):
            growing += 1
            if growing >= 6:
                raise DivergenceError("panel contributions are not shrinking")
        else:
            growing = 0
        previous = size
        lo = hi
        width *= 2.0
    raise DivergenceError("panel doubling did not reach the tail cut")


def solve_monotone_root(g, lo, hi, spec: QuadratureSpec = DEFAULT_SPEC):
    """Root of a monotone ``g`` on ``[lo, hi]`` by bisection with secant steps.

    Stops once the bracket is narrower than ``spec.abs_tol`` (or cannot be
    narrowed further in floating point).
    """
    lo = float(lo)
    hi = float(hi)
    if hi < lo:
        lo, hi = hi, lo
    g_lo = float(g(lo))
    g_hi = float(g(hi))
    if g_lo == 0.0:
        return lo
    if g_hi == 0.0:
        return hi
    if g_lo * g_hi > 0:
        raise BracketError(f"no sign change on [{lo}, {hi}]")
    use_secant = True
    for _ in range(400):
        width = hi - lo
        if width <= spec.abs_tol:
            break
        x = None
        if use_secant and g_hi != g_lo:
            x = hi - g_hi * (hi - lo) / (g_hi - g_lo)
            if not (lo < x < hi):
                x = None
        if x is None:
            x = lo + width / 2.0
        if x <= lo or x >= hi:
            break
        g_x = float(g(x))
        if g_x == 0.0:
            return x
        if g_x * g_lo < 0:
            hi, g_hi = x, g_x
        else:
            lo, g_lo = x, g_x
        # Fall back to bisection whenever a secant step failed to halve the bracket.
        use_secant = (hi - lo) <= width / 2.0
    return lo if abs(g_lo) <= abs(g_hi) else hi
