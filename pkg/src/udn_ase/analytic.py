"""Coverage probability and area spectral efficiency under Rayleigh fading.

Every radial integral is taken over the 3D distance ``w = sqrt(r**2 + L**2)``
rather than the 2D distance ``r``: since ``r dr = w dw`` the PPP intensity
``2 pi lambda r dr`` becomes ``2 pi lambda w dw`` on ``[L, inf)``. Model
breakpoints are then plain ``d_n`` and no square roots appear inside the
integrands.

Piece indices are 0-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import FadingKind, Link, PathLossModel
from .errors import ConvergenceError, DomainError
from .quadrature import DEFAULT_SPEC, QuadratureSpec, integrate, integrate_to_infinity, solve_monotone_root
from .units import dbm_to_mw

TWO_PI = 2.0 * math.pi
# Radial nodes whose weight (serving density times noise factor) falls below
# this are treated as contributing nothing.
NEGLIGIBLE = 1e-30
# Far SINR tail of the ASE integral: segment length and resolution.
TAIL_DECADES = 4
TAIL_PER_DECADE = 16


@dataclass(frozen=True)
class NetworkParams:
    density: float
    tx_power: float
    noise: float
    height_diff: float
    fading: FadingKind = field(default_factory=FadingKind.rayleigh)

    def __post_init__(self):
        if not self.density > 0:
            raise DomainError("density must be positive")
        if not self.tx_power > 0:
            raise DomainError("tx_power must be positive")
        if not self.noise >= 0:
            raise DomainError("noise must be non-negative")
        if not self.height_diff >= 0:
            raise DomainError("height_diff must be non-negative")

    @classmethod
    def from_units(cls, density, height_m=8.5, tx_power_dbm=24.0, noise_dbm=-95.0, fading=None):
        """Build from meters and dBm; ``noise_dbm=None`` means a noiseless network."""
        noise = 0.0 if noise_dbm is None else float(dbm_to_mw(noise_dbm))
        return cls(float(density), float(dbm_to_mw(tx_power_dbm)), noise, height_m / 1000.0,
                   fading or FadingKind.rayleigh())

    def with_density(self, density):
        return NetworkParams(density, self.tx_power, self.noise, self.height_diff, self.fading)


@dataclass(frozen=True)
class CoverageRecord:
    density: float
    gamma: float
    p_cov: float
    method: str = "analytic"
    ci_half_width: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.p_cov <= 1.0:
            raise DomainError(f"p_cov out of range: {self.p_cov}")


@dataclass(frozen=True)
class AseRecord:
    density: float
    gamma0: float
    ase: float
    method: str = "analytic"
    ci_half_width: float = 0.0

    def __post_init__(self):
        if not self.ase >= 0.0:
            raise DomainError(f"negative ASE: {self.ase}")


# ---------------------------------------------------------------------------
# equivalent distances

def equivalent_distance_3d(model: PathLossModel, link: Link, gain, spec=DEFAULT_SPEC):
    """3D distance at which the stacked ``link`` path loss equals ``gain``.

    Solved piece by piece with the power-law inverse; values that land in a
    jump of a discontinuous model fall back to root finding on the log gain,
    which converges onto the jump.
    """
    gain = np.atleast_1d(np.asarray(gain, dtype=float))
    out = np.full(gain.shape, np.nan)
    for n, piece in enumerate(model.pieces):
        lower, upper = model.piece_bounds(n)
        cand = (piece.amplitude(link) / gain) ** (1.0 / piece.exponent(link))
        ok = np.isnan(out) & (cand > lower) & (cand <= upper)
        out[ok] = cand[ok]
    for i in np.flatnonzero(np.isnan(out)):
        target = math.log(gain[i])
        hi = 1.0
        while math.log(model.path_loss(link, hi)) > target:
            hi *= 10.0
        lo = 1e-9
        out[i] = solve_monotone_root(lambda w: math.log(model.path_loss(link, w)) - target, lo, hi, spec)
    return out


def _serving_gain(model, link, n, w):
    return model.path_loss(link, w, piece=n)


def _competing_w(model, link, n, w, L):
    """3D lower limit for BSs of the opposite link type that would out-rank the server."""
    other = Link.NLOS if link == Link.LOS else Link.LOS
    eq = equivalent_distance_3d(model, other, _serving_gain(model, link, n, w))
    return np.maximum(eq, L)


def _piece_range_2d(model, n, L):
    lower, upper = model.piece_bounds(n)
    lower = max(lower, L)
    if upper <= L:
        return None
    return math.sqrt(lower**2 - L**2), math.sqrt(upper**2 - L**2)


def _check_piece_2d(model, n, r, L):
    if not 0 <= n < model.num_pieces:
        raise DomainError(f"piece index {n} out of range")
    bounds = _piece_range_2d(model, n, L)
    r = np.asarray(r, dtype=float)
    if bounds is None:
        raise DomainError(f"piece {n} lies entirely below the height difference")
    lo, hi = bounds
    slack = 1e-12 * max(1.0, hi if math.isfinite(hi) else lo)
    if np.any(r < lo - slack) or np.any(r > hi + slack):
        raise DomainError(f"r outside piece {n} range [{lo}, {hi}]")


def equivalent_distance_r1(model: PathLossModel, n: int, r, L: float):
    """2D distance of an NLoS BS whose path loss matches a LoS server at ``r`` (piece ``n``)."""
    return _equivalent_2d(model, Link.LOS, n, r, L)


def equivalent_distance_r2(model: PathLossModel, n: int, r, L: float):
    """2D distance of a LoS BS whose path loss matches an NLoS server at ``r`` (piece ``n``)."""
    return _equivalent_2d(model, Link.NLOS, n, r, L)


def _equivalent_2d(model, link, n, r, L):
    _check_piece_2d(model, n, r, L)
    r_arr = np.asarray(r, dtype=float)
    w = np.sqrt(r_arr**2 + L**2)
    w = np.where(w > 0, w, np.finfo(float).tiny)
    eq = np.atleast_1d(_competing_w(model, link, n, np.atleast_1d(w), L))
    out = np.sqrt(np.maximum(eq**2 - L**2, 0.0))
    return out.reshape(r_arr.shape) if r_arr.ndim else float(out[0])


# ---------------------------------------------------------------------------
# serving distance densities

class _Network:
    """Model and parameters bundled with the cumulative LoS/NLoS BS counts."""

    def __init__(self, model: PathLossModel, params: NetworkParams, spec: QuadratureSpec):
        self.model = model
        self.params = params
        self.spec = spec
        self.lam = params.density
        self.L = params.height_diff
        self._los_at_L = model.los_moment(self.L)
        self._nlos_at_L = model.nlos_moment(self.L)
        self.los_end = model.los_support_end()

    def los_count(self, w):
        """Mean number of LoS BSs with 3D distance in ``[L, w]``."""
        w = np.maximum(w, self.L)
        return TWO_PI * self.lam * (self.model.los_moment(w) - self._los_at_L)

    def nlos_count(self, w):
        w = np.maximum(w, self.L)
        return TWO_PI * self.lam * (self.model.nlos_moment(w) - self._nlos_at_L)

    def point_probability(self, link, n, w):
        q = self.model.los_prob[n]
        pr = np.clip(q.value(w), 0.0, 1.0)
        return pr if link == Link.LOS else 1.0 - pr

    def serving_density(self, link, n, w):
        """Density in ``w`` of being served over ``link`` by piece ``n`` at distance ``w``."""
        w = np.asarray(w, dtype=float)
        competing = _competing_w(self.model, link, n, w, self.L)
        if link == Link.LOS:
            void = self.nlos_count(competing) + self.los_count(w)
        else:
            void = self.los_count(competing) + self.nlos_count(w)
        return np.exp(-void) * self.point_probability(link, n, w) * TWO_PI * self.lam * w

    def skip_link(self, link, n):
        q = self.model.los_prob[n]
        if link == Link.LOS:
            return q.form == "zero"
        return q.form == "constant" and q.intercept >= 1.0

    def w_range(self, n):
        lower, upper = self.model.piece_bounds(n)
        lower = max(lower, self.L)
        if upper <= self.L:
            return None
        return lower, upper

    def radial_scale(self):
        return 1.0 / math.sqrt(math.pi * self.lam)

    def radial_points(self, lo, hi):
        """Splits around the typical serving distance, mapped to 3D."""
        c = self.radial_scale()
        pts = [math.sqrt(self.L**2 + (k * c) ** 2) for k in (1 / 16, 1 / 8, 1 / 4, 1 / 2, 1, 2, 4, 8)]
        return [p for p in pts if lo < p < hi]

    # -- interference -------------------------------------------------------

    def laplace_exponent(self, w_los, w_nlos, s):
        """``2 pi lambda`` times the LoS and NLoS interference integrals, per ``s``."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        P = self.params.tx_power
        model = self.model

        def los_integrand(w):
            x = s[None, :] * P * model.path_loss(Link.LOS, w)[:, None]
            return (model._los_probability(w) * w)[:, None] * (x / (1.0 + x))

        def nlos_integrand(w):
            x = s[None, :] * P * model.path_loss(Link.NLOS, w)[:, None]
            return ((1.0 - model._los_probability(w)) * w)[:, None] * (x / (1.0 + x))

        total = np.zeros(s.shape)
        breaks = list(model.breakpoints[:-1])
        if w_los < self.los_end:
            pts = breaks + list(self._transitions(Link.LOS, s, w_los))
            if math.isinf(self.los_end):
                total += integrate_to_infinity(los_integrand, w_los, self.spec,
                                               scale=self._tail_scale(Link.LOS, s, w_los), points=pts)
            else:
                total += integrate(los_integrand, w_los, self.los_end, self.spec, points=pts)
        pts = breaks + list(self._transitions(Link.NLOS, s, w_nlos))
        total += integrate_to_infinity(nlos_integrand, w_nlos, self.spec,
                                       scale=self._tail_scale(Link.NLOS, s, w_nlos), points=pts)
        return TWO_PI * self.lam * total

    def _transitions(self, link, s, lower):
        """Distances where ``s P zeta(w) = 1`` (interferer neither saturated nor negligible)."""
        pos = s[s > 0]
        if len(pos) == 0:
            return []
        w_t = equivalent_distance_3d(self.model, link, 1.0 / (pos * self.params.tx_power))
        w_t = np.quantile(w_t, [0.0, 0.5, 1.0])
        return [w for w in w_t if w > lower]

    def _tail_scale(self, link, s, lower):
        w_t = self._transitions(link, s, lower)
        return max(lower, w_t[0] if w_t else 0.0, 1e-6)

    def laplace(self, w_los, w_nlos, s):
        return np.exp(-self.laplace_exponent(w_los, w_nlos, s))

    # -- coverage -----------------------------------------------------------

    def conditional_coverage(self, link, n, w, gammas):
        """``P[SINR > gamma | served over link at w]`` for every gamma (rows: w)."""
        P, N0 = self.params.tx_power, self.params.noise
        gain = _serving_gain(self.model, link, n, w)
        competing = _competing_w(self.model, link, n, w, self.L)
        out = np.zeros((len(w), len(gammas)))
        for j in range(len(w)):
            s = gammas / (P * gain[j])
            noise = np.exp(-s * N0)
            if link == Link.LOS:
                lap = self.laplace(w[j], competing[j], s)
            else:
                lap = self.laplace(competing[j], w[j], s)
            out[j] = noise * lap
        return out

    def coverage(self, gammas):
        gammas = np.atleast_1d(np.asarray(gammas, dtype=float))
        P, N0 = self.params.tx_power, self.params.noise
        total = np.zeros(gammas.shape)
        for n in range(self.model.num_pieces):
            bounds = self.w_range(n)
            if bounds is None:
                continue
            lo, hi = bounds
            for link in (Link.LOS, Link.NLOS):
                if self.skip_link(link, n):
                    continue

                def integrand(w, link=link, n=n):
                    dens = self.serving_density(link, n, w)
                    gain = _serving_gain(self.model, link, n, w)
                    weight = dens * np.exp(-gammas.min() * N0 / (P * gain))
                    out = np.zeros((len(w), len(gammas)))
                    live = weight > NEGLIGIBLE
                    if np.any(live):
                        out[live] = dens[live, None] * self.conditional_coverage(link, n, w[live], gammas)
                    return out

                pts = self.radial_points(lo, hi)
                if math.isinf(hi):
                    scale = max(self.radial_scale(), lo - self.L, 1e-6)
                    total += integrate_to_infinity(integrand, lo, self.spec, scale=scale, points=pts)
                else:
                    total += integrate(integrand, lo, hi, self.spec, points=pts)
        return np.clip(total, 0.0, 1.0)

    def serving_mass(self):
        """Total probability of the serving-link densities (should be 1)."""
        total = 0.0
        for n in range(self.model.num_pieces):
            bounds = self.w_range(n)
            if bounds is None:
                continue
            lo, hi = bounds
            for link in (Link.LOS, Link.NLOS):
                if self.skip_link(link, n):
                    continue
                f = lambda w, link=link, n=n: self.serving_density(link, n, w)
                pts = self.radial_points(lo, hi)
                if math.isinf(hi):
                    scale = max(self.radial_scale(), lo - self.L, 1e-6)
                    total += integrate_to_infinity(f, lo, self.spec, scale=scale, points=pts)
                else:
                    total += integrate(f, lo, hi, self.spec, points=pts)
        return total


def _require_rayleigh(params):
    if params.fading.tag != "rayleigh":
        raise DomainError("the analytic engine requires Rayleigh fading")


def distance_pdf_los(model, params, n, r, spec=DEFAULT_SPEC):
    """Density (per km of 2D distance) of a LoS serving BS in piece ``n`` at ``r``."""
    return _distance_pdf(model, params, Link.LOS, n, r, spec)


def distance_pdf_nlos(model, params, n, r, spec=DEFAULT_SPEC):
    """Density (per km of 2D distance) of an NLoS serving BS in piece ``n`` at ``r``."""
    return _distance_pdf(model, params, Link.NLOS, n, r, spec)


def _distance_pdf(model, params, link, n, r, spec):
    L = params.height_diff
    _check_piece_2d(model, n, r, L)
    net = _Network(model, params, spec)
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    w = np.sqrt(r_arr**2 + L**2)
    out = np.zeros(r_arr.shape)
    pos = w > 0
    if np.any(pos):
        # f_R(r) dr = g(w) dw with dw/dr = r / w
        out[pos] = net.serving_density(link, n, w[pos]) * r_arr[pos] / w[pos]
    return out.reshape(np.shape(r)) if np.ndim(r) else float(out[0])


def serving_pdf_total(model, params, spec=DEFAULT_SPEC):
    """Sum over pieces and link types of the integrated serving-distance densities."""
    return _Network(model, params, spec).serving_mass()


def laplace_los(model, params, r, s, spec=DEFAULT_SPEC):
    """Laplace transform of the interference seen by a LoS-served UE at 2D distance ``r``.

    ``s`` may be a scalar or an array; the serving piece is the one containing
    ``sqrt(r**2 + L**2)``.
    """
    return _laplace(model, params, Link.LOS, r, s, spec)


def laplace_nlos(model, params, r, s, spec=DEFAULT_SPEC):
    """Laplace transform of the interference seen by an NLoS-served UE at 2D distance ``r``."""
    return _laplace(model, params, Link.NLOS, r, s, spec)


def _laplace(model, params, link, r, s, spec):
    if not r >= 0:
        raise DomainError("r must be non-negative")
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0):
        raise DomainError("s must be non-negative")
    L = params.height_diff
    net = _Network(model, params, spec)
    w = math.sqrt(r**2 + L**2)
    if w == 0:
        raise DomainError("serving distance must be positive")
    n = int(model.piece_index(w))
    competing = float(_competing_w(model, link, n, np.array([w]), L)[0])
    if link == Link.LOS:
        out = net.laplace(w, competing, s_arr)
    else:
        out = net.laplace(competing, w, s_arr)
    return out.reshape(s_arr.shape) if s_arr.ndim else float(out[0])


def coverage_probability(model, params, gamma, spec=DEFAULT_SPEC):
    """``P[SINR > gamma]`` for linear threshold(s) ``gamma``."""
    _require_rayleigh(params)
    g = np.asarray(gamma, dtype=float)
    if np.any(g <= 0):
        raise DomainError("gamma must be positive")
    out = _Network(model, params, spec).coverage(np.atleast_1d(g))
    return out.reshape(g.shape) if g.ndim else float(out[0])


def sinr_ccdf_curve(model, params, gamma_grid, spec=DEFAULT_SPEC):
    """Coverage records over an increasing threshold grid; checks the CCDF is non-increasing."""
    grid = np.asarray(gamma_grid, dtype=float)
    if grid.ndim != 1 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise DomainError("gamma grid must be positive and strictly increasing")
    p = coverage_probability(model, params, grid, spec)
    bump = np.diff(p)
    slack = 10 * spec.rel_tol * np.maximum(p[:-1], spec.abs_tol) + spec.abs_tol
    if np.any(bump > slack):
        i = int(np.argmax(bump - slack))
        raise ArithmeticError(
            f"coverage increases from gamma={grid[i]:.6g} to {grid[i + 1]:.6g}; "
            "tighten the quadrature tolerances"
        )
    return [CoverageRecord(params.density, float(g), float(v)) for g, v in zip(grid, p)]


def _simpson(y, h):
    if len(y) % 2 == 0:
        raise ValueError("Simpson's rule needs an odd number of samples")
    return h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum())


def ase(model, params, gamma0, spec=DEFAULT_SPEC, per_decade=64, grid_top=1e6, max_gamma=1e40):
    """Area spectral efficiency in bps/Hz/km^2 above the minimum working SINR ``gamma0``.

    Integrating the rate against the SINR density by parts gives

        A = lambda * [log2(1 + g0) p(g0) + (1 / ln 2) int_{g0}^inf p(g) / (1 + g) dg]

    where ``p`` is the coverage probability. The integral runs with Simpson's
    rule in ``ln g``: ``per_decade`` points up to ``grid_top``, then coarser
    segments of ``TAIL_DECADES`` decades until the power-law remainder
    ``p / delta`` (``delta`` the local decay exponent) falls below
    ``spec.tail_cut`` of the running total.
    """
    _require_rayleigh(params)
    if not gamma0 > 0:
        raise DomainError("gamma0 must be positive")
    net = _Network(model, params, spec)

    def segment(t0, t1, per):
        n = max(2, int(math.ceil((t1 - t0) / math.log(10.0) * per)))
        n += n % 2
        t = np.linspace(t0, t1, n + 1)
        g = np.exp(t)
        p = net.coverage(g)
        return p, _simpson(p * g / (1.0 + g), t[1] - t[0])

    t0 = math.log(gamma0)
    t1 = math.log(max(grid_top, 10.0 * gamma0))
    p, total = segment(t0, t1, per_decade)
    p0 = p[0]
    while True:
        p_end = p[-1]
        if p_end <= 0.0:
            break
        # local decay exponent over the last decade of the current segment
        p_prev = net.coverage(np.array([math.exp(t1 - math.log(10.0))]))[0]
        delta = math.log10(p_prev / p_end) if p_prev > p_end else 0.0
        remainder = p_end / delta if delta > 0 else math.inf
        if remainder <= spec.tail_cut * max(total, spec.abs_tol):
            total += remainder
            break
        if t1 >= math.log(max_gamma):
            raise ConvergenceError(f"SINR tail still carries {remainder:.3g} at gamma={math.exp(t1):.3g}",
                                   estimate=total, error=remainder)
        t_next = t1 + TAIL_DECADES * math.log(10.0)
        p, part = segment(t1, t_next, TAIL_PER_DECADE)
        total += part
        t1 = t_next
    return params.density * (math.log2(1.0 + gamma0) * p0 + total / math.log(2.0))


def toy_sir(r, L, tau, alpha):
    """Two-BS SIR with the interferer ``tau`` times farther in 2D than the server."""
    if r < 0 or not tau > 1 or not alpha > 0 or L < 0:
        raise DomainError("need r >= 0, L >= 0, tau > 1, alpha > 0")
    if r == 0 and L == 0:
        raise DomainError("r and L cannot both be zero")
    return ((r**2 + L**2) / (tau**2 * r**2 + L**2)) ** (-alpha / 2.0)
