"""Piecewise LoS/NLoS path loss, LoS probability, and small-scale fading.

All distances are 3D BS-UE distances in kilometres. Path loss values are
linear gains (``A * w**-alpha``); multiply by transmit power in mW to get
received power in mW.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError


class Link(str, enum.Enum):
    LOS = "los"
    NLOS = "nlos"


@dataclass(frozen=True)
class PathLossPiece:
    """Power laws for both link types on ``(previous break, upper_break]``."""

    upper_break: float
    los_amplitude: float
    los_exponent: float
    nlos_amplitude: float
    nlos_exponent: float

    def __post_init__(self):
        for name in ("los_amplitude", "los_exponent", "nlos_amplitude", "nlos_exponent"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.upper_break > 0:
            raise DomainError(f"upper_break must be positive, got {self.upper_break}")

    def amplitude(self, link: Link) -> float:
        return self.los_amplitude if link == Link.LOS else self.nlos_amplitude

    def exponent(self, link: Link) -> float:
        return self.los_exponent if link == Link.LOS else self.nlos_exponent


@dataclass(frozen=True)
class LosProbabilityPiece:
    """LoS probability on one piece: ``intercept + slope * w`` (slope per km).

    ``form`` is ``"linear"``, ``"constant"`` or ``"zero"``; constant and zero
    are stored with ``slope == 0``.
    """

    upper_break: float
    form: str = "zero"
    intercept: float = 0.0
    slope: float = 0.0

    def __post_init__(self):
        if self.form not in ("linear", "constant", "zero"):
            raise DomainError(f"unknown LoS probability form {self.form!r}")
        if self.form == "zero" and (self.intercept != 0.0 or self.slope != 0.0):
            raise DomainError("zero form takes no coefficients")
        if self.form == "constant" and self.slope != 0.0:
            raise DomainError("constant form takes no slope")

    @classmethod
    def linear(cls, upper_break, intercept, slope):
        return cls(upper_break, "linear", float(intercept), float(slope))

    @classmethod
    def constant(cls, upper_break, value):
        return cls(upper_break, "constant", float(value), 0.0)

    @classmethod
    def zero(cls, upper_break):
        return cls(upper_break, "zero")

    @classmethod
    def ramp(cls, upper_break):
        """``1 - w / d`` falling to zero at this piece's upper break."""
        return cls.linear(upper_break, 1.0, -1.0 / upper_break)

    def value(self, w):
        return self.intercept + self.slope * w

    def moment(self, w):
        """Antiderivative of ``value(t) * t``."""
        return self.intercept * w**2 / 2.0 + self.slope * w**3 / 3.0


@dataclass(frozen=True)
class PathLossModel:
    pieces: tuple[PathLossPiece, ...]
    los_prob: tuple[LosProbabilityPiece, ...]
    name: str = "custom"
    _breaks: np.ndarray = field(init=False, repr=False, compare=False)
    _moment_at_breaks: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pieces = tuple(self.pieces)
        los_prob = tuple(self.los_prob)
        object.__setattr__(self, "pieces", pieces)
        object.__setattr__(self, "los_prob", los_prob)
        if not pieces:
            raise DomainError("a path loss model needs at least one piece")
        if len(pieces) != len(los_prob):
            raise DomainError("path loss and LoS probability piece counts differ")
        breaks = np.array([p.upper_break for p in pieces], dtype=float)
        if not np.array_equal(breaks, [q.upper_break for q in los_prob]):
            raise DomainError("path loss and LoS probability breakpoints differ")
        if np.any(np.diff(breaks) <= 0):
            raise DomainError("breakpoints must be strictly increasing")
        if not math.isinf(breaks[-1]):
            raise DomainError("the last piece must extend to infinity")

        # LoS probability must stay in [0, 1] across each piece and never increase.
        lower = 0.0
        previous = 1.0
        for q in los_prob:
            upper = q.upper_break
            if math.isinf(upper) and q.slope != 0.0:
                raise DomainError("the last LoS probability piece cannot be linear")
            start = q.value(lower)
            end = q.value(upper) if not math.isinf(upper) else start
            tol = 1e-12
            if min(start, end) < -tol or max(start, end) > 1 + tol:
                raise DomainError(f"LoS probability leaves [0, 1] on piece ending at {upper}")
            if q.slope > 0 or start > previous + tol:
                raise DomainError("LoS probability must be non-increasing")
            previous = end
            lower = upper

        finite = breaks[:-1]
        moments = [0.0]
        lower = 0.0
        for q, upper in zip(los_prob[:-1], finite):
            moments.append(moments[-1] + q.moment(upper) - q.moment(lower))
            lower = upper
        object.__setattr__(self, "_breaks", breaks)
        object.__setattr__(self, "_moment_at_breaks", np.array(moments))

    @property
    def breakpoints(self) -> np.ndarray:
        """Upper breaks ``d_1 .. d_N`` (the last one is ``inf``)."""
        return self._breaks.copy()

    @property
    def num_pieces(self) -> int:
        return len(self.pieces)

    def piece_index(self, w):
        """Index ``n`` (0-based) with ``d_{n-1} < w <= d_n``."""
        return np.searchsorted(self._breaks[:-1], w, side="left")

    def piece_bounds(self, n: int) -> tuple[float, float]:
        lower = 0.0 if n == 0 else float(self._breaks[n - 1])
        return lower, float(self._breaks[n])

    def path_loss(self, link: Link, w, piece: int | None = None):
        """Linear path loss at 3D distance ``w``.

        With ``piece`` given, that piece's power law is used regardless of
        where ``w`` falls.
        """
        w = np.asarray(w, dtype=float)
        if np.any(w <= 0):
            raise DomainError("distance must be positive")
        link = Link(link)
        if piece is not None:
            p = self.pieces[piece]
            out = p.amplitude(link) * w ** -p.exponent(link)
        else:
            amp = np.array([p.amplitude(link) for p in self.pieces])
            expo = np.array([p.exponent(link) for p in self.pieces])
            idx = self.piece_index(w)
            out = amp[idx] * w ** -expo[idx]
        return out if out.ndim else float(out)

    def los_probability(self, w):
        w = np.asarray(w, dtype=float)
        if np.any(w <= 0):
            raise DomainError("distance must be positive")
        out = self._los_probability(w)
        return out if out.ndim else float(out)

    def _los_probability(self, w):
        intercept = np.array([q.intercept for q in self.los_prob])
        slope = np.array([q.slope for q in self.los_prob])
        idx = self.piece_index(w)
        return np.clip(intercept[idx] + slope[idx] * w, 0.0, 1.0)

    def los_moment(self, w):
        """``int_0^w Pr_L(t) t dt`` in closed form (vectorised over ``w``)."""
        w = np.asarray(w, dtype=float)
        idx = self.piece_index(w)
        lowers = np.concatenate(([0.0], self._breaks[:-1]))
        out = np.array(self._moment_at_breaks[idx], dtype=float)
        for n, q in enumerate(self.los_prob):
            sel = idx == n
            if np.any(sel) and q.form != "zero":
                out[sel] += q.moment(w[sel]) - q.moment(lowers[n])
        return out if out.ndim else float(out)

    def nlos_moment(self, w):
        """``int_0^w (1 - Pr_L(t)) t dt``."""
        w = np.asarray(w, dtype=float)
        return w**2 / 2.0 - self.los_moment(w)

    def los_support_end(self) -> float:
        """Distance beyond which every LoS probability piece is identically zero."""
        end = 0.0
        for q, upper in zip(self.los_prob, self._breaks):
            if q.form != "zero":
                end = float(upper)
        return end

    def with_los_exponent(self, exponent: float, name: str | None = None) -> "PathLossModel":
        pieces = tuple(
            PathLossPiece(p.upper_break, p.los_amplitude, exponent, p.nlos_amplitude, p.nlos_exponent)
            for p in self.pieces
        )
        return PathLossModel(pieces, self.los_prob, name or f"{self.name}(alpha_los={exponent:g})")


def path_loss(model: PathLossModel, link, w):
    return model.path_loss(link, w)


def los_probability(model: PathLossModel, w):
    return model.los_probability(w)


# 3GPP Case 1 constants (distances in km, amplitudes referenced to 1 km)
CASE1_D1 = 0.3
CASE1_A_LOS = 10 ** -10.38
CASE1_A_NLOS = 10 ** -14.54
CASE1_ALPHA_LOS = 2.09
CASE1_ALPHA_NLOS = 3.75


def preset_3gpp_case1(
    d1=CASE1_D1,
    a_los=CASE1_A_LOS,
    alpha_los=CASE1_ALPHA_LOS,
    a_nlos=CASE1_A_NLOS,
    alpha_nlos=CASE1_ALPHA_NLOS,
) -> PathLossModel:
    """Two pieces with identical power laws and a linear LoS ramp ``1 - w/d1``."""
    pieces = (
        PathLossPiece(d1, a_los, alpha_los, a_nlos, alpha_nlos),
        PathLossPiece(math.inf, a_los, alpha_los, a_nlos, alpha_nlos),
    )
    los = (LosProbabilityPiece.ramp(d1), LosProbabilityPiece.zero(math.inf))
    return PathLossModel(pieces, los, name="3gpp-case1")


def preset_single_slope(amplitude=CASE1_A_NLOS, exponent=CASE1_ALPHA_NLOS) -> PathLossModel:
    """One NLoS-only power law; the LoS law mirrors it so either link evaluates the same."""
    if not amplitude > 0 or not exponent > 0:
        raise DomainError("amplitude and exponent must be positive")
    piece = PathLossPiece(math.inf, amplitude, exponent, amplitude, exponent)
    return PathLossModel((piece,), (LosProbabilityPiece.zero(math.inf),), name="single-slope")


PRESETS = {
    "3gpp-case1": preset_3gpp_case1,
    "single-slope": preset_single_slope,
}


@dataclass(frozen=True)
class FadingKind:
    """Rayleigh, or Rician with ``K[dB] = k_intercept_db + k_slope_db_per_m * w[m]``."""

    tag: str = "rayleigh"
    k_intercept_db: float = 13.0
    k_slope_db_per_m: float = -0.03

    def __post_init__(self):
        if self.tag not in ("rayleigh", "rician"):
            raise DomainError(f"unknown fading kind {self.tag!r}")

    @classmethod
    def rayleigh(cls):
        return cls("rayleigh")

    @classmethod
    def rician(cls, k_intercept_db=13.0, k_slope_db_per_m=-0.03):
        return cls("rician", k_intercept_db, k_slope_db_per_m)

    def k_db(self, w):
        return self.k_intercept_db + self.k_slope_db_per_m * (np.asarray(w, dtype=float) * 1000.0)

    def k_linear(self, w):
        with np.errstate(over="ignore"):  # huge K in dB is the deterministic limit
            return 10.0 ** (self.k_db(w) / 10.0)


def sample_fading(kind: FadingKind, w, rng: np.random.Generator):
    """Unit-mean power gains, one per entry of ``w``."""
    w = np.asarray(w, dtype=float)
    if kind.tag == "rayleigh":
        out = rng.exponential(1.0, size=w.shape)
    else:
        if np.any(w <= 0):
            raise DomainError("Rician K factor needs a positive distance")
        out = sample_rician(kind.k_linear(w), rng)
    return out if out.ndim else float(out)


def sample_rician(k, rng: np.random.Generator):
    """``|sqrt(K/(K+1)) + sqrt(1/(K+1)) Z|^2`` with ``Z ~ CN(0, 1)``; ``K = inf`` gives 1."""
    k = np.asarray(k, dtype=float)
    scatter = 1.0 / (k + 1.0)
    direct = np.sqrt(1.0 - scatter)
    sigma = np.sqrt(scatter / 2.0)
    re = direct + sigma * rng.standard_normal(k.shape)
    im = sigma * rng.standard_normal(k.shape)
    return re**2 + im**2
