"""Monte Carlo estimates of coverage and ASE on Poisson BS fields.

The typical UE sits at the origin of a disc of radius ``sim_radius``. Each
realization draws a Poisson number of BSs placed uniformly on the disc, an
independent LoS state per BS, and one fading gain per link. The UE attaches
to the BS with the largest path loss gain; every other BS interferes.

Trials are simulated in fixed blocks of ``TRIAL_BLOCK``. Block ``k`` draws
from its own stream ``SeedSequence(seed, spawn_key=(k,))``, so a trial's
outcome depends only on ``(seed, trial index)``: a short final block is
drawn at full size and trimmed. The result does not depend
on how blocks are spread over workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .analytic import NetworkParams
from .channel import Link, PathLossModel, sample_fading
from .errors import DomainError
from .quadrature import DEFAULT_SPEC, integrate, integrate_to_infinity, solve_monotone_root

TRIAL_BLOCK = 250
MAX_EXPECTED_BS = 2_000_000


@dataclass(frozen=True)
class TrialConfig:
    params: NetworkParams
    model: PathLossModel
    sim_radius: float
    trials: int
    seed: int = 0

    def __post_init__(self):
        if not self.sim_radius > 0:
            raise DomainError("sim_radius must be positive")
        if self.trials < 1:
            raise DomainError("trials must be at least 1")

    @property
    def expected_bs(self):
        return self.params.density * math.pi * self.sim_radius**2


@dataclass(frozen=True)
class TrialOutcome:
    serving_2d_distance: float
    serving_link: Link
    sinr: float
    num_bs: int
    serving_gain: float
    max_interferer_gain: float
    resamples: int = 0


@dataclass
class SimulationResult:
    """Per-trial arrays, ordered by trial index."""

    density: float
    sinr: np.ndarray
    serving_2d_distance: np.ndarray
    serving_los: np.ndarray
    num_bs: np.ndarray
    resamples: int

    @property
    def trials(self):
        return len(self.sinr)

    @property
    def resample_rate(self):
        return self.resamples / (self.trials + self.resamples)

    def coverage(self, gamma):
        """Fraction of trials with SINR above ``gamma`` and its 95% half-width."""
        p = float(np.count_nonzero(self.sinr > gamma)) / self.trials
        return p, 1.96 * math.sqrt(p * (1.0 - p) / self.trials)

    def ase(self, gamma0):
        """``lambda * E[log2(1 + SINR) 1{SINR > gamma0}]`` and its 95% half-width.

        Since the SINR density is the derivative of ``1 - p_cov``, the
        expectation of the truncated rate is exactly the rate integral over
        ``[gamma0, inf)`` weighted by that density.
        """
        rate = np.where(self.sinr > gamma0, np.log2(1.0 + self.sinr), 0.0)
        mean = math.fsum(rate) / self.trials
        var = math.fsum((rate - mean) ** 2) / max(self.trials - 1, 1)
        return self.density * mean, 1.96 * self.density * math.sqrt(var / self.trials)


def block_rng(seed, block):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def _simulate_block(cfg: TrialConfig, rng: np.random.Generator, size: int):
    params, model = cfg.params, cfg.model
    L = params.height_diff
    mean = cfg.expected_bs
    counts = rng.poisson(mean, size=size)
    resamples = np.zeros(size, dtype=int)
    empty = counts == 0
    while np.any(empty):
        resamples += empty
        counts[empty] = rng.poisson(mean, size=int(empty.sum()))
        empty = counts == 0

    total = int(counts.sum())
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    owner = np.repeat(np.arange(size), counts)
    r = cfg.sim_radius * np.sqrt(rng.random(total))
    w = np.sqrt(r**2 + L**2)
    los = rng.random(total) < model.los_probability(w)
    gain = np.where(los, model.path_loss(Link.LOS, w), model.path_loss(Link.NLOS, w))

    # Serving BS: largest gain; ties go to the nearer BS.
    order = np.lexsort((r, -gain, owner))
    serving = order[starts]

    fading = sample_fading(params.fading, w, rng)
    received = params.tx_power * gain * fading
    signal = received[serving]
    received[serving] = 0.0
    interference = np.add.reduceat(received, starts)
    sinr = signal / (interference + params.noise)

    others = gain.copy()
    others[serving] = -np.inf
    max_other = np.maximum.reduceat(others, starts)
    return {
        "sinr": sinr,
        "r": r[serving],
        "los": los[serving],
        "num_bs": counts,
        "gain": gain[serving],
        "max_other": max_other,
        "resamples": resamples,
    }


def run_trial(cfg: TrialConfig, rng: np.random.Generator) -> TrialOutcome:
    out = _simulate_block(cfg, rng, 1)
    return TrialOutcome(
        serving_2d_distance=float(out["r"][0]),
        serving_link=Link.LOS if out["los"][0] else Link.NLOS,
        sinr=float(out["sinr"][0]),
        num_bs=int(out["num_bs"][0]),
        serving_gain=float(out["gain"][0]),
        max_interferer_gain=float(out["max_other"][0]),
        resamples=int(out["resamples"][0]),
    )


def _run_blocks(cfg: TrialConfig, blocks):
    # Every block is drawn at full size and trimmed, so trial i sees the same
    # variates whatever the total trial count.
    parts = []
    for k in blocks:
        size = min(TRIAL_BLOCK, cfg.trials - k * TRIAL_BLOCK)
        out = _simulate_block(cfg, block_rng(cfg.seed, k), TRIAL_BLOCK)
        parts.append({key: value[:size] for key, value in out.items()})
    return parts


def run_trials(cfg: TrialConfig, workers: int = 1) -> SimulationResult:
    n_blocks = -(-cfg.trials // TRIAL_BLOCK)
    blocks = list(range(n_blocks))
    if workers > 1 and n_blocks > 1:
        groups = [blocks[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = pool.map(_run_blocks, [cfg] * len(groups), groups)
            parts = {}
            for group, res in zip(groups, results):
                parts.update(zip(group, res))
        parts = [parts[k] for k in blocks]
    else:
        parts = _run_blocks(cfg, blocks)
    return SimulationResult(
        density=cfg.params.density,
        sinr=np.concatenate([p["sinr"] for p in parts]),
        serving_2d_distance=np.concatenate([p["r"] for p in parts]),
        serving_los=np.concatenate([p["los"] for p in parts]),
        num_bs=np.concatenate([p["num_bs"] for p in parts]),
        resamples=int(sum(p["resamples"].sum() for p in parts)),
    )


def simulate_coverage(cfg: TrialConfig, gamma, workers: int = 1):
    if cfg.trials < 100:
        raise DomainError("coverage estimates need at least 100 trials")
    return run_trials(cfg, workers).coverage(gamma)


def simulate_ase(cfg: TrialConfig, gamma0, workers: int = 1):
    if cfg.trials < 100:
        raise DomainError("ASE estimates need at least 100 trials")
    return run_trials(cfg, workers).ase(gamma0)


# ---------------------------------------------------------------------------
# truncation of the simulated region

def _mean_gain_density(model, w):
    """``Pr_L zeta_L + (1 - Pr_L) zeta_NL`` at 3D distance ``w``."""
    pr = model.los_probability(w)
    return pr * model.path_loss(Link.LOS, w) + (1.0 - pr) * model.path_loss(Link.NLOS, w)


def _outer_tail_closed(model, params, W):
    """Campbell mean interference from 3D distances beyond ``W >= last break``."""
    last_piece = model.pieces[-1]
    q = model.los_prob[-1]
    pr = q.intercept
    total = 0.0
    for weight, amp, expo in ((pr, last_piece.los_amplitude, last_piece.los_exponent),
                              (1.0 - pr, last_piece.nlos_amplitude, last_piece.nlos_exponent)):
        if weight <= 0:
            continue
        if expo <= 2:
            raise DomainError("path loss exponent <= 2 gives infinite mean interference")
        total += weight * amp * W ** (2.0 - expo) / (expo - 2.0)
    return 2.0 * math.pi * params.density * params.tx_power * total


def tail_mean_interference(model: PathLossModel, params: NetworkParams, radius, method="closed",
                           spec=DEFAULT_SPEC):
    """Mean interference from BSs beyond 2D distance ``radius``.

    ``method="closed"`` uses the power-law antiderivative beyond the last
    breakpoint (numeric quadrature only across any pieces in between);
    ``method="numeric"`` integrates the whole tail numerically.
    """
    W = math.sqrt(radius**2 + params.height_diff**2)
    scale_factor = 2.0 * math.pi * params.density * params.tx_power
    f = lambda w: _mean_gain_density(model, w) * w
    last_break = float(model.breakpoints[-2]) if model.num_pieces > 1 else 0.0
    if method == "numeric":
        for piece in model.pieces[-1:]:
            if min(piece.los_exponent, piece.nlos_exponent) <= 2:
                raise DomainError("path loss exponent <= 2 gives infinite mean interference")
        return scale_factor * integrate_to_infinity(f, W, spec, scale=max(W, 1e-3),
                                                    points=list(model.breakpoints[:-1]))
    if method != "closed":
        raise ValueError(f"unknown method {method!r}")
    if W >= last_break:
        return _outer_tail_closed(model, params, W)
    inner = integrate(f, W, last_break, spec, points=list(model.breakpoints[:-1]))
    return scale_factor * inner + _outer_tail_closed(model, params, last_break)


def _inner_mean_interference(model, params, radius, spec=DEFAULT_SPEC):
    """Mean interference from BSs between the mean nearest-neighbour distance and ``radius``."""
    L = params.height_diff
    near = 0.5 / math.sqrt(params.density)
    if radius <= near:
        return 0.0
    lo = math.sqrt(near**2 + L**2)
    hi = math.sqrt(radius**2 + L**2)
    f = lambda w: _mean_gain_density(model, w) * w
    val = integrate(f, lo, hi, spec, points=list(model.breakpoints[:-1]))
    return 2.0 * math.pi * params.density * params.tx_power * val


def truncation_radius(model: PathLossModel, params: NetworkParams, eps: float, spec=DEFAULT_SPEC):
    """Smallest 2D radius whose mean interference tail is below ``eps`` of noise plus inner interference.

    The inner interference is counted from the mean nearest-neighbour
    distance ``0.5 / sqrt(lambda)`` outwards, since the mean from the origin
    diverges for exponents at or above 2 when ``L = 0``.
    """
    if not 0 < eps < 1:
        raise DomainError("eps must lie in (0, 1)")

    def excess(logr):
        radius = math.exp(logr)
        tail = tail_mean_interference(model, params, radius, spec=spec)
        budget = eps * (params.noise + _inner_mean_interference(model, params, radius, spec))
        return math.log(tail) - math.log(budget) if budget > 0 else math.inf

    lo = math.log(0.5 / math.sqrt(params.density))
    if excess(lo) <= 0:
        return math.exp(lo)
    hi = lo
    while excess(hi) > 0:
        hi += math.log(4.0)
        if hi - lo > 60:
            raise DomainError("could not bracket the truncation radius")
    tight = type(spec)(rel_tol=spec.rel_tol, abs_tol=1e-9, max_depth=spec.max_depth, tail_cut=spec.tail_cut)
    return math.exp(solve_monotone_root(lambda x: excess(x) if math.isfinite(excess(x)) else 1e300,
                                        lo, hi, tight))


def default_sim_radius(model, params, eps=0.005, min_expected_bs=1000.0, max_expected_bs=MAX_EXPECTED_BS):
    """Truncation radius, raised to hold at least ``min_expected_bs`` BSs and capped at ``max_expected_bs``."""
    radius = truncation_radius(model, params, eps)
    floor = math.sqrt(min_expected_bs / (math.pi * params.density))
    cap = math.sqrt(max_expected_bs / (math.pi * params.density))
    return min(max(radius, floor), cap)


def make_config(model, params, trials, seed=0, sim_radius=None, eps=0.005):
    radius = sim_radius if sim_radius is not None else default_sim_radius(model, params, eps)
    return TrialConfig(params, model, radius, trials, seed)
