"""Per-layer mutual information, achievable rate and power-allocation search.

Layer capacities are bit-level mutual informations: for the layer of rank
``l`` in a superposed constellation, the sum over its two label bits of
I(b; Y) with every other label bit uniform and unknown. They are estimated
by Monte Carlo with an exact log-sum-exp integrand. For co-phased QPSK
layers the I and Q rails are independent PAM channels, and the estimate is
taken on one rail (same expectation, a fraction of the cost).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .constellation import MAX_LAYERS, Constellation, from_fractions, remove_layer
from .schedule import SchemeParams
from .waveform import ChannelParams

MIN_SAMPLES = 1000
SEARCH_SAMPLES = 200_000
REPORT_SAMPLES = 2_000_000
LN2 = math.log(2.0)


@dataclass(frozen=True)
class PowerAllocation:
    """Per-burst energy fractions (rho_1, ..., rho_Nb), descending."""

    rhos: tuple[float, ...]

    def __post_init__(self):
        rhos = tuple(float(r) for r in self.rhos)
        if not rhos:
            raise ValueError("allocation needs at least one fraction")
        if any(not (0.0 <= r <= 1.0) for r in rhos):
            raise ValueError("fractions must lie in [0, 1]")
        if any(a < b for a, b in zip(rhos, rhos[1:])):
            raise ValueError("fractions must be in descending order")
        object.__setattr__(self, "rhos", rhos)

    def __len__(self) -> int:
        return len(self.rhos)

    @property
    def energy_factor(self) -> float:
        """Total transmit energy relative to one TDMA burst."""
        return sum(self.rhos)


@dataclass(frozen=True)
class RatePoint:
    snr: float
    allocation: PowerAllocation
    rate_per_user: float
    layer_capacities: tuple[float, ...]
    num_users: int

    @property
    def sum_rate(self) -> float:
        """N_u * R_a, the per-slot sum of layer capacities."""
        return self.rate_per_user * self.num_users


# ---------------------------------------------------------------------------
# Monte Carlo kernels


def _lse_rows(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1)
    return m + np.log(np.exp(a - m[:, None]).sum(axis=1))


@numba.njit(cache=True)
def _softplus_llr_mean(pts0, pts1, y, k):
    """mean(log(1 + exp(-LLR))) for samples ``y`` sent with target bit 0."""
    acc = 0.0
    for s in range(y.size):
        yy = y[s]
        m = -np.inf
        for p in pts0:
            m = max(m, -(yy - p) ** 2 * k)
        for p in pts1:
            m = max(m, -(yy - p) ** 2 * k)
        s0 = 0.0
        for p in pts0:
            s0 += math.exp(-(yy - p) ** 2 * k - m)
        s1 = 0.0
        for p in pts1:
            s1 += math.exp(-(yy - p) ** 2 * k - m)
        x = math.log(s1) - math.log(s0)
        acc += x + math.log1p(math.exp(-x)) if x > 0 else math.log1p(math.exp(x))
    return acc / y.size


def _pam_bit_mi(amps: Sequence[float], target: int, sigma: float,
                z: np.ndarray, signs: np.ndarray) -> float:
    """I(b_target; Y) for Y = sum_l signs[:, l] * amps[l] + sigma * z.

    ``signs`` holds uniform +-1 values with at least ``len(amps)`` columns.
    The PAM is symmetric under global negation, so every sample is folded
    onto target bit 0.
    """
    L = len(amps)
    a = np.asarray(amps, dtype=float)
    if a[target] == 0.0:
        return 0.0
    combos = (np.arange(2**L)[:, None] >> np.arange(L - 1, -1, -1)[None, :]) & 1
    pts = ((1 - 2 * combos) * a).sum(axis=1)
    sg = signs[:, :L].astype(float)
    y = (sg @ a + sigma * z) * sg[:, target]
    zero = combos[:, target] == 0
    k = 1.0 / (2 * sigma**2)
    return 1.0 - _softplus_llr_mean(pts[zero].copy(), pts[~zero].copy(), y, k) / LN2


def _mc2d_layer_mi(c: Constellation, positions: Sequence[int], noise_var: float,
                   rng: np.random.Generator, samples: int) -> float:
    M = c.points.size
    idx = rng.integers(M, size=samples)
    s = math.sqrt(noise_var / 2)
    y = c.points[idx] + s * rng.standard_normal(samples) + 1j * s * rng.standard_normal(samples)
    total = 0.0
    chunk = max(1, 2_000_000 // M)
    for pos in positions:
        acc = 0.0
        for lo in range(0, samples, chunk):
            yy, ii = y[lo:lo + chunk], idx[lo:lo + chunk]
            d = -np.abs(yy[:, None] - c.points[None, :]) ** 2 / noise_var
            same = c.bits[None, :, pos] == c.bits[ii, pos][:, None]
            acc += float(np.sum(_lse_rows(np.where(same, d, -np.inf)) - _lse_rows(d)))
        total += 1.0 + acc / samples / LN2
    return total


def _common_draws(seed: int, samples: int) -> tuple[np.ndarray, np.ndarray]:
    # bits for the maximum layer count, so estimates for any L share one stream
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(samples)
    bits = rng.integers(0, 2, size=(samples, MAX_LAYERS), dtype=np.int8)
    return z, (1 - 2 * bits).astype(np.int8)


def layer_capacity(c: Constellation, layer_rank: int, noise_var: float,
                   samples: int = SEARCH_SAMPLES, seed: int = 0,
                   method: str = "auto") -> float:
    """Bit-level capacity (bits per channel use) of one layer of ``c``.

    ``method`` is ``"separable"`` (co-phased layers only), ``"mc2d"`` (any
    layer phases) or ``"auto"``. Deterministic for a given seed.
    """
    if samples < MIN_SAMPLES:
        raise ValueError(f"samples must be >= {MIN_SAMPLES}")
    if not noise_var > 0:
        raise ValueError("noise_var must be > 0")
    positions = c.layer_bit_positions(layer_rank)
    if method == "auto":
        method = "separable" if c.is_cophased else "mc2d"
    if method == "separable":
        if not c.is_cophased:
            raise ValueError("separable estimate needs co-phased layers")
        amps = [math.sqrt(e / 2) for e in c.layer_energies]
        z, tb = _common_draws(seed, samples)
        return 2.0 * _pam_bit_mi(amps, layer_rank - 1, math.sqrt(noise_var / 2), z, tb)
    if method == "mc2d":
        return _mc2d_layer_mi(c, positions, noise_var, np.random.default_rng(seed), samples)
    raise ValueError(f"unknown method {method!r}")


def modulation_capacity(c: Constellation, noise_var: float, samples: int = SEARCH_SAMPLES,
                        seed: int = 0) -> float:
    """Symbol-level mutual information I(X; Y) of a uniform input (reference curves)."""
    rng = np.random.default_rng(seed)
    M = c.points.size
    idx = rng.integers(M, size=samples)
    s = math.sqrt(noise_var / 2)
    y = c.points[idx] + s * rng.standard_normal(samples) + 1j * s * rng.standard_normal(samples)
    d = -np.abs(y[:, None] - c.points[None, :]) ** 2 / noise_var
    own = d[np.arange(samples), idx]
    return float(math.log2(M) - np.mean(_lse_rows(d) - own) / LN2)


# ---------------------------------------------------------------------------
# Achievable rate


def _layer_terms(rhos: Sequence[float]) -> list[tuple[tuple[float, ...], int]]:
    """(layer fractions, zero-based target) for C^1_chi and each C^{i+1}_{chi minus i}."""
    terms = [(tuple(rhos), 0)]
    for i in range(1, len(rhos)):
        # drop layer i (1-based); layer i+1 then sits at zero-based index i-1
        rest = tuple(r for j, r in enumerate(rhos, start=1) if j != i)
        terms.append((rest, i - 1))
    return terms


def achievable_rate(alloc: PowerAllocation, snr_ctx: ChannelParams, p: SchemeParams,
                    samples: int = REPORT_SAMPLES, seed: int = 0,
                    phase_averaging: int = 0) -> RatePoint:
    """Achievable rate per user for one allocation.

    Layer 1 is decoded from the full superposition; on each later slot the
    receiver has removed the layer it sent itself and decodes the next
    sender layer. ``phase_averaging > 0`` averages each term over that many
    uniform random relative layer phases (2-D estimator).
    """
    if len(alloc) != p.bursts_per_codeword:
        raise ValueError("allocation length must equal bursts_per_codeword")
    base = snr_ctx.es * snr_ctx.amplitude**2
    nv = snr_ctx.noise_var
    if nv <= 0:
        raise ValueError("capacity needs a noisy channel")
    chi = from_fractions(alloc.rhos, base)
    caps = [layer_capacity(chi, 1, nv, samples, seed)] if not phase_averaging else []
    if phase_averaging:
        caps.append(_phase_avg(alloc.rhos, 0, base, nv, samples, seed, phase_averaging))
    for i in range(1, p.bursts_per_codeword):
        if phase_averaging:
            rest = [r for j, r in enumerate(alloc.rhos, start=1) if j != i]
            caps.append(_phase_avg(rest, i - 1, base, nv, samples, seed, phase_averaging))
            continue
        chi_i = remove_layer(chi, i)
        caps.append(layer_capacity(chi_i, i, nv, samples, seed))
    snr = base / nv
    return RatePoint(snr, alloc, sum(caps) / p.num_users, tuple(caps), p.num_users)


def _phase_avg(rhos, target, base, nv, samples, seed, draws) -> float:
    rng = np.random.default_rng(seed)
    per = max(MIN_SAMPLES, samples // draws)
    acc = 0.0
    for _ in range(draws):
        ph = [0.0] + list(rng.uniform(0, 2 * np.pi, len(rhos) - 1))
        c = from_fractions(rhos, base, ph)
        acc += layer_capacity(c, target + 1, nv, per, int(rng.integers(2**32)), method="mc2d")
    return acc / draws


def channel_for_snr(snr: float) -> ChannelParams:
    """Unit-gain channel whose full-power layer SNR is ``snr`` (linear)."""
    if not snr > 0:
        raise ValueError("snr must be > 0")
    return ChannelParams(es=1.0, n0_u=1.0 / snr)


def recommended_code_rate(rp: RatePoint, p: SchemeParams) -> float:
    """Rate of one long code spanning all N_b bursts: sum of layer capacities / (2 N_b)."""
    return sum(rp.layer_capacities) / (2 * p.bursts_per_codeword)


# ---------------------------------------------------------------------------
# Allocation search


@dataclass
class SearchResult:
    best: PowerAllocation
    best_rate: float
    evaluated: dict[tuple[float, ...], float] = field(repr=False)
    report: RatePoint | None = None


class _RateEvaluator:
    """Achievable-rate estimates on shared noise draws, with per-term caching."""

    def __init__(self, snr: float, p: SchemeParams, samples: int, seed: int):
        self.p = p
        self.sigma = math.sqrt(0.5 / snr)  # per-rail noise std, unit E_s
        self.z, self.tb = _common_draws(seed, samples)
        self.cache: dict[tuple[tuple[float, ...], int], float] = {}

    def term(self, rhos: tuple[float, ...], target: int) -> float:
        key = (rhos, target)
        v = self.cache.get(key)
        if v is None:
            amps = [math.sqrt(r / 2) for r in rhos]
            v = 2.0 * _pam_bit_mi(amps, target, self.sigma, self.z, self.tb)
            self.cache[key] = v
        return v

    def sum_rate(self, rhos: tuple[float, ...]) -> float:
        return sum(self.term(r, t) for r, t in _layer_terms(rhos))


def _grid(step: float) -> np.ndarray:
    n = int(round(1.0 / step))
    g = np.round(np.arange(n + 1) * step, 12)
    if g[-1] < 1.0:
        g = np.append(g, 1.0)
    return np.minimum(g, 1.0)


def _descending(values_per_dim: Sequence[Sequence[float]]):
    for t in itertools.product(*values_per_dim):
        if all(a >= b for a, b in zip(t, t[1:])):
            yield tuple(float(x) for x in t)


def search_allocation(snr: float, p: SchemeParams, grid_step: float = 0.05,
                      samples: int = SEARCH_SAMPLES, seed: int = 0,
                      refine: bool = True) -> SearchResult:
    """Exhaustive descending grid search plus one local pass at ``grid_step/10``.

    Ties go to the lexicographically largest allocation.
    """
    if not 0 < grid_step <= 0.25:
        raise ValueError("grid_step must lie in (0, 0.25]")
    nb = p.bursts_per_codeword
    ev = _RateEvaluator(snr, p, samples, seed)
    evaluated: dict[tuple[float, ...], float] = {}

    def visit(cands):
        for rhos in cands:
            if rhos not in evaluated:
                evaluated[rhos] = ev.sum_rate(rhos)

    g = _grid(grid_step)
    visit(_descending([g[::-1]] * nb))
    best = max(evaluated, key=lambda r: (evaluated[r], r))
    if refine:
        fine = grid_step / 10
        offs = np.arange(-10, 11) * fine
        local = [np.unique(np.clip(np.round(b + offs, 12), 0.0, 1.0)) for b in best]
        visit(_descending(local))
        best = max(evaluated, key=lambda r: (evaluated[r], r))
    return SearchResult(PowerAllocation(best), evaluated[best] / p.num_users,
                        {k: v / p.num_users for k, v in evaluated.items()})


def optimize_allocation(snr: float, p: SchemeParams, grid_step: float = 0.05,
                        samples: int = SEARCH_SAMPLES, report_samples: int = REPORT_SAMPLES,
                        seed: int = 0) -> RatePoint:
    """Rate-maximising allocation at linear SNR ``snr``, re-evaluated with ``report_samples``."""
    res = search_allocation(snr, p, grid_step, samples, seed)
    res.report = achievable_rate(res.best, channel_for_snr(snr), p, report_samples, seed + 1)
    return res.report


def snr_seed(snr_db: float, nb: int, base: int = 0) -> int:
    """Deterministic seed for one sweep point."""
    return (base * 1_000_003 + int(round(snr_db * 1000)) * 31 + nb) % 2**63
