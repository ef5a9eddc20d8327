"""Preferential-attachment urn process and the special functions behind it.

Urns receive balls with probability proportional to their occupancy plus a
constant offset; in the long-time limit occupancy follows a Yule-Simon
distribution with a hyperbolic tail.  A hard per-urn capacity reproduces the
high-rank collapse that motivates the doubly decreasing rank-size form.

The random stream is numpy's PCG64 (default_rng); replicate substreams are
spawned from SeedSequence(seed) so runs reproduce across platforms.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import SimulationError
from .fit import ModelKind, RankSizeModel, model_eval
from .rank import RankedSeries, TieBreak, rank_desc

# Lanczos approximation, g = 607/128, truncated at 15 coefficients
# (Boost/Godfrey coefficient set); relative error below 1e-13 for x > 0.
_LANCZOS_G = 607.0 / 128.0
_LANCZOS_COEF = (
    0.99999999999999709182,
    57.156235665862923517, -59.597960355475491248, 14.136097974741747174,
    -0.49191381609762019978, 0.33994649984811888699e-4,
    0.46523628927048575665e-4, -0.98374475304879564677e-4,
    0.15808870322491248884e-3, -0.21026444172410488319e-3,
    0.21743961811521264320e-3, -0.16431810653676389022e-3,
    0.84418223983852743293e-4, -0.26190838401581408670e-4,
    0.36899182659531622704e-5,
)


def log_gamma(x: float) -> float:
    """Natural log of the Gamma function for x > 0."""
    if x <= 0:
        raise SimulationError(f"log_gamma needs x > 0; got {x}")
    if x < 0.5:
        # reflection keeps the series argument away from 0
        return math.log(math.pi / math.sin(math.pi * x)) - log_gamma(1.0 - x)
    xx = x - 1.0
    series = _LANCZOS_COEF[0]
    for i, c in enumerate(_LANCZOS_COEF[1:], start=1):
        series += c / (xx + i)
    t = xx + _LANCZOS_G + 0.5
    return 0.5 * math.log(2.0 * math.pi) + (xx + 0.5) * math.log(t) - t + math.log(series)


def beta_fn(x: float, y: float) -> float:
    """Euler Beta function Gamma(x)Gamma(y)/Gamma(x+y), computed in log space."""
    if x <= 0 or y <= 0:
        raise SimulationError("beta_fn needs positive arguments")
    return math.exp(log_gamma(x) + log_gamma(y) - log_gamma(x + y))


def _adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    if depth <= 0 or abs(left + right - whole) <= 15.0 * tol:
        return left + right + (left + right - whole) / 15.0
    return (_adaptive_simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + _adaptive_simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1))


def incomplete_beta(a: float, b: float, eps: float, tol: float = 1e-10) -> float:
    """Lower incomplete integral of x^a (1-x)^b over [0, eps].

    Note the exponents are (a, b) directly, not the conventional shifted
    (a-1, b-1); at eps = 1 this equals beta_fn(a + 1, b + 1).
    """
    if a < 0 or b < 0:
        raise SimulationError("incomplete_beta needs a, b >= 0")
    if not 0.0 <= eps <= 1.0:
        raise SimulationError(f"eps must be in [0, 1]; got {eps}")
    if eps == 0.0:
        return 0.0

    def f(x):
        return x ** a * (1.0 - x) ** b

    lo, hi = 0.0, eps
    fa, fb = f(lo), f(hi)
    m = 0.5 * (lo + hi)
    fm = f(m)
    whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb)
    return _adaptive_simpson(f, lo, hi, fa, fm, fb, whole, tol, depth=60)


def yule_simon_pmf(k: int, a: float, b: float, k0: int = 1) -> float:
    """Occupancy pmf P(k) = B(k + a, b) / B(k0 + a, b - 1) on support k >= k0.

    Normalizes exactly over k = k0, k0+1, ... (telescoping Beta identity);
    the tail decays hyperbolically as k^-b.  Needs b > 1 and k0 + a > 0.
    """
    if b <= 1:
        raise SimulationError("yule_simon_pmf needs b > 1 for normalizability")
    if k0 + a <= 0:
        raise SimulationError("yule_simon_pmf needs k0 + a > 0")
    if k < k0:
        return 0.0
    return beta_fn(k + a, b) / beta_fn(k0 + a, b - 1.0)


def yule_simon_tail(k_max: int, a: float, b: float, k0: int = 1) -> float:
    """Exact remaining mass above k_max: sum_{k > k_max} P(k)."""
    if k_max < k0:
        return 1.0
    return beta_fn(k_max + 1 + a, b - 1.0) / beta_fn(k0 + a, b - 1.0)


@dataclass(frozen=True)
class UrnConfig:
    n_urns: int
    total_balls: int
    a: float = 1.0             # attachment offset, weight is k + a
    k0: int = 1                # initial balls per urn
    capacity: int | None = None
    seed: int = 0
    trace: bool = False

    def __post_init__(self):
        if self.n_urns < 1 or self.total_balls < 0:
            raise SimulationError("n_urns >= 1 and total_balls >= 0 required")
        if self.k0 < 0:
            raise SimulationError("k0 must be >= 0")
        if self.k0 + self.a <= 0:
            raise SimulationError("initial attachment weight k0 + a must be positive")
        if self.capacity is not None and self.capacity < self.k0:
            raise SimulationError("capacity must be >= k0")


@dataclass(frozen=True)
class UrnOutcome:
    occupancy: tuple[int, ...]
    choices: tuple[int, ...] | None = None

    @property
    def total(self) -> int:
        return sum(self.occupancy)


class _Fenwick:
    """Partial-sum tree over per-urn attachment weights (O(log n) per ball)."""

    def __init__(self, weights):
        self.n = len(weights)
        self.tree = [0.0] * (self.n + 1)
        for i, w in enumerate(weights):
            self.add(i, w)

    def add(self, i, delta):
        i += 1
        while i <= self.n:
            self.tree[i] += delta
            i += i & (-i)

    def total(self):
        return self.prefix(self.n)

    def prefix(self, i):
        s = 0.0
        while i > 0:
            s += self.tree[i]
            i -= i & (-i)
        return s

    def find(self, target):
        """Smallest index i with prefix(i+1) > target."""
        idx = 0
        bit = 1 << (self.n.bit_length())
        while bit:
            nxt = idx + bit
            if nxt <= self.n and self.tree[nxt] <= target:
                target -= self.tree[nxt]
                idx = nxt
            bit >>= 1
        return idx


def simulate_urns(config: UrnConfig,
                  rng: np.random.Generator | None = None) -> UrnOutcome:
    """Run one preferential-attachment filling sequence.

    Each ball lands in urn i with probability (k_i + a) / sum_j (k_j + a);
    urns at capacity leave the choice set.  Deterministic for a fixed seed.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    k = [config.k0] * config.n_urns
    cap = config.capacity
    weights = [0.0 if cap is not None and config.k0 >= cap else config.k0 + config.a
               for _ in range(config.n_urns)]
    tree = _Fenwick(weights)
    choices: list[int] = [] if config.trace else None
    for placed in range(config.total_balls):
        total = tree.total()
        if total <= 0:
            raise SimulationError(
                f"all urns at capacity after {placed} of {config.total_balls} balls"
            )
        urn = tree.find(rng.random() * total)
        k[urn] += 1
        if cap is not None and k[urn] >= cap:
            tree.add(urn, -(k[urn] - 1 + config.a))  # retire the urn
        else:
            tree.add(urn, 1.0)
        if choices is not None:
            choices.append(urn)
    return UrnOutcome(tuple(k), tuple(choices) if choices is not None else None)


def replicate_occupancies(config: UrnConfig, replicates: int) -> np.ndarray:
    """Sorted-descending occupancy per replicate, one row each.

    Replicate r uses the r-th child stream of SeedSequence(config.seed).
    """
    streams = np.random.SeedSequence(config.seed).spawn(replicates)
    rows = np.empty((replicates, config.n_urns), dtype=np.int64)
    for i, ss in enumerate(streams):
        outcome = simulate_urns(config, rng=np.random.default_rng(ss))
        rows[i] = np.sort(outcome.occupancy)[::-1]
    return rows


def generate_ranksize(model: RankSizeModel, noise_sigma: float = 0.0,
                      seed: int = 0) -> RankedSeries:
    """Synthetic ranked series from a rank-size model.

    Evaluates the model at every rank, applies multiplicative lognormal noise
    of the given sigma, then re-sorts descending and re-ranks.
    """
    r = np.arange(1, model.N + 1, dtype=float)
    y = model_eval(model, r)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        y = y * np.exp(rng.normal(0.0, noise_sigma, size=model.N))
    values = {f"r{int(ri):06d}": float(v) for ri, v in zip(r, y)}
    return rank_desc(values, rule=TieBreak.ENTITY_ID,
                     criterion=f"synthetic_{model.kind.value}")


def export_outcome(outcome: UrnOutcome) -> str:
    """Delimited text `urn_id,occupancy`."""
    out = io.StringIO()
    out.write("urn_id,occupancy\n")
    for i, k in enumerate(outcome.occupancy):
        out.write(f"{i},{k}\n")
    return out.getvalue()


def export_replicate_summary(rows: np.ndarray) -> str:
    """Mean and std occupancy per sorted position across replicates."""
    mean = rows.mean(axis=0)
    std = rows.std(axis=0, ddof=1) if rows.shape[0] > 1 else np.zeros(rows.shape[1])
    out = io.StringIO()
    out.write("position,mean_occupancy,std_occupancy\n")
    for i, (m, s) in enumerate(zip(mean, std), start=1):
        out.write(f"{i},{format(m, '.12g')},{format(s, '.12g')}\n")
    return out.getvalue()
