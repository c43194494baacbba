"""Heat-bath (Glauber) single-spin-flip sampling for volumes beyond enumeration.

Every chain keeps the local fields ``f_i = sum_j K_ij s_j + h_i`` and updates
them in ``O(n)`` per accepted flip (``O(cutoff)`` with a distance cutoff).
Randomness comes from a Philox counter-based stream keyed by the seed, so a
trajectory is a pure function of the parameters and the seed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .model import (
    BoundaryCondition,
    CouplingFamily,
    InteractionMask,
    LocalFunction,
    boundary_field,
    coupling_kernel,
    coupling_tail,
    total_oscillation,
    volume_sites,
)

MAX_SITES = 100_000
_UNIFORM_BLOCK = 1 << 22
_FIELD_BLOCK = 1024


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def _structure(sites: np.ndarray, mask: InteractionMask, J: CouplingFamily, cutoff: int):
    """Side labels and explicit extra pairs describing ``mask`` for the sweep kernel."""
    n = sites.size
    side = np.zeros(n, dtype=np.int64)
    split = 0
    extras: list[tuple[int, int, float]] = []
    if mask.mode == "half-line-right":
        split, side = 1, np.where(sites >= 0, 0, -1).astype(np.int64)
    elif mask.mode == "half-line-left":
        split, side = 1, np.where(sites < 0, 0, -1).astype(np.int64)
    elif mask.mode == "intermediate":
        split, side = 1, (sites >= 0).astype(np.int64)
        left = np.flatnonzero(sites < 0)
        right = np.flatnonzero(sites >= 0)
        if left.size and right.size:
            act = mask.active_matrix(sites[left], sites[right])
            for a, b in zip(*np.nonzero(act)):
                u, v = left[a], right[b]
                if v - u <= cutoff:
                    extras.append((u, v, J(int(v - u))))
    elif mask.mode == "explicit":
        split, side = 1, np.arange(n, dtype=np.int64)
        lookup = {int(s): t for t, s in enumerate(sites)}
        for u, v in mask.pairs:
            if u in lookup and v in lookup and abs(u - v) <= cutoff:
                extras.append((lookup[u], lookup[v], J(abs(u - v))))
    # CSR lists, each pair stored in both directions
    rows = [[] for _ in range(n)]
    for u, v, w in extras:
        rows[u].append((v, w))
        rows[v].append((u, w))
    ptr = np.zeros(n + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(r) for r in rows])
    idx = np.array([v for r in rows for v, _ in r], dtype=np.int64)
    wts = np.array([w for r in rows for _, w in r], dtype=np.float64)
    return side, split, ptr, idx, wts


@dataclass(eq=False)
class ChainState:
    volume: tuple[int, int]
    beta: float
    mask: InteractionMask
    bc: BoundaryCondition
    J: CouplingFamily = field(repr=False)
    seed: int
    cutoff: int
    spins: np.ndarray = field(repr=False)
    fields: np.ndarray = field(repr=False)
    external: np.ndarray = field(repr=False)
    rng: np.random.Generator = field(repr=False)
    steps: int = 0
    flips: int = 0
    _Jd: np.ndarray = field(default=None, repr=False)
    _side: np.ndarray = field(default=None, repr=False)
    _split: int = 0
    _ex: tuple = field(default=(), repr=False)

    @property
    def n(self) -> int:
        return self.spins.size

    @property
    def sites(self) -> np.ndarray:
        return volume_sites(self.volume)

    @property
    def sweeps(self) -> int:
        return self.steps // self.n

    def cutoff_remainder(self) -> float:
        """``sum_{k > cutoff} J(k)``: coupling weight dropped by the cutoff."""
        if self.cutoff >= self.n - 1:
            return 0.0
        return coupling_tail(self.J, self.cutoff + 1).hi

    def recompute_fields(self) -> np.ndarray:
        """Direct ``O(n^2)`` evaluation of the local fields (in row blocks)."""
        sites = self.sites
        s = self.spins.astype(np.float64)
        out = np.empty(self.n)
        cut = None if self.cutoff >= self.n - 1 else self.cutoff
        for start in range(0, self.n, _FIELD_BLOCK):
            rows = sites[start:start + _FIELD_BLOCK]
            out[start:start + rows.size] = coupling_kernel(rows, sites, self.mask, self.J, cut) @ s
        return out + self.external

    def field_drift(self) -> float:
        return float(np.max(np.abs(self.fields - self.recompute_fields())))

    def resync(self) -> float:
        """Replace the cached fields by recomputed ones; returns the drift removed."""
        fresh = self.recompute_fields()
        drift = float(np.max(np.abs(self.fields - fresh)))
        self.fields = fresh
        return drift

    def magnetization(self) -> float:
        return float(self.spins.mean())

    def energy(self) -> float:
        """``H = -beta (1/2 sum_i s_i (f_i - h_i) + sum_i h_i s_i)``."""
        s = self.spins.astype(np.float64)
        inner = self.fields - self.external
        return float(-self.beta * (0.5 * s @ inner + self.external @ s))


def new_chain(volume: tuple[int, int], beta: float, J: CouplingFamily,
              mask: InteractionMask | None = None, bc: BoundaryCondition | None = None,
              seed: int = 0, init: str = "plus", cutoff: int | None = None) -> ChainState:
    if beta < 0:
        raise ValueError("beta must be nonnegative (ferromagnetic model)")
    mask = InteractionMask.full() if mask is None else mask
    bc = BoundaryCondition.free() if bc is None else bc
    sites = volume_sites(volume)
    n = sites.size
    if n > MAX_SITES:
        raise ValueError(f"volume of {n} sites exceeds {MAX_SITES}")
    Jd = J.by_distance(max(n - 1, 1))
    if np.any(Jd < 0):
        raise ValueError("negative couplings are not supported")
    cut = n - 1 if cutoff is None else int(cutoff)
    if cut < 1:
        raise ValueError("cutoff must be at least 1")
    rng = _rng(seed)
    if init == "plus":
        spins = np.ones(n, dtype=np.int8)
    elif init == "minus":
        spins = -np.ones(n, dtype=np.int8)
    elif init == "random":
        spins = np.where(rng.random(n) < 0.5, 1, -1).astype(np.int8)
    else:
        raise ValueError(f"unknown initialisation {init!r}")
    external = boundary_field(volume, bc, mask, J, None if cutoff is None else cut)
    side, split, ptr, idx, wts = _structure(sites, mask, J, cut)
    chain = ChainState(tuple(volume), float(beta), mask, bc, J, int(seed), cut, spins,
                       np.zeros(n), external, rng, _Jd=Jd, _side=side, _split=split,
                       _ex=(ptr, idx, wts))
    chain.fields = chain.recompute_fields()
    return chain


def sweep(chain: ChainState, count: int = 1, record: bool = False) -> np.ndarray | None:
    """Run ``count`` sequential sweeps; with ``record`` return the (count, n) configurations."""
    n = chain.n
    out = np.empty((count, n), dtype=np.int8) if record else None
    per_call = max(1, _UNIFORM_BLOCK // n)
    done = 0
    ptr, idx, wts = chain._ex
    empty = np.empty((0, n), dtype=np.int8)
    while done < count:
        c = min(per_call, count - done)
        u = chain.rng.random(c * n)
        rec = out[done:done + c] if record else empty
        chain.flips += int(kernels.heat_bath_sweeps(
            chain.spins, chain.fields, chain._Jd, chain._side, chain._split,
            ptr, idx, wts, chain.beta, chain.cutoff, u, c, rec))
        done += c
        chain.steps += c * n
    return out


def flip_probability(field_value: float, beta: float) -> float:
    """Heat-bath probability of setting the spin to ``+1``."""
    return 1.0 / (1.0 + math.exp(-2.0 * beta * field_value))


# ---------------------------------------------------------------------------
# error bars

@dataclass(frozen=True)
class EstimateWithError:
    mean: float
    stderr: float
    batches: int
    tau: float
    batch_size: int = 1
    resolved: bool = True
    warning: str = ""

    def within(self, value: float, k: float = 3.0) -> bool:
        return abs(self.mean - value) <= k * self.stderr

    def as_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "batches": self.batches,
                "tau": self.tau, "batch_size": self.batch_size,
                "resolved": self.resolved, "warning": self.warning}


def _lag1(x: np.ndarray) -> float:
    d = x - x.mean()
    den = float(d @ d)
    return 0.0 if den == 0 else float(d[:-1] @ d[1:]) / den


def batch_means(x, min_batches: int = 20, max_lag1: float = 0.05) -> EstimateWithError:
    """Batch-means error with the batch size doubled until batch means decorrelate."""
    x = np.asarray(x, dtype=np.float64)
    if x.size < min_batches:
        raise ValueError(f"need at least {min_batches} samples")
    if np.ptp(x) == 0:
        return EstimateWithError(float(x[0]), 0.0, x.size, 0.5)
    var_x = float(x.var())
    b = 1
    while True:
        nb = x.size // b
        means = x[: nb * b].reshape(nb, b).mean(axis=1)
        r = _lag1(means)
        if r < max_lag1:
            resolved = True
            break
        if (x.size // (2 * b)) < min_batches:
            resolved = False
            break
        b *= 2
    var_m = float(means.var(ddof=1))
    tau = 0.5 if var_x == 0 else 0.5 * b * var_m / var_x
    warn = "" if resolved else f"batch means still correlated (lag-1 {r:.3f}) at {nb} batches"
    return EstimateWithError(float(x.mean()), math.sqrt(var_m / nb), nb, tau, b, resolved, warn)


def estimate(chain: ChainState, observable, burnin: int, sweeps: int,
             min_batches: int = 20) -> EstimateWithError:
    """Batch-means estimate of ``observable(configs) -> per-row values``."""
    if burnin:
        sweep(chain, burnin)
    configs = sweep(chain, sweeps, record=True)
    est = batch_means(observable(configs.astype(np.float64)), min_batches)
    if est.resolved and burnin < 10 * est.tau:
        est = EstimateWithError(est.mean, est.stderr, est.batches, est.tau, est.batch_size,
                                False, f"burn-in {burnin} is below 10 tau = {10 * est.tau:.1f}")
    return est


def susceptibility_mc(chain: ChainState, burnin: int, sweeps: int,
                      site: int | None = None) -> EstimateWithError:
    """Estimate of ``sum_i <s_mid s_i>`` with ``mid`` the central site by default."""
    t = chain.n // 2 if site is None else site - chain.volume[0]
    return estimate(chain, lambda s: s[:, t] * s.sum(axis=1), burnin, sweeps)


def pair_correlation_mc(chain: ChainState, i: int, j: int, burnin: int, sweeps: int) -> EstimateWithError:
    a = chain.volume[0]
    return estimate(chain, lambda s: s[:, i - a] * s[:, j - a], burnin, sweeps)


def _local_values(F: LocalFunction, configs: np.ndarray, start: int) -> np.ndarray:
    idx = np.zeros(configs.shape[0], dtype=np.int64)
    for t, s in enumerate(F.domain):
        idx |= (configs[:, s - start] > 0).astype(np.int64) << t
    return F.table[idx]


@dataclass(frozen=True)
class TailRow:
    t: float
    probability: float
    stderr: float
    bound: float
    chernoff_bound: float


def empirical_tail(chain: ChainState, F: LocalFunction, t_grid, samples: int, burnin: int,
                   D: float) -> list[TailRow]:
    """``P(F - E F >= t)`` on the grid next to ``exp(-2 t^2 / (D ||dF||^2))``.

    ``chernoff_bound`` is ``exp(-t^2 / (4 D ||dF||^2))``, the tail implied by
    the sub-Gaussian form with the same ``D``.
    """
    a, b = chain.volume
    if any(not a <= s <= b for s in F.domain):
        raise ValueError("function domain is not inside the volume")
    if burnin:
        sweep(chain, burnin)
    values = _local_values(F, sweep(chain, samples, record=True), a)
    centred = values - values.mean()
    osc = total_oscillation(F)
    rows = []
    for t in t_grid:
        est = batch_means((centred >= t).astype(np.float64))
        if osc > 0 and D > 0:
            bound = math.exp(-2.0 * t * t / (D * osc))
            chern = math.exp(-t * t / (4.0 * D * osc))
        else:
            bound = chern = 1.0 if t <= 0 else 0.0
        rows.append(TailRow(float(t), est.mean, est.stderr, bound, chern))
    return rows


def write_stream(path, chain: ChainState, sweeps: int, observables: dict | None = None,
                 every: int = 1):
    """Run the chain and write ``step, magnetization, energy, <observables>`` rows to CSV."""
    observables = observables or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "magnetization", "energy", *observables])
        for _ in range(0, sweeps, every):
            sweep(chain, every)
            s = chain.spins.astype(np.float64)
            w.writerow([chain.steps, chain.magnetization(), repr(chain.energy()),
                        *(repr(float(fn(s))) for fn in observables.values())])
