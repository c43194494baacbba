"""Finite-volume Gibbs measures by full enumeration.

A measure over ``n`` sites is a table of ``2**n`` probabilities indexed as in
:mod:`dysonlab.model`.  Everything is computed in the log domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp
from scipy.linalg import eigh

from . import kernels
from .model import (
    ENUMERATION_LIMIT,
    BoundaryCondition,
    CouplingFamily,
    InteractionMask,
    LocalFunction,
    all_spins,
    boundary_field,
    coupling_kernel,
    cross_pair,
    k_of,
    volume_sites,
)

_CHUNK = 1 << 16
_RESOLUTION = 1e-10


@dataclass(frozen=True, eq=False)
class ExactMeasure:
    volume: tuple[int, int]
    beta: float
    mask: InteractionMask | None
    bc: BoundaryCondition
    probabilities: np.ndarray
    log_partition: float
    energies: np.ndarray
    couplings: np.ndarray = field(repr=False)
    field: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.volume[1] - self.volume[0] + 1

    @property
    def sites(self) -> np.ndarray:
        return volume_sites(self.volume)

    def index_of(self, site: int) -> int:
        a, b = self.volume
        if not a <= site <= b:
            raise ValueError(f"site {site} is outside the volume {self.volume}")
        return site - a

    @cached_property
    def spins(self) -> np.ndarray:
        return all_spins(self.n)

    @property
    def log_probabilities(self) -> np.ndarray:
        return -self.energies - self.log_partition

    @property
    def mask_id(self) -> int:
        return -5 if self.mask is None else self.mask.mask_id


def _enumeration_guard(n: int, limit: int):
    if n > limit:
        raise ValueError(
            f"volume of {n} sites exceeds the enumeration limit {limit}; "
            "use dysonlab.sampler for larger volumes"
        )


def _measure_from_sums(volume, beta, mask, bc, K, h, symmetric):
    n = K.shape[0]
    sums = np.empty(1 << n, dtype=np.float64)
    kernels.interaction_sums(np.ascontiguousarray(K, dtype=np.float64),
                             np.ascontiguousarray(h, dtype=np.float64), sums)
    if symmetric:
        # index of -omega is the bitwise complement, i.e. the reversed array
        sums = 0.5 * (sums + sums[::-1])
    energies = -beta * sums
    logz = float(logsumexp(-energies))
    p = np.exp(-energies - logz)
    return ExactMeasure(tuple(volume), float(beta), mask, bc, p, logz, energies, K, h)


def boltzmann(volume: tuple[int, int], beta: float, mask: InteractionMask | None = None,
              bc: BoundaryCondition | None = None, J: CouplingFamily | None = None,
              cutoff: int | None = None, limit: int = ENUMERATION_LIMIT) -> ExactMeasure:
    """Boltzmann–Gibbs probabilities ``exp(-H) / Z`` on every configuration of ``volume``."""
    if J is None:
        raise ValueError("a coupling family is required")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    mask = InteractionMask.full() if mask is None else mask
    bc = BoundaryCondition.free() if bc is None else bc
    sites = volume_sites(volume)
    _enumeration_guard(sites.size, limit)
    K = coupling_kernel(sites, sites, mask, J, cutoff)
    h = boundary_field(volume, bc, mask, J, cutoff)
    return _measure_from_sums(volume, beta, mask, bc, K, h, symmetric=not bc.sites)


def matrix_boltzmann(A: np.ndarray, beta: float, volume: tuple[int, int] | None = None,
                     limit: int = ENUMERATION_LIMIT) -> ExactMeasure:
    """Measure proportional to ``exp(-(beta/2) (omega, A omega))``."""
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    _enumeration_guard(n, limit)
    volume = (0, n - 1) if volume is None else volume
    # (omega, A omega) = tr A + 2 sum_{i<j} A_ij s_i s_j; the trace cancels
    K = -(A + A.T) / 2.0
    np.fill_diagonal(K, 0.0)
    return _measure_from_sums(volume, beta, None, BoundaryCondition.free(), K,
                              np.zeros(n), symmetric=True)


# ---------------------------------------------------------------------------
# expectations and correlations

def _values(m: ExactMeasure, F) -> np.ndarray:
    if isinstance(F, LocalFunction):
        return F.values_on(m.volume)
    F = np.asarray(F, dtype=np.float64)
    if F.shape[-1] != m.probabilities.size:
        raise ValueError("function table does not match the measure")
    return F


def expectation(m: ExactMeasure, F) -> float:
    return float(m.probabilities @ _values(m, F))


def correlation(m: ExactMeasure, sites) -> float:
    """``< prod_{i in A} sigma_i >``."""
    idx = [m.index_of(s) for s in sites]
    if len(set(idx)) != len(idx):
        raise ValueError("repeated site")
    if not idx:
        return 1.0
    return float(m.probabilities @ np.prod(m.spins[:, idx], axis=1, dtype=np.float64))


def all_correlations(m: ExactMeasure) -> np.ndarray:
    """``< sigma_A >`` for every subset ``A``, indexed by its bit mask.

    Walsh–Hadamard transform of the probability table; spin ``+1`` is bit 1,
    so each entry carries the sign ``(-1)^{|A|}``.
    """
    n = m.n
    a = m.probabilities.copy()
    for t in range(n):
        a = a.reshape(-1, 2, 1 << t)
        lo, hi = a[:, 0, :].copy(), a[:, 1, :]
        a[:, 0, :] = lo + hi
        a[:, 1, :] = lo - hi
        a = a.reshape(-1)
    sizes = np.array([bin(A).count("1") for A in range(1 << n)])
    return np.where(sizes % 2 == 0, a, -a)


def two_point_matrix(m: ExactMeasure) -> np.ndarray:
    n = m.n
    C = np.zeros((n, n))
    p = m.probabilities
    for start in range(0, p.size, _CHUNK):
        S = m.spins[start:start + _CHUNK].astype(np.float64)
        C += S.T @ (S * p[start:start + _CHUNK, None])
    return C


def susceptibility_fv(m: ExactMeasure) -> float:
    """``sup_j sum_i <sigma_i sigma_j>`` over the volume."""
    return float(two_point_matrix(m).sum(axis=0).max())


def correlation_sum(m: ExactMeasure, site: int) -> float:
    """``sum_i <sigma_site sigma_i>`` for one row."""
    return float(two_point_matrix(m)[m.index_of(site)].sum())


# ---------------------------------------------------------------------------
# densities

@dataclass(frozen=True, eq=False)
class DensityTable:
    """Values of a density against reference ``weights`` (a probability vector)."""

    values: np.ndarray
    weights: np.ndarray
    measure: ExactMeasure | None = None

    def integral(self) -> float:
        return float(self.weights @ self.values)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


def pushforward_flip_density(m: ExactMeasure, site: int) -> DensityTable:
    """``d mu^(i) / d mu (omega) = p(omega^(i)) / p(omega)``."""
    bit = 1 << m.index_of(site)
    idx = np.arange(m.probabilities.size)
    values = np.exp(m.log_probabilities[idx ^ bit] - m.log_probabilities)
    return DensityTable(values, m.probabilities, m)


def analytic_flip_density(m: ExactMeasure, site: int) -> np.ndarray:
    """``exp(H_{i}(omega) - H_{i}(omega^(i))) = exp(-2 beta sigma_i f_i)``."""
    t = m.index_of(site)
    s = m.spins[:, t].astype(np.float64)
    local = m.spins.astype(np.float64) @ m.couplings[t] + m.field[t]
    return np.exp(-2.0 * m.beta * s * local)


# ---------------------------------------------------------------------------
# entropy and Dirichlet form

def _flip_index(n: int) -> np.ndarray:
    idx = np.arange(1 << n)
    return np.stack([idx ^ (1 << t) for t in range(n)])


def _phi1(y: np.ndarray) -> np.ndarray:
    """``(1+y) log(1+y) - y`` for ``y >= -1``, accurate near ``y = 0``."""
    out = np.empty_like(y)
    small = np.abs(y) < 1e-3
    ys = y[small]
    # alternating series sum_{k>=2} (-1)^k y^k / (k (k-1))
    out[small] = ys * ys * (0.5 + ys * (-1 / 6 + ys * (1 / 12 + ys * (-1 / 20 + ys / 30))))
    yl = y[~small]
    with np.errstate(divide="ignore", invalid="ignore"):
        out[~small] = np.where(yl > -1.0, (1.0 + yl) * np.log1p(np.maximum(yl, -1.0 + 1e-300)) - yl, 1.0)
    return out


def entropy_batch(p: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``Ent_p(g)`` for nonnegative rows ``g`` with ``0 log 0 = 0``.

    Written as ``m * sum_w p (x log x - x + 1)`` with ``x = g / m``, a sum of
    nonnegative terms, so near-constant ``g`` keeps full relative accuracy.
    """
    g = np.atleast_2d(np.asarray(g, dtype=np.float64))
    mean = g @ p
    pos = mean > 0
    safe = np.where(pos, mean, 1.0)
    y = g / safe[:, None] - 1.0
    return np.where(pos, mean * (_phi1(y) @ p), 0.0)


def dirichlet_batch(p: np.ndarray, f: np.ndarray, n: int) -> np.ndarray:
    """``sum_omega p(omega) sum_i (f(omega) - f(omega^(i)))^2`` per row."""
    f = np.atleast_2d(f)
    out = np.zeros(f.shape[0])
    for flip in _flip_index(n):
        out += ((f - f[:, flip]) ** 2) @ p
    return out


def entropy_functional(m: ExactMeasure, f) -> float:
    """``Ent_m(f^2)``."""
    v = _values(m, f)
    return float(entropy_batch(m.probabilities, v * v)[0])


def dirichlet_form(m: ExactMeasure, f) -> float:
    return float(dirichlet_batch(m.probabilities, _values(m, f), m.n)[0])


def lsi_ratio(m: ExactMeasure, f) -> float:
    """``Ent(f^2) / (2 Dirichlet(f))``; undefined for constant ``f``."""
    v = _values(m, f)
    d = dirichlet_batch(m.probabilities, v, m.n)[0]
    if d <= 0:
        raise ValueError("Dirichlet form vanishes (constant function)")
    return float(entropy_batch(m.probabilities, v * v)[0] / (2.0 * d))


def poincare_witness(m: ExactMeasure) -> tuple[float, np.ndarray]:
    """Maximiser of ``Var(g) / Dirichlet(g)`` (the linearised LSI ratio)."""
    p = m.probabilities
    size = p.size
    L = np.zeros((size, size))
    diag = np.arange(size)
    for flip in _flip_index(m.n):
        # sum_omega p (g - g o flip)^2 = g^T L g
        L[diag, diag] += p + p[flip]
        L[diag, flip] -= p + p[flip]
    V = np.diag(p) - np.outer(p, p)
    ones = np.full(size, 1.0 / math.sqrt(size))
    vals, vecs = eigh(V, L + np.outer(ones, ones))
    g = vecs[:, -1]
    return float(vals[-1]), g / np.max(np.abs(g))


@dataclass(frozen=True, eq=False)
class LSISearchResult:
    lower_bound: float
    witness: np.ndarray
    ratios: list[float]
    poincare: float

    def witness_function(self, volume: tuple[int, int]) -> LocalFunction:
        a, b = volume
        return LocalFunction(tuple(range(a, b + 1)), self.witness)


def _coordinate_ascent(p: np.ndarray, n: int, f: np.ndarray, sweeps: int) -> tuple[float, np.ndarray]:
    f = f.copy()

    def ratio(x):
        # below this relative Dirichlet size the quotient is rounding noise
        d = dirichlet_batch(p, x, n)[0]
        if d <= _RESOLUTION * float(p @ (x * x)):
            return 0.0
        return float(entropy_batch(p, x * x)[0] / (2.0 * d))

    best = ratio(f)
    for _ in range(sweeps):
        improved = False
        for c in range(f.size):
            spread = max(float(np.std(f)), 1e-6)
            x0 = f[c]

            def neg(x, c=c):
                f[c] = x
                return -ratio(f)

            res = minimize_scalar(neg, bracket=(x0 - spread, x0), options={"maxiter": 60})
            if res.success and -res.fun > best:
                f[c] = res.x
                best = -res.fun
                improved = True
            else:
                f[c] = x0
        if not improved:
            break
    return best, f


def lsi_constant_search(m: ExactMeasure, trials: int = 8, seed: int = 0,
                        sweeps: int = 4, max_sites: int = 6) -> LSISearchResult:
    """Lower bound on the log-Sobolev constant of ``m``.

    The first start is the Poincaré maximiser in the near-constant regime
    ``1 + eps g``; the rest are random perturbations of constants.  Every
    start is improved by coordinate ascent on the full table.
    """
    if m.n > max_sites:
        raise ValueError(f"LSI search is limited to {max_sites} sites")
    if trials < 1:
        raise ValueError("at least one trial is needed")
    rng = np.random.default_rng(seed)
    p, n, size = m.probabilities, m.n, m.probabilities.size
    poincare, g = poincare_witness(m)
    starts = [1.0 + 1e-3 * g]
    for _ in range(trials - 1):
        scale = 10.0 ** rng.uniform(-3, 0.5)
        starts.append(rng.choice([0.0, 1.0]) + scale * rng.standard_normal(size))
    ratios, best, witness = [], -np.inf, None
    for f0 in starts:
        r, f = _coordinate_ascent(p, n, f0, sweeps)
        if dirichlet_batch(p, f, n)[0] <= 0:
            continue
        ratios.append(r)
        if r > best:
            best, witness = r, f
    if witness is None:
        raise ValueError("every trial function has a vanishing Dirichlet form")
    return LSISearchResult(float(best), witness, ratios, poincare)


# ---------------------------------------------------------------------------
# intermediate interactions

def cross_pair_energy(N: int, k: int, beta: float, J: CouplingFamily) -> np.ndarray:
    """``W_k = sum_{iota <= k} beta Phi_{Lambda_iota}`` on every configuration of ``[-N, N]``."""
    n = 2 * N + 1
    spins = all_spins(n).astype(np.float64)
    W = np.zeros(1 << n)
    for pos in range(1, k + 1):
        u, v = cross_pair(pos)
        W -= beta * J(v - u) * spins[:, u + N] * spins[:, v + N]
    return W


@dataclass(frozen=True, eq=False)
class IntermediateDensity:
    N: int
    k: int
    density: DensityTable
    entropy: float
    neg_mean_W: float
    neg_log_normalizer: float
    identity_residual: float
    factors: list[float]
    telescoping_residual: float
    measure_residual: float

    @property
    def identity_rhs(self) -> float:
        return self.neg_mean_W + self.neg_log_normalizer


def intermediate_density(N: int, k: int, beta: float, J: CouplingFamily,
                         limit: int = ENUMERATION_LIMIT) -> IntermediateDensity:
    """Density of ``nu^(k)`` against ``nu^(0)`` on ``[-N, N]`` and its bookkeeping.

    ``nu^(k)`` and the telescoping measures ``nu^(iota-1)`` are built
    independently by enumeration, so the identities are genuine checks.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if not 0 <= k <= k_of(N):
        raise ValueError(f"k={k} exceeds k_N={k_of(N)} for N={N}")
    volume = (-N, N)
    measures = [boltzmann(volume, beta, InteractionMask.intermediate(j), J=J, limit=limit)
                for j in range(k + 1)]
    nu0, nuk = measures[0], measures[-1]
    W = cross_pair_energy(N, k, beta, J)
    log_norm = float(logsumexp(-W, b=nu0.probabilities))
    log_f = -W - log_norm
    f = np.exp(log_f)
    entropy = float(nu0.probabilities @ (f * log_f))
    neg_mean_W = float(-(nuk.probabilities @ W))
    residual = abs(entropy - (neg_mean_W - log_norm))
    spins = nu0.spins.astype(np.float64)
    factors = []
    for pos in range(1, k + 1):
        u, v = cross_pair(pos)
        term = -beta * J(v - u) * spins[:, u + N] * spins[:, v + N]
        factors.append(float(measures[pos - 1].probabilities @ np.exp(-term)))
    log_prod = math.fsum(math.log(c) for c in factors)
    tele = abs(math.exp(log_prod) - math.exp(log_norm))
    meas_res = float(np.max(np.abs(f * nu0.probabilities - nuk.probabilities)))
    return IntermediateDensity(N, k, DensityTable(f, nu0.probabilities, nu0), entropy,
                               neg_mean_W, -log_norm, residual, factors, tele, meas_res)


# ---------------------------------------------------------------------------
# half-line densities

@dataclass(frozen=True, eq=False)
class HalfLineDensity:
    N: int
    depth: int
    left_window: int
    density: DensityTable
    log_numerator: np.ndarray
    mean_W: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return self.density.values


def left_measure(beta: float, J: CouplingFamily, left_window: int,
                 limit: int = ENUMERATION_LIMIT) -> ExactMeasure:
    """Free-boundary stand-in for the left half-line Gibbs measure on ``[-M, -1]``."""
    return boltzmann((-left_window, -1), beta, InteractionMask.full(), J=J, limit=limit)


def right_reference(beta: float, J: CouplingFamily, depth: int, pad: int = 4,
                    limit: int = ENUMERATION_LIMIT) -> np.ndarray:
    """Marginal on ``[0, depth-1]`` of the free measure on ``[0, depth-1+pad]``."""
    width = min(depth + pad, limit)
    m = boltzmann((0, width - 1), beta, InteractionMask.full(), J=J, limit=limit)
    cyl = np.arange(m.probabilities.size) & ((1 << depth) - 1)
    return np.bincount(cyl, weights=m.probabilities, minlength=1 << depth)


def half_line_density(N: int, depth: int, beta: float, J: CouplingFamily,
                      left_window: int, reference: np.ndarray | None = None,
                      limit: int = ENUMERATION_LIMIT) -> HalfLineDensity:
    """Cylinder values of ``f_+^[N]`` from exact enumeration over the left window.

    Cross couplings ``J(i + j)`` enter for ``1 <= i <= min(N, M)`` and
    ``0 <= j <= min(N, depth - 1)``.  ``reference`` weights the right
    cylinders in the normaliser (default: :func:`right_reference`).
    """
    if depth < 1 or depth > N:
        raise ValueError("need 1 <= depth <= N")
    if left_window < 1:
        raise ValueError("left window must have at least one site")
    if left_window > limit or depth > limit:
        raise ValueError("window exceeds the enumeration limit")
    nu_left = left_measure(beta, J, left_window, limit)
    M = left_window
    imax, jmax = min(N, M), min(N - 1, depth - 1) + 1
    # b[eta, i] = sum_j J(i + j) eta_j, i = 1..imax
    i = np.arange(1, imax + 1)
    j = np.arange(jmax)
    Jm = J(i[:, None] + j[None, :])
    eta = all_spins(depth)[:, :jmax].astype(np.float64)
    b = eta @ Jm.T
    # xi_{-i} sits at bit M - i of the left window
    xi = nu_left.spins[:, M - i].astype(np.float64)
    expo = beta * (xi @ b.T)  # -W(xi, eta)
    logp = nu_left.log_probabilities
    log_num = logsumexp(expo + logp[:, None], axis=0)
    mean_W = -(nu_left.probabilities @ expo)
    ref = right_reference(beta, J, depth, limit=limit) if reference is None else np.asarray(reference)
    if ref.size != 1 << depth:
        raise ValueError("reference weights do not match the depth")
    log_den = logsumexp(log_num, b=ref)
    values = np.exp(log_num - log_den)
    return HalfLineDensity(N, depth, left_window, DensityTable(values, ref), log_num, mean_W)


# ---------------------------------------------------------------------------
# Griffiths inequalities

@dataclass
class GriffithsReport:
    measures: int = 0
    comparisons: int = 0
    positivity: list = field(default_factory=list)
    beta_monotone: list = field(default_factory=list)
    mask_monotone: list = field(default_factory=list)
    worst: float = 0.0

    @property
    def violations(self) -> int:
        return len(self.positivity) + len(self.beta_monotone) + len(self.mask_monotone)

    def as_dict(self) -> dict:
        return {"measures": self.measures, "comparisons": self.comparisons,
                "violations": self.violations, "worst_excess": self.worst,
                "positivity": self.positivity[:20], "beta_monotone": self.beta_monotone[:20],
                "mask_monotone": self.mask_monotone[:20]}


def _centered_volume(n: int) -> tuple[int, int]:
    left = n // 2
    return (-left, n - left - 1)


def _mask_ladder(volume: tuple[int, int]) -> list[InteractionMask]:
    """``Psi^(k)`` masks that differ inside ``volume``, ending with the full mask."""
    a, b = volume
    masks = [InteractionMask.intermediate(0)]
    if a < 0 <= b:
        kmax = k_of(max(-a, b))
        for k in range(1, kmax + 1):
            i, j = cross_pair(k)
            if -i >= a and j <= b:
                masks.append(InteractionMask.intermediate(k))
    masks.append(InteractionMask.full())
    return masks


def griffiths_check(n: int, beta_grid, J: CouplingFamily, tol: float = 1e-12) -> GriffithsReport:
    """Positivity and monotonicity (in beta and along the mask ladder) of every ``<sigma_A>``.

    The volume is ``n`` consecutive sites around the origin; the masks run
    through ``Psi^(0) <= Psi^(1) <= ... <= Phi`` restricted to the volume.
    """
    volume = _centered_volume(n)
    rep = GriffithsReport()
    betas = sorted(float(b) for b in beta_grid)
    ladder = _mask_ladder(volume)
    prev_beta: dict[int, np.ndarray] = {}
    for b in betas:
        prev_mask = None
        for pos, mask in enumerate(ladder):
            corr = all_correlations(boltzmann(volume, b, mask, J=J))
            rep.measures += 1
            low = float(-corr.min())
            if low > tol:
                rep.positivity.append({"beta": b, "mask": mask.name, "excess": low})
            rep.worst = max(rep.worst, low)
            if pos in prev_beta:
                d = float((prev_beta[pos] - corr).max())
                rep.comparisons += 1
                rep.worst = max(rep.worst, d)
                if d > tol:
                    rep.beta_monotone.append({"beta": b, "mask": mask.name, "excess": d})
            if prev_mask is not None:
                d = float((prev_mask - corr).max())
                rep.comparisons += 1
                rep.worst = max(rep.worst, d)
                if d > tol:
                    rep.mask_monotone.append({"beta": b, "mask": mask.name, "excess": d})
            prev_beta[pos] = corr
            prev_mask = corr
    return rep
