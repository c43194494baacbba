"""Couplings, spin windows, interaction masks and coupling matrices.

Sites are integers; a volume is an inclusive interval ``(a, b)``.  Within a
window starting at ``a``, bit ``t`` of a configuration index carries the spin
at site ``a + t`` as ``(sigma + 1) / 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

ENUMERATION_LIMIT = 24
TAIL_WIDTH = 1e-10
DIVERGENCE_THRESHOLD = 1e3

_EPS = np.finfo(float).eps


class SummabilityError(ValueError):
    """A quantity requires a summability condition the couplings violate."""

    def __init__(self, condition: str, message: str):
        super().__init__(message)
        self.condition = condition


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def __contains__(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def __add__(self, other: "Interval | float") -> "Interval":
        if isinstance(other, Interval):
            return Interval(self.lo + other.lo, self.hi + other.hi)
        return Interval(self.lo + other, self.hi + other)

    __radd__ = __add__

    def scale(self, c: float) -> "Interval":
        if c < 0:
            raise ValueError("scale factor must be nonnegative")
        return Interval(c * self.lo, c * self.hi)

    def square(self) -> "Interval":
        if self.lo < 0:
            raise ValueError("square() expects a nonnegative interval")
        return Interval(self.lo * self.lo, self.hi * self.hi)


# ---------------------------------------------------------------------------
# power-law tail brackets

def _zeta_tail_bounds(s: float, K: int) -> tuple[float, float]:
    """Bracket sum_{k >= K} k^-s for s > 1 using convexity of x^-s.

    Trapezoid overestimates a convex integral, midpoint underestimates it.
    """
    integral_K = K ** (1.0 - s) / (s - 1.0)
    lo = integral_K + 0.5 * K ** (-s)
    hi = (K - 0.5) ** (1.0 - s) / (s - 1.0)
    return lo, hi


@lru_cache(maxsize=None)
def _bracket_start(s: float) -> int:
    K = 2
    while True:
        lo, hi = _zeta_tail_bounds(s, K)
        if hi - lo <= 0.25 * TAIL_WIDTH:
            return K
        K *= 2


@lru_cache(maxsize=4096)
def zeta_tail(s: float, i: int) -> Interval:
    """Certified bracket of ``sum_{k >= i} k^-s`` (s > 1) of width <= 1e-10."""
    if s <= 1.0:
        raise ValueError("series sum k^-s diverges for s <= 1")
    if i < 1:
        raise ValueError("tail index must be >= 1")
    K = max(i, _bracket_start(s))
    partial = math.fsum(np.arange(i, K, dtype=np.float64) ** (-s)) if K > i else 0.0
    lo, hi = _zeta_tail_bounds(s, K)
    pad = 4.0 * _EPS * (partial + hi)
    return Interval(max(partial + lo - pad, 0.0), partial + hi + pad)


# ---------------------------------------------------------------------------
# couplings

@dataclass(frozen=True)
class CouplingFamily:
    """Ferromagnetic pair couplings ``J(k)``, ``k >= 1``.

    ``table`` gives ``J(1..L)`` explicitly; beyond ``L`` the couplings are
    ``tail_scale * k**-tail_alpha`` when ``tail_alpha`` is set, else zero.
    The standard Dyson family is an empty table with a unit power tail.
    """

    table: tuple[float, ...] = ()
    tail_alpha: float | None = None
    tail_scale: float = 1.0
    label: str = ""

    def __post_init__(self):
        if any((not math.isfinite(v)) or v < 0 for v in self.table):
            raise ValueError("couplings must be finite and nonnegative")
        if self.tail_alpha is not None:
            if not self.tail_alpha > 1.0:
                raise ValueError(
                    f"power tail exponent {self.tail_alpha} <= 1 is not summable"
                )
            if not self.tail_scale >= 0:
                raise ValueError("tail scale must be nonnegative")

    @property
    def kind(self) -> str:
        if not self.table and self.tail_alpha is not None and self.tail_scale == 1.0:
            return "power-law"
        return "explicit-table"

    @property
    def alpha(self) -> float | None:
        return self.tail_alpha if self.kind == "power-law" else None

    @property
    def table_length(self) -> int:
        return len(self.table)

    @property
    def tail_rule(self) -> str:
        if self.tail_alpha is None:
            return "zero"
        return f"power {self.tail_alpha!r} {self.tail_scale!r}"

    @property
    def ident(self) -> str:
        if self.kind == "power-law":
            return f"alpha={self.tail_alpha!r}"
        return self.label or f"table[{len(self.table)}]+{self.tail_rule}"

    def __call__(self, k):
        """``J(k)``; accepts an int or an integer array (all entries >= 1)."""
        if np.isscalar(k):
            k = int(k)
            if k < 1:
                raise ValueError("coupling distance must be >= 1")
            if k <= len(self.table):
                return float(self.table[k - 1])
            if self.tail_alpha is None:
                return 0.0
            return self.tail_scale * float(k) ** (-self.tail_alpha)
        k = np.asarray(k, dtype=np.int64)
        if k.size and k.min() < 1:
            raise ValueError("coupling distance must be >= 1")
        return self._values_at(k)

    def _values_at(self, k: np.ndarray) -> np.ndarray:
        out = np.zeros(k.shape, dtype=np.float64)
        L = len(self.table)
        if L:
            inside = k <= L
            out[inside] = np.asarray(self.table, dtype=np.float64)[k[inside] - 1]
        if self.tail_alpha is not None:
            beyond = k > L
            out[beyond] = self.tail_scale * k[beyond].astype(np.float64) ** (-self.tail_alpha)
        return out

    def by_distance(self, kmax: int) -> np.ndarray:
        """Array ``d -> J(d)`` for ``d = 0..kmax`` with a zero at ``d = 0``."""
        out = np.zeros(kmax + 1, dtype=np.float64)
        if kmax >= 1:
            out[1:] = self._values_at(np.arange(1, kmax + 1, dtype=np.int64))
        return out

    def tail(self, i: int) -> Interval:
        return coupling_tail(self, i)

    def total(self) -> Interval:
        return coupling_tail(self, 1)


def make_power_law(alpha: float) -> CouplingFamily:
    """Standard Dyson couplings ``J(k) = k**-alpha``."""
    alpha = float(alpha)
    if not alpha > 1.0:
        raise ValueError(f"alpha={alpha} <= 1: couplings are not summable")
    return CouplingFamily(tail_alpha=alpha)


def make_table(values: Sequence[float], tail_alpha: float | None = None,
               tail_scale: float = 1.0, label: str = "") -> CouplingFamily:
    return CouplingFamily(tuple(float(v) for v in values), tail_alpha, tail_scale, label)


def load_coupling_table(path: str | Path) -> CouplingFamily:
    """Read a coupling table file.

    The first non-blank line declares the tail rule, ``tail zero`` or
    ``tail power <alpha> [<scale>]`` (a leading ``#`` is allowed).  Every
    further line holds ``k value``; missing distances are zero.
    """
    path = Path(path)
    rule = None
    entries: dict[int, float] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if rule is None:
            words = line.lstrip("#").replace(":", " ").split()
            if not words or words[0].lower() != "tail":
                raise ValueError(f"{path}:{lineno}: expected a 'tail ...' header line")
            rule = words[1:]
            continue
        if line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'k value'")
        try:
            k, v = int(parts[0]), float(parts[1])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
        if k < 1 or k in entries:
            raise ValueError(f"{path}:{lineno}: invalid or repeated distance {k}")
        entries[k] = v
    if rule is None:
        raise ValueError(f"{path}: empty coupling table")
    L = max(entries, default=0)
    values = [entries.get(k, 0.0) for k in range(1, L + 1)]
    if rule == ["zero"]:
        return make_table(values, label=path.stem)
    if rule and rule[0] == "power" and len(rule) in (2, 3):
        scale = float(rule[2]) if len(rule) == 3 else 1.0
        return make_table(values, float(rule[1]), scale, label=path.stem)
    raise ValueError(f"{path}: unknown tail rule {' '.join(rule)!r}")


def coupling_tail(J: CouplingFamily, i: int) -> Interval:
    """Bracket of ``T(i) = sum_{k >= i} J(k)`` of width <= 1e-10."""
    if i < 1:
        raise ValueError("tail index must be >= 1")
    L = len(J.table)
    head = math.fsum(J.table[i - 1:]) if i <= L else 0.0
    out = Interval(head, head)
    if J.tail_alpha is not None and J.tail_scale > 0:
        out = out + zeta_tail(J.tail_alpha, max(i, L + 1)).scale(J.tail_scale)
    return out


class _SquaredTails:
    """Certified suffix sums ``sum_{i >= n} T(i)^2`` for a convergent family."""

    def __init__(self, J: CouplingFamily, horizon: int = 1 << 20):
        L = len(J.table)
        self.J = J
        self.I = I = max(L + 2, horizon)
        t_I = coupling_tail(J, I)
        # T(i) for i = 1..I-1 from reverse partial sums of J
        k = np.arange(1, I, dtype=np.int64)
        rev = np.cumsum(J(k)[::-1])[::-1]
        slack = I * _EPS * (t_I.hi + rev[0])
        lo = np.maximum(rev + t_I.lo - slack, 0.0)
        hi = rev + t_I.hi + slack
        self.sq_lo = np.concatenate([[0.0], lo * lo])  # index i
        self.sq_hi = np.concatenate([[0.0], hi * hi])
        self.suffix_lo = np.concatenate([np.cumsum(self.sq_lo[::-1])[::-1], [0.0]])
        self.suffix_hi = np.concatenate([np.cumsum(self.sq_hi[::-1])[::-1], [0.0]])
        self.rem = self._remainder(J, I)
        self.pad = 4 * I * _EPS

    @staticmethod
    def _remainder(J: CouplingFamily, I: int) -> Interval:
        # i >= I > L: T(i) = c * sum_{k>=i} k^-a, bracketed between
        # c i^{1-a}/(a-1) and c (i-1/2)^{1-a}/(a-1); sum of squares via integrals
        a = J.tail_alpha
        if a is None or J.tail_scale == 0:
            return Interval(0.0, 0.0)
        if a <= 1.5:
            raise SummabilityError("iii", "sum of squared coupling tails diverges")
        c2 = J.tail_scale ** 2 / (a - 1.0) ** 2
        e = 2.0 * a - 3.0
        lo = c2 * I ** (-e) / e
        hi = c2 * (I - 1.5) ** (-e) / e
        return Interval(lo, hi)

    def from_index(self, n: int) -> Interval:
        """Bracket of ``sum_{i >= n} T(i)^2`` for ``n >= 1``."""
        lo, hi = self.all_from(np.array([n]))
        return Interval(float(lo[0]), float(hi[0]))

    def all_from(self, ns) -> tuple[np.ndarray, np.ndarray]:
        ns = np.asarray(ns, dtype=np.int64)
        if ns.size and ns.min() < 1:
            raise ValueError("tail index must be >= 1")
        inside = np.minimum(ns, self.I)
        lo = self.suffix_lo[inside] + self.rem.lo
        hi = self.suffix_hi[inside] + self.rem.hi
        far = ns > self.I
        for pos in np.flatnonzero(far):
            r = self._remainder(self.J, int(ns[pos]))
            lo[pos], hi[pos] = r.lo, r.hi
        return lo * (1 - self.pad), hi * (1 + self.pad)


@lru_cache(maxsize=32)
def squared_tails(J: CouplingFamily) -> _SquaredTails:
    if J.tail_alpha is not None and J.tail_scale > 0 and J.tail_alpha <= 1.5:
        raise SummabilityError(
            "iii",
            f"sum_i (sum_(k>=i) J(k))^2 diverges for tail exponent {J.tail_alpha} <= 3/2",
        )
    return _SquaredTails(J)


@dataclass(frozen=True)
class SummabilityReport:
    total: Interval
    kappa: Interval
    square_sum: Interval
    sup_pJ: float
    C1: Interval | None
    cond_i: bool
    cond_ii: bool
    cond_iii: bool
    divergence_index: float | None = None
    divergence_partial: float | None = None

    def as_dict(self) -> dict:
        def iv(x):
            return None if x is None else [x.lo, x.hi]

        return {
            "sum_J": iv(self.total),
            "kappa": iv(self.kappa),
            "sum_i_sum_k_J2": iv(self.square_sum),
            "sup_pJ": self.sup_pJ,
            "C1": iv(self.C1),
            "condition_i": self.cond_i,
            "condition_ii": self.cond_ii,
            "condition_iii": self.cond_iii,
            "divergence_index": self.divergence_index,
            "divergence_partial_lower": self.divergence_partial,
        }


def _divergence_certificate(J: CouplingFamily, threshold: float) -> tuple[float, float]:
    """Index n with a certified lower bound on sum_{i<=n} T(i)^2 above threshold.

    Uses T(i) >= c i^{1-a}/(a-1) for i > L and sum_{L<i<=n} g(i) >= int_{L+1}^{n+1} g
    for the decreasing g(x) = (c x^{1-a}/(a-1))^2.
    """
    a, L = J.tail_alpha, len(J.table)
    c2 = J.tail_scale ** 2 / (a - 1.0) ** 2
    x0 = L + 1.0
    if a == 1.5:
        def partial(n):
            return c2 * (math.log(n + 1.0) - math.log(x0))
    else:
        e = 3.0 - 2.0 * a

        def partial(n):
            return c2 * ((n + 1.0) ** e - x0 ** e) / e

    n = max(L + 1.0, 1.0)
    while partial(n) <= threshold:
        n *= 2.0
        if not math.isfinite(n):
            raise OverflowError("divergence certificate index overflow")
    # refine to the first power-of-two-free crossing by bisection
    lo, hi = n / 2.0, n
    for _ in range(200):
        mid = math.floor(0.5 * (lo + hi))
        if mid <= lo or mid >= hi:
            break
        if partial(mid) > threshold:
            hi = mid
        else:
            lo = mid
    return float(hi), float(partial(hi))


def summability_report(J: CouplingFamily, threshold: float = DIVERGENCE_THRESHOLD) -> SummabilityReport:
    """Sums and flags for the three summability conditions on ``J``."""
    total = coupling_tail(J, 1)
    kappa = total.scale(2.0)
    L = len(J.table)
    ks = np.arange(1, L + 1, dtype=np.float64)
    t = np.asarray(J.table, dtype=np.float64)
    # sum_i sum_{k>=i} J(k)^2 = sum_k k J(k)^2
    sq = math.fsum(ks * t * t) if L else 0.0
    square_sum = Interval(sq, sq)
    sup_table = float(np.max(ks * t)) if L else 0.0
    sup_pJ = sup_table
    if J.tail_alpha is not None and J.tail_scale > 0:
        a, c = J.tail_alpha, J.tail_scale
        square_sum = square_sum + zeta_tail(2.0 * a - 1.0, L + 1).scale(c * c)
        # p^{1-a} decreasing for a >= 1: maximum at the first tail index
        sup_pJ = max(sup_table, c * (L + 1.0) ** (1.0 - a))
    cond_ii = math.isfinite(sup_pJ)
    try:
        tails = squared_tails(J)
    except SummabilityError:
        n, part = _divergence_certificate(J, threshold)
        return SummabilityReport(total, kappa, square_sum, sup_pJ, None,
                                 True, cond_ii, False, n, part)
    return SummabilityReport(total, kappa, square_sum, sup_pJ, tails.from_index(1),
                             True, cond_ii, True)


# ---------------------------------------------------------------------------
# configurations

def spins_of(indices, n: int) -> np.ndarray:
    """Spin rows (int8, +-1) for configuration indices over ``n`` sites."""
    idx = np.asarray(indices, dtype=np.int64)
    bits = (idx[..., None] >> np.arange(n, dtype=np.int64)) & 1
    return (2 * bits - 1).astype(np.int8)


def all_spins(n: int) -> np.ndarray:
    return spins_of(np.arange(1 << n, dtype=np.int64), n)


@dataclass(frozen=True)
class SpinConfig:
    start: int
    stop: int
    bits: int

    def __post_init__(self):
        n = self.stop - self.start + 1
        if n < 1:
            raise ValueError("empty window")
        if n > ENUMERATION_LIMIT:
            raise ValueError(f"window of {n} sites exceeds the enumeration limit {ENUMERATION_LIMIT}")
        if not 0 <= self.bits < (1 << n):
            raise ValueError("bits out of range for window")

    @classmethod
    def from_spins(cls, start: int, spins: Iterable[int]) -> "SpinConfig":
        spins = [int(s) for s in spins]
        if any(s not in (-1, 1) for s in spins):
            raise ValueError("spins must be +-1")
        bits = sum(1 << t for t, s in enumerate(spins) if s == 1)
        return cls(start, start + len(spins) - 1, bits)

    @property
    def n(self) -> int:
        return self.stop - self.start + 1

    @property
    def sites(self) -> range:
        return range(self.start, self.stop + 1)

    @property
    def spins(self) -> np.ndarray:
        return spins_of(self.bits, self.n)

    def spin(self, site: int) -> int:
        if site not in self.sites:
            raise KeyError(site)
        return 1 if (self.bits >> (site - self.start)) & 1 else -1

    def flipped(self, site: int) -> "SpinConfig":
        if site not in self.sites:
            raise KeyError(site)
        return SpinConfig(self.start, self.stop, self.bits ^ (1 << (site - self.start)))


def volume_sites(volume: tuple[int, int]) -> np.ndarray:
    a, b = volume
    if b < a:
        raise ValueError(f"empty volume {volume}")
    return np.arange(a, b + 1, dtype=np.int64)


# ---------------------------------------------------------------------------
# interaction masks and the canonical cross-pair order

def cross_pair_index(i, j):
    """1-based position of the cross pair ``{-i, j}`` (i >= 1, j >= 0).

    Order: radius ``max(i, j)`` ascending, then ``i``, then ``j``.
    """
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    r = np.maximum(i, j)
    within = np.where(i < r, i, r + j)
    return (r - 1) * r + within


def cross_pair(position: int) -> tuple[int, int]:
    """Inverse of :func:`cross_pair_index`; returns the pair as ``(-i, j)``."""
    if position < 1:
        raise ValueError("positions start at 1")
    r = int((math.isqrt(4 * position - 3) + 1) // 2)
    while (r - 1) * r >= position:
        r -= 1
    while r * (r + 1) < position:
        r += 1
    w = position - (r - 1) * r
    if w < r:
        return -w, r
    return -r, w - r


def enumerate_cross_pairs(N: int) -> list[tuple[int, int]]:
    """First ``k_N = N(N+1)`` cross pairs, exactly those inside ``[-N, N]``."""
    if N < 1:
        raise ValueError("N must be >= 1")
    out = []
    for r in range(1, N + 1):
        out.extend((-i, r) for i in range(1, r))
        out.extend((-r, j) for j in range(0, r + 1))
    return out


def k_of(N: int) -> int:
    return N * (N + 1)


_MASK_MODES = ("full", "half-line-right", "half-line-left", "intermediate", "explicit")


@dataclass(frozen=True)
class InteractionMask:
    """Which pairs ``{u, v}`` carry the coupling ``J(|u - v|)``."""

    mode: str = "full"
    k: int = 0
    pairs: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.mode not in _MASK_MODES:
            raise ValueError(f"unknown mask mode {self.mode!r}")
        if self.k < 0:
            raise ValueError("k must be nonnegative")

    @classmethod
    def full(cls):
        return cls("full")

    @classmethod
    def half_right(cls):
        return cls("half-line-right")

    @classmethod
    def half_left(cls):
        return cls("half-line-left")

    @classmethod
    def intermediate(cls, k: int):
        return cls("intermediate", k=int(k))

    @classmethod
    def explicit(cls, pairs: Iterable[tuple[int, int]]):
        norm = frozenset(tuple(sorted((int(u), int(v)))) for u, v in pairs)
        if any(u == v for u, v in norm):
            raise ValueError("a pair needs two distinct sites")
        return cls("explicit", pairs=norm)

    @property
    def mask_id(self) -> int:
        """Integer tag used in binary dumps (k >= 0 for intermediate masks)."""
        return {"full": -1, "half-line-right": -2, "half-line-left": -3,
                "explicit": -4}.get(self.mode, self.k)

    @property
    def name(self) -> str:
        return f"intermediate({self.k})" if self.mode == "intermediate" else self.mode

    @property
    def finite(self) -> bool:
        return self.mode == "explicit"

    def active(self, u, v):
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        distinct = u != v
        if self.mode == "full":
            return distinct
        if self.mode == "half-line-right":
            return distinct & (u >= 0) & (v >= 0)
        if self.mode == "half-line-left":
            return distinct & (u < 0) & (v < 0)
        if self.mode == "explicit":
            lo, hi = np.minimum(u, v), np.maximum(u, v)
            flat = np.frompyfunc(lambda a, b: (int(a), int(b)) in self.pairs, 2, 1)(lo, hi)
            return np.asarray(flat, dtype=bool) & distinct
        same = (u < 0) == (v < 0)
        left = np.maximum(-np.minimum(u, v), 1)
        right = np.maximum(np.maximum(u, v), 0)
        cross_ok = cross_pair_index(left, right) <= self.k
        return distinct & (same | cross_ok)

    def active_matrix(self, rows, cols=None) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.int64)
        cols = rows if cols is None else np.asarray(cols, dtype=np.int64)
        return self.active(rows[:, None], cols[None, :])


def coupling_kernel(rows, cols, mask: InteractionMask, J: CouplingFamily,
                    cutoff: int | None = None) -> np.ndarray:
    """Matrix of ``J(|u - v|)`` over active pairs (zero elsewhere)."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    dist = np.abs(rows[:, None] - cols[None, :])
    act = mask.active_matrix(rows, cols)
    if cutoff is not None:
        act &= dist <= cutoff
    dmax = int(dist.max()) if dist.size else 0
    table = J.by_distance(dmax)
    return np.where(act, table[dist], 0.0)


# ---------------------------------------------------------------------------
# boundary conditions and energies

@dataclass(frozen=True)
class BoundaryCondition:
    kind: str = "free"
    sites: tuple[int, ...] = ()
    spins: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in ("free", "plus", "minus", "fixed"):
            raise ValueError(f"unknown boundary condition {self.kind!r}")
        if len(self.sites) != len(self.spins):
            raise ValueError("sites and spins differ in length")
        if len(set(self.sites)) != len(self.sites):
            raise ValueError("repeated boundary site")
        if any(s not in (-1, 1) for s in self.spins):
            raise ValueError("boundary spins must be +-1")
        if self.kind == "free" and self.sites:
            raise ValueError("free boundary condition carries no sites")

    @classmethod
    def free(cls):
        return cls()

    @classmethod
    def plus(cls, sites: Iterable[int]):
        sites = tuple(int(s) for s in sites)
        return cls("plus", sites, (1,) * len(sites))

    @classmethod
    def minus(cls, sites: Iterable[int]):
        sites = tuple(int(s) for s in sites)
        return cls("minus", sites, (-1,) * len(sites))

    @classmethod
    def fixed(cls, config: SpinConfig):
        return cls("fixed", tuple(config.sites), tuple(int(s) for s in config.spins))

    @classmethod
    def around(cls, volume: tuple[int, int], width: int, sign: int = 1):
        a, b = volume
        sites = list(range(a - width, a)) + list(range(b + 1, b + width + 1))
        return cls.plus(sites) if sign > 0 else cls.minus(sites)

    def check_disjoint(self, volume: tuple[int, int]):
        a, b = volume
        if any(a <= s <= b for s in self.sites):
            raise ValueError("boundary window overlaps the volume")


def boundary_field(volume: tuple[int, int], bc: BoundaryCondition, mask: InteractionMask,
                   J: CouplingFamily, cutoff: int | None = None) -> np.ndarray:
    """Per-site field ``sum_j J(|i-j|) omega_j`` from the boundary window."""
    sites = volume_sites(volume)
    if not bc.sites:
        return np.zeros(sites.size)
    bc.check_disjoint(volume)
    K = coupling_kernel(sites, bc.sites, mask, J, cutoff)
    return K @ np.asarray(bc.spins, dtype=np.float64)


def boundary_truncation(volume: tuple[int, int], bc: BoundaryCondition, beta: float,
                        J: CouplingFamily) -> float:
    """Upper bound on ``beta * sum |J|`` over pairs cut off by the boundary window.

    Free boundary conditions define their own measure and cut nothing.
    """
    if bc.kind == "free":
        return 0.0
    sites = volume_sites(volume)
    covered = np.concatenate([sites, np.asarray(bc.sites, dtype=np.int64)])
    two_total = 2.0 * coupling_tail(J, 1).hi
    kept = coupling_kernel(sites, covered, InteractionMask.full(), J).sum(axis=1)
    return float(beta * np.clip(two_total - kept, 0.0, None).sum())


def hamiltonian(volume: tuple[int, int], config: SpinConfig, bc: BoundaryCondition,
                mask: InteractionMask, beta: float, J: CouplingFamily,
                cutoff: int | None = None) -> float:
    """``H_Lambda(omega) = sum -beta J(|i-j|) s_i s_j`` over active pairs meeting the volume."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if (config.start, config.stop) != tuple(volume):
        raise ValueError("configuration window does not match the volume")
    sites = volume_sites(volume)
    s = config.spins.astype(np.float64)
    K = coupling_kernel(sites, sites, mask, J, cutoff)
    inner = 0.5 * s @ K @ s
    outer = boundary_field(volume, bc, mask, J, cutoff) @ s
    return float(-beta * (inner + outer))


def potential_phi(config: SpinConfig, depth: int, beta: float, J: CouplingFamily) -> float:
    """``beta * sum_{n=1}^{depth} J(n) x_0 x_n`` for a window starting at site 0."""
    if config.start != 0:
        raise ValueError("half-line configurations start at site 0")
    if depth < 1 or depth > config.n - 1:
        raise ValueError(f"depth {depth} exceeds the window of {config.n} sites")
    s = config.spins.astype(np.float64)
    return float(beta * math.fsum(J.by_distance(depth)[1:] * s[0] * s[1:depth + 1]))


# ---------------------------------------------------------------------------
# local functions and oscillations

@dataclass(frozen=True, eq=False)
class LocalFunction:
    """Real function of the spins on a finite ``domain``.

    ``table[idx]`` is the value at the configuration whose bit ``t`` encodes
    the spin at ``domain[t]``.
    """

    domain: tuple[int, ...]
    table: np.ndarray

    def __post_init__(self):
        table = np.asarray(self.table, dtype=np.float64).reshape(-1)
        if table.size != 1 << len(self.domain):
            raise ValueError("table size does not match the domain")
        if len(set(self.domain)) != len(self.domain):
            raise ValueError("repeated site in domain")
        object.__setattr__(self, "domain", tuple(int(s) for s in self.domain))
        object.__setattr__(self, "table", table)

    @classmethod
    def from_callable(cls, domain: Sequence[int], fn: Callable[[np.ndarray], np.ndarray]):
        """``fn`` maps a (2^d, d) spin array to d values per row."""
        spins = all_spins(len(domain))
        return cls(tuple(domain), np.asarray(fn(spins), dtype=np.float64))

    @classmethod
    def constant(cls, c: float):
        return cls((), np.array([float(c)]))

    @classmethod
    def spin(cls, site: int):
        return cls((site,), np.array([-1.0, 1.0]))

    @classmethod
    def product(cls, sites: Sequence[int]):
        return cls.from_callable(sites, lambda s: np.prod(s, axis=1))

    @classmethod
    def linear(cls, coeffs: dict[int, float]):
        sites = tuple(coeffs)
        a = np.array([coeffs[s] for s in sites], dtype=np.float64)
        return cls.from_callable(sites, lambda s: s @ a)

    @classmethod
    def pair_term(cls, i: int, j: int, beta: float, J: CouplingFamily):
        """``-beta J(i+j) sigma_{-i} sigma_j`` for the cross pair ``{-i, j}``."""
        c = -beta * J(i + j)
        return cls.from_callable((-i, j), lambda s: c * s[:, 0] * s[:, 1])

    def __add__(self, c: float) -> "LocalFunction":
        return LocalFunction(self.domain, self.table + float(c))

    __radd__ = __add__

    def __mul__(self, c: float) -> "LocalFunction":
        return LocalFunction(self.domain, self.table * float(c))

    __rmul__ = __mul__

    def values_on(self, volume: tuple[int, int]) -> np.ndarray:
        """Evaluate at every configuration of ``volume`` (index order of the window)."""
        a, b = volume
        if any(not a <= s <= b for s in self.domain):
            raise ValueError("function domain is not inside the volume")
        n = b - a + 1
        idx = np.arange(1 << n, dtype=np.int64)
        local = np.zeros_like(idx)
        for t, s in enumerate(self.domain):
            local |= ((idx >> (s - a)) & 1) << t
        return self.table[local]


def oscillation(F: LocalFunction, site: int) -> float:
    """``delta_site F``: the largest change of ``F`` from flipping ``site``."""
    if site not in F.domain:
        return 0.0
    t = F.domain.index(site)
    idx = np.arange(F.table.size)
    return float(np.max(np.abs(F.table - F.table[idx ^ (1 << t)])))


def total_oscillation(F: LocalFunction) -> float:
    return math.fsum(oscillation(F, s) ** 2 for s in F.domain)


def table_oscillations(values: np.ndarray, n: int) -> np.ndarray:
    """Per-site oscillations for tables over ``n`` sites; ``values`` is (..., 2^n)."""
    values = np.asarray(values, dtype=np.float64)
    idx = np.arange(1 << n)
    return np.stack([np.max(np.abs(values - values[..., idx ^ (1 << t)]), axis=-1)
                     for t in range(n)], axis=-1)


# ---------------------------------------------------------------------------
# SUAC norm and the coupling-matrix conditions

def suac_norm(mask: InteractionMask, truncation: int, beta: float, J: CouplingFamily) -> Interval:
    """Bracket of ``sup_i sum_{V ni i} ||beta Psi_V||``.

    Explicit masks are summed exactly.  For the infinite masks each row sum
    is at most the full row ``2 sum J``; the lower end is the best row over
    sites ``|i| <= truncation``, and for the full mask both ends are the
    certified ``2 beta sum J`` bracket.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if beta == 0:
        return Interval(0.0, 0.0)
    total = coupling_tail(J, 1)
    if mask.mode == "explicit":
        rows: dict[int, list[float]] = {}
        for u, v in mask.pairs:
            w = J(abs(u - v))
            rows.setdefault(u, []).append(w)
            rows.setdefault(v, []).append(w)
        best = max((math.fsum(r) for r in rows.values()), default=0.0)
        return Interval(beta * best, beta * best)
    upper = 2.0 * beta * total.hi
    if mask.mode == "full":
        return Interval(2.0 * beta * total.lo, upper)
    M = max(int(truncation), 1)
    sites = np.arange(-M, M + 1, dtype=np.int64)
    window = np.arange(-2 * M, 2 * M + 1, dtype=np.int64)
    inner = coupling_kernel(sites, window, mask, J).sum(axis=1)
    best = float(inner.max())
    return Interval(min(beta * best, upper), upper)


def volume_suac(volume: tuple[int, int], mask: InteractionMask, beta: float,
                J: CouplingFamily, bc: BoundaryCondition | None = None) -> float:
    """Row-sum norm of the interaction actually seen inside ``volume``."""
    sites = volume_sites(volume)
    cols = sites if bc is None or not bc.sites else np.concatenate(
        [sites, np.asarray(bc.sites, dtype=np.int64)])
    return float(beta * coupling_kernel(sites, cols, mask, J).sum(axis=1).max())


def coupling_matrix(volume: tuple[int, int], mask: InteractionMask, J: CouplingFamily) -> np.ndarray:
    """``A_ij = -J(|i-j|)`` on active pairs of the volume, zero diagonal."""
    sites = volume_sites(volume)
    return -coupling_kernel(sites, sites, mask, J)


def rescale_bd(A: np.ndarray, kappa: float) -> np.ndarray:
    """``(A + kappa I) / (2 kappa)``; ``kappa`` must dominate every row sum."""
    A = np.asarray(A, dtype=np.float64)
    rows = np.abs(A - np.diag(np.diag(A))).sum(axis=1)
    if kappa <= 0 or (rows.size and rows.max() > kappa):
        raise ValueError(f"kappa={kappa} does not dominate the row sums {rows.max():.6g}")
    return (A + kappa * np.eye(A.shape[0])) / (2.0 * kappa)


@dataclass(frozen=True)
class BDReport:
    symmetric: bool
    offdiag_nonpositive: bool
    min_eigenvalue: float
    spectral_radius: float
    c1: bool
    c2: bool
    c3: bool

    @property
    def ok(self) -> bool:
        return self.c1 and self.c2 and self.c3


def check_bd_conditions(A: np.ndarray, atol: float = 1e-12) -> BDReport:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    if not np.allclose(A, A.T, rtol=0.0, atol=atol):
        raise ValueError("matrix is not symmetric")
    off = A - np.diag(np.diag(A))
    nonpos = bool(np.all(off <= atol))
    eig = np.linalg.eigvalsh(0.5 * (A + A.T))
    lo, rho = float(eig.min()), float(np.abs(eig).max())
    return BDReport(True, nonpos, lo, rho, nonpos, lo > 0.0, rho <= 1.0 + atol)
