"""Explicit concentration constants and exact verification suites.

All integrals are exact sums against :class:`~dysonlab.gibbs_exact.ExactMeasure`
tables.  A report passes when its worst ratio (left side over right side of
the inequality) is at most ``1 + RATIO_SLACK``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import gamma, logsumexp

from .gibbs_exact import (
    ExactMeasure,
    boltzmann,
    dirichlet_batch,
    entropy_batch,
    intermediate_density,
    lsi_constant_search,
    poincare_witness,
    pushforward_flip_density,
    susceptibility_fv,
)
from .model import (
    CouplingFamily,
    Interval,
    InteractionMask,
    LocalFunction,
    SummabilityError,
    k_of,
    squared_tails,
    suac_norm,
    summability_report,
    table_oscillations,
)

RATIO_SLACK = 1e-9
SCHEMA_VERSION = 1
CHI_SOURCES = ("exact-fv", "mc", "user")


# ---------------------------------------------------------------------------
# constants

def d_lsi_bound(beta: float, chi: float) -> float:
    return 0.25 + 0.5 * beta * math.exp(2.0 * beta * chi)


def d_gcb(beta: float, chi: float, sum_J: float) -> float:
    return 0.125 * (1.0 + 2.0 * beta * math.exp(2.0 * beta * chi)) * (math.exp(4.0 * beta * sum_J) + 1.0)


def d_herbst(d_lsi: float, suac: float) -> float:
    return d_lsi * (math.exp(2.0 * suac) + 1.0) / 2.0


@dataclass(frozen=True)
class ConstantBundle:
    beta: float
    chi: float
    chi_source: str
    sum_J: float
    kappa: float
    suac: float
    D_lsi_bound: float
    D_gcb: float
    D_herbst: float
    C1: float | None
    C1_note: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


def constants(beta: float, chi: float, J: CouplingFamily, mask: InteractionMask | None = None,
              chi_source: str = "user", d_lsi_input: float | None = None,
              truncation: int = 64) -> ConstantBundle:
    """Every explicit constant at inverse temperature ``beta`` and susceptibility ``chi``.

    Sums of couplings use the upper end of their certified brackets, so the
    constants are never understated by rounding.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if chi < 1:
        raise ValueError("susceptibility is at least 1")
    if chi_source not in CHI_SOURCES:
        raise ValueError(f"chi source must be one of {CHI_SOURCES}")
    mask = InteractionMask.full() if mask is None else mask
    rep = summability_report(J)
    sum_J = rep.total.hi
    suac = suac_norm(mask, truncation, beta, J).hi
    D_lsi = d_lsi_bound(beta, chi)
    D_in = D_lsi if d_lsi_input is None else float(d_lsi_input)
    if rep.C1 is None:
        C1, note = None, "sum_i T(i)^2 diverges: constants depending on C1 are skipped"
    else:
        C1, note = rep.C1.hi, ""
    return ConstantBundle(float(beta), float(chi), chi_source, sum_J, rep.kappa.hi, suac,
                          D_lsi, d_gcb(beta, chi, sum_J), d_herbst(D_in, suac), C1, note)


def exact_chi(volume: tuple[int, int], beta: float, J: CouplingFamily) -> float:
    """Finite-volume susceptibility of the free full-mask measure."""
    return susceptibility_fv(boltzmann(volume, beta, J=J))


# ---------------------------------------------------------------------------
# reports

@dataclass
class ConcentrationReport:
    kind: str
    constant: float
    trials: int
    worst_ratio: float
    worst_witness: dict
    margins: list[float] = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.worst_ratio <= 1.0 + RATIO_SLACK

    def as_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "kind": self.kind, "constant": self.constant,
                "trials": self.trials, "worst_ratio": self.worst_ratio, "pass": self.passed,
                "worst_witness": self.worst_witness, "margins": self.margins,
                "details": self.details}


def _witness(values: np.ndarray, label: str) -> dict:
    return {"family": label, "table": [float(v) for v in values]}


# ---------------------------------------------------------------------------
# test-function families

FAMILIES = ("tables", "linear", "exp-linear", "mixed")


def random_functions(m: ExactMeasure, family: str, trials: int, seed: int,
                     max_support: int = 5) -> tuple[np.ndarray, list[str]]:
    """``trials`` tables over the volume of ``m`` with their family labels.

    ``tables``: random local tables on at most ``max_support`` sites (normal,
    positive, or sparse entries); ``linear``: ``sum a_i s_i`` with random signs
    and log-uniform scales; ``exp-linear``: ``exp`` of a linear form.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    rng = np.random.default_rng(seed)
    n, size = m.n, m.probabilities.size
    spins = m.spins.astype(np.float64)
    idx = np.arange(size, dtype=np.int64)
    out = np.empty((trials, size))
    labels = []
    for r in range(trials):
        fam = family if family != "mixed" else FAMILIES[r % 3]
        if fam == "tables":
            d = int(rng.integers(1, min(max_support, n) + 1))
            sup = np.sort(rng.choice(n, size=d, replace=False))
            kind = rng.integers(3)
            if kind == 0:
                table = rng.standard_normal(1 << d)
            elif kind == 1:
                table = rng.exponential(size=1 << d)
            else:
                table = np.where(rng.random(1 << d) < 0.3, rng.standard_normal(1 << d), 0.0)
                table += rng.random() * rng.standard_normal()
            local = np.zeros(size, dtype=np.int64)
            for t, s in enumerate(sup):
                local |= ((idx >> s) & 1) << t
            out[r] = table[local] * 10.0 ** rng.uniform(-1, 1)
        else:
            a = rng.choice([-1.0, 1.0], size=n) * rng.random(n) * 10.0 ** rng.uniform(-2, 1)
            lin = spins @ a
            out[r] = lin if fam == "linear" else np.exp(0.5 * lin)
        labels.append(fam)
    return out, labels


# ---------------------------------------------------------------------------
# LSI

def verify_lsi(m: ExactMeasure, D: float, family: str = "mixed", trials: int = 1000,
               seed: int = 0, search_trials: int = 4, extra: np.ndarray | None = None) -> ConcentrationReport:
    """Check ``Ent(f^2) <= 2 D Dirichlet(f)`` on random and adversarial ``f``.

    Functions with a vanishing Dirichlet form (constants) are excluded.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    F, labels = random_functions(m, family, trials, seed)
    blocks, names = [F], list(labels)
    if search_trials and m.n <= 6:
        res = lsi_constant_search(m, trials=search_trials, seed=seed)
        blocks.append(res.witness[None, :])
        names.append("search-witness")
        _, g = poincare_witness(m)
        blocks.append((1.0 + 1e-3 * g)[None, :])
        names.append("poincare")
    if extra is not None:
        extra = np.atleast_2d(extra)
        blocks.append(extra)
        names += ["supplied"] * extra.shape[0]
    F = np.vstack(blocks)
    p = m.probabilities
    ent = entropy_batch(p, F * F)
    dirich = dirichlet_batch(p, F, m.n)
    keep = dirich > 0
    ratio = np.where(keep, ent / np.where(keep, 2.0 * D * dirich, 1.0), -np.inf)
    w = int(np.argmax(ratio))
    per_family = {}
    for r, name in zip(ratio, names):
        if np.isfinite(r):
            per_family[name] = max(per_family.get(name, -np.inf), float(r))
    return ConcentrationReport("LSI", float(D), int(keep.sum()), float(ratio[w]),
                               _witness(F[w], names[w]),
                               [1.0 - v for v in per_family.values()],
                               {"worst_by_family": per_family, "excluded_constant": int((~keep).sum())})


# ---------------------------------------------------------------------------
# GCB

def _centred_log_mgf(p: np.ndarray, F: np.ndarray) -> np.ndarray:
    """``log int exp(F - int F) dp`` per row, in the log domain."""
    F = np.atleast_2d(F)
    mean = F @ p
    return logsumexp(F - mean[:, None], axis=1, b=p[None, :])


def verify_gcb(m: ExactMeasure, D: float, family: str = "mixed", trials: int = 1000,
               seed: int = 0, extra: np.ndarray | None = None) -> ConcentrationReport:
    """Check ``log int exp(F - int F) dm <= D ||dF||^2`` exactly on every test function."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    F, labels = random_functions(m, family, trials, seed)
    names = list(labels)
    if extra is not None:
        extra = np.atleast_2d(extra)
        F = np.vstack([F, extra])
        names += ["supplied"] * extra.shape[0]
    lhs = _centred_log_mgf(m.probabilities, F)
    osc = (table_oscillations(F, m.n) ** 2).sum(axis=1)
    keep = osc > 0
    ratio = np.where(keep, lhs / np.where(keep, D * osc, 1.0), -np.inf)
    w = int(np.argmax(ratio))
    return ConcentrationReport("GCB", float(D), int(keep.sum()), float(ratio[w]),
                               _witness(F[w], names[w]), [1.0 - float(ratio[w])],
                               {"excluded_constant": int((~keep).sum())})


# ---------------------------------------------------------------------------
# MCB

def mcb_bound(D: float, osc: float, moment: int) -> float:
    return (D * osc / 2.0) ** (moment / 2.0) * moment * gamma(moment / 2.0)


def verify_mcb(m: ExactMeasure, D: float, F, moments=(2, 4, 6, 8)) -> ConcentrationReport:
    """Check ``int |F - int F|^k dm <= (D ||dF||^2 / 2)^{k/2} k Gamma(k/2)``.

    ``F`` is a :class:`LocalFunction`, one table, or a stack of tables.
    """
    if any(int(k) < 1 for k in moments):
        raise ValueError("moments must be positive integers")
    if isinstance(F, LocalFunction):
        F = F.values_on(m.volume)
    F = np.atleast_2d(np.asarray(F, dtype=np.float64))
    p = m.probabilities
    dev = np.abs(F - (F @ p)[:, None])
    osc = (table_oscillations(F, m.n) ** 2).sum(axis=1)
    worst, wrow, wk, margins = -np.inf, 0, moments[0], []
    for k in moments:
        lhs = (dev ** k) @ p
        bound = np.array([mcb_bound(D, o, k) for o in osc])
        keep = osc > 0
        ratio = np.where(keep, lhs / np.where(keep, bound, 1.0), -np.inf)
        r = int(np.argmax(ratio))
        margins.append(1.0 - float(ratio[r]))
        if ratio[r] > worst:
            worst, wrow, wk = float(ratio[r]), r, k
    wit = _witness(F[wrow], "supplied")
    wit["moment"] = int(wk)
    return ConcentrationReport("MCB", float(D), int(F.shape[0]), worst, wit, margins,
                               {"moments": [int(k) for k in moments]})


# ---------------------------------------------------------------------------
# Herbst

@dataclass(frozen=True)
class HerbstScan:
    lambdas: np.ndarray
    u: np.ndarray
    du: np.ndarray
    slope_bound: float
    u0: float
    u0_extrapolated: float
    violations: list[float]

    @property
    def passed(self) -> bool:
        return not self.violations

    def rows(self) -> list[tuple[float, float, float]]:
        return [(float(a), float(b), float(c)) for a, b, c in zip(self.lambdas, self.u, self.du)]


def _u(p: np.ndarray, Fc: np.ndarray, mean: float, lam: np.ndarray) -> np.ndarray:
    """``u(lam) = log int exp(lam F) / lam`` through the centred ``Fc``."""
    lam = np.asarray(lam, dtype=np.float64)
    out = np.full(lam.shape, mean)
    nz = lam != 0
    if np.any(nz):
        lz = logsumexp(lam[nz, None] * Fc[None, :], axis=1, b=p[None, :])
        out[nz] = mean + lz / lam[nz]
    return out


def herbst_scan(m: ExactMeasure, F, lambdas, D_lsi: float, suac: float | None = None,
                step: float = 1e-4) -> HerbstScan:
    """Tabulate ``u`` and ``u'`` and flag slopes above ``D (e^{2||Psi||} + 1) ||dF||^2 / 2``.

    ``u'`` is a centred difference with step ``step`` refined once by
    Richardson extrapolation.  ``suac`` defaults to the row-sum norm of the
    interaction seen inside the volume.
    """
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if np.any(lambdas <= 0) or np.any(lambdas > 1):
        raise ValueError("lambda grid must lie in (0, 1]")
    if isinstance(F, LocalFunction):
        F = F.values_on(m.volume)
    F = np.asarray(F, dtype=np.float64)
    p = m.probabilities
    mean = float(F @ p)
    Fc = F - mean
    if suac is None:
        suac = measure_suac(m)
    osc = float((table_oscillations(F, m.n) ** 2).sum())
    bound = D_lsi * (math.exp(2.0 * suac) + 1.0) / 2.0 * osc
    u = _u(p, Fc, mean, lambdas)

    def cd(hh):
        return (_u(p, Fc, mean, lambdas + hh) - _u(p, Fc, mean, lambdas - hh)) / (2.0 * hh)

    du = (4.0 * cd(step / 2.0) - cd(step)) / 3.0
    # u(0) from the small-lambda values: u is smooth through 0
    small = np.array([1e-3, 5e-4])
    us = _u(p, Fc, mean, small)
    u0_ex = float(us[1] + (us[1] - us[0]) * small[1] / (small[0] - small[1]))
    tol = RATIO_SLACK * max(bound, 1.0)
    violations = [float(lam) for lam, d in zip(lambdas, du) if d > bound + tol]
    return HerbstScan(lambdas, u, du, bound, mean, u0_ex, violations)


def measure_suac(m: ExactMeasure) -> float:
    """Largest ``beta * sum_j |K_ij|`` over the volume, boundary field included."""
    rows = np.abs(m.couplings).sum(axis=1) + np.abs(m.field)
    return float(m.beta * rows.max()) if rows.size else 0.0


# ---------------------------------------------------------------------------
# flip densities

@dataclass(frozen=True)
class FlipDensityCheck:
    sup_density: float
    bound: float
    worst_site: int

    @property
    def passed(self) -> bool:
        return self.sup_density <= self.bound * (1.0 + RATIO_SLACK)


def flip_density_check(m: ExactMeasure, suac: float) -> FlipDensityCheck:
    """``sup_i ||d m^(i) / d m||_inf`` against ``exp(2 suac)``."""
    best, site = -math.inf, m.volume[0]
    for s in m.sites:
        v = pushforward_flip_density(m, int(s)).sup()
        if v > best:
            best, site = v, int(s)
    return FlipDensityCheck(best, math.exp(2.0 * suac), site)


def mvt_exp_check(a: np.ndarray, b: np.ndarray) -> float:
    """Largest ratio ``|e^b - e^a| / (e^{max(a,b)} |b - a|)`` (at most 1)."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    diff = np.abs(b - a)
    d = diff[diff > 0]
    # |e^b - e^a| = e^max (1 - e^-d), so the ratio is -expm1(-d) / d
    return float((-np.expm1(-d) / d).max()) if d.size else 0.0


# ---------------------------------------------------------------------------
# uniform integrability and the equicontinuity modulus

@dataclass(frozen=True)
class IntegrabilityRow:
    N: int
    k: int
    entropy: float
    neg_mean_W: float
    neg_log_normalizer: float
    identity_residual: float
    bound: float
    chi: float
    chi_source: str
    exceeds: bool


def uniform_integrability_diag(N_range, beta: float, J: CouplingFamily,
                               k_policy: str = "all") -> list[IntegrabilityRow]:
    """Entropy of ``f^(k)`` against ``beta * sup_p pJ(p) * chi`` for every ``k`` in the policy.

    ``k_policy`` is ``all`` (every ``k <= k_N``), ``ends`` (``0`` and ``k_N``),
    or ``stride:s``.  ``chi`` is the exact susceptibility of the full window.
    """
    rep = summability_report(J)
    rows = []
    for N in N_range:
        kN = k_of(N)
        if k_policy == "all":
            ks = range(kN + 1)
        elif k_policy == "ends":
            ks = (0, kN)
        elif k_policy.startswith("stride:"):
            s = int(k_policy.split(":", 1)[1])
            ks = sorted(set(range(0, kN + 1, s)) | {kN})
        else:
            raise ValueError(f"unknown k policy {k_policy!r}")
        chi = exact_chi((-N, N), beta, J)
        bound = beta * rep.sup_pJ * chi
        for k in ks:
            d = intermediate_density(N, k, beta, J)
            rows.append(IntegrabilityRow(N, k, d.entropy, d.neg_mean_W, d.neg_log_normalizer,
                                         d.identity_residual, bound, chi, "exact-fv",
                                         d.entropy > bound * (1.0 + RATIO_SLACK)))
    return rows


@dataclass(frozen=True)
class ModulusRow:
    n: int
    u: float
    v: float
    modulus: float


def continuity_modulus(n_range, D: float, beta: float, J: CouplingFamily) -> list[ModulusRow]:
    """``u_n = 16 beta^2 sum_{i >= n+1} T(i)^2``, ``v_n = sqrt(D u_n / 2)`` and the modulus.

    The modulus is ``C2 * sqrt((6 v^2 + 8 v) e^{v^2})`` with
    ``C2 = exp(8 D beta^2 C1)``.  Upper ends of the tail brackets are used.
    """
    try:
        tails = squared_tails(J)
    except SummabilityError as err:
        raise SummabilityError(
            "iii", f"continuity modulus needs sum_i T(i)^2 < infinity: {err}") from err
    ns = np.asarray(list(n_range), dtype=np.int64)
    if ns.size and ns.min() < 0:
        raise ValueError("n must be nonnegative")
    C1 = tails.from_index(1).hi
    C2 = math.exp(8.0 * D * beta * beta * C1)
    _, hi = tails.all_from(ns + 1)
    rows = []
    for n, s in zip(ns, hi):
        u = 16.0 * beta * beta * float(s)
        v = math.sqrt(D * u / 2.0)
        rows.append(ModulusRow(int(n), u, v, C2 * math.sqrt((6.0 * v * v + 8.0 * v) * math.exp(v * v))))
    return rows


def half_line_bounds(D: float, beta: float, C1: float) -> Interval:
    """``[e^{-8 D beta^2 C1}, e^{8 D beta^2 C1}]``."""
    x = 8.0 * D * beta * beta * C1
    return Interval(math.exp(-x), math.exp(x))
