"""Acceptance suite: ten criteria at their stated tolerances and time limits.

Each test logs one PASS/FAIL line (also collected in the terminal summary)
before asserting.  Run standalone with ``python3 tests/test_acceptance.py``.
"""

import math
import time

import numpy as np
import pytest

from dysonlab.concentration import (
    constants,
    flip_density_check,
    half_line_bounds,
    herbst_scan,
    measure_suac,
    random_functions,
    verify_gcb,
    verify_lsi,
    verify_mcb,
    continuity_modulus,
)
from dysonlab.gibbs_exact import (
    _centered_volume,
    _mask_ladder,
    all_correlations,
    boltzmann,
    correlation,
    correlation_sum,
    griffiths_check,
    intermediate_density,
    susceptibility_fv,
)
from dysonlab.model import (
    BoundaryCondition,
    InteractionMask,
    SummabilityError,
    cross_pair,
    cross_pair_index,
    k_of,
    make_power_law,
    make_table,
    summability_report,
)
from dysonlab.sampler import new_chain, pair_correlation_mc, susceptibility_mc
from dysonlab.transfer import (
    build_truncation,
    eigen_residual,
    eigenfunction_density_route,
    principal_eigen,
    relative_sup_distance,
)

ALPHAS = (1.2, 1.5, 2.0, 3.0)
BETA_GRID = tuple(round(0.1 * i, 1) for i in range(7))  # 0.0 .. 0.6
SMALL_INSTANCES = [(n, b) for n in (1, 2, 3, 4) for b in (0.1, 0.3, 0.6)]


class Clock:
    def __init__(self):
        self.t0 = time.perf_counter()

    @property
    def elapsed(self):
        return time.perf_counter() - self.t0


def test_criterion_01_beta_zero(acceptance_log):
    clock = Clock()
    worst = 0.0
    J = make_power_law(2.0)
    for n in range(1, 11):
        m = boltzmann(_centered_volume(n), 0.0, J=J)
        worst = max(worst, float(np.max(np.abs(m.probabilities - 2.0 ** -n))))
        corr = all_correlations(m)
        worst = max(worst, abs(corr[0] - 1.0), float(np.max(np.abs(corr[1:]))) if n else 0.0)
        worst = max(worst, abs(susceptibility_fv(m) - 1.0))
    for depth in range(1, 13):
        e = principal_eigen(build_truncation(depth, 0.0, J))
        worst = max(worst, abs(e.log_lambda - math.log(2.0)))
        worst = max(worst, float(np.max(np.abs(e.h - 1.0))))
        worst = max(worst, float(np.max(np.abs(e.nu - 2.0 ** -depth))))
    for alpha in ALPHAS:
        b = constants(0.0, 1.0, make_power_law(alpha))
        worst = max(worst, abs(b.D_gcb - 0.25), abs(b.D_lsi_bound - 0.25))
    ok = worst <= 1e-12 and clock.elapsed < 5.0
    acceptance_log(1, ok, f"max deviation {worst:.2e}, {clock.elapsed:.2f}s")
    assert ok


def test_criterion_02_nearest_neighbour_anchor(acceptance_log):
    clock = Clock()
    worst = 0.0
    families = [make_power_law(2.0), make_power_law(1.2), make_table([0.7, 0.2], 3.0)]
    for J in families:
        for i in range(1, 11):
            beta = i / 10
            e = principal_eigen(build_truncation(1, beta, J))
            worst = max(worst, abs(e.log_lambda - math.log(2.0 * math.cosh(beta * J(1)))))
    ok = worst <= 1e-12 and clock.elapsed < 1.0
    acceptance_log(2, ok, f"max |log lambda_1 - log 2cosh(beta J(1))| = {worst:.2e}, "
                          f"{clock.elapsed:.2f}s")
    assert ok


def test_criterion_03_griffiths(acceptance_log):
    clock = Clock()
    violations, comparisons, worst = 0, 0, 0.0
    for alpha in ALPHAS:
        J = make_power_law(alpha)
        for n in range(1, 9):
            rep = griffiths_check(n, BETA_GRID, J, tol=1e-12)
            violations += rep.violations
            comparisons += rep.comparisons
            worst = max(worst, rep.worst)
    ok = violations == 0 and clock.elapsed < 120.0
    acceptance_log(3, ok, f"{violations} violations in {comparisons} comparisons "
                          f"(worst excess {worst:.1e}), {clock.elapsed:.1f}s")
    assert ok


def test_criterion_04_exact_identities(acceptance_log):
    clock = Clock()
    J = make_power_law(2.0)
    worst = 0.0
    for N in (1, 2, 3):
        for k in range(k_of(N) + 1):
            d = intermediate_density(N, k, 0.3, J)
            worst = max(worst, d.identity_residual, d.telescoping_residual)
    index_ok = True
    for N in range(1, 9):
        inside = {(-i, j) for i in range(1, N + 1) for j in range(0, N + 1)}
        first = {cross_pair(p) for p in range(1, k_of(N) + 1)}
        index_ok &= first == inside and len(first) == k_of(N)
        index_ok &= all(cross_pair_index(-u, v) == p
                        for p in range(1, k_of(N) + 1) for u, v in [cross_pair(p)])
        index_ok &= max(-cross_pair(k_of(N) + 1)[0], cross_pair(k_of(N) + 1)[1]) == N + 1
    ok = worst <= 1e-10 and index_ok and clock.elapsed < 60.0
    acceptance_log(4, ok, f"worst identity residual {worst:.1e}, k_N indexation "
                          f"{'exact' if index_ok else 'broken'}, {clock.elapsed:.1f}s")
    assert ok


def test_criterion_05_lsi(acceptance_log):
    clock = Clock()
    J = make_power_law(2.0)
    worst, fails = -math.inf, 0
    for n, beta in SMALL_INSTANCES:
        m = boltzmann(_centered_volume(n), beta, J=J)
        D = constants(beta, susceptibility_fv(m), J, chi_source="exact-fv").D_lsi_bound
        rep = verify_lsi(m, D, "mixed", trials=10_000, seed=n * 100 + int(10 * beta),
                         search_trials=4)
        worst = max(worst, rep.worst_ratio)
        fails += not rep.passed
    ok = fails == 0 and clock.elapsed < 300.0
    acceptance_log(5, ok, f"{fails} failing instances, worst Ent/(2D E) = {worst:.4f}, "
                          f"{clock.elapsed:.1f}s")
    assert ok


def test_criterion_06_herbst_chain(acceptance_log):
    clock = Clock()
    J = make_power_law(2.0)
    gcb_worst, herbst_bad, mcb_worst = -math.inf, 0, -math.inf
    mcb_where = None
    lambdas = np.arange(1, 21) / 20.0
    for n, beta in SMALL_INSTANCES:
        m = boltzmann(_centered_volume(n), beta, J=J)
        b = constants(beta, susceptibility_fv(m), J, chi_source="exact-fv")
        seed = 7000 + n * 100 + int(10 * beta)
        gcb = verify_gcb(m, b.D_herbst, "mixed", trials=2000, seed=seed)
        gcb_worst = max(gcb_worst, gcb.worst_ratio)
        F, _ = random_functions(m, "mixed", 200, seed)
        for row in F:
            herbst_bad += not herbst_scan(m, row, lambdas, b.D_lsi_bound).passed
        F, _ = random_functions(m, "mixed", 2000, seed)
        mcb = verify_mcb(m, b.D_herbst, F, (2, 4, 6, 8))
        if mcb.worst_ratio > mcb_worst:
            mcb_worst = mcb.worst_ratio
            mcb_where = (n, beta, mcb.worst_witness["moment"])
    gcb_ok = gcb_worst <= 1.0 + 1e-9
    mcb_ok = mcb_worst <= 1.0 + 1e-9
    ok = gcb_ok and herbst_bad == 0 and mcb_ok and clock.elapsed < 300.0
    acceptance_log(6, ok, f"GCB worst ratio {gcb_worst:.3f}, Herbst violations {herbst_bad}, "
                          f"MCB worst ratio {mcb_worst:.3f} at (n, beta, moment)={mcb_where}, "
                          f"{clock.elapsed:.1f}s")
    assert ok


def test_criterion_07_flip_densities(acceptance_log):
    clock = Clock()
    worst, count = 0.0, 0
    for alpha in ALPHAS:
        J = make_power_law(alpha)
        for n in range(1, 9):
            vol = _centered_volume(n)
            bcs = [BoundaryCondition.free(), BoundaryCondition.around(vol, 3, 1),
                   BoundaryCondition.around(vol, 3, -1)]
            for beta in BETA_GRID:
                for mask in _mask_ladder(vol) + [InteractionMask.half_right()]:
                    for bc in bcs:
                        m = boltzmann(vol, beta, mask, bc, J=J)
                        # both the measure's own norm and the certified 2 beta sum J
                        for suac in (measure_suac(m), constants(beta, 1.0, J).suac):
                            chk = flip_density_check(m, suac)
                            worst = max(worst, chk.sup_density / chk.bound)
                            count += 1
    ok = worst <= 1.0 + 1e-9 and clock.elapsed < 60.0
    acceptance_log(7, ok, f"{count} checks, worst sup density / e^(2 norm) = {worst:.6f}, "
                          f"{clock.elapsed:.1f}s")
    assert ok


def test_criterion_08_eigenfunction_cross_validation(acceptance_log):
    clock = Clock()
    J, beta = make_power_law(2.0), 0.3
    t = build_truncation(8, beta, J)
    e = principal_eigen(t)
    f = eigenfunction_density_route(12, 8, beta, J, 12, eigen=e)
    dist = relative_sup_distance(f, e.h)
    # GCB constant of the left window measure (12 sites)
    chi = susceptibility_fv(boltzmann((-12, -1), beta, J=J))
    b = constants(beta, chi, J, chi_source="exact-fv")
    bounds = half_line_bounds(b.D_gcb, beta, b.C1)
    inside = bool(f.min() >= bounds.lo and f.max() <= bounds.hi)
    ok = dist <= 5e-2 and inside and clock.elapsed < 120.0
    acceptance_log(8, ok, f"relative sup distance {dist:.4f}, f in [{f.min():.3f}, {f.max():.3f}] "
                          f"within [{bounds.lo:.3f}, {bounds.hi:.3f}]: {inside}, "
                          f"density residual {eigen_residual(f, e.lam, t):.1e}, "
                          f"{clock.elapsed:.1f}s")
    assert ok


def test_criterion_09_mc_vs_exact(acceptance_log):
    clock = Clock()
    J, beta, n = make_power_law(2.0), 0.3, 14
    m = boltzmann((0, n - 1), beta, J=J)
    exact_pair = correlation(m, (0, 1))
    exact_chi = correlation_sum(m, n // 2)
    pair = pair_correlation_mc(new_chain((0, n - 1), beta, J, seed=2024), 0, 1, 1000, 100_000)
    chi = susceptibility_mc(new_chain((0, n - 1), beta, J, seed=2025), 1000, 100_000)
    z_pair = (pair.mean - exact_pair) / pair.stderr
    z_chi = (chi.mean - exact_chi) / chi.stderr
    ok = pair.within(exact_pair, 3.0) and chi.within(exact_chi, 3.0) and clock.elapsed < 120.0
    acceptance_log(9, ok, f"<s0 s1> {pair.mean:.4f}+-{pair.stderr:.4f} vs {exact_pair:.4f} "
                          f"(z={z_pair:+.2f}); chi {chi.mean:.4f}+-{chi.stderr:.4f} vs "
                          f"{exact_chi:.4f} (z={z_chi:+.2f}), {clock.elapsed:.1f}s")
    assert ok


def test_criterion_10_summability(acceptance_log):
    clock = Clock()
    r2 = summability_report(make_power_law(2.0))
    r16 = summability_report(make_power_law(1.6))
    r14 = summability_report(make_power_law(1.4))
    flags_ok = (r2.cond_i and r2.cond_ii and r2.cond_iii and r16.cond_iii
                and not r14.cond_iii and r14.divergence_index is not None
                and r14.divergence_partial > 1e3)
    J, beta = make_power_law(2.0), 0.3
    D = constants(beta, 1.0, J).D_gcb
    ns = [0, 1, 10, 100, 1000, 10_000, 100_000]
    rows = continuity_modulus(ns, D, beta, J)
    u = np.array([r.u for r in rows])
    modulus_ok = bool(np.all(np.diff(u) < 0)) and u[-1] < 1e-4
    with pytest.raises(SummabilityError) as err:
        continuity_modulus(ns, D, beta, make_power_law(1.4))
    structured = err.value.condition == "iii"
    ok = flags_ok and modulus_ok and structured and clock.elapsed < 30.0
    acceptance_log(10, ok, f"flags {'ok' if flags_ok else 'wrong'}, u_n from {u[0]:.3g} "
                           f"down to {u[-1]:.2e}, alpha=1.4 error condition "
                           f"{err.value.condition!r}, {clock.elapsed:.2f}s")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
