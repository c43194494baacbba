"""Compare the compiled kernels with the numpy fallback.

Each kernel is timed on identical inputs with both backends and the outputs
are checked for agreement before timings are reported.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--quick]
"""

import argparse
import time

import numpy as np

from dysonlab import kernels
from dysonlab.gibbs_exact import _centered_volume
from dysonlab.model import InteractionMask, coupling_matrix, make_power_law
from dysonlab.sampler import new_chain
from dysonlab.transfer import build_truncation


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_enumeration(backend, n, repeat):
    J = make_power_law(2.0)
    K = coupling_matrix(_centered_volume(n), InteractionMask.full(), J)
    h = np.linspace(0.0, 0.1, n)
    out = np.empty(1 << n)
    t = _best(lambda: backend.interaction_sums(K, h, out), repeat)
    return t, out.copy()


def bench_sweeps(backend, n, nsweeps, repeat):
    J = make_power_law(2.0)
    outs = []

    def run():
        c = new_chain((0, n - 1), 0.3, J, seed=7)
        ptr, idx, wts = c._ex
        u = np.random.default_rng(1).random(n * nsweeps)
        backend.heat_bath_sweeps(c.spins, c.fields, c._Jd, c._side, c._split, ptr, idx, wts,
                                 c.beta, c.cutoff, u, nsweeps, np.empty((0, n), dtype=np.int8))
        outs.append(c.spins.copy())

    return _best(run, repeat), outs[-1]


def bench_transfer(backend, depth, iters, repeat):
    t = build_truncation(depth, 0.3, make_power_law(2.0))
    f = np.random.default_rng(2).random(t.size)
    out = np.empty(t.size)

    def run():
        g = f.copy()
        for _ in range(iters):
            backend.transfer_apply(t.weights, t.succ, g, out)
            g = out / out.max()
        backend.transfer_apply_adjoint(t.weights, t.depth, g, out)

    return _best(run, repeat), out.copy()


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="small sizes (smoke run)")
    args = ap.parse_args(argv)

    if "cython" not in kernels.BACKENDS:
        print("compiled extension not built; only the fallback is available")
    q = args.quick
    cases = [
        ("interaction_sums n=%d" % (12 if q else 18),
         lambda b: bench_enumeration(b, 12 if q else 18, args.repeat)),
        ("heat_bath n=%d x %d sweeps" % (64, 20 if q else 200),
         lambda b: bench_sweeps(b, 64, 20 if q else 200, args.repeat)),
        ("transfer depth=%d x %d" % (12 if q else 18, 10),
         lambda b: bench_transfer(b, 12 if q else 18, 10, args.repeat)),
    ]
    print(f"{'kernel':32s} {'backend':8s} {'seconds':>10s} {'speedup':>8s}")
    for name, case in cases:
        ref_t, ref_out = case(kernels.BACKENDS["python"])
        print(f"{name:32s} {'python':8s} {ref_t:10.4f} {1.0:8.1f}")
        if "cython" in kernels.BACKENDS:
            t, out = case(kernels.BACKENDS["cython"])
            if not np.allclose(out, ref_out, rtol=1e-10, atol=1e-12):
                raise SystemExit(f"{name}: backends disagree")
            print(f"{name:32s} {'cython':8s} {t:10.4f} {ref_t / t:8.1f}")


if __name__ == "__main__":
    main()
