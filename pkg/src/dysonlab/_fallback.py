"""Pure numpy versions of the compiled kernels.

Signatures and output conventions mirror ``_kernels.pyx`` exactly; results
agree to rounding (summation order differs for ``interaction_sums``).
"""

import math

import numpy as np

_CHUNK = 1 << 15


def interaction_sums(K, h, out):
    n = K.shape[0]
    total = out.shape[0]
    upper = np.triu(K, 1)
    bits = np.arange(n, dtype=np.int64)
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        s = (((idx[:, None] >> bits) & 1) * 2 - 1).astype(np.float64)
        out[start:start + idx.size] = np.einsum("ci,ci->c", s @ upper, s) + s @ h


def heat_bath_sweeps(spins, fields, Jd, side, split, ex_ptr, ex_idx, ex_w,
                     beta, cutoff, uniforms, nsweeps, record):
    n = spins.shape[0]
    keep = record.shape[0] > 0
    flips = 0
    k = 0
    for sweep in range(nsweeps):
        for t in range(n):
            x = -2.0 * beta * fields[t]
            p_up = 0.0 if x > 700.0 else 1.0 / (1.0 + math.exp(x))
            new = 1 if uniforms[k] < p_up else -1
            k += 1
            if new == spins[t]:
                continue
            flips += 1
            delta = 2.0 * new
            spins[t] = new
            lo = max(t - cutoff, 0)
            hi = min(t + cutoff + 1, n)
            v = np.arange(lo, hi)
            w = Jd[np.abs(v - t)]
            if split:
                w = np.where((side[lo:hi] == side[t]) & (side[t] >= 0), w, 0.0)
            w[t - lo] = 0.0
            fields[lo:hi] += delta * w
            a, b = ex_ptr[t], ex_ptr[t + 1]
            if b > a:
                np.add.at(fields, ex_idx[a:b], delta * ex_w[a:b])
        if keep:
            record[sweep] = spins
    return flips


def transfer_apply(w, succ, f, out):
    out[:] = w[0] * f[succ[0]] + w[1] * f[succ[1]]


def transfer_apply_adjoint(w, depth, nu, out):
    y = np.arange(nu.shape[0], dtype=np.int64)
    a = y & 1
    x0 = y >> 1
    x1 = x0 | (1 << (depth - 1))
    out[:] = w[a, x0] * nu[x0] + w[a, x1] * nu[x1]
