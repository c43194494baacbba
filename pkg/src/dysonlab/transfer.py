"""Depth-m truncation of the transfer operator on half-line cylinders.

A state ``x`` in ``[0, 2**m)`` stands for the cylinder ``(x_0, ..., x_{m-1})``
with bit ``t`` encoding ``x_t``.  Prepending a symbol ``a`` gives the state
``ax = (a, x_0, ..., x_{m-2})``; the last coordinate drops off the horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .gibbs_exact import half_line_density
from .model import ENUMERATION_LIMIT, CouplingFamily, all_spins

MAX_DEPTH = 26


@dataclass(frozen=True, eq=False)
class TransferTruncation:
    """Sparse action ``(L f)(x) = sum_a w[a, x] f(succ[a, x])``.

    ``w`` is stored divided by ``exp(log_shift)`` so that its largest entry
    is 1; multiply eigenvalues by ``exp(log_shift)`` to undo it.
    """

    depth: int
    beta: float
    J: CouplingFamily = field(repr=False)
    weights: np.ndarray = field(repr=False)
    succ: np.ndarray = field(repr=False)
    log_shift: float

    @property
    def size(self) -> int:
        return 1 << self.depth

    def apply(self, f: np.ndarray) -> np.ndarray:
        """Scaled action ``exp(-log_shift) L f``."""
        out = np.empty(self.size)
        kernels.transfer_apply(self.weights, self.succ, np.ascontiguousarray(f, dtype=np.float64), out)
        return out

    def apply_adjoint(self, nu: np.ndarray) -> np.ndarray:
        out = np.empty(self.size)
        kernels.transfer_apply_adjoint(self.weights, self.depth,
                                       np.ascontiguousarray(nu, dtype=np.float64), out)
        return out

    def dense(self) -> np.ndarray:
        """Unscaled matrix of the action; only for small depths."""
        if self.depth > 12:
            raise ValueError("dense form is limited to depth 12")
        L = np.zeros((self.size, self.size))
        rows = np.arange(self.size)
        scale = math.exp(self.log_shift)
        for a in range(2):
            np.add.at(L, (rows, self.succ[a]), self.weights[a] * scale)
        return L

    def flip(self, x: np.ndarray) -> np.ndarray:
        return (self.size - 1) ^ np.asarray(x)


def build_truncation(m: int, beta: float, J: CouplingFamily) -> TransferTruncation:
    if not 1 <= m <= MAX_DEPTH:
        raise ValueError(f"depth must lie in [1, {MAX_DEPTH}], got {m}")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    size = 1 << m
    Jn = J(np.arange(1, m + 1))
    # field[x] = sum_{n=1}^m J(n) x_{n-1}, accumulated one coordinate at a time
    x = np.arange(size, dtype=np.int64)
    fld = np.zeros(size)
    for t in range(m):
        fld += Jn[t] * (((x >> t) & 1) * 2.0 - 1.0)
    shift = beta * float(Jn.sum())
    w = np.empty((2, size))
    w[0] = np.exp(-beta * fld - shift)
    w[1] = np.exp(beta * fld - shift)
    mask = size - 1
    succ = np.empty((2, size), dtype=np.int64)
    succ[0] = (x << 1) & mask
    succ[1] = ((x << 1) | 1) & mask
    return TransferTruncation(m, float(beta), J, w, succ, shift)


@dataclass(frozen=True, eq=False)
class EigenTriple:
    lam: float
    log_lambda: float
    h: np.ndarray
    nu: np.ndarray
    residual_h: float
    residual_nu: float
    iterations: int

    @property
    def residuals(self) -> tuple[float, float]:
        return self.residual_h, self.residual_nu


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


def principal_eigen(t: TransferTruncation, tol: float = 1e-12, max_iters: int = 100_000) -> EigenTriple:
    """Perron eigen-data by power iteration on the action and its adjoint.

    The eigenvalue iteration stops when the Collatz–Wielandt bounds
    ``min(Lh/h) <= lambda <= max(Lh/h)`` agree to relative ``tol``.  The
    returned ``h`` is normalised so that ``<nu, h> = 1``; ``residual_h`` is
    ``||L h - lambda h|| / (lambda ||h||)`` and ``residual_nu`` the total
    variation between ``L* nu / lambda`` and ``nu``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    h = np.ones(t.size)
    lo = hi = 0.0
    for it in range(1, max_iters + 1):
        g = t.apply(h)
        ratio = g / h
        lo, hi = float(ratio.min()), float(ratio.max())
        h = g / g.max()
        if hi - lo <= tol * hi:
            break
    else:
        raise ConvergenceError("eigenfunction iteration did not converge", (hi - lo) / hi)
    lam_s = 0.5 * (lo + hi)
    g = t.apply(h)
    res_h = float(np.max(np.abs(g - lam_s * h)) / np.max(h))

    nu = np.full(t.size, 1.0 / t.size)
    res_nu = math.inf
    for it_nu in range(1, max_iters + 1):
        q = t.apply_adjoint(nu) / lam_s
        q /= q.sum()
        res_nu = 0.5 * float(np.abs(q - nu).sum())
        nu = q
        if res_nu <= tol:
            break
    else:
        raise ConvergenceError("eigenprobability iteration did not converge", res_nu)
    res_nu = 0.5 * float(np.abs(t.apply_adjoint(nu) / lam_s - nu).sum())

    h = h / float(nu @ h)
    log_lam = math.log(lam_s) + t.log_shift
    return EigenTriple(math.exp(log_lam), log_lam, h, nu, res_h / lam_s, res_nu,
                       max(it, it_nu))


def eigen_residual(f: np.ndarray, lam: float, t: TransferTruncation) -> float:
    """``sup |L f - lambda f| / (lambda ||f||_inf)``."""
    f = np.asarray(f, dtype=np.float64)
    if np.any(f <= 0):
        raise ValueError("f must be positive")
    lam_s = lam * math.exp(-t.log_shift)
    return float(np.max(np.abs(t.apply(f) - lam_s * f)) / (lam_s * np.max(f)))


@dataclass(frozen=True)
class PressureRow:
    depth: int
    log_lambda: float
    gap: float | None
    residual: float


def pressure_table(depths, beta: float, J: CouplingFamily, tol: float = 1e-12) -> list[PressureRow]:
    """``log lambda_m`` over increasing depths with the gap to the previous row."""
    rows: list[PressureRow] = []
    prev = None
    for m in sorted(set(int(d) for d in depths)):
        e = principal_eigen(build_truncation(m, beta, J), tol=tol)
        gap = None if prev is None else abs(e.log_lambda - prev)
        rows.append(PressureRow(m, e.log_lambda, gap, e.residual_h))
        prev = e.log_lambda
    return rows


def marginal(v: np.ndarray, depth: int) -> np.ndarray:
    """Push a weight vector on depth-m states forward to depth-``depth`` cylinders."""
    size = np.asarray(v).size
    if (1 << depth) > size:
        raise ValueError("cannot marginalise to a larger depth")
    return np.asarray(v).reshape(-1, 1 << depth).sum(axis=0)


def eigenfunction_density_route(N: int, depth: int, beta: float, J: CouplingFamily,
                                left_window: int, eigen: EigenTriple | None = None,
                                limit: int = ENUMERATION_LIMIT) -> np.ndarray:
    """Half-line density ``f_+^[N]`` on depth cylinders with ``<nu, f> = 1``.

    ``nu`` is the eigenprobability of the depth-``depth`` truncation (or the
    depth marginal of ``eigen.nu`` when a deeper triple is supplied).
    """
    if eigen is None:
        eigen = principal_eigen(build_truncation(depth, beta, J))
    nu = marginal(eigen.nu, depth)
    return half_line_density(N, depth, beta, J, left_window, reference=nu, limit=limit).values


def relative_sup_distance(f: np.ndarray, g: np.ndarray) -> float:
    return float(np.max(np.abs(f - g)) / np.max(np.abs(g)))


def variation(f: np.ndarray, d: int) -> float:
    """``var_d f``: largest spread of ``f`` over states sharing the first ``d`` coordinates."""
    f = np.asarray(f, dtype=np.float64)
    if (1 << d) > f.size:
        raise ValueError("d exceeds the depth of f")
    return float(np.ptp(f.reshape(-1, 1 << d), axis=0).max())


def spin_table(depth: int) -> np.ndarray:
    return all_spins(depth)


def eigen_record(t: TransferTruncation, e: EigenTriple, dump_path: str | None = None) -> dict:
    return {
        "m": t.depth,
        "beta": t.beta,
        "coupling": t.J.ident,
        "lambda": e.lam,
        "log_lambda": e.log_lambda,
        "residuals": {"h": e.residual_h, "nu": e.residual_nu},
        "iterations": e.iterations,
        "vector_dump_path": dump_path,
    }
