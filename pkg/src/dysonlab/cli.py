"""Command-line front end.

Every command resolves its parameters from defaults, an optional config file
and flags (in increasing precedence), computes a JSON-able result, writes
artifacts plus a manifest under ``<out>/<command>-<digest>/<attempt>/``, and
exits 0 (pass), 1 (verification failed) or 2 (usage or parameter error).
"""

from __future__ import annotations

import argparse
import configparser
import datetime as _dt
import json
import os
import re
import sys
from pathlib import Path

from . import __version__

ENV_OUT = "DYSONLAB_OUT"
DEFAULT_OUT = "dysonlab-out"

# section -> key -> (type, default)
PARAMS: dict[str, dict[str, tuple[str, object]]] = {
    "model": {
        "alpha": ("float", 2.0),
        "coupling_file": ("str", ""),
        "beta": ("float", 0.3),
        "threshold": ("float", 1e3),
    },
    "exact": {
        "n": ("int", 4),
        "limit": ("int", 24),
        "beta_grid": ("str", "0:0.6:0.1"),
        "N": ("int", 3),
        "k": ("int", -1),
        "left_window": ("int", 12),
    },
    "transfer": {
        "depths": ("str", "1..12"),
        "depth": ("int", 8),
        "N": ("int", 12),
        "tol": ("float", 1e-12),
        "max_iters": ("int", 100_000),
        "xval_tol": ("float", 5e-2),
    },
    "sampler": {
        "n": ("int", 14),
        "beta_grid": ("str", ""),
        "burnin": ("int", 1000),
        "sweeps": ("int", 100_000),
        "seed": ("int", 0),
        "cutoff": ("int", 0),
    },
    "concentration": {
        "trials": ("int", 1000),
        "family": ("str", "mixed"),
        "constant": ("float", 0.0),
        "chi": ("float", 0.0),
        "moments": ("str", "2,4,6,8"),
        "lambda_grid": ("str", "0.05:1:0.05"),
        "n_range": ("str", "1..40"),
    },
    "output": {
        "dir": ("str", ""),
        "cache": ("bool", True),
    },
}

COMMANDS = ("pressure", "eigenfunction", "susceptibility", "verify-gcb", "verify-lsi",
            "verify-mcb", "verify-griffiths", "intermediate", "summability", "herbst",
            "modulus", "report")


class UsageError(Exception):
    """Invalid parameters; maps to exit code 2."""


# ---------------------------------------------------------------------------
# parameters

def _convert(kind: str, raw: str):
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "bool":
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return raw


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    lines: dict[tuple[str, str], int] = {}
    section = None
    for no, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s[0] in "#;":
            continue
        m = re.match(r"\[(.+)\]$", s)
        if m:
            section = m.group(1).strip()
            continue
        m = re.match(r"([^=:]+?)\s*[=:]", s)
        if m and section is not None:
            lines[(section, m.group(1).strip())] = no
    return lines


def load_config(path) -> dict[str, object]:
    """Parse a sectioned key-value file into ``{"section.key": value}``.

    Unknown sections or keys and unparsable values raise :class:`UsageError`
    (values with their line number).
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise UsageError(f"cannot read config {path}: {err}") from err
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as err:
        raise UsageError(f"config {path}: {err}") from err
    lines = _key_lines(text)
    out: dict[str, object] = {}
    for section in parser.sections():
        if section not in PARAMS:
            raise UsageError(f"config {path}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in PARAMS[section]:
                raise UsageError(f"config {path}, line {lines.get((section, key), '?')}: "
                                 f"unknown key {key!r} in [{section}]")
            kind = PARAMS[section][key][0]
            try:
                out[f"{section}.{key}"] = _convert(kind, raw)
            except ValueError:
                raise UsageError(f"config {path}, line {lines.get((section, key), '?')}: "
                                 f"malformed {kind} for {section}.{key}: {raw!r}") from None
    return out


def resolve(flags: dict[str, object], config_path=None) -> dict[str, dict]:
    """Merge defaults < config < flags; each entry records its source."""
    params = {f"{s}.{k}": {"value": d, "source": "default"}
              for s, keys in PARAMS.items() for k, (_, d) in keys.items()}
    if config_path:
        for key, value in load_config(config_path).items():
            params[key] = {"value": value, "source": "config"}
    for key, value in flags.items():
        if value is not None:
            params[key] = {"value": value, "source": "flag"}
    return params


def parse_range(text: str, kind=float) -> list:
    """``a..b`` (inclusive integers), ``a:b:step`` (inclusive grid) or ``x,y,z``."""
    text = str(text).strip()
    try:
        if ".." in text:
            a, b = text.split("..")
            return list(range(int(a), int(b) + 1))
        if ":" in text:
            a, b, s = (float(x) for x in text.split(":"))
            if s <= 0:
                raise ValueError
            count = int((b - a) / s + 1e-9) + 1
            return [kind(round(a + i * s, 12)) for i in range(count)]
        return [kind(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"cannot parse range {text!r}") from None


# ---------------------------------------------------------------------------
# argument parsing

def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="sectioned key-value configuration file")
    p.add_argument("--out", dest="output.dir", help=f"output root (default ${ENV_OUT} or ./{DEFAULT_OUT})")
    p.add_argument("--alpha", dest="model.alpha", type=float, help="power-law exponent")
    p.add_argument("--coupling-file", dest="model.coupling_file", help="coupling table file")
    p.add_argument("--beta", dest="model.beta", type=float, help="inverse temperature")
    p.add_argument("--limit", dest="exact.limit", type=int, help="enumeration limit")
    p.add_argument("--seed", dest="sampler.seed", type=int, help="random seed")
    p.add_argument("--threads", type=int, default=None, help="cap on worker threads")
    p.add_argument("--no-cache", dest="output.cache", action="store_const", const=False,
                   help="recompute even when a cached result exists")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dysonlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"dysonlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def cmd(name, help_):
        p = sub.add_parser(name, help=help_)
        _common(p)
        return p

    p = cmd("pressure", "log lambda_m of the truncated transfer operator over depths")
    p.add_argument("--depths", dest="transfer.depths")
    p.add_argument("--tol", dest="transfer.tol", type=float)

    p = cmd("eigenfunction", "power-iteration eigenfunction against the half-line density route")
    p.add_argument("--depth", dest="transfer.depth", type=int)
    p.add_argument("--half-width", dest="transfer.N", type=int, help="N in W_[N]")
    p.add_argument("--left-window", dest="exact.left_window", type=int)
    p.add_argument("--tolerance", dest="transfer.xval_tol", type=float)
    p.add_argument("--tol", dest="transfer.tol", type=float)

    p = cmd("susceptibility", "Monte Carlo correlation sums (exact comparison when enumerable)")
    p.add_argument("--n", dest="sampler.n", type=int)
    p.add_argument("--beta-grid", dest="sampler.beta_grid")
    p.add_argument("--burnin", dest="sampler.burnin", type=int)
    p.add_argument("--sweeps", dest="sampler.sweeps", type=int)
    p.add_argument("--cutoff", dest="sampler.cutoff", type=int)

    for name, what in (("verify-lsi", "log-Sobolev"), ("verify-gcb", "Gaussian concentration"),
                       ("verify-mcb", "moment concentration")):
        p = cmd(name, f"{what} inequality on an exact measure")
        p.add_argument("--n", dest="exact.n", type=int)
        p.add_argument("--trials", dest="concentration.trials", type=int)
        p.add_argument("--family", dest="concentration.family")
        p.add_argument("--constant", dest="concentration.constant", type=float,
                       help="constant D (default: the explicit bound)")
        p.add_argument("--chi", dest="concentration.chi", type=float,
                       help="susceptibility (default: exact finite volume)")
        if name == "verify-mcb":
            p.add_argument("--moments", dest="concentration.moments")

    p = cmd("verify-griffiths", "Griffiths positivity and monotonicity on exact measures")
    p.add_argument("--n", dest="exact.n", type=int)
    p.add_argument("--beta-grid", dest="exact.beta_grid")

    p = cmd("intermediate", "entropy and telescoping identities for intermediate interactions")
    p.add_argument("--half-width", dest="exact.N", type=int)
    p.add_argument("--k", dest="exact.k", type=int, help="single k (default: all k <= k_N)")

    p = cmd("summability", "coupling sums and the summability conditions")
    p.add_argument("--threshold", dest="model.threshold", type=float)

    p = cmd("herbst", "Herbst scan of u(lambda) = log Z(lambda) / lambda")
    p.add_argument("--n", dest="exact.n", type=int)
    p.add_argument("--lambda-grid", dest="concentration.lambda_grid")
    p.add_argument("--trials", dest="concentration.trials", type=int)
    p.add_argument("--family", dest="concentration.family")
    p.add_argument("--chi", dest="concentration.chi", type=float)

    p = cmd("modulus", "equicontinuity moduli u_n, v_n of the half-line densities")
    p.add_argument("--n-range", dest="concentration.n_range")
    p.add_argument("--n", dest="exact.n", type=int, help="volume for the exact chi")
    p.add_argument("--constant", dest="concentration.constant", type=float)
    p.add_argument("--chi", dest="concentration.chi", type=float)

    cmd("report", "summary table regenerated from stored JSON artifacts")
    return parser


# ---------------------------------------------------------------------------
# commands (heavy modules are imported lazily so --threads applies first)

def _coupling(P):
    from .model import load_coupling_table, make_power_law

    path = P["model.coupling_file"]
    if path:
        try:
            return load_coupling_table(path)
        except OSError as err:
            raise UsageError(f"cannot read coupling file: {err}") from err
    return make_power_law(P["model.alpha"])


def _beta(P) -> float:
    b = P["model.beta"]
    if b < 0:
        raise UsageError("beta must be nonnegative")
    return b


def _measure(P):
    from .gibbs_exact import _centered_volume, boltzmann

    n = P["exact.n"]
    if n < 1:
        raise UsageError("n must be >= 1")
    return boltzmann(_centered_volume(n), _beta(P), J=_coupling(P), limit=P["exact.limit"])


def _bundle(P, m):
    from .concentration import constants
    from .gibbs_exact import susceptibility_fv

    chi = P["concentration.chi"]
    source = "user"
    if chi <= 0:
        chi, source = susceptibility_fv(m), "exact-fv"
    return constants(m.beta, chi, _coupling(P), chi_source=source)


def run_pressure(P):
    from .transfer import build_truncation, eigen_record, principal_eigen

    J, beta = _coupling(P), _beta(P)
    rows, prev = [], None
    for m in parse_range(P["transfer.depths"], int):
        t = build_truncation(m, beta, J)
        e = principal_eigen(t, tol=P["transfer.tol"], max_iters=P["transfer.max_iters"])
        rec = eigen_record(t, e)
        rec["gap"] = None if prev is None else abs(e.log_lambda - prev)
        prev = e.log_lambda
        rows.append(rec)
    return {"pass": None, "coupling": J.ident, "beta": beta, "rows": rows}


def _art_pressure(res, d):
    from .io import write_rows_csv

    return [write_rows_csv(d / "pressure.csv", ["m", "log_lambda", "gap", "residual_h"],
                           [[r["m"], repr(r["log_lambda"]), r["gap"], r["residuals"]["h"]]
                            for r in res["rows"]])]


def run_eigenfunction(P):
    from .concentration import constants, exact_chi, half_line_bounds
    from .transfer import (build_truncation, eigen_record, eigen_residual,
                           eigenfunction_density_route, principal_eigen, relative_sup_distance)

    J, beta = _coupling(P), _beta(P)
    d, N, M = P["transfer.depth"], P["transfer.N"], P["exact.left_window"]
    t = build_truncation(d, beta, J)
    e = principal_eigen(t, tol=P["transfer.tol"], max_iters=P["transfer.max_iters"])
    f = eigenfunction_density_route(N, d, beta, J, M, eigen=e, limit=P["exact.limit"])
    dist = relative_sup_distance(f, e.h)
    chi = exact_chi((0, min(P["exact.limit"], 12) - 1), beta, J)
    bundle = constants(beta, chi, J, chi_source="exact-fv")
    bounds = half_line_bounds(bundle.D_gcb, beta, bundle.C1) if bundle.C1 is not None else None
    inside = bounds is None or bool(f.min() >= bounds.lo and f.max() <= bounds.hi)
    ok = dist <= P["transfer.xval_tol"] and inside
    return {"pass": ok, "record": eigen_record(t, e), "relative_sup_distance": dist,
            "density_residual": eigen_residual(f, e.lam, t),
            "bounds": None if bounds is None else [bounds.lo, bounds.hi],
            "within_bounds": inside, "constants": bundle.as_dict(),
            "h": e.h.tolist(), "f": f.tolist(), "nu": e.nu.tolist(), "mask_id": -2}


def _art_eigenfunction(res, d):
    import numpy as np

    from .io import write_dump

    n, beta = res["record"]["m"], res["record"]["beta"]
    out = [write_dump(d / name, np.array(res[key]), n, beta, res["mask_id"])
           for name, key in (("h.dyex", "h"), ("f_density.dyex", "f"), ("nu.dyex", "nu"))]
    res["record"]["vector_dump_path"] = str(out[0])
    return out


def run_susceptibility(P):
    from .gibbs_exact import boltzmann, correlation_sum
    from .sampler import new_chain, susceptibility_mc

    J = _coupling(P)
    n = P["sampler.n"]
    if n < 1:
        raise UsageError("n must be >= 1")
    grid = parse_range(P["sampler.beta_grid"]) if P["sampler.beta_grid"] else [_beta(P)]
    if any(b < 0 for b in grid):
        raise UsageError("beta must be nonnegative")
    cutoff = P["sampler.cutoff"] or None
    rows = []
    for i, b in enumerate(grid):
        chain = new_chain((0, n - 1), b, J, seed=P["sampler.seed"] + i, cutoff=cutoff)
        est = susceptibility_mc(chain, P["sampler.burnin"], P["sampler.sweeps"])
        row = {"beta": b, "seed": P["sampler.seed"] + i, **est.as_dict()}
        if n <= min(16, P["exact.limit"]):
            row["exact"] = correlation_sum(boltzmann((0, n - 1), b, J=J), n // 2)
            row["z_score"] = (est.mean - row["exact"]) / est.stderr if est.stderr else 0.0
        rows.append(row)
    return {"pass": None, "n": n, "rows": rows}


def _art_susceptibility(res, d):
    from .io import write_rows_csv

    keys = ["beta", "mean", "stderr", "batches", "tau", "exact"]
    return [write_rows_csv(d / "susceptibility.csv", keys,
                           [[r.get(k) for k in keys] for r in res["rows"]])]


def _family(P):
    from .concentration import FAMILIES

    fam = P["concentration.family"]
    if fam not in FAMILIES:
        raise UsageError(f"family must be one of {FAMILIES}")
    return fam


def _trials(P) -> int:
    t = P["concentration.trials"]
    if t < 1:
        raise UsageError("trials must be >= 1")
    return t


def run_verify_lsi(P):
    from .concentration import verify_lsi

    m = _measure(P)
    b = _bundle(P, m)
    D = P["concentration.constant"] or b.D_lsi_bound
    rep = verify_lsi(m, D, _family(P), _trials(P), P["sampler.seed"],
                     search_trials=4 if m.n <= 6 else 0)
    return {"pass": rep.passed, "report": rep.as_dict(), "constants": b.as_dict()}


def run_verify_gcb(P):
    from .concentration import verify_gcb

    m = _measure(P)
    b = _bundle(P, m)
    D = P["concentration.constant"] or b.D_herbst
    rep = verify_gcb(m, D, _family(P), _trials(P), P["sampler.seed"])
    return {"pass": rep.passed, "report": rep.as_dict(), "constants": b.as_dict()}


def run_verify_mcb(P):
    from .concentration import random_functions, verify_mcb

    m = _measure(P)
    b = _bundle(P, m)
    D = P["concentration.constant"] or b.D_herbst
    F, _ = random_functions(m, _family(P), _trials(P), P["sampler.seed"])
    moments = parse_range(P["concentration.moments"], int)
    rep = verify_mcb(m, D, F, moments)
    return {"pass": rep.passed, "report": rep.as_dict(), "constants": b.as_dict()}


def run_verify_griffiths(P):
    from .gibbs_exact import griffiths_check

    n = P["exact.n"]
    if not 1 <= n <= P["exact.limit"]:
        raise UsageError("n must lie between 1 and the enumeration limit")
    grid = parse_range(P["exact.beta_grid"])
    if any(b < 0 for b in grid):
        raise UsageError("beta must be nonnegative")
    rep = griffiths_check(n, grid, _coupling(P))
    return {"pass": rep.violations == 0, "report": rep.as_dict(), "beta_grid": grid}


def run_intermediate(P):
    from .gibbs_exact import intermediate_density
    from .model import k_of

    J, beta, N = _coupling(P), _beta(P), P["exact.N"]
    if N < 1 or 2 * N + 1 > P["exact.limit"]:
        raise UsageError("half-width must satisfy 1 <= 2N+1 <= limit")
    ks = range(k_of(N) + 1) if P["exact.k"] < 0 else [P["exact.k"]]
    rows = []
    for k in ks:
        if k > k_of(N):
            raise UsageError(f"k={k} exceeds k_N={k_of(N)}")
        r = intermediate_density(N, k, beta, J, limit=P["exact.limit"])
        rows.append({"k": k, "entropy": r.entropy, "neg_mean_W": r.neg_mean_W,
                     "neg_log_normalizer": r.neg_log_normalizer,
                     "identity_residual": r.identity_residual,
                     "telescoping_residual": r.telescoping_residual, "factors": r.factors})
    worst = max(max(r["identity_residual"], r["telescoping_residual"]) for r in rows)
    return {"pass": worst <= 1e-10, "N": N, "beta": beta, "worst_residual": worst, "rows": rows}


def _art_intermediate(res, d):
    from .io import write_rows_csv

    keys = ["k", "entropy", "neg_mean_W", "neg_log_normalizer", "identity_residual",
            "telescoping_residual"]
    return [write_rows_csv(d / "intermediate.csv", keys,
                           [[r[k] for k in keys] for r in res["rows"]])]


def run_summability(P):
    from .model import summability_report

    J = _coupling(P)
    rep = summability_report(J, P["model.threshold"])
    return {"pass": None, "coupling": J.ident, "report": rep.as_dict()}


def run_herbst(P):
    import numpy as np

    from .concentration import herbst_scan, random_functions

    m = _measure(P)
    b = _bundle(P, m)
    F, labels = random_functions(m, _family(P), _trials(P), P["sampler.seed"])
    grid = np.array(parse_range(P["concentration.lambda_grid"]))
    if np.any(grid <= 0) or np.any(grid > 1):
        raise UsageError("lambda grid must lie in (0, 1]")
    worst, bad, max_u0 = -np.inf, [], 0.0
    for row, label in zip(F, labels):
        s = herbst_scan(m, row, grid, b.D_lsi_bound, suac=b.suac)
        max_u0 = max(max_u0, abs(s.u0_extrapolated - s.u0))
        if s.slope_bound > 0:
            worst = max(worst, float(np.max(s.du)) / s.slope_bound)
        if s.violations:
            bad.append({"family": label, "lambdas": s.violations})
    return {"pass": not bad, "functions": len(F), "worst_slope_ratio": worst,
            "u0_extrapolation_error": max_u0, "violations": bad[:20], "constants": b.as_dict()}


def run_modulus(P):
    from .concentration import continuity_modulus

    J, beta = _coupling(P), _beta(P)
    D = P["concentration.constant"]
    if D <= 0:
        D = _bundle(P, _measure(P)).D_gcb
    rows = continuity_modulus(parse_range(P["concentration.n_range"], int), D, beta, J)
    return {"pass": None, "D": D, "rows": [r.__dict__ for r in rows]}


def _art_modulus(res, d):
    from .io import write_rows_csv

    return [write_rows_csv(d / "modulus.csv", ["n", "u", "v", "modulus"],
                           [[r["n"], r["u"], r["v"], r["modulus"]] for r in res["rows"]])]


RUNNERS = {
    "pressure": (run_pressure, _art_pressure),
    "eigenfunction": (run_eigenfunction, _art_eigenfunction),
    "susceptibility": (run_susceptibility, _art_susceptibility),
    "verify-lsi": (run_verify_lsi, None),
    "verify-gcb": (run_verify_gcb, None),
    "verify-mcb": (run_verify_mcb, None),
    "verify-griffiths": (run_verify_griffiths, None),
    "intermediate": (run_intermediate, _art_intermediate),
    "summability": (run_summability, None),
    "herbst": (run_herbst, None),
    "modulus": (run_modulus, _art_modulus),
}


def run_report(root: Path) -> dict:
    """Summary rows rebuilt from the stored manifests and results only."""
    from .io import read_json, write_rows_csv

    rows = []
    for man_path in sorted(root.glob("*/*/manifest.json")):
        man = read_json(man_path)
        res_path = man_path.parent / "result.json"
        res = read_json(res_path) if res_path.exists() else {}
        rows.append([man["run_id"], man_path.parent.name, man["command"], man["exit_code"],
                     res.get("pass"), man["finished"]])
    header = ["run_id", "attempt", "command", "exit_code", "pass", "finished"]
    path = write_rows_csv(root / "summary.csv", header, rows)
    return {"runs": len(rows), "summary": str(path)}


# ---------------------------------------------------------------------------
# driver

def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _out_root(P) -> Path:
    return Path(P["output.dir"] or os.environ.get(ENV_OUT) or DEFAULT_OUT)


def _next_attempt(run_root: Path) -> Path:
    run_root.mkdir(parents=True, exist_ok=True)
    taken = [int(p.name) for p in run_root.iterdir() if p.name.isdigit()]
    n = max(taken, default=0) + 1
    while True:
        d = run_root / f"{n:04d}"
        try:
            d.mkdir()
            return d
        except FileExistsError:
            n += 1


def _set_threads(threads):
    if threads is None:
        return
    if threads < 1:
        raise UsageError("--threads must be >= 1")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(threads)


def execute(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    ns = vars(args)
    command = ns.pop("command")
    config = ns.pop("config")
    threads = ns.pop("threads")
    _set_threads(threads)
    params = resolve(ns, config)
    P = {k: v["value"] for k, v in params.items()}
    root = _out_root(P)

    from .io import digest_file, digest_obj, read_json, write_json
    from .kernels import BACKEND

    if command == "report":
        res = run_report(root)
        print(json.dumps(res))
        return 0

    started = _now()
    inputs = {}
    for key in ("model.coupling_file",):
        if P[key]:
            try:
                inputs[P[key]] = digest_file(P[key])
            except OSError as err:
                raise UsageError(f"cannot read {P[key]}: {err}") from err
    # output location and caching do not change the result
    physics = {k: v for k, v in P.items() if not k.startswith("output.")}
    digest = digest_obj({"command": command, "params": physics, "inputs": inputs})
    run_id = f"{command}-{digest[:12]}"
    cache_path = root / ".cache" / f"{digest}.json"
    runner, artifacts = RUNNERS[command]
    cache_hit = bool(P["output.cache"]) and cache_path.exists()
    result = read_json(cache_path) if cache_hit else runner(P)
    run_dir = _next_attempt(root / run_id)
    outputs = [] if artifacts is None else [str(p) for p in artifacts(result, run_dir)]
    outputs.append(str(write_json(run_dir / "result.json", result)))
    if not cache_hit and P["output.cache"]:
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        write_json(cache_path, result)
    code = 1 if result.get("pass") is False else 0
    manifest = {
        "tool_version": __version__,
        "command": command,
        "argv": list(sys.argv[1:] if argv is None else argv),
        "run_id": run_id,
        "digest": digest,
        "parameters": params,
        "seeds": {"sampler.seed": P["sampler.seed"]},
        "started": started,
        "finished": _now(),
        "input_digests": inputs,
        "outputs": outputs,
        "cache_hit": cache_hit,
        "backend": BACKEND,
        "threads": threads,
        "exit_code": code,
    }
    write_json(run_dir / "manifest.json", manifest)
    summary = {k: v for k, v in result.items() if k not in ("h", "f", "nu", "rows")}
    summary.update({"run_dir": str(run_dir), "exit_code": code})
    from .io import to_json

    print(to_json(summary))
    return code


def main(argv=None) -> int:
    try:
        code = execute(argv)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        code = 2
    except SystemExit as err:  # argparse usage errors
        code = err.code if isinstance(err.code, int) else 2
    except Exception as err:
        from .model import SummabilityError

        if isinstance(err, SummabilityError):
            print(json.dumps({"error": "summability", "condition": err.condition,
                              "message": str(err)}), file=sys.stderr)
            code = 2
        elif isinstance(err, ValueError):
            print(f"error: {err}", file=sys.stderr)
            code = 2
        else:
            raise
    return code


if __name__ == "__main__":
    sys.exit(main())
