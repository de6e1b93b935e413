"""Command-line front end.

Exit codes: 0 when every check passed, 2 when a check failed (the report is
still written), 1 for usage or configuration errors.  Values resolve as
flags > ``--config`` file (``key = value`` lines) > defaults.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import riesz_cert as rc
from . import sidon_solver as ss
from .martingale import mds_extract, mds_invariants, riesz_mass_check
from .measure_core import uniform_space
from .schema import DECAY_CSV_COLUMNS, LAMBDA_CSV_COLUMNS, SCHEMA_VERSION
from .systems import (
    DecayRow,
    OrthoSystem,
    build_counterexample,
    ce_decay_row,
    ce_phi_sup_norms,
    ce_sup_norm,
    decay_coefficients,
    rademacher_system,
    walsh_system,
)

SUBCOMMANDS = ("ce-verify", "ce-decay", "mds", "riesz-cert", "riesz-verify", "sidon",
               "lambda-sweep", "rad-sidon", "compare-averages", "bridge-check")

# name -> (type, default); None defaults are filled per subcommand
OPTIONS = {
    "n": (int, None),
    "n_min": (int, 64),
    "n_max": (int, 2**18),
    "log_step": (float, 4.0),
    "epsilon": (float, 0.25),
    "delta": (float, None),
    "c": (float, None),
    "m": (int, None),
    "seed": (int, 0),
    "backend": (str, None),
    "system": (str, None),
    "samples": (int, 10_000),
    "probes": (int, 16),
    "p": (str, "2,4,8,16"),
    "method": (str, "exact"),
    "trials": (int, 50),
    "k": (int, 5),
    "cert": (str, None),
    "out": (str, None),
    "csv": (str, None),
    "checkpoint": (str, None),
}

PER_COMMAND = {
    "ce-verify": {"n": 8, "backend": "dense"},
    "ce-decay": {"backend": "structured"},
    "mds": {"n": 10, "system": "ce", "backend": "dense"},
    "riesz-cert": {"n": 4, "m": 3, "system": "random", "epsilon": 0.5},
    "riesz-verify": {},
    "sidon": {"n": 4, "m": 3, "system": "random"},
    "lambda-sweep": {"n": 10, "system": "ce"},
    "rad-sidon": {"n": 8, "system": "rademacher", "samples": 2000},
    "compare-averages": {"n": 10, "system": "ce"},
    "bridge-check": {"n": 8, "system": "ce"},
}


class UsageError(Exception):
    def __init__(self, message: str, reported: bool = False):
        super().__init__(message)
        self.reported = reported


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise UsageError(message, reported=True)


def _build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    for name, (typ, _) in OPTIONS.items():
        flag = "--" + name.replace("_", "-")
        if name == "log_step":
            common.add_argument(flag, type=float, nargs="?", const=4.0, default=argparse.SUPPRESS,
                                help="geometric factor between swept n (flag alone: 4)")
        elif name == "backend":
            common.add_argument(flag, choices=("dense", "structured"), default=argparse.SUPPRESS)
        elif name == "c":
            common.add_argument("--c", "--C", dest="c", type=float, default=argparse.SUPPRESS)
        else:
            common.add_argument(flag, dest=name, type=typ, default=argparse.SUPPRESS)
    common.add_argument("--config", default=None, help="key = value file")
    parser = _Parser(prog="sidonlab", description="Sidon-constant laboratory")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _read_config(path: str) -> dict:
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for num, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{num}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_").lower()
        if key not in OPTIONS:
            raise UsageError(f"{path}:{num}: unknown key {key!r}")
        typ = OPTIONS[key][0]
        try:
            out[key] = typ(value)
        except ValueError as exc:
            raise UsageError(f"{path}:{num}: bad value for {key}: {value!r}") from exc
    return out


def resolve_config(argv) -> dict:
    args = _build_parser().parse_args(argv)
    cmd = args.subcommand
    cfg = {k: d for k, (_, d) in OPTIONS.items()}
    cfg.update(PER_COMMAND[cmd])
    if args.config:
        cfg.update(_read_config(args.config))
    for k in OPTIONS:
        if hasattr(args, k):
            cfg[k] = getattr(args, k)
    cfg["subcommand"] = cmd
    if cfg["out"] is None:
        cfg["out"] = f"{cmd}.json"
    return cfg


# --- helpers ----------------------------------------------------------------------------


def _check(name, value, tolerance, passed, assertion) -> dict:
    return {"name": name, "value": value, "tolerance": tolerance, "passed": bool(passed),
            "assertion": assertion}


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        # strict JSON has no Infinity/NaN literals
        return x if math.isfinite(x) else str(x)
    if isinstance(x, (complex, np.complexfloating)):
        return [_clean(x.real), _clean(x.imag)]
    return x


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def system_descriptor(cfg: dict) -> dict:
    kind = cfg["system"]
    d = {"kind": kind, "n": cfg["n"], "seed": cfg["seed"]}
    if kind == "random":
        d["m"] = cfg["m"]
    return d


def build_system(desc: dict) -> OrthoSystem:
    kind, n = desc["kind"], int(desc["n"])
    if kind == "ce":
        return build_counterexample(n, seed=desc.get("seed", 0)).system()
    if kind == "rademacher":
        return rademacher_system(n)
    if kind == "walsh":
        return walsh_system(n.bit_length(), n)
    if kind == "random":
        N = 2 ** int(desc["m"])
        if n > N:
            raise ValueError(f"random system needs n <= 2**m = {N}")
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(desc.get("seed", 0))))
        q, _ = np.linalg.qr(rng.standard_normal((N, N)))
        return OrthoSystem(uniform_space(N), q[:, :n].T * math.sqrt(N), None, None,
                           f"random(n={n},N={N})")
    raise ValueError(f"unknown system kind {kind!r}")


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def _decay_ns(lo: int, hi: int, factor: float) -> list[int]:
    if factor <= 1:
        raise ValueError("--log-step factor must exceed 1")
    out, n = [], float(lo)
    while round(n) <= hi:
        if not out or round(n) != out[-1]:
            out.append(int(round(n)))
        n *= factor
    return out


def _write_csv(path: str, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _csv_path(cfg: dict) -> str:
    return cfg["csv"] or str(Path(cfg["out"]).with_suffix(".csv"))


# --- subcommands --------------------------------------------------------------------------


def cmd_ce_verify(cfg):
    n = cfg["n"]
    ce = build_counterexample(n, backend=cfg["backend"], seed=cfg["seed"])
    res = {"n": n, "backend": ce.backend, "sign_source": ce.sigma.source,
           "flatness": ce.sigma.flatness_bound}
    checks = []
    sups = ce_phi_sup_norms(ce)
    res["phi_sup_norms"] = sups
    checks.append(_check("phi_i_sup", float(sups[1:].max()), 1e-12, sups[1:].max() <= 2 + 1e-12,
                         "systems.ce_phi_sup_norms: ||phi_i||_inf <= 2 for i >= 1"))
    if n >= 64:
        checks.append(_check("phi_0_sup", float(sups[0]), 0.0, sups[0] <= 7,
                             "systems.ce_phi_sup_norms: ||phi_0||_inf <= 7"))
    if ce.backend == "dense":
        G = ce.system().gram()
        off = float(np.abs(G - np.diag(np.diag(G))).max())
        diag = float(np.abs(np.diag(G) - 1).max())
        res["gram_max_offdiag"] = off
        res["gram_max_diag_error"] = diag
        checks.append(_check("gram_max_offdiag", off, 1e-9, off <= 1e-9, "OrthoSystem.gram"))
        checks.append(_check("gram_max_diag_error", diag, 1e-9, diag <= 1e-9, "OrthoSystem.gram"))
        st = build_counterexample(n, ce.sigma, "structured")
        a = decay_coefficients(n)
        diff = abs(ce_sup_norm(ce, a) - ce_sup_norm(st, a))
        res["backend_sup_diff"] = diff
        checks.append(_check("backend_agreement", diff, 1e-9, diff <= 1e-9,
                             "systems.ce_sup_norm dense vs structured"))
    return res, checks


def _decay_row_dict(r: DecayRow) -> dict:
    return {"n": r.n, "log_n": r.log_n, "sup_norm": r.sup_norm, "l1_mass": r.l1_mass,
            "d_n": r.d_n, "backend": r.backend, "sign_source": r.sign_source,
            "flatness": r.flatness, "ratio": r.ratio}


def cmd_ce_decay(cfg):
    ns = _decay_ns(cfg["n_min"], cfg["n_max"], cfg["log_step"])
    ckpt = Path(cfg["checkpoint"] or str(Path(cfg["out"]).with_suffix(".ckpt.jsonl")))
    key = {"backend": cfg["backend"], "seed": cfg["seed"]}
    done = {}
    if ckpt.exists():
        for line in ckpt.read_text(encoding="utf-8").splitlines():
            rec = json.loads(line)
            if rec.get("key") == key:
                done[rec["row"]["n"]] = rec["row"]
    rows = []
    with open(ckpt, "a", encoding="utf-8") as fh:
        for n in ns:
            if n in done:
                rows.append(done[n])
                continue
            ce = build_counterexample(n, backend=cfg["backend"], seed=cfg["seed"])
            row = _clean(_decay_row_dict(ce_decay_row(ce)))
            fh.write(json.dumps({"key": key, "row": row}, sort_keys=True) + "\n")
            fh.flush()
            rows.append(row)
    _write_csv(_csv_path(cfg), DECAY_CSV_COLUMNS, [[r[c] for c in DECAY_CSV_COLUMNS] for r in rows])
    dmax = max(r["d_n"] for r in rows)
    ratios = [r["ratio"] for r in rows]
    rise = max((b - a for a, b in zip(ratios, ratios[1:])), default=-math.inf)
    checks = [
        _check("d_n_max", dmax, 0.0, dmax <= 10, "systems.ce_decay_row: d(n) <= 10"),
        _check("ratio_monotone_max_increase", rise, 1e-9, rise <= 1e-9,
               "systems.DecayRow.ratio non-increasing in n"),
    ]
    return {"rows": rows, "csv": _csv_path(cfg), "checkpoint": str(ckpt)}, checks


def _mds_system(cfg):
    desc = system_descriptor(cfg)
    sys_ = build_system(desc)
    if not sys_.is_real:
        sys_ = sys_.real_part()
    return desc, sys_


def cmd_mds(cfg):
    desc, sys_ = _mds_system(cfg)
    C = cfg["c"] or float(sys_.sup_norms().max())
    mds = mds_extract(sys_, cfg["epsilon"], C=C)
    inv = mds_invariants(mds, sys_)
    Cr = max(C, mds.theta_sup)
    mass = riesz_mass_check(mds, Cr, 20, cfg["seed"])
    checks = [
        _check("max_atom_mean", inv["max_atom_mean"], 1e-10, inv["max_atom_mean"] <= 1e-10,
               "martingale.mds_invariants: atom-wise zero means"),
        _check("max_l1_error", inv["max_l1_error"], cfg["epsilon"],
               inv["max_l1_error"] <= cfg["epsilon"], "martingale.mds_invariants: ||phi - theta||_1"),
        _check("atom_growth", inv["atom_growth_ok"], None, inv["atom_growth_ok"],
               "martingale.mds_invariants: atom_count <= V^t"),
        _check("riesz_mass_max_deviation", mass["max_deviation"], 1e-9, mass["passed"],
               "martingale.riesz_mass_check"),
    ]
    return {"system": desc, "bound_C": C, "mds": mds.to_dict(), "invariants": inv,
            "riesz_mass": mass, "riesz_C": Cr}, checks


def _coeffs(cfg, n):
    return _rng(cfg["seed"] + 1).standard_normal(n)


def cmd_riesz_cert(cfg):
    desc, sys_ = _mds_system(cfg)
    a = _coeffs(cfg, sys_.n)
    cert = rc.five_fold_lower_bound(sys_, a, cfg["epsilon"], cfg["delta"], cfg["c"], cfg["seed"])
    res = {"system": desc, "certificate": cert.to_dict()}
    checks = [_check("mu_mass", cert.mu_mass, 1e-9, abs(cert.mu_mass - 1) <= 1e-9,
                     "riesz_cert.five_fold_lower_bound: total mass of mu")]
    N = sys_.space.point_count
    if N**5 <= 2**24:
        from .systems import tensor_system
        sup = float(np.abs(tensor_system(sys_, 5).combination_values(a)).max())
        res["bruteforce_sup"] = sup
        checks.append(_check("certificate_soundness", sup - cert.certified_lower, 0.0,
                             cert.certified_lower <= sup + 1e-12,
                             "certified_lower <= dense five-fold sup"))
    return res, checks


def cmd_riesz_verify(cfg):
    if not cfg["cert"]:
        raise UsageError("riesz-verify needs --cert PATH")
    try:
        data = json.loads(Path(cfg["cert"]).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read certificate: {exc}") from exc
    body = data.get("results", data)
    if "certificate" not in body or "system" not in body:
        raise UsageError("certificate file lacks 'certificate' or 'system'")
    sys_ = build_system(body["system"])
    out = rc.verify_certificate(sys_, body["certificate"])
    checks = [_check("certified_lower_roundtrip", out["abs_diff"], 1e-9, out["passed"],
                     "riesz_cert.verify_certificate")]
    return {"system": body["system"], "verification": out}, checks


def cmd_sidon(cfg):
    desc = system_descriptor(cfg)
    sys_ = build_system(desc)
    method = cfg["method"]
    if method == "exact":
        rep = ss.sidon_constant_exact(sys_)
    elif method == "brute":
        rep = ss.sidon_constant_bruteforce(sys_)
    elif method == "estimate":
        rep = ss.sidon_constant_estimate(sys_, seed=cfg["seed"])
    else:
        raise UsageError(f"unknown --method {method!r} (exact|brute|estimate)")
    again = ss.witness_ratio(sys_, rep.witness)
    checks = [_check("witness_reproduces", abs(again - rep.gamma_upper), 1e-9,
                     abs(again - rep.gamma_upper) <= 1e-9, "sidon_solver.witness_ratio")]
    if rep.gamma_exact is not None:
        checks.append(_check("upper_ge_exact", rep.gamma_upper - rep.gamma_exact, 1e-9,
                             rep.gamma_upper >= rep.gamma_exact - 1e-9, "SidonReport invariant"))
    return {"system": desc, "report": rep.to_dict()}, checks


def cmd_lambda_sweep(cfg):
    desc = system_descriptor(cfg)
    sys_ = build_system(desc)
    try:
        ps = [float(x) for x in str(cfg["p"]).split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad --p list: {cfg['p']!r}") from exc
    rows, reps, worst = [], [], 0.0
    for p in ps:
        r = ss.lambda_p_probe(sys_, p, cfg["probes"], cfg["seed"])
        a = np.asarray(r.best_direction)
        worst = max(worst, abs(ss._lp_ratio(sys_, a, p) - r.mp_lower))
        reps.append(r.to_dict())
        rows.append([p, r.mp_lower, r.mp_lower / math.sqrt(p), r.probe_count])
    _write_csv(_csv_path(cfg), LAMBDA_CSV_COLUMNS, rows)
    checks = [_check("best_direction_reproduces", worst, 1e-9, worst <= 1e-9,
                     "sidon_solver.lambda_p_probe")]
    return {"system": desc, "reports": reps, "csv": _csv_path(cfg)}, checks


def cmd_rad_sidon(cfg):
    desc = system_descriptor(cfg)
    sys_ = build_system(desc)
    lam = np.ones(sys_.n)
    rep = rc.rademacher_sidon_estimate(sys_, lam, cfg["samples"], cfg["seed"])
    res = {"system": desc, "estimate": rep.to_dict()}
    M = float(sys_.sup_norms().max())
    checks = [_check("estimate_within_M", rep.system_average, M,
                     0 < rep.system_average <= M + 1e-12, "sup |sum r lambda phi| <= M sum|lambda|")]
    if sys_.n <= 12:
        ex = rc.rademacher_sidon_exhaustive(sys_, lam)
        se = rep.standard_errors["system"]
        tol = max(3 * se, 1e-12)
        res["exhaustive"] = ex
        checks.append(_check("matches_exhaustive", abs(rep.system_average - ex), tol,
                             abs(rep.system_average - ex) <= tol,
                             "riesz_cert.rademacher_sidon_exhaustive within 3 SE"))
    return res, checks


def cmd_compare_averages(cfg):
    desc = system_descriptor(cfg)
    sys_ = build_system(desc)
    rep = rc.compare_averages(sys_, sys_.values, cfg["samples"], cfg["seed"])
    M = float(sys_.sup_norms().max())
    C = cfg["c"] or ss.psi2_probe(sys_, cfg["probes"], cfg["seed"])["psi2_lower"]
    budget = C * M
    checks = [_check("ratio_below_CM", rep.ratio, budget, rep.ratio <= budget,
                     "system average <= C M rademacher average (C from psi2_probe unless --c)")]
    return {"system": desc, "averages": rep.to_dict(), "C": C, "M": M, "budget": budget}, checks


def cmd_bridge_check(cfg):
    desc = system_descriptor(cfg)
    sys_ = build_system(desc)
    rng = _rng(cfg["seed"])
    slacks = []
    for _ in range(cfg["trials"]):
        lhs, rhs = rc.l2_linfty_bridge(sys_, rng.standard_normal(sys_.n))
        slacks.append(rhs - lhs)
    worst = float(min(slacks))
    checks = [_check("min_slack", worst, 1e-10, worst >= -1e-10, "riesz_cert.l2_linfty_bridge")]
    return {"system": desc, "trials": cfg["trials"], "min_slack": worst}, checks


HANDLERS = {
    "ce-verify": cmd_ce_verify,
    "ce-decay": cmd_ce_decay,
    "mds": cmd_mds,
    "riesz-cert": cmd_riesz_cert,
    "riesz-verify": cmd_riesz_verify,
    "sidon": cmd_sidon,
    "lambda-sweep": cmd_lambda_sweep,
    "rad-sidon": cmd_rad_sidon,
    "compare-averages": cmd_compare_averages,
    "bridge-check": cmd_bridge_check,
}


def run(argv=None) -> int:
    try:
        cfg = resolve_config(argv)
        results, checks = HANDLERS[cfg["subcommand"]](cfg)
    except UsageError as exc:
        if not exc.reported:
            _build_parser().print_usage(sys.stderr)
            sys.stderr.write(f"sidonlab: error: {exc}\n")
        return 1
    except (ValueError, ArithmeticError) as exc:
        sys.stderr.write(f"sidonlab: error: {exc}\n")
        return 1
    passed = all(c["passed"] for c in checks)
    report = {
        "schema_version": SCHEMA_VERSION,
        "subcommand": cfg["subcommand"],
        "config": {k: v for k, v in sorted(cfg.items())},
        "results": results,
        "checks": checks,
        "passed": passed,
    }
    Path(cfg["out"]).write_text(dumps(report), encoding="utf-8")
    return 0 if passed else 2


def main(argv=None) -> int:
    return run(sys.argv[1:] if argv is None else argv)
