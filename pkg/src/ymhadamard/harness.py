"""Configuration, pipeline orchestration, reports and the command line."""

from __future__ import annotations

import os

# BLAS threads must be fixed before numpy loads its backend.
if "YMH_THREADS" in os.environ:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ["YMH_THREADS"])

import csv
import dataclasses
import json
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import click
import numpy as np
import yaml

from . import __version__
from .background import (constraint_residual, corrupt, evolve_background, make_cauchy_data)
from .diag import DiagonalizationResult, diagonalize, ker_orthogonality, nonexistence_witness, pn1_positivity
from .factor import (CutoffError, factorize, invertibility_margin, parametrix_residual,
                     residual_gain)
from .gauge import GaugeResult, run_gauge
from .liealg import get_algebra
from .spectral import ModeSpace
from .waveops import (G_sigma_forms, K_sigma_closed_form, K_sigma_numeric, adapted_transform, assemble_family,
                      build_gauge_background, cauchy_evolution, charge_form, gauss_symmetry_residual,
                      galerkin_gauss_symmetry, intertwining_residual, self_adjointness_residual)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class RunConfig:
    algebra: str = "su2"
    N: int = 12
    M: int = 4
    N_A: int = 2
    C: float = 4.0
    amplitude: float = 0.3
    e_amplitude: float | None = None
    seed: int = 0
    T: float = 0.5
    K: int = 256
    k_iters: int = 4
    R_init: float = 2.0
    R_max: float = 64.0
    ode_tol: float | None = 1e-8
    rank_tol: float = 1e-8
    profile: str = "poly7"
    verify_level: str = "fast"
    oracle_mass: float | None = None

    def __post_init__(self):
        if not self.N_A <= self.M < self.N:
            raise ValueError("config needs N_A <= M < N")
        if self.C < 1:
            raise ValueError("config needs C >= 1")
        if self.R_init < 1 or self.R_max < self.R_init:
            raise ValueError("config needs 1 <= R_init <= R_max")
        if self.verify_level not in ("fast", "full"):
            raise ValueError("verify_level must be 'fast' or 'full'")
        if self.oracle_mass is not None and self.amplitude != 0:
            raise ValueError("the oracle mass is only meaningful on the flat vacuum (amplitude 0)")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        flat = {}
        for key, val in d.items():
            if isinstance(val, dict):
                flat.update(val)
            else:
                flat[key] = val
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(flat) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**flat)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        return cls.from_dict(yaml.safe_load(Path(path).read_text()) or {})

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# identity name -> tolerance; every entry gates the exit code
TOLERANCES = {
    "constraint_max": 1e-8,
    "gauss_symmetry": 1e-11,
    "self_adjoint_scalar": 1e-10,
    "self_adjoint_vector": 1e-10,
    "Kd_K": 1e-12,
    "Kd_qadjoint": 1e-12,
    "R_F_symplectic": 1e-12,
    "sigma_G": 1e-12,
    "K_numeric": 1e-6,
    "intertwining": 1e-8,
    "T_Tinv": 1e-11,
    "T_charge": 1e-10,
    "Z_charge": 1e-10,
    "c_sum": 1e-10,
    "c_plus_idem": 1e-10,
    "c_minus_idem": 1e-10,
    "c_plus_qadj": 1e-10,
    "c_minus_qadj": 1e-10,
    "c_alt_formula": 1e-10,
    "lambda_diff_q": 1e-10,
    "lambda_plus_herm": 1e-12,
    "lambda_minus_herm": 1e-12,
    "lambda_from_T": 1e-10,
    "ker_orthogonality": 1e-9,
    "r_minus1_bound": 0.5,
    "Pi0_idem": 1e-10,
    "Pi0_K": 1e-11,
    "K_B0": 1e-11,
    "B0_K": 1e-10,
    "Pi_idem": 1e-10,
    "Pi_formulas": 1e-10,
    "Pi_K": 1e-10,
    "K_B": 1e-10,
    "B_K": 1e-10,
    "ct_sum": 1e-10,
    "ct_qadj": 1e-10,
    "ct_kerKd_invariance": 1e-9,
    "ct_K_strengthened": 1e-9,
    "ct_K_off_stabilizer": 1e-9,
    "decomposition_v": 1e-10,
    "R_complementarity": 1e-10,
    "lt_diff_q": 1e-10,
    "lt_herm": 1e-10,
    "iv_restriction": 1e-9,
    "gauge_null": 1e-9,
    "ker_Pi0_in_ran_K": 1e-8,
    "membership": 1e-7,
    "positivity_plus": 1e-8,
    "positivity_minus": 1e-8,
    "th_n2_positivity": 1e-8,
    "pn1_positivity": 1e-9,
    "parametrix": 10.0,
}

# reported but not gating: these are literal forms that cannot hold when
# K_Sigma has a kernel, or heuristic bounds
DIAGNOSTICS = ("B0_K_literal", "B_K_literal", "ct_K_literal")


class PipelineFailure(RuntimeError):
    def __init__(self, identity: str, value: float, tol: float):
        super().__init__(f"identity {identity!r} failed: {value:.3e} > {tol:.1e}")
        self.identity, self.value, self.tol = identity, value, tol


@dataclass
class PipelineState:
    config: RunConfig
    space: ModeSpace
    gb: object
    fams: dict
    factors: dict
    diags: dict
    gauge: GaugeResult | None
    R_used: float


class _Battery:
    def __init__(self):
        self.entries: dict[str, dict] = {}

    def add(self, name: str, value: float, tol: float | None = None, lower: bool = False):
        tol = TOLERANCES[name] if tol is None else tol
        value = float(value)
        ok = (value >= -tol) if lower else (value <= tol)
        self.entries[name] = {"residual": value, "tol": tol, "pass": bool(ok)}
        return ok

    def require(self, name: str, value: float, tol: float | None = None, lower: bool = False):
        if not self.add(name, value, tol, lower):
            e = self.entries[name]
            raise PipelineFailure(name, e["residual"], e["tol"])

    @property
    def passed(self) -> bool:
        return all(e["pass"] for e in self.entries.values())


def build_background(cfg: RunConfig):
    alg = get_algebra(cfg.algebra)
    space = ModeSpace(cfg.N, cfg.M, (("g", alg.dim),))
    init = make_cauchy_data(cfg.seed, cfg.N_A, cfg.amplitude, space, alg, e_amplitude=cfg.e_amplitude)
    fam = evolve_background(init, cfg.T, cfg.K, space, alg)
    return space, alg, init, fam


def _factor_diag(fam, cfg: RunConfig, R: float):
    res = factorize(fam, cfg.k_iters, R, cfg.profile, history_stride=max(1, cfg.K // 16))
    return res, diagonalize(res)


def run_pipeline(cfg: RunConfig, keep_state: bool = False):
    """background -> waveops -> factor -> diag -> gauge; returns (report, state)."""
    timing: dict[str, float] = {}
    tic = time.perf_counter()
    bat = _Battery()
    diagnostics: dict = {}

    # fail-fast: background and conventions
    space, alg, init, bfam = build_background(cfg)
    bat.require("constraint_max", float(np.max(bfam.residuals)))
    gb = build_gauge_background(bfam, space, alg)
    bat.require("gauss_symmetry", gauss_symmetry_residual(gb.dbar0, gb.adot))
    diagnostics["galerkin_gauss_symmetry"] = galerkin_gauss_symmetry(init, space, alg)
    diagnostics["pinch_deviation"] = gb.pinch_deviation()
    diagnostics["static"] = bool(gb.static)
    K, Kd = K_sigma_closed_form(gb)
    n = gb.n
    q0 = charge_form(np.ones(n))
    q1 = charge_form(np.concatenate([-np.ones(n), np.ones(n)]))
    oracle = cfg.oracle_mass is not None
    if not oracle:
        bat.require("Kd_K", float(np.linalg.norm(Kd @ K, 2) / max(np.linalg.norm(K, 2) ** 2, 1.0)))
        bat.require("Kd_qadjoint", float(np.linalg.norm(Kd - np.linalg.solve(q0, K.conj().T @ q1), 2)))
        tr = adapted_transform(gb, cfg.C)
        bat.require("R_F_symplectic", float(np.linalg.norm(tr.R_F.conj().T @ q1 @ tr.R_F - q1, 2)))
    G = G_sigma_forms(n, q1)
    bat.require("sigma_G", G.residual)
    timing["background"] = time.perf_counter() - tic

    tic = time.perf_counter()
    kinds = ("scalar",) if oracle else ("scalar", "vector")
    rho = cfg.oracle_mass ** 2 if oracle else 0.0
    fams = {k: assemble_family(gb, k, cfg.C, rho if k == "scalar" else 0.0) for k in kinds}
    for k, f in fams.items():
        f.meta["amplitude"] = cfg.amplitude
        bat.require(f"self_adjoint_{k}", self_adjointness_residual(f))
    if cfg.verify_level == "full" and not oracle:
        Kn = K_sigma_numeric(gb, fams["scalar"])
        bat.require("K_numeric", float(np.linalg.norm(Kn - K) / np.linalg.norm(K)))
        bat.require("intertwining", intertwining_residual(gb, n_tests=10))
    timing["waveops"] = time.perf_counter() - tic

    R = cfg.R_init
    while True:
        try:
            tic = time.perf_counter()
            factors, diags = {}, {}
            for k, f in fams.items():
                factors[k], diags[k] = _factor_diag(f, cfg, R)
            timing["factor_diag"] = time.perf_counter() - tic
            tic = time.perf_counter()
            gauge = None
            if not oracle:
                gauge = run_gauge(gb, cfg.C, diags["scalar"], diags["vector"], cfg.rank_tol)
            timing["gauge"] = time.perf_counter() - tic
            break
        except CutoffError as exc:
            if 2 * R > cfg.R_max:
                raise
            log.warning("cutoff precondition failed at R=%g (%s); retrying with R=%g", R, exc, 2 * R)
            R *= 2

    report: dict = {"schema_version": SCHEMA_VERSION, "version": __version__, "config": cfg.to_dict(),
                    "R_used": R, "sigma_G": G.sigma}
    fac_rep = {}
    for k in kinds:
        res, d = factors[k], diags[k]
        _add_diag(bat, d, k)
        bat.add(f"r_minus1_bound_{k}", float(np.max([np.linalg.norm(r, 2) for r in _nodes(res.r_minus1)])),
                TOLERANCES["r_minus1_bound"])
        pn1 = pn1_positivity(d)
        bat.add(f"pn1_positivity_{k}", min(pn1["plus"], pn1["minus"]), TOLERANCES["pn1_positivity"], lower=True)
        w = nonexistence_witness(d)
        fac_rep[k] = {
            "residual_history": res.residual_history.tolist(),
            "residual_R": res.residual_R.tolist(),
            "gain_s0": residual_gain(res.residual_history, 0).tolist(),
            "lambda_schedule": sorted(set(float(x) for x in res.lambda_schedule)),
            "invertibility_margin": invertibility_margin(res),
            "r_minus1_norm": pn1["r_norm"],
            "witness": {"normalized": w.normalized, "rayleigh": w.rayleigh, "min_eig_sum": w.min_eig},
        }
        if cfg.verify_level == "full":
            U = cauchy_evolution(fams[k], len(fams[k].ts) - 1, ode_tol=cfg.ode_tol)
            pr = parametrix_residual(res, len(fams[k].ts) - 1, U, 2)
            floor = max(res.residual_R[2], 1e-300)
            fac_rep[k]["parametrix_residual_s2"] = pr
            bat.add(f"parametrix_{k}", pr / floor, TOLERANCES["parametrix"])
    report["factor"] = fac_rep

    if gauge is not None:
        for name, val in gauge.battery.items():
            if name in DIAGNOSTICS:
                diagnostics[name] = val
            else:
                bat.add(name, val)
        bat.add("membership", gauge.membership)
        p = gauge.positivity
        bat.add("positivity_plus", p["min_plus_rel"], lower=True)
        bat.add("positivity_minus", p["min_minus_rel"], lower=True)
        bat.add("th_n2_positivity", min(p["th_n2_min_plus_rel"], p["th_n2_min_minus_rel"]), lower=True)
        bat.entries["quotient_positive"] = {"residual": p["quotient_min_sum"], "tol": 0.0,
                                            "pass": bool(p["quotient_min_sum"] > 0)}
        report["gauge"] = {"dims": gauge.dims, "audit": gauge.gs.audit, "positivity": p, "decay": gauge.decay}
        reg = np.array(gauge.decay["c_reg_order_norms"])
        rn = np.array(gauge.decay["order_norms"])
        diagnostics["c_reg_over_R"] = (reg / np.maximum(rn, 1e-300)).tolist()
    report["identities"] = bat.entries
    report["diagnostics"] = diagnostics
    report["passed"] = bat.passed
    report["timing"] = timing
    state = PipelineState(cfg, space, gb, fams, factors, diags, gauge, R) if keep_state else None
    return report, state


def _nodes(stack: np.ndarray):
    return stack[:1] if stack.strides[0] == 0 else stack


def _add_diag(bat: _Battery, d: DiagonalizationResult, kind: str):
    for name, val in d.residuals.items():
        bat.add(f"{name}_{kind}", val, TOLERANCES[name])
    bat.add(f"ker_orthogonality_{kind}", ker_orthogonality(d), TOLERANCES["ker_orthogonality"])


def report_json(report: dict, include_timing: bool = True) -> str:
    rep = dict(report)
    if not include_timing:
        rep.pop("timing", None)
    return json.dumps(rep, indent=2, sort_keys=True, default=_json_default)


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x)}")


def write_outputs(report: dict, state: PipelineState | None, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report_json(report))
    for kind, fr in report.get("factor", {}).items():
        _write_history(out / f"residual_history_{kind}.csv", fr["residual_history"])
    if state is not None:
        for kind, d in state.diags.items():
            _write_eigs(out / f"lambda_eigs_{kind}.csv", {"plus": d.lambda_plus, "minus": d.lambda_minus})
    if "gauge" in report:
        p = report["gauge"]["positivity"]
        with open(out / "positivity_spectrum.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["form", "index", "eigenvalue"])
            for key in ("eig_plus_kerKd", "eig_minus_kerKd", "quotient_sum_eigs"):
                for i, v in enumerate(p[key]):
                    w.writerow([key, i, repr(float(v))])
        dec = report["gauge"]["decay"]
        with open(out / "decay_report.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "order_norm_R", "order_norm_c_reg"])
            for s, (a, b) in enumerate(zip(dec["order_norms"], dec["c_reg_order_norms"])):
                w.writerow([s, repr(float(a)), repr(float(b))])


def _write_history(path: Path, hist) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration"] + [f"s{s}" for s in range(len(hist[0]))])
        for j, row in enumerate(hist):
            w.writerow([j] + [repr(float(x)) for x in row])


def _write_eigs(path: Path, forms: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["form", "index", "eigenvalue"])
        for name, L in forms.items():
            for i, v in enumerate(np.linalg.eigvalsh((L + L.conj().T) / 2)):
                w.writerow([name, i, repr(float(v))])


def convergence_study(base: RunConfig, Ns=(8, 12, 16), ks=(4,), Rs=(2.0,)) -> list[dict]:
    """One row per (N, k, R) cell with residual floors, R_{-infty} decay and positivity."""
    rows = []
    for N in Ns:
        M = max(base.M, base.N_A + 1) if N > base.M else N - 1
        M = min(M, N - 1)
        for k in ks:
            for R in Rs:
                cfg = dataclasses.replace(base, N=N, M=M, k_iters=k, R_init=R, verify_level="fast")
                rep, _ = run_pipeline(cfg)
                row = {"N": N, "M": M, "k": k, "R": R, "R_used": rep["R_used"], "passed": rep["passed"]}
                fv = rep["factor"].get("vector", rep["factor"]["scalar"])
                for s, v in enumerate(fv["residual_history"][-1]):
                    row[f"residual_s{s}"] = v
                if "gauge" in rep:
                    row["decay_exponent"] = rep["gauge"]["decay"]["decay_exponent"]
                    row["R_inf_s0"] = rep["gauge"]["decay"]["order_norms"][0]
                    row["min_positivity"] = min(rep["gauge"]["positivity"]["min_plus_rel"],
                                                rep["gauge"]["positivity"]["min_minus_rel"])
                rows.append(row)
    return rows


def fit_slope(x, y) -> float:
    """Least-squares slope of log y against log x."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def write_rows(path: Path, rows: list[dict]) -> None:
    keys = sorted({k for r in rows for k in r}, key=lambda k: (k not in ("N", "M", "k", "R"), k))
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        w.writerows(rows)


# ----------------------------------------------------------------------------- CLI

def _config_option(f):
    f = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
                     help="YAML run configuration (defaults to the desk-scale profile).")(f)
    f = click.option("--out", "out_dir", type=click.Path(file_okay=False), default="ymh_out", show_default=True)(f)
    return f


def _load(config_path) -> RunConfig:
    return RunConfig.load(config_path) if config_path else RunConfig()


@click.group()
@click.option("-v", "--verbose", is_flag=True)
def main(verbose):
    """Gauge-invariant two-point functions for linearized Yang-Mills on the circle."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")


@main.command()
@_config_option
def run(config_path, out_dir):
    """Full pipeline; writes report.json and CSVs. Exit 0 iff every battery passes."""
    cfg = _load(config_path)
    try:
        rep, st = run_pipeline(cfg, keep_state=True)
    except (PipelineFailure, CutoffError, RuntimeError, ValueError) as exc:
        click.echo(json.dumps({"passed": False, "error": str(exc)}), err=True)
        sys.exit(1)
    write_outputs(rep, st, Path(out_dir))
    failed = [k for k, e in rep["identities"].items() if not e["pass"]]
    click.echo(f"R used {rep['R_used']}; {len(rep['identities']) - len(failed)} identities passed, "
               f"{len(failed)} failed")
    for k in failed:
        e = rep["identities"][k]
        click.echo(f"  FAIL {k}: {e['residual']:.3e} (tol {e['tol']:.1e})")
    sys.exit(0 if rep["passed"] else 1)


@main.command()
@click.option("--grid", "grid_path", type=click.Path(exists=True, dir_okay=False), required=True,
              help="YAML with optional lists N, k, R and a base config table.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default="ymh_study", show_default=True)
def study(grid_path, out_dir):
    """Convergence study over a grid of N, k and R."""
    g = yaml.safe_load(Path(grid_path).read_text()) or {}
    base = RunConfig.from_dict(g.get("base", {}))
    rows = convergence_study(base, tuple(g.get("N", [8, 12, 16])), tuple(g.get("k", [base.k_iters])),
                             tuple(float(r) for r in g.get("R", [base.R_init])))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_rows(out / "study.csv", rows)
    summary = {"cells": len(rows), "all_passed": all(r["passed"] for r in rows)}
    ex = [r["decay_exponent"] for r in rows if "decay_exponent" in r]
    if ex:
        summary["min_decay_exponent"] = min(ex)
    Ns = sorted({r["N"] for r in rows})
    if len(Ns) > 1:
        floors = [min(r["residual_s0"] for r in rows if r["N"] == N) for N in Ns]
        summary["residual_floor_slope_in_N"] = fit_slope(Ns, floors)
    (out / "study.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    click.echo(json.dumps(summary, sort_keys=True))


@main.command()
@click.option("--level", type=click.Choice(["fast", "full"]), default="fast", show_default=True)
def check(level):
    """Run the identity batteries on built-in flat and generic configurations."""
    cfgs = {"flat": RunConfig(amplitude=0.0, verify_level=level),
            "generic": RunConfig(verify_level=level)}
    if level == "fast":
        cfgs = {k: dataclasses.replace(c, N=8, M=3, K=64) for k, c in cfgs.items()}
    ok = True
    for name, cfg in cfgs.items():
        rep, _ = run_pipeline(cfg)
        failed = [k for k, e in rep["identities"].items() if not e["pass"]]
        click.echo(f"{name}: {'PASS' if not failed else 'FAIL ' + ', '.join(failed)}")
        ok &= not failed
    sys.exit(0 if ok else 1)


@main.command()
@_config_option
def background(config_path, out_dir):
    """Evolve the background and report constraint and Gauss-law residuals."""
    cfg = _load(config_path)
    space, alg, init, fam = build_background(cfg)
    gb = build_gauge_background(fam, space, alg)
    bad = corrupt(init, space, alg, seed=cfg.seed + 1)
    rep = {"constraint_max": float(np.max(fam.residuals)),
           "gauss_symmetry": gauss_symmetry_residual(gb.dbar0, gb.adot),
           "galerkin_gauss_symmetry": galerkin_gauss_symmetry(init, space, alg),
           "pinch_deviation": gb.pinch_deviation(),
           "static": bool(init.static),
           "negative_control": {"constraint": constraint_residual(bad, space, alg),
                                "galerkin_gauss_symmetry": galerkin_gauss_symmetry(bad, space, alg)}}
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "constraint.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "residual"])
        for t, r in zip(fam.ts, fam.residuals):
            w.writerow([repr(float(t)), repr(float(r))])
    (out / "background.json").write_text(json.dumps(rep, indent=2, sort_keys=True))
    click.echo(json.dumps(rep, sort_keys=True))
    sys.exit(0 if rep["constraint_max"] <= TOLERANCES["constraint_max"] else 1)


@main.command()
@_config_option
def factor(config_path, out_dir):
    """Factorization only; writes residual_history CSVs (iteration x order s)."""
    cfg = _load(config_path)
    space, alg, init, bfam = build_background(cfg)
    gb = build_gauge_background(bfam, space, alg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kinds = ("scalar",) if cfg.oracle_mass is not None else ("scalar", "vector")
    rho = cfg.oracle_mass ** 2 if cfg.oracle_mass is not None else 0.0
    for k in kinds:
        f = assemble_family(gb, k, cfg.C, rho if k == "scalar" else 0.0)
        res = factorize(f, cfg.k_iters, cfg.R_init, cfg.profile, history_stride=max(1, cfg.K // 16))
        _write_history(out / f"residual_history_{k}.csv", res.residual_history.tolist())
        click.echo(f"{k}: final residual s0..s4 = {np.array2string(res.residual_history[-1], precision=3)}")


@main.command()
@_config_option
def diag(config_path, out_dir):
    """Diagonalization; writes lambda+- eigenvalue CSVs and the witness report."""
    cfg = _load(config_path)
    space, alg, init, bfam = build_background(cfg)
    gb = build_gauge_background(bfam, space, alg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kinds = ("scalar",) if cfg.oracle_mass is not None else ("scalar", "vector")
    rho = cfg.oracle_mass ** 2 if cfg.oracle_mass is not None else 0.0
    rep = {}
    for k in kinds:
        f = assemble_family(gb, k, cfg.C, rho if k == "scalar" else 0.0)
        _, d = _factor_diag(f, cfg, cfg.R_init)
        _write_eigs(out / f"lambda_eigs_{k}.csv", {"plus": d.lambda_plus, "minus": d.lambda_minus})
        w = nonexistence_witness(d)
        rep[k] = {"residuals": d.residuals, "witness_normalized": w.normalized,
                  "witness_rayleigh": w.rayleigh, "min_eig_sum": w.min_eig}
    (out / "witness.json").write_text(json.dumps(rep, indent=2, sort_keys=True))
    click.echo(json.dumps({k: {"witness_normalized": v["witness_normalized"], "min_eig_sum": v["min_eig_sum"]}
                           for k, v in rep.items()}, sort_keys=True))


@main.command()
@_config_option
def gauge(config_path, out_dir):
    """Full pipeline with gauge outputs: positivity spectrum, identity battery and decay report."""
    cfg = _load(config_path)
    if cfg.oracle_mass is not None:
        raise click.UsageError("the gauge stage needs the massless vector pipeline")
    rep, st = run_pipeline(cfg, keep_state=True)
    write_outputs(rep, st, Path(out_dir))
    (Path(out_dir) / "battery.json").write_text(json.dumps(rep["identities"], indent=2, sort_keys=True))
    p = rep["gauge"]["positivity"]
    click.echo(json.dumps({"min_plus_rel": p["min_plus_rel"], "min_minus_rel": p["min_minus_rel"],
                           "quotient_min_sum": p["quotient_min_sum"], "dims": rep["gauge"]["dims"],
                           "passed": rep["passed"]}, sort_keys=True))
    sys.exit(0 if rep["passed"] else 1)


if __name__ == "__main__":
    main()
