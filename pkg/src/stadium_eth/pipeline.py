"""Command implementations behind the CLI: solve, eth, semiclassics, berry, compare.

Every command writes into one output directory. Files are written through a
temporary name and renamed into place, and each one records the config hash.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from . import berry as br
from . import eth_analysis as ea
from . import semiclassics as sc
from .config import RunConfig
from .eigensolver import (SolverSettings, load_states, solve_range, weyl_count,
                          write_manifest, write_window)
from .eigensolver.store import ManifestEntry
from .geometry import BilliardGeometry
from .numerics import QuadratureSpec

__all__ = ["MissingPrerequisite", "Context", "cmd_solve", "cmd_eth", "cmd_semiclassics",
           "cmd_berry", "cmd_compare", "write_store"]

MANIFEST = "manifest.txt"


class MissingPrerequisite(RuntimeError):
    pass


@dataclass
class Context:
    config: RunConfig
    out: str
    threads: int = 1

    @property
    def hash(self):
        return self.config.hash

    def path(self, *parts):
        return os.path.join(self.out, *parts)


# --- model plumbing -----------------------------------------------------------

def geometry_of(cfg: RunConfig) -> BilliardGeometry:
    g = cfg["geometry"]
    return BilliardGeometry(g["l"], g["h"], g["scale"])


def params_of(cfg: RunConfig) -> sc.PhysicsParams:
    return sc.PhysicsParams(cfg["physics"]["hbar"], cfg["physics"]["m"], geometry_of(cfg))


def model_of(cfg: RunConfig) -> sc.FFunctionModel:
    s = cfg["semiclassics"]
    return sc.FFunctionModel(params_of(cfg), s["Q"], s["domain_mode"])


def spec_of(cfg: RunConfig) -> QuadratureSpec:
    s = cfg["semiclassics"]
    return QuadratureSpec(abs_tol=s["abs_tol"], rel_tol=s["rel_tol"])


def settings_of(cfg: RunConfig) -> SolverSettings:
    s = cfg["solver"]
    return SolverSettings(half_width=s["half_width"], margin=s["margin"],
                          residual_max=s["residual_max"], singular_cutoff=s["singular_cutoff"],
                          degeneracy_guard=s["degeneracy_guard"])


def energy_range(cfg: RunConfig) -> tuple[float, float, float]:
    """(e_min, e_max, e_center) from the semiclassics section, else from the solver k range."""
    s = cfg["semiclassics"]
    p = cfg["physics"]

    def e_of(k):
        return p["hbar"] ** 2 * k**2 / (2 * p["m"])

    lo = s["e_min"] if s["e_min"] is not None else e_of(cfg["solver"]["k_min"])
    hi = s["e_max"] if s["e_max"] is not None else e_of(cfg["solver"]["k_max"])
    if s["e_center"] is not None:
        c = s["e_center"]
    elif s["e_min"] is not None:
        c = 0.5 * (lo + hi)
    else:
        c = e_of(0.5 * (cfg["solver"]["k_min"] + cfg["solver"]["k_max"]))
    return lo, hi, c


def analysis_bins(cfg: RunConfig, e_center: float) -> dict:
    """Bin widths, defaulting to fractions of the predicted bandwidth at e_center."""
    a = cfg["analysis"]
    wb = sc.bandwidth_prediction(e_center, model_of(cfg))
    return {
        "de_bin": a["de_bin"] if a["de_bin"] is not None else wb / 6,
        "ebar_bin": a["ebar_bin"] if a["ebar_bin"] is not None else 2 * wb,
        "berry_de_bin": a["berry_de_bin"] if a["berry_de_bin"] is not None else wb / 6,
        "predicted_bandwidth": wb,
    }


# --- output helpers -----------------------------------------------------------

def _atomic_write_text(path, text: str):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(ctx: Context, name: str, header, rows):
    buf = io.StringIO()
    buf.write(f"# config_hash={ctx.hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    _atomic_write_text(ctx.path(name), buf.getvalue())


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return [_jsonable(v) for v in o.tolist()]
    if isinstance(o, (np.bool_, bool)):
        return bool(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        f = float(o)
        return f if math.isfinite(f) else None
    return o


def write_json(ctx: Context, name: str, payload: dict):
    body = {"config_hash": ctx.hash, **_jsonable(payload)}
    _atomic_write_text(ctx.path(name), json.dumps(body, indent=2, sort_keys=True) + "\n")


def write_run_manifest(ctx: Context):
    write_json(ctx, "run_manifest.json", {"config": ctx.config.to_dict()})


def _require(ctx: Context, name: str, command: str):
    p = ctx.path(name)
    if not os.path.exists(p):
        raise MissingPrerequisite(
            f"{p} not found; run `stadium-eth {command}` with the same --out first")
    return p


def _require_solver(cfg: RunConfig, command: str):
    if not cfg["solver"]["enabled"]:
        raise MissingPrerequisite(
            f"`{command}` needs solved eigenstates, but this configuration disables the solver "
            "(the paper-regime preset is served by `semiclassics` only)")


def _load_states(ctx: Context, command: str):
    _require_solver(ctx.config, command)
    states = load_states(_require(ctx, MANIFEST, "solve"))
    if not states:
        raise MissingPrerequisite("the eigenstate store is empty; rerun `stadium-eth solve`")
    p = params_of(ctx.config)
    s0 = states[0]
    if s0.geometry != p.geometry or s0.hbar != p.hbar or s0.m != p.m:
        raise MissingPrerequisite("stored eigenstates were solved for a different geometry or "
                                  "physics section; rerun `stadium-eth solve`")
    return states


# --- commands -------------------------------------------------------------------

def cmd_solve(ctx: Context, progress=None) -> dict:
    cfg = ctx.config
    _require_solver(cfg, "solve")
    s = cfg["solver"]
    geom = geometry_of(cfg)
    states, windows, warnings = solve_range(geom, params_of(cfg), s["k_min"], s["k_max"],
                                            settings_of(cfg), progress)
    return write_store(ctx, states, windows, warnings)


def write_store(ctx: Context, states, windows, warnings=()) -> dict:
    """Persist solved states (grouped as ``windows`` of positions) plus manifest and report."""
    cfg = ctx.config
    s = cfg["solver"]
    geom = geometry_of(cfg)
    os.makedirs(ctx.path("windows"), exist_ok=True)
    entries = []
    for n, (kc, pos) in enumerate(windows):
        members = [states[p] for p in pos]
        fname = os.path.join("windows", f"window_{n:04d}.bin")
        write_window(ctx.path(fname), members, kc, ctx.hash)
        entries.append(ManifestEntry(fname, kc, len(members), members[0].k, members[-1].k))
    write_manifest(ctx.path(MANIFEST), entries,
                   [f"config_hash={ctx.hash}", "format=stadium-eth window store v1"])
    ks = np.array([st.k for st in states])
    checkpoints = np.linspace(s["k_min"], s["k_max"], 6)
    report = {
        "n_states": len(states),
        "n_windows": len(entries),
        "k_range": [s["k_min"], s["k_max"]],
        "max_residual": float(max(st.residual for st in states)) if states else None,
        "weyl": [{"k": float(k), "count_in_range": int(np.sum(ks < k)),
                  "weyl_in_range": weyl_count(k, geom) - weyl_count(s["k_min"], geom)}
                 for k in checkpoints],
        "warnings": [w for w in warnings if "truncated" not in w],
        "n_truncation_warnings": sum("truncated" in w for w in warnings),
    }
    write_json(ctx, "solve_report.json", report)
    write_run_manifest(ctx)
    return report


def cmd_eth(ctx: Context) -> dict:
    cfg = ctx.config
    a = cfg["analysis"]
    states = _load_states(ctx, "eth")
    model = model_of(cfg)
    M = ea.compute_matrix(states, a["points_per_wavelength"], ctx.threads, cfg["solver"]["stride"])
    e_center = float(np.median(M.energies))
    bins = analysis_bins(cfg, e_center)
    table = ea.coarse_grain_f2(M, bins["de_bin"], bins["ebar_bin"], min_count=a["min_bin_pairs"])
    band = ea.band_profile_and_width(table, e_center)
    diag = ea.diagonal_series(M, a["diag_bins"])
    res_closed = ea.residual_statistics(M, "closed-form", model=model, n_boot=a["n_boot"],
                                        seed=cfg["seed"])
    res_coarse = ea.residual_statistics(M, "coarse-grained", table=table, n_boot=a["n_boot"],
                                        seed=cfg["seed"])
    n = M.size
    iu = np.triu_indices(n)
    write_csv(ctx, "eth_matrix.csv", ["i", "j", "E_i", "E_j", "O_ij"],
              zip(M.indices[iu[0]], M.indices[iu[1]], M.energies[iu[0]], M.energies[iu[1]],
                  M.O[iu]))
    write_csv(ctx, "eth_profile.csv", ["Ebar", "dE", "mean_O2", "count", "stderr", "underfilled"],
              zip(table.ebar, table.de, table.mean, table.count, table.stderr, table.underfilled))
    write_csv(ctx, "eth_band.csv", ["abs_dE", "mean_O2", "count", "stderr"],
              zip(band.de, band.mean, band.count, band.stderr))
    write_csv(ctx, "eth_diagonal.csv", ["E_i", "O_ii", "running_mean"],
              zip(diag.energies, diag.values, diag.running_mean))
    write_csv(ctx, "eth_diagonal_bins.csv", ["E_center", "mean", "std", "count"],
              zip(diag.bin_centers, diag.bin_mean, diag.bin_std, diag.bin_count))
    ebar = band.ebar
    predicted_peak = float(sc.closed_form_evaluate(ebar, ebar, model)[0])
    summary = {
        "n_states": n,
        "energy_center": e_center,
        "bins": bins,
        "underfilled_bins": int(table.underfilled.sum()),
        "band": {"ebar": ebar, "hwhm": band.hwhm, "first_minimum": band.first_minimum,
                 "peak": band.peak, "peak_at": band.peak_at, "smoothed": band.smoothed,
                 "predicted_bandwidth": sc.bandwidth_prediction(ebar, model),
                 "predicted_peak": predicted_peak},
        "diagonal": {"mean": float(diag.running_mean[-1]),
                     "predicted": sc.diag_semiclassical(params_of(cfg)),
                     "bin_std": diag.bin_std},
        "residuals": {"closed_form": res_closed.to_dict(), "coarse_grained": res_coarse.to_dict()},
        "max_asymmetry": float(np.max(np.abs(M.O - M.O.T))),
        "max_norm_error": float(np.max(np.abs(M.norms - 1))),
    }
    write_json(ctx, "eth_summary.json", summary)
    write_run_manifest(ctx)
    return summary


def cmd_semiclassics(ctx: Context) -> dict:
    cfg = ctx.config
    s = cfg["semiclassics"]
    model = model_of(cfg)
    params = model.params
    spec = spec_of(cfg)
    lo, hi, ec = energy_range(cfg)
    wb = sc.bandwidth_prediction(ec, model)
    span = min(s["sweep_bandwidths"] * wb, 1.9 * ec)
    de = np.linspace(-span, span, s["sweep_points"])
    Ei, Ej = ec + de / 2, ec - de / 2
    num = np.array([sc.f2_offdiag_numeric(a, b, model, spec) for a, b in zip(Ei, Ej)])
    full = sc.closed_form_evaluate(Ei, Ej, model, True)[0]
    trunc = sc.closed_form_evaluate(Ei, Ej, model, False)[0]
    header = ["Ei", "Ej", "f2_numeric", "f2_closed_full", "f2_closed_truncated"]
    write_csv(ctx, "f2_sweep.csv", header, zip(Ei, Ej, num, full, trunc))
    g = np.linspace(lo, hi, s["grid_points"])
    GI, GJ = (x.ravel() for x in np.meshgrid(g, g, indexing="ij"))
    gnum = np.array([sc.f2_offdiag_numeric(a, b, model, spec) for a, b in zip(GI, GJ)])
    gfull = sc.closed_form_evaluate(GI, GJ, model, True)[0]
    gtrunc = sc.closed_form_evaluate(GI, GJ, model, False)[0]
    write_csv(ctx, "f2_grid.csv", header, zip(GI, GJ, gnum, gfull, gtrunc))
    report = {
        "energy_center": ec,
        "energy_range": [lo, hi],
        "hbar": params.hbar,
        "m": params.m,
        "Q": model.Q,
        "domain_mode": model.mode,
        "area": params.geometry.area(),
        "bandwidth": wb,
        "main_sine_first_zero": sc.main_sine_first_zero(ec, model),
        "thermalization_time": sc.thermalization_time(wb, params.hbar),
        "shell_volume": sc.shell_volume(params),
        "mean_level_spacing": sc.mean_level_spacing(params),
        "overlap_prefactor": sc.overlap_prefactor(params),
        "diag_semiclassical": sc.diag_semiclassical(params),
        "peak_closed_full": float(sc.closed_form_evaluate(ec, ec, model)[0]),
        "peak_numeric": sc.f2_offdiag_numeric(ec, ec, model, spec),
    }
    write_json(ctx, "semiclassics_report.json", report)
    write_run_manifest(ctx)
    return report


def cmd_berry(ctx: Context) -> dict:
    cfg = ctx.config
    a = cfg["analysis"]
    states = _load_states(ctx, "berry")[::cfg["solver"]["stride"]]
    fields = [br.amplitude_field(s) for s in states]
    E = np.array([f.energy for f in fields])
    bins = analysis_bins(cfg, float(np.median(E)))
    center = len(fields) // 2
    rng = np.random.default_rng(cfg["seed"])
    n_ang = min(f.angles.size for f in fields)
    synth = br.synthetic_fields(len(fields), n_ang, E, rng)
    out = {"n_states": len(fields), "center_index": int(states[center].index),
           "berry_de_bin": bins["berry_de_bin"], "same_state": {}, "cross_state": {},
           "synthetic": {}}
    for label, src in (("data", fields), ("synthetic", synth)):
        for n_ave in a["n_ave"]:
            if n_ave > len(fields):
                raise ValueError(f"N_ave={n_ave} exceeds the {len(fields)} available states")
            shell = br.EnergyShell(center, n_ave)
            t1 = br.correlation_same_state(src, shell, a["berry_separation_bins"], n_ang)
            t2 = br.correlation_cross_state(src, shell, bins["berry_de_bin"], n_ang)
            tag = "" if label == "data" else "synthetic_"
            write_csv(ctx, f"berry_{tag}same_state_Nave{n_ave}.csv",
                      ["separation", "correlation", "count", "stderr"],
                      zip(t1.x, t1.value, t1.count, t1.stderr))
            write_csv(ctx, f"berry_{tag}cross_state_Nave{n_ave}.csv",
                      ["dE", "correlation", "count", "stderr"],
                      zip(t2.x, t2.value, t2.count, t2.stderr))
            if label == "data":
                out["same_state"][str(n_ave)] = br.integrated_off_center(t1)
                out["cross_state"][str(n_ave)] = br.integrated_off_center(t2)
            else:
                out["synthetic"][str(n_ave)] = {"same_state": null_test(t1),
                                                "cross_state": null_test(t2)}
    seq = [out["same_state"][str(n)] for n in a["n_ave"]]
    seq2 = [out["cross_state"][str(n)] for n in a["n_ave"]]
    out["same_state_decreasing"] = bool(all(x > y for x, y in zip(seq, seq[1:])))
    out["cross_state_decreasing"] = bool(all(x > y for x, y in zip(seq2, seq2[1:])))
    write_json(ctx, "berry_report.json", out)
    write_run_manifest(ctx)
    return out


def null_test(table: br.CorrelationTable, min_count: int = 20) -> dict:
    """z-scores of the off-centre bins of a correlation table and their pooled mean."""
    mask = (np.arange(table.value.size) != table.central) & (table.count >= min_count) \
        & np.isfinite(table.stderr) & (table.stderr > 0)
    if not np.any(mask):
        return {"n_bins": 0, "max_abs_z": None, "fraction_within_3sigma": None,
                "pooled_mean": None, "pooled_z": None}
    z = table.value[mask] / table.stderr[mask]
    pooled = float(np.mean(table.value[mask]))
    pooled_se = float(np.sqrt(np.sum(table.stderr[mask] ** 2)) / mask.sum())
    return {"n_bins": int(mask.sum()), "max_abs_z": float(np.max(np.abs(z))),
            "fraction_within_3sigma": float(np.mean(np.abs(z) < 3)),
            "pooled_mean": pooled, "pooled_z": pooled / pooled_se}


def cmd_compare(ctx: Context) -> tuple[bool, dict]:
    """Join the analysis outputs with the analytic predictions and grade them."""
    cfg = ctx.config
    _require_solver(cfg, "compare")
    with open(_require(ctx, "eth_summary.json", "eth")) as fh:
        eth = json.load(fh)
    if eth.get("config_hash") != ctx.hash:
        raise MissingPrerequisite("eth_summary.json was produced with a different configuration; "
                                  "rerun `stadium-eth eth`")
    params = params_of(cfg)
    band = eth["band"]
    res = eth["residuals"]["closed_form"]
    diag = eth["diagonal"]
    checks = []

    def check(name, value, target, passed, note=""):
        checks.append({"name": name, "value": value, "target": target,
                       "passed": bool(passed), "note": note})

    rel_bw = abs(band["hwhm"] - band["predicted_bandwidth"]) / band["predicted_bandwidth"]
    check("bandwidth_hwhm", band["hwhm"], band["predicted_bandwidth"], rel_bw <= 0.25,
          f"relative deviation {rel_bw:.3f} (limit 0.25)")
    ratio = band["peak"] / band["predicted_peak"]
    check("peak_magnitude", band["peak"], band["predicted_peak"], 0.5 <= ratio <= 2.0,
          f"ratio {ratio:.3f} (limit factor 2)")
    rel_d = abs(diag["mean"] - diag["predicted"]) / diag["predicted"]
    check("diagonal_mean", diag["mean"], diag["predicted"], rel_d <= 0.02,
          f"relative deviation {rel_d:.4f} (limit 0.02)")
    lo, hi = res["kurtosis_ci"]
    check("residual_excess_kurtosis", res["excess_kurtosis"], 0.0, lo <= 0.0 <= hi,
          f"95% CI [{lo:.3f}, {hi:.3f}]")
    check("spacing_identity", sc.mean_level_spacing(params), sc.overlap_prefactor(params),
          sc.mean_level_spacing(params) == sc.overlap_prefactor(params))
    bpath = ctx.path("berry_report.json")
    if os.path.exists(bpath):
        with open(bpath) as fh:
            b = json.load(fh)
        if b.get("config_hash") == ctx.hash:
            check("berry_same_state_trend", b["same_state"], "strictly decreasing",
                  b["same_state_decreasing"])
            check("berry_cross_state_trend", b["cross_state"], "strictly decreasing",
                  b["cross_state_decreasing"])
    ok = all(c["passed"] for c in checks)
    report = {"passed": ok, "checks": checks}
    write_json(ctx, "compare_report.json", report)
    lines = [f"config_hash={ctx.hash}", f"overall: {'PASS' if ok else 'FAIL'}"]
    for c in checks:
        lines.append(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}: {c['note'] or c['value']}")
    _atomic_write_text(ctx.path("compare_summary.txt"), "\n".join(lines) + "\n")
    write_run_manifest(ctx)
    return ok, report
