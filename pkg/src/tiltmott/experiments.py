"""Experiment runners behind the command line tool.

Each runner takes a validated config and returns the files to write as
``{name: text}``.  Nothing touches the disk here, so a failed run leaves
no partial output behind.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import correlations as corr
from . import ed
from . import floquet as fq
from . import modes
from .config import resolved
from .errors import ConfigError, InvariantViolation, RegimeViolation
from .model import ModelParams, curvature_speed, effective_speed, energy_gap, grid_gap
from .qed import QedModeParams, default_perp_grid, evolve_qed_mode, perp_scan_fit

UNITARITY_BOUND = 1e-8
DET_BOUND = 1e-10
ED_NORM_BOUND = 1e-8
ED_NUMBER_BOUND = 1e-12


@dataclass
class Table:
    columns: list
    rows: list = field(default_factory=list)

    def add(self, **rec):
        self.rows.append(rec)

    def render(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(self.columns) + "\n")
        for r in self.rows:
            buf.write(",".join(_cell(r[c]) for c in self.columns) + "\n")
        return buf.getvalue()


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def render_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def _finish(cfg, summary: dict, tables: dict, extra: dict | None = None) -> dict:
    files = {f"{name}.csv": t.render() for name, t in tables.items()}
    for name, obj in (extra or {}).items():
        files[name] = render_json(obj)
    summary = dict(summary, experiment=cfg.experiment, config=resolved(cfg))
    files["summary.json"] = render_json(summary)
    return files


def _threads(cfg):
    return cfg.threads or None


def _require(value: float, bound: float, what: str):
    if not value <= bound:
        raise InvariantViolation(f"{what} = {value:.3g} exceeds {bound:.1g}")


def model_checks(params: ModelParams) -> dict:
    """Closed-form gap and speed against the grid minimum and the dispersion curvature."""
    gap = energy_gap(params)
    c = effective_speed(params)
    g = grid_gap(params)
    cf = curvature_speed(params)
    return {
        "gap": gap,
        "gap_grid_min": g,
        "gap_relative_error": abs(g / gap - 1.0) if gap > 0 else math.nan,
        "c_eff": c,
        "c_eff_curvature": cf,
        "c_eff_sq_relative_error": abs(cf * cf / (c * c) - 1.0),
        "m_eff": params.m_eff,
        "delta": params.delta,
    }


# --------------------------------------------------------------------------

def run_qed_scan(cfg) -> dict:
    table = Table(["qE", "k_perp_sq", "re_alpha", "im_alpha", "re_beta", "im_beta", "beta_sq",
                   "unitarity_residual"])
    scans = []
    excluded = []
    worst = 0.0
    for qE in cfg.qE:
        base = QedModeParams(cfg.m, qE, cfg.tau)
        k2 = default_perp_grid(qE, cfg.n_points) if cfg.k_perp_sq is None else cfg.k_perp_sq
        scan = perp_scan_fit(base, k2, cfg.tol, floor=cfg.noise_floor, threads=_threads(cfg),
                             window=cfg.window, max_residual=UNITARITY_BOUND)
        for rec in scan.records():
            table.add(**rec)
        res = max(r.unitarity_residual for r in scan.results)
        worst = max(worst, res)
        entry = {
            "qE": qE,
            "fitted_slope": scan.fit.slope,
            "fitted_intercept": scan.fit.intercept,
            "fit_rms_residual": scan.fit.rms_residual,
            "fit_points": scan.fit.n_points,
            "predicted_slope": scan.predicted_slope,
            "slope_ratio": scan.slope_ratio,
            "max_unitarity_residual": res,
        }
        if cfg.refinement_check:
            # tighter tolerance on the same grid
            fine = [evolve_qed_mode(base.with_k_perp(math.sqrt(q)), cfg.tol / 2.0, window=cfg.window)
                    for q in scan.k_perp_sq]
            ok = [r.beta_sq > cfg.noise_floor and f.beta_sq > cfg.noise_floor
                  for r, f in zip(scan.results, fine)]
            entry["refinement_max_dlog"] = max(
                (abs(math.log(f.beta_sq / r.beta_sq)) for r, f, o in zip(scan.results, fine, ok) if o),
                default=0.0)
        scans.append(entry)
        excluded += [dict(e, qE=qE) for e in scan.excluded]
    summary = {"scans": scans, "max_unitarity_residual": worst, "excluded_points": excluded,
               "slope_ratios": [s["slope_ratio"] for s in scans]}
    return _finish(cfg, summary, {"qed_scan": table})


def _proto_kw(spec) -> dict:
    return dict(plateau=spec.plateau, j_ramp=spec.j_ramp, gradient_ramp=spec.gradient_ramp,
                ramp=spec.ramp, axis=spec.axis, bloch_periods=spec.bloch_periods)


def run_bh_scaling(cfg) -> dict:
    params = cfg.model.build()
    if cfg.protocol.gradient is not None:
        raise ConfigError("bh-scaling sweeps the gradient: give 'gradients', not 'protocol.gradient'")
    gradients = (modes.default_gradients(params, cfg.n_gradients, cfg.exponents)
                 if cfg.gradients is None else cfg.gradients)
    k2 = np.linspace(0.0, cfg.k_perp_sq_max, cfg.grid)
    res = modes.scaling_fit(params, gradients, k2, cfg.tol, perp_gradient=cfg.perp_gradient,
                            threads=_threads(cfg), **_proto_kw(cfg.protocol))
    table = Table(["scan", "gradient", "inv_gradient", "k_perp_sq", "beta_sq", "ln_beta_sq",
                   "baseline_beta_sq", "unitarity_residual", "predicted_exponent", "valid"])
    for name, pts in (("inv_gradient", res.inv_gradient_points), ("perp", res.perp_points)):
        for p in pts:
            table.add(scan=name, gradient=p.gradient, inv_gradient=1.0 / p.gradient, k_perp_sq=p.k_perp_sq,
                      beta_sq=p.beta_sq, ln_beta_sq=math.log(p.beta_sq) if p.beta_sq > 0 else -math.inf,
                      baseline_beta_sq=p.baseline_beta_sq, unitarity_residual=p.unitarity_residual,
                      predicted_exponent=p.predicted_exponent, valid=p.valid)
    worst = max(p.unitarity_residual for p in res.inv_gradient_points + res.perp_points)
    _require(worst, UNITARITY_BOUND, "unitarity residual")
    summary = {
        "model": model_checks(params),
        "inv_gradient_slope": res.inv_gradient_fit.slope,
        "inv_gradient_predicted_slope": res.predicted_inv_gradient_slope,
        "inv_gradient_ratio": res.inv_gradient_ratio,
        "inv_gradient_fit_points": res.inv_gradient_fit.n_points,
        "perp_slope": res.perp_fit.slope,
        "perp_predicted_slope": res.predicted_perp_slope,
        "perp_ratio": res.perp_ratio,
        "perp_gradient": res.perp_gradient,
        "perp_fit_points": res.perp_fit.n_points,
        "predicted_exponent_range": [
            min(p.predicted_exponent for p in res.inv_gradient_points + res.perp_points),
            max(p.predicted_exponent for p in res.inv_gradient_points + res.perp_points)],
        "max_unitarity_residual": worst,
        "max_baseline_beta_sq": max(p.baseline_beta_sq for p in res.inv_gradient_points + res.perp_points),
        "excluded_points": res.excluded,
    }
    return _finish(cfg, summary, {"bh_scaling": table})


def run_bh_pair_density(cfg) -> dict:
    params = cfg.model.build()
    protocol = cfg.protocol.build(params)
    spec = modes.pair_density(params, protocol, cfg.grid, cfg.tol, _threads(cfg))
    cols = [f"k{i}" for i in range(params.d)] + ["beta_sq", "baseline_beta_sq", "unitarity_residual"]
    table = Table(cols, spec.records())
    worst = float(np.max(spec.unitarity_residual))
    _require(worst, UNITARITY_BOUND, "unitarity residual")
    summary = {
        "model": model_checks(params),
        "pair_density": spec.pair_density,
        "doublon_density": spec.pair_density,
        "holon_density": spec.pair_density,
        "baseline_pair_density": spec.baseline_pair_density,
        "max_beta_sq": float(np.max(spec.beta_sq)),
        "max_baseline_beta_sq": float(np.max(spec.baseline_beta_sq)),
        "max_unitarity_residual": worst,
        "grid": cfg.grid,
        "modes": len(spec.grid),
        "excluded_points": [],
    }
    if cfg.refinement_check:
        if cfg.grid % 4:
                raise ConfigError("the refinement check halves the grid: grid must be a multiple of 4")
        coarse = modes.pair_density(params, protocol, cfg.grid // 2, cfg.tol, _threads(cfg))
        summary["coarse_pair_density"] = coarse.pair_density
        summary["refinement_relative_change"] = abs(spec.pair_density / coarse.pair_density - 1.0)
    return _finish(cfg, summary, {"bh_pair_density": table})


def run_floquet_scan(cfg) -> dict:
    params = cfg.model.build()
    dv = None
    if cfg.delta_v is not None:
        dv = cfg.delta_v if isinstance(cfg.delta_v, list) else cfg.delta_v.values()
    scan = fq.resonance_scan(params, dv, cfg.system, cfg.tol, k_transverse=cfg.k_transverse,
                             threads=_threads(cfg))
    _require(float(np.max(scan.det_residual)), DET_BOUND, "mode monodromy |det| - 1")
    ids = scan.resonance_id()
    table = Table(["delta_v", "lambda", "lambda_dimensionless", "resonance_id", "half_trace",
                   "det_residual"])
    for i, x in enumerate(scan.delta_v):
        table.add(delta_v=x, **{"lambda": scan.exponent[i]}, lambda_dimensionless=scan.dimensionless[i],
                  resonance_id=int(ids[i]), half_trace=scan.half_trace[i], det_residual=scan.det_residual[i])
    rs = []
    for r in scan.resonances:
        item = {"order": r.order, "center": r.center, "exponent": r.exponent,
                "growth_exponent": r.growth_exponent, "fwhm": r.fwhm, "band_width": r.band_width,
                "center_offset": r.center - params.U / r.order}
        if r.order in (1, 2):
            item["predicted_growth_exponent"] = fq.predicted_growth_exponent(params, r.order, r.center)
        if r.order == 1 and params.J > 0:
            item["fwhm_over_sqrt2_J"] = r.fwhm / (math.sqrt(2.0) * params.J)
            item["band_over_sqrt2_J"] = r.band_width / (math.sqrt(2.0) * params.J)
        rs.append(item)
    summary = {
        "resonances": rs,
        "max_det_residual": float(np.max(scan.det_residual)),
        "k_transverse": cfg.k_transverse,
        "system": cfg.system,
        "points": len(scan.delta_v),
        "excluded_points": [],
    }
    off = np.abs(ids) == 0
    summary["max_off_resonance_exponent"] = float(np.max(scan.exponent[off])) if off.any() else 0.0
    if cfg.exponent_check:
        try:
            chk = fq.exponent_check(params, cfg.system, cfg.tol, cfg.k_transverse)
        except RegimeViolation as exc:
            summary["exponent_check"] = {"skipped": str(exc)}
        else:
            out = chk.summary()
            center = chk.first.center
            out["monodromy_consistency"] = fq.monodromy_consistency(
                params, center, cfg.k_transverse, cfg.consistency_periods, cfg.tol)
            out["growth_rate"] = fq.growth_rate_check(params, center, cfg.k_transverse, cfg.tol)
            summary["exponent_check"] = out
    return _finish(cfg, summary, {"floquet_scan": table})


def run_correlations_check(cfg) -> dict:
    params = cfg.model.build()
    grid = modes.bz_grid(cfg.grid, params.d)
    times_tab = Table(["protocol", "t", *[f"k{i}" for i in range(params.d)], "re_f12", "im_f12", "f11",
                       "factorization_residual"])
    per_protocol = []
    for j, spec in enumerate(cfg.protocols):
        protocol = spec.build(params)
        worst = corr.factorization_check(params, protocol, grid, cfg.tol, cfg.n_times, _threads(cfg))
        times = np.linspace(0.0, protocol.t_final, cfg.n_times + 1)[1:]
        # the CSV holds the time series at the zone centre only; the full grid goes to the summary
        k0 = grid[np.argmin(np.linalg.norm(grid, axis=1))]
        mt = modes.mode_trajectory(params, protocol, k0, times, cfg.tol)
        for c, m in zip(corr.correlation_trajectory(params, protocol, k0, times, cfg.tol), mt):
            times_tab.add(protocol=j, t=c.t, **{f"k{i}": x for i, x in enumerate(k0)},
                          re_f12=c.f12.real, im_f12=c.f12.imag, f11=c.f11,
                          factorization_residual=abs(c.f12 - m.f_plus.conjugate() * m.g_plus))
        per_protocol.append({"protocol": j, "t_final": protocol.t_final, "max_residual": worst})
    summary = {
        "factorization": per_protocol,
        "max_factorization_residual": max(p["max_residual"] for p in per_protocol),
        "grid_points": len(grid),
        "tol": cfg.tol,
        "excluded_points": [],
    }
    tables = {"correlations": times_tab}
    if cfg.real_space is not None:
        rs = cfg.real_space
        p1 = rs.model.build()
        pr = rs.protocol.build(p1)
        summary["ring_mismatch"] = corr.ring_momentum_mismatch(p1, pr, rs.sites, rs.tol)
        summary["chain_bulk"] = corr.chain_bulk_mismatch(p1, pr, rs.sites, rs.chain_times, rs.tol)
        summary["chain_time_limit"] = rs.sites / (2.0 * p1.c_eff)
    return _finish(cfg, summary, tables)


def run_ed(cfg) -> dict:
    params = cfg.model.build()
    base = ed.EDConfig(cfg.sites, params, None, cfg.geometry, cfg.n_max, None, cfg.coordination)
    summary = {"basis": ed.ed_diagnostics(base), "excluded_points": []}
    _require(summary["basis"]["hermiticity_residual"], 1e-14, "Hamiltonian Hermiticity residual")
    tables = {}
    extra = {}
    if cfg.delta_v is not None:
        scan = ed.ed_resonance_scan(base, cfg.delta_v, ramp=cfg.ramp, plateau=cfg.plateau, tol=cfg.tol)
        tables["ed_scan"] = Table(["delta_v", "doublon", "norm_drift"], scan["scan"])
        summary.update({k: v for k, v in scan.items() if k != "scan"})
        drift = max(r["norm_drift"] for r in scan["scan"])
        summary["max_norm_drift"] = drift
        _require(drift, ED_NORM_BOUND, "ED norm drift")
    else:
        protocol = cfg.protocol.build(params)
        run_cfg = base.with_protocol(protocol)
        if cfg.initial == "mott":
            psi = ed.mott_state(run_cfg)
        else:
            psi, _ = ed.ground_state(run_cfg, 0.0)
        times = np.linspace(0.0, protocol.t_final, cfg.n_samples)
        run = ed.evolve_ed(run_cfg, psi, protocol, cfg.tol, times)
        tab = Table(["t", "doublon", "holon", "norm", "number", "energy"])
        for i, t in enumerate(run.times):
            tab.add(t=t, doublon=run.doublon[i], holon=run.holon[i], norm=run.norm[i],
                    number=run.number[i], energy=run.energy[i])
        tables["ed_run"] = tab
        extra["ed_series.json"] = run.series()
        static = protocol.j_envelope.kind != "ramped" and protocol.gradient_envelope.kind != "ramped"
        summary.update({
            "norm_drift": run.norm_drift,
            "number_drift": run.number_drift,
            "energy_drift": float(np.max(np.abs(run.energy - run.energy[0]))) if static else None,
            "max_doublon_holon_gap": float(np.max(np.abs(run.doublon - run.holon))),
            "final_doublon": float(run.doublon[-1]),
            "final_holon": float(run.holon[-1]),
            "final_high_occupancy": ed.high_occupancy_weight(run.state, run_cfg),
        })
        _require(run.norm_drift, ED_NORM_BOUND, "ED norm drift")
        _require(run.number_drift, ED_NUMBER_BOUND, "ED particle-number drift")
    return _finish(cfg, summary, tables, extra)


RUNNERS = {
    "qed-scan": run_qed_scan,
    "bh-scaling": run_bh_scaling,
    "bh-pair-density": run_bh_pair_density,
    "floquet-scan": run_floquet_scan,
    "correlations-check": run_correlations_check,
    "ed-run": run_ed,
}


def run_experiment(cfg) -> dict:
    """Files (name to text) produced by ``cfg``; raises on any failure."""
    return RUNNERS[cfg.experiment](cfg)
