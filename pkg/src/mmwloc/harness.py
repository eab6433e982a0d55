"""Bound sweeps and Monte Carlo campaigns with CSV output."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .channel import (PilotBlock, draw_gains, noise_psd_for_snr, random_pilots, standard_noise,
                      synthesize)
from .config import ArrayOfdmConfig
from .errors import MmwlocError, SingularFim
from .fim import BoundReport, scenario_bounds
from .geometry import ChannelParamSet, Scenario, params_from_scenario, wrap_pi
from .pipeline import CONDITIONS, estimate
from .pose import OlosSearchConfig

log = logging.getLogger(__name__)

# seed streams
_PILOTS, _GAINS, _NOISE, _POSITIONS = 1, 2, 3, 4

DEFAULT_SCENARIO = {"bs_pos": [0.0, 0.0], "ms_pos": [4.0, 0.0], "rotation": 0.1,
                    "scatterers": [], "los_blocked": False}


def derived_seed(base: int, *keys: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(base), *map(int, keys)])


@dataclass
class CampaignConfig:
    """Everything a campaign needs; lengths in meters, angles in radians, SNR in dB.

    ``array`` overrides fields of the profile's :class:`ArrayOfdmConfig`
    (``carrier_hz`` and ``bandwidth_hz`` in Hz).  ``ms_region`` samples MS
    positions uniformly in ``{"x": [x0, x1], "y": [y0, y1], "n_positions": M}``
    instead of using the scenario's MS position.
    """

    profile: str = "desk"
    array: dict = field(default_factory=dict)
    scenario: dict = field(default_factory=lambda: dict(DEFAULT_SCENARIO))
    ms_region: dict | None = None
    condition: str = "los"
    snr_db: list = field(default_factory=lambda: [-10.0, 0.0, 10.0])
    n_trials: int = 200
    refine: bool = True
    detection: str = "successive"
    p_fa: float = 1e-3
    search: dict = field(default_factory=lambda: {"delta_alpha": 0.05, "alpha_max": 0.5})
    base_seed: int = 0
    g_values: list | None = None
    n_pilot_draws: int = 1
    fading: str = "phase"
    weighting: str = "fim"

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if not self.snr_db:
            raise ValueError("the SNR grid must not be empty")
        if self.condition not in CONDITIONS:
            raise ValueError(f"condition must be one of {CONDITIONS}")

    @classmethod
    def from_dict(cls, d: dict) -> "CampaignConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "CampaignConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)

    def array_config(self) -> ArrayOfdmConfig:
        return ArrayOfdmConfig.from_profile(self.profile, **self.array)

    def scene(self) -> Scenario:
        return Scenario.from_dict(self.scenario).canonical()

    def olos_search(self) -> OlosSearchConfig:
        return OlosSearchConfig(**self.search)


@dataclass
class CampaignResult:
    """Summary rows, raw per-trial records and optional CDF rows."""

    rows: list = field(default_factory=list)
    records: list = field(default_factory=list)
    cdf: list = field(default_factory=list)

    def write(self, out_dir, stem: str) -> list:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for suffix, rows in (("", self.rows), ("_trials", self.records), ("_cdf", self.cdf)):
            if rows:
                path = out / f"{stem}{suffix}.csv"
                write_csv(path, rows)
                written.append(path)
        return written


def write_csv(path, rows: list):
    cols: list = []
    for r in rows:
        cols += [k for k in r if k not in cols]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k, "")) for k in cols})


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer, np.bool_)):
        return v.item()
    return v


def campaign_pilots(cc: CampaignConfig, cfg: ArrayOfdmConfig, draw: int = 0) -> PilotBlock:
    return random_pilots(cfg, derived_seed(cc.base_seed, _PILOTS, draw))


def scenario_gains(cc: CampaignConfig, s: Scenario, cfg: ArrayOfdmConfig, index: int = 0):
    return draw_gains(s, cfg, derived_seed(cc.base_seed, _GAINS, index), cc.fading)


def bound_row(report: BoundReport | None) -> dict:
    if report is None:
        return {"peb_m": math.nan, "reb_rad": math.nan, "reliable": False}
    row = {"peb_m": report.peb, "reb_rad": report.reb, "condition_number": report.condition,
           "reliable": report.reliable}
    for k, (t, a, b) in enumerate(zip(report.crb_delay, report.crb_aod, report.crb_aoa)):
        row[f"crb_tau{k}_ns"] = t * 1e9
        row[f"crb_aod{k}_rad"] = a
        row[f"crb_aoa{k}_rad"] = b
    return row


def safe_bounds(s, gains, cfg, pilots, n0) -> BoundReport | None:
    try:
        return scenario_bounds(s, gains, cfg, pilots, n0)
    except SingularFim as e:
        log.warning("singular FIM: %s", e)
        return None


def region_positions(cc: CampaignConfig) -> np.ndarray:
    reg = cc.ms_region
    rng = np.random.default_rng(derived_seed(cc.base_seed, _POSITIONS))
    n = int(reg.get("n_positions", 50))
    x = rng.uniform(*reg["x"], size=n)
    y = rng.uniform(*reg["y"], size=n)
    return np.column_stack([x, y])


def run_bounds(cc: CampaignConfig) -> CampaignResult:
    """PEB, REB and channel CRBs per SNR (and per beam count when ``g_values`` is set).

    Without a region the configured scene is used.  With ``ms_region`` every
    sampled MS position gets its own bound and rows report the PEB at CDF
    levels 0.5 and 0.9.  When sweeping the beam count, the first ``G``
    transmissions of one pilot draw are used with the beamformers scaled by
    ``1/sqrt(G)`` so the total transmitted energy stays fixed, and the noise
    level is the one that gives the requested SNR for the configured scene
    with all transmissions.
    """
    cfg = cc.array_config()
    base = cc.scene()
    g_values = cc.g_values or [cfg.n_transmissions]
    g_full = max(max(g_values), cfg.n_transmissions)
    cfg_full = cfg.with_(n_transmissions=g_full)
    positions = region_positions(cc) if cc.ms_region else np.array([base.ms_pos])
    sweep = cc.g_values is not None
    result = CampaignResult()
    for snr in cc.snr_db:
        for G in g_values:
            pebs, rebs, rows = [], [], []
            for draw in range(cc.n_pilot_draws):
                full = campaign_pilots(cc, cfg_full, draw)
                ref = full.scaled(1 / math.sqrt(g_full)) if sweep else full.subset(cfg.n_transmissions)
                g0 = scenario_gains(cc, base, cfg)
                cp0 = params_from_scenario(base, g0, cfg.light_speed)
                n0 = noise_psd_for_snr(cp0, cfg.with_(n_transmissions=ref.n_transmissions), ref, snr)
                pil = full.subset(G).scaled(1 / math.sqrt(G)) if sweep else ref
                cfg_g = cfg.with_(n_transmissions=pil.n_transmissions)
                for i, pos in enumerate(positions):
                    s = Scenario(base.bs_pos, pos, base.rotation, base.scatterers,
                                 base.los_blocked).canonical()
                    gains = scenario_gains(cc, s, cfg, i) if cc.ms_region else g0
                    rep = safe_bounds(s, gains, cfg_g, pil, n0)
                    row = {"snr_db": snr, "n_transmissions": G, "pilot_draw": draw,
                           "ms_x": float(pos[0]), "ms_y": float(pos[1]), "noise_psd": n0}
                    row.update(bound_row(rep))
                    rows.append(row)
                    pebs.append(row["peb_m"])
                    rebs.append(row["reb_rad"])
            if cc.ms_region or cc.n_pilot_draws > 1:
                pebs_arr = np.array(pebs)
                ok = pebs_arr[np.isfinite(pebs_arr)]
                result.rows.append({
                    "snr_db": snr, "n_transmissions": G, "n_points": len(pebs),
                    "n_singular": int(np.sum(~np.isfinite(pebs_arr))),
                    "peb_cdf50_m": float(np.quantile(ok, 0.5)) if ok.size else math.nan,
                    "peb_cdf90_m": float(np.quantile(ok, 0.9)) if ok.size else math.nan,
                    "reb_cdf90_rad": float(np.nanquantile(rebs, 0.9)) if ok.size else math.nan,
                })
                result.records.extend(rows)
                for e, p in empirical_cdf(ok):
                    result.cdf.append({"snr_db": snr, "n_transmissions": G, "peb_m": e, "cdf": p})
            else:
                result.rows.extend(rows)
    return result


def empirical_cdf(values) -> list:
    v = np.sort(np.asarray(values, dtype=float))
    n = len(v)
    return [(float(x), (i + 1) / n) for i, x in enumerate(v)]


def match_paths(est: ChannelParamSet, true: ChannelParamSet, cfg: ArrayOfdmConfig) -> dict:
    """Hungarian assignment of estimated to true paths.

    Distances add squared delay errors in sample periods and squared angle
    errors in virtual-grid bins.  Returns ``{true_index: est_index}``.
    """
    if not est.paths or not true.paths:
        return {}
    bin_t = (cfg.wavelength / cfg.spacing) / cfg.n_tx
    bin_r = (cfg.wavelength / cfg.spacing) / cfg.n_rx
    d = ((true.delays[:, None] - est.delays[None]) / cfg.sample_period) ** 2
    d += (wrap_pi(true.aods[:, None] - est.aods[None]) / bin_t) ** 2
    d += (wrap_pi(true.aoas[:, None] - est.aoas[None]) / bin_r) ** 2
    rows, cols = linear_sum_assignment(d)
    return {int(r): int(c) for r, c in zip(rows, cols)}


def scene_diameter(s: Scenario) -> float:
    pts = np.array([s.bs_pos, s.ms_pos, *s.scatterers])
    return float(np.max(np.linalg.norm(pts[:, None] - pts[None], axis=-1)))


def run_trial(cc: CampaignConfig, cfg: ArrayOfdmConfig, s: Scenario, cp: ChannelParamSet,
              pilots: PilotBlock, n0: float, noise: np.ndarray, snr: float, trial: int) -> dict:
    """One estimation run; failures become records with ``ok = False``."""
    rec = {"snr_db": snr, "trial": trial, "n_paths_true": len(cp.paths)}
    obs = synthesize(cp, cfg, pilots, n0, noise=noise)
    try:
        res = estimate(obs, pilots, cfg, cc.condition, s.bs_pos, cc.p_fa, refine=cc.refine,
                       detection=cc.detection, search=cc.olos_search(), weighting=cc.weighting)
    except MmwlocError as e:
        rec.update(ok=False, error=type(e).__name__, n_paths_hat=0, outage=True)
        return rec
    sol = res.solution
    err_p = (sol.pose.position - s.ms_pos).norm()
    err_a = float(wrap_pi(sol.pose.rotation - s.rotation))
    rec.update(ok=True, error="", n_paths_hat=res.n_paths, outage=res.n_paths != len(cp.paths),
               branch=sol.branch, cost=sol.cost,
               delta_v=sol.delta_v if sol.delta_v is not None else math.nan,
               p_x=sol.pose.position.x, p_y=sol.pose.position.y, alpha=sol.pose.rotation,
               err_p_m=err_p, err_alpha_rad=err_a)
    m = match_paths(res.channel, cp, cfg)
    if 0 in m:
        e = res.channel.paths[m[0]]
        t = cp.paths[0]
        rec.update(err_tau0_ns=(e.delay - t.delay) * 1e9,
                   err_aod0_rad=float(wrap_pi(e.aod - t.aod)),
                   err_aoa0_rad=float(wrap_pi(e.aoa - t.aoa)))
    return rec


def run_montecarlo(cc: CampaignConfig, n_trials: int | None = None) -> CampaignResult:
    """Synthesize, estimate and summarize ``n_trials`` runs per SNR.

    Pilots and path gains are drawn once per campaign; each trial draws one
    unit-variance noise realization that is scaled to every SNR.
    """
    cfg = cc.array_config()
    s = cc.scene()
    n_trials = n_trials or cc.n_trials
    pilots = campaign_pilots(cc, cfg)
    gains = scenario_gains(cc, s, cfg)
    cp = params_from_scenario(s, gains, cfg.light_speed)
    shape = (pilots.n_transmissions, cfg.n_subcarriers, cfg.n_rx)
    records, bounds = [], {}
    for snr in cc.snr_db:
        n0 = noise_psd_for_snr(cp, cfg, pilots, snr)
        bounds[snr] = bound_row(safe_bounds(s, gains, cfg, pilots, n0))
        for trial in range(n_trials):
            noise = standard_noise(shape, derived_seed(cc.base_seed, _NOISE, trial))
            records.append(run_trial(cc, cfg, s, cp, pilots, n0, noise, snr, trial))
    res = summarize(records, scene_diameter(s), bounds)
    return res


def _rmse(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sqrt(np.mean(x ** 2))) if x.size else math.nan


def summarize(records: list, diameter: float = math.inf, bounds: dict | None = None
              ) -> CampaignResult:
    """RMSE tables, outage counts, CDF rows and model-selection statistics.

    ``rmse_p_m`` and ``rmse_alpha_rad`` use every trial, with errors capped at
    the scene diameter (and pi) and failed runs counted at the cap.  The
    ``*_detected`` columns use only trials whose path count was right.
    """
    bounds = bounds or {}
    result = CampaignResult(records=list(records))
    snrs = sorted({r["snr_db"] for r in records})
    for snr in snrs:
        rs = [r for r in records if r["snr_db"] == snr]
        ok = [r for r in rs if r["ok"]]
        det = [r for r in ok if not r["outage"]]
        cap_p = [min(r["err_p_m"], diameter) if r["ok"] else diameter for r in rs]
        cap_a = [min(abs(r["err_alpha_rad"]), math.pi) if r["ok"] else math.pi for r in rs]
        row = {
            "snr_db": snr, "n_trials": len(rs), "n_failed": len(rs) - len(ok),
            "n_outage": sum(1 for r in rs if r["outage"]),
            "rmse_p_m": _rmse(cap_p), "rmse_alpha_rad": _rmse(cap_a),
            "rmse_p_detected_m": _rmse([r["err_p_m"] for r in det]),
            "rmse_alpha_detected_rad": _rmse([r["err_alpha_rad"] for r in det]),
        }
        for q in ("tau0_ns", "aod0_rad", "aoa0_rad"):
            row[f"rmse_{q}"] = _rmse([r[f"err_{q}"] for r in ok if f"err_{q}" in r])
        dv = [r["delta_v"] for r in ok if not math.isnan(r.get("delta_v", math.nan))]
        if dv:
            row["mean_delta_v"] = float(np.mean(dv))
            row["median_delta_v"] = float(np.median(dv))
            row["olos_win_rate"] = sum(1 for r in ok if r.get("branch") == "olos") / len(rs)
        row.update(bounds.get(snr, {}))
        result.rows.append(row)
        for e, p in empirical_cdf(cap_p):
            result.cdf.append({"snr_db": snr, "err_p_m": e, "cdf": p})
    return result


def estimate_once(cc: CampaignConfig, seed: int, snr_db: float | None = None) -> dict:
    """Single run of the estimator on the configured scene; returns a JSON-ready dict."""
    cfg = cc.array_config()
    s = cc.scene()
    pilots = campaign_pilots(cc, cfg)
    gains = scenario_gains(cc, s, cfg)
    cp = params_from_scenario(s, gains, cfg.light_speed)
    snr = cc.snr_db[-1] if snr_db is None else snr_db
    n0 = noise_psd_for_snr(cp, cfg, pilots, snr)
    shape = (pilots.n_transmissions, cfg.n_subcarriers, cfg.n_rx)
    noise = standard_noise(shape, derived_seed(seed, _NOISE))
    obs = synthesize(cp, cfg, pilots, n0, noise=noise)
    res = estimate(obs, pilots, cfg, cc.condition, s.bs_pos, cc.p_fa, refine=cc.refine,
                   detection=cc.detection, search=cc.olos_search(), weighting=cc.weighting)
    sol = res.solution
    return {
        "snr_db": snr, "seed": seed, "condition": cc.condition, "branch": sol.branch,
        "position_m": list(sol.pose.position), "rotation_rad": sol.pose.rotation,
        "scatterers_m": [list(v) for v in sol.scatterers_hat], "cost": sol.cost,
        "delta_v": sol.delta_v,
        "paths": [{"delay_ns": p.delay * 1e9, "aod_rad": p.aod, "aoa_rad": p.aoa,
                   "gain_re": p.gain.real, "gain_im": p.gain.imag} for p in res.channel.paths],
        "truth": {"position_m": list(s.ms_pos), "rotation_rad": s.rotation,
                  "paths": [{"delay_ns": p.delay * 1e9, "aod_rad": p.aod, "aoa_rad": p.aoa}
                            for p in cp.paths]},
    }
