import math

import numpy as np
import pytest

from mmwloc.config import ArrayOfdmConfig
from mmwloc.geometry import ChannelParamSet, PathParams
from mmwloc.harness import (CampaignConfig, empirical_cdf, match_paths, run_bounds, run_montecarlo,
                            summarize)

import oracles


def campaign(**kw):
    base = dict(condition="nlos", snr_db=[0.0, 10.0], n_trials=4,
                scenario={"bs_pos": [0, 0], "ms_pos": [4, 0], "rotation": 0.1,
                          "scatterers": [[1.5, 0.4]], "los_blocked": False})
    base.update(kw)
    return CampaignConfig.from_dict(base)


def record(err, snr=0.0, ok=True):
    return {"snr_db": snr, "ok": ok, "outage": not ok, "err_p_m": err, "err_alpha_rad": err / 10}


def test_single_trial_rmse_is_the_error():
    row = summarize([record(0.37)]).rows[0]
    assert row["rmse_p_m"] == 0.37
    assert row["rmse_alpha_rad"] == pytest.approx(0.037)


def test_rmse_matches_streaming_oracle():
    errs = np.random.default_rng(0).exponential(0.1, 500)
    row = summarize([record(e) for e in errs]).rows[0]
    assert abs(row["rmse_p_m"] - oracles.streaming_rmse(errs)) < 1e-12


def test_failures_count_at_the_cap():
    recs = [record(0.1), record(math.nan, ok=False)]
    row = summarize(recs, diameter=5.0).rows[0]
    assert row["n_failed"] == 1
    assert row["rmse_p_m"] == pytest.approx(math.sqrt((0.01 + 25) / 2))
    assert row["rmse_p_detected_m"] == pytest.approx(0.1)


def test_empirical_cdf():
    cdf = empirical_cdf([3.0, 1.0, 2.0, 2.0])
    assert [x for x, _ in cdf] == [1.0, 2.0, 2.0, 3.0]
    assert cdf[-1][1] == 1.0
    assert all(b[1] > a[1] for a, b in zip(cdf, cdf[1:]))


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError):
        CampaignConfig.from_dict({"snr": [0.0]})
    with pytest.raises(ValueError):
        CampaignConfig(n_trials=0)
    with pytest.raises(ValueError):
        CampaignConfig(condition="indoor")
    cc = campaign()
    assert CampaignConfig.from_dict(cc.to_dict()) == cc


def test_hungarian_matching_undoes_permutation():
    cfg = ArrayOfdmConfig()
    paths = [PathParams(1e-9 * (k + 1), 0.3 * k - 0.5, 2.5 + 0.2 * k, 1.0) for k in range(4)]
    true = ChannelParamSet(tuple(paths))
    perm = [2, 0, 3, 1]
    est = ChannelParamSet(tuple(paths[i] for i in perm), olos=True)
    m = match_paths(est, true, cfg)
    assert all(perm[m[t]] == t for t in range(4))
    assert match_paths(ChannelParamSet(()), true, cfg) == {}


def test_montecarlo_deterministic_bytes(tmp_path):
    a = run_montecarlo(campaign()).write(tmp_path / "a", "mc")
    b = run_montecarlo(campaign()).write(tmp_path / "b", "mc")
    assert [p.read_bytes() for p in a] == [p.read_bytes() for p in b]
    assert run_montecarlo(campaign(base_seed=1)).records != run_montecarlo(campaign()).records


def test_trials_do_not_depend_on_campaign_length():
    short = run_montecarlo(campaign(snr_db=[10.0]), 2).records
    long = run_montecarlo(campaign(snr_db=[10.0]), 4).records
    assert short == long[:2]


def test_montecarlo_bounds_match_bound_run():
    mc = run_montecarlo(campaign(), 1).rows
    bd = run_bounds(campaign()).rows
    for m, b in zip(mc, bd):
        assert m["snr_db"] == b["snr_db"]
        assert abs(m["peb_m"] - b["peb_m"]) <= 1e-10 * b["peb_m"]
        assert abs(m["reb_rad"] - b["reb_rad"]) <= 1e-10 * b["reb_rad"]


def test_bound_scaling_with_snr():
    rows = run_bounds(campaign(snr_db=[0.0, 6.0, 12.0])).rows
    for a, b in zip(rows, rows[1:]):
        assert a["peb_m"] / b["peb_m"] == pytest.approx(10 ** 0.3, rel=1e-9)


def test_blocked_direct_path_costs_accuracy():
    sc = [[1.5, 0.4], [1.5, 0.9], [1.5, 1.4]]
    open_ = run_bounds(campaign(scenario={"ms_pos": [4, 0], "rotation": 0.1, "scatterers": sc},
                                snr_db=[0.0])).rows[0]
    blocked = run_bounds(campaign(scenario={"ms_pos": [4, 0], "rotation": 0.1, "scatterers": sc,
                                            "los_blocked": True}, snr_db=[0.0])).rows[0]
    assert blocked["peb_m"] > open_["peb_m"] and blocked["reb_rad"] > open_["reb_rad"]


def test_region_sweep_rows():
    cc = campaign(snr_db=[0.0], ms_region={"x": [3, 4], "y": [0, 0.3], "n_positions": 6},
                  g_values=[4, 8])
    res = run_bounds(cc)
    assert [r["n_transmissions"] for r in res.rows] == [4, 8]
    assert all(r["n_points"] == 6 for r in res.rows)
    assert all(r["peb_cdf90_m"] >= r["peb_cdf50_m"] for r in res.rows)
    assert len(res.records) == 12 and len(res.cdf) == 12
