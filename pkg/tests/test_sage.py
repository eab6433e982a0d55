import numpy as np
import pytest

from mmwloc.beamspace import build_sensing
from mmwloc.channel import noiseless_response, random_pilots, synthesize
from mmwloc.config import ArrayOfdmConfig
from mmwloc.errors import NonFinite, ZeroResponse
from mmwloc.fim import fim_channel_params, equilibrated_inverse
from mmwloc.geometry import ChannelParamSet, PathParams
from mmwloc.sage import RefineConfig, gain_update, path_response, refine_paths, sage_refine
from mmwloc.somp import dcs_somp, per_path_delay_gain, stop_rule

import oracles

CFG = ArrayOfdmConfig()
TS = CFG.sample_period


def two_paths():
    return ChannelParamSet((PathParams(1.23 * TS, 0.137, -0.41, 1.0 + 0.5j),
                            PathParams(2.71 * TS, -0.62, 0.29, 0.6 - 0.3j)), olos=True)


def rows(cp):
    return np.array([(p.delay, p.aod, p.aoa, p.gain) for p in cp.paths], dtype=complex)


def sensing(cp, n0=0.0, seed=None, cfg=CFG):
    pilots = random_pilots(cfg, 0)
    return build_sensing(synthesize(cp, cfg, pilots, n0, seed=seed), pilots, cfg)


def test_truth_is_a_fixed_point():
    cp = two_paths()
    out = refine_paths(rows(cp), sensing(cp), CFG)
    for p, q in zip(out.paths, cp.paths):
        assert (p.delay, p.aod, p.aoa) == (q.delay, q.aod, q.aoa)
        assert abs(p.gain - q.gain) < 1e-12


def test_single_off_grid_path_noiseless():
    cp = ChannelParamSet((PathParams(1.37 * TS, 0.2345, -0.5432, 0.8 - 0.6j),))
    sens = sensing(cp)
    c = per_path_delay_gain(dcs_somp(sens, stop_rule(sens, 1e-3, 1e-6), CFG, max_atoms=1), CFG)
    bin_width = 2 / CFG.n_tx
    assert abs(c.aod0[0] - 0.2345) < bin_width
    out = sage_refine(c, sens, CFG)
    p = out.paths[0]
    assert abs(p.aod - 0.2345) < 1e-6 and abs(p.aoa + 0.5432) < 1e-6
    assert abs(p.delay - 1.37 * TS) * 1e9 < 1e-6
    assert abs(p.gain - (0.8 - 0.6j)) < 1e-5


def test_objective_never_increases():
    cp = two_paths()
    init = rows(cp) + np.array([0.2 * TS, 0.04, -0.03, 0.1])
    out = refine_paths(init, sensing(cp, 1e-3, seed=1), CFG)
    obj = np.array(out.objective)
    assert np.all(np.diff(obj) <= 1e-9 * obj[0])
    assert out.n_iterations >= 1


def test_permutation_equivariance():
    cp = two_paths()
    sens = sensing(cp, 1e-3, seed=2)
    init = rows(cp) + np.array([0.1 * TS, 0.02, 0.01, 0.0])
    a = refine_paths(init, sens, CFG).paths
    b = refine_paths(init[::-1], sens, CFG).paths[::-1]
    for p, q in zip(a, b):
        assert abs(p.delay - q.delay) < 1e-6 * TS
        assert abs(p.aod - q.aod) < 1e-6 and abs(p.aoa - q.aoa) < 1e-6


def test_path_response_matches_synthesis():
    cp = two_paths()
    sens = sensing(cp)
    total = sum(path_response(p, sens, CFG) for p in cp.paths)
    assert np.allclose(total, sens.y, atol=1e-12)
    one = path_response(cp.paths[0], sens, CFG)
    ref = oracles.observation(cp.paths[0].as_array(), CFG, sens.f)
    assert np.allclose(one, ref, atol=1e-10 * np.abs(ref).max())
    zero = PathParams(cp.paths[0].delay, cp.paths[0].aod, cp.paths[0].aoa, 0.0)
    assert not np.any(path_response(zero, sens, CFG))


def test_gain_update_cases():
    rng = np.random.default_rng(0)
    v = rng.standard_normal((3, 4, 5)) + 1j * rng.standard_normal((3, 4, 5))
    assert gain_update(2 * v, v) == pytest.approx(2.0)
    w = rng.standard_normal(v.shape) + 1j * rng.standard_normal(v.shape)
    w_orth = w - np.vdot(v, w) / np.vdot(v, v) * v
    assert abs(gain_update(w_orth, v)) < 1e-14
    r = rng.standard_normal(v.shape) + 1j * rng.standard_normal(v.shape)
    assert abs(gain_update(r, v) - oracles.scalar_ls_gain(r, v)) < 1e-12
    with pytest.raises(ZeroResponse):
        gain_update(r, np.zeros_like(v))


def test_non_finite_update_reported():
    cp = two_paths()
    bad = rows(cp)
    bad[0, 3] = np.nan
    with pytest.raises(NonFinite) as e:
        refine_paths(bad, sensing(cp), CFG)
    assert e.value.path_index == 0


def test_config_validation():
    with pytest.raises(ValueError):
        RefineConfig(max_outer_iters=0)
    with pytest.raises(ValueError):
        RefineConfig(tol=0.0)


def test_direct_path_rmse_near_bound():
    cp = ChannelParamSet((PathParams(1.37 * TS, 0.2345, -0.5432, 1.0),))
    pilots = random_pilots(CFG, 0)
    mu = noiseless_response(cp, CFG, pilots)
    n0 = np.sum(np.abs(mu) ** 2) / mu.size          # 0 dB
    inv, _ = equilibrated_inverse(fim_channel_params(cp, CFG, pilots, n0).entries)
    crb = np.sqrt(np.diag(inv)[:3])
    errs = []
    for t in range(100):
        sens = build_sensing(synthesize(cp, CFG, pilots, n0, seed=t), pilots, CFG)
        c = per_path_delay_gain(dcs_somp(sens, stop_rule(sens), CFG, max_atoms=1), CFG)
        p = sage_refine(c, sens, CFG).paths[0]
        errs.append([p.delay - 1.37 * TS, p.aod - 0.2345, p.aoa + 0.5432])
    rmse = np.sqrt(np.mean(np.square(errs), axis=0))
    assert np.all(rmse < 1.5 * crb)
