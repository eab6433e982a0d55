"""Randomized property suites; ``COUNTS`` records how many cases each one ran."""
from collections import Counter

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from mmwloc.beamspace import build_sensing
from mmwloc.channel import noise_psd_for_snr, random_pilots, synthesize
from mmwloc.config import ArrayOfdmConfig
from mmwloc.errors import NoPathDetected
from mmwloc.fim import fim_channel_params
from mmwloc.geometry import ChannelParamSet, Scenario, params_from_scenario, wrap_pi
from mmwloc.harness import CampaignConfig, run_montecarlo
from mmwloc.lma import lma_minimize
from mmwloc.pose import solve_los
from mmwloc.sage import refine_paths
from mmwloc.somp import StopRule, dcs_somp

from conftest import random_params

SMALL = ArrayOfdmConfig(n_tx=4, n_rx=4, n_subcarriers=4, n_transmissions=2)
MID = ArrayOfdmConfig(n_tx=8, n_rx=8, n_subcarriers=6, n_transmissions=4)
COUNTS: Counter = Counter()

seeds = st.integers(0, 2**32 - 1)


def noisy_sensing(cp, cfg, snr_db, seed):
    pilots = random_pilots(cfg, seed)
    n0 = noise_psd_for_snr(cp, cfg, pilots, snr_db)
    return build_sensing(synthesize(cp, cfg, pilots, n0, seed=seed + 1), pilots, cfg), n0


@settings(max_examples=300)
@given(seed=seeds, n_paths=st.integers(1, 3), snr=st.floats(-5, 30))
def test_somp_residual_energy_decreases(seed, n_paths, snr):
    COUNTS["somp"] += 1
    rng = np.random.default_rng(seed)
    cp = ChannelParamSet.from_vector(random_params(rng, n_paths, MID))
    sens, n0 = noisy_sensing(cp, MID, snr, seed)
    try:
        c = dcs_somp(sens, StopRule(3 * n0 * MID.n_subcarriers), MID)
    except NoPathDetected:
        return
    total = float(np.sum(np.abs(sens.y) ** 2))
    remaining = total - np.cumsum(c.energies)
    assert np.all(np.asarray(c.energies) > 0)
    assert np.all(np.diff(remaining) < 0)
    assert abs(remaining[-1] - np.sum(np.abs(c.residual) ** 2)) <= 1e-9 * total


@settings(max_examples=150)
@given(seed=seeds, n_paths=st.integers(1, 2), snr=st.floats(0, 30),
       shift=st.floats(-0.3, 0.3), angle_shift=st.floats(-0.1, 0.1))
def test_sage_objective_never_increases(seed, n_paths, snr, shift, angle_shift):
    COUNTS["sage"] += 1
    rng = np.random.default_rng(seed)
    x = random_params(rng, n_paths, SMALL).reshape(n_paths, 5)
    cp = ChannelParamSet.from_vector(x.ravel())
    sens, _ = noisy_sensing(cp, SMALL, snr, seed)
    init = x[:, 0:4].astype(complex)
    init[:, 3] = x[:, 3] + 1j * x[:, 4]
    init[:, 0] += shift * SMALL.sample_period
    init[:, 1:3] += angle_shift
    out = refine_paths(init, sens, SMALL)
    obj = np.asarray(out.objective)
    assert np.all(np.diff(obj) <= 1e-9 * obj[0])


@settings(max_examples=200)
@given(seed=seeds, n=st.integers(2, 5), m_extra=st.integers(0, 6))
def test_lma_accepted_steps_decrease(seed, n, m_extra):
    COUNTS["lma"] += 1
    rng = np.random.default_rng(seed)
    m = n + m_extra
    A = rng.standard_normal((m, n))
    b = rng.standard_normal(m)
    c = rng.uniform(0, 2, m)
    B = rng.standard_normal((m, m))
    W = B @ B.T + m * np.eye(m)

    def r(x):
        return A @ x - b + c * np.sin(A @ x)

    res = lma_minimize(r, W, rng.standard_normal(n))
    assert np.all(np.diff(res.costs) < 0)
    assert res.cost == res.costs[-1] <= res.costs[0]


@settings(max_examples=200)
@given(seed=seeds, n_paths=st.integers(1, 3), n0=st.floats(1e-3, 10.0))
def test_fim_symmetric_psd(seed, n_paths, n0):
    COUNTS["fim"] += 1
    rng = np.random.default_rng(seed)
    cp = ChannelParamSet.from_vector(random_params(rng, n_paths, SMALL))
    J = fim_channel_params(cp, SMALL, random_pilots(SMALL, seed), n0).entries
    scale = np.abs(J).max()
    assert np.max(np.abs(J - J.T)) <= 1e-12 * scale
    assert np.linalg.eigvalsh(0.5 * (J + J.T)).min() >= -1e-9 * scale


@settings(max_examples=200)
@given(seed=seeds, n_paths=st.integers(1, 3), n0=st.floats(1e-3, 10.0))
def test_synthesis_deterministic_under_seed(seed, n_paths, n0):
    COUNTS["determinism"] += 1
    cp = ChannelParamSet.from_vector(random_params(np.random.default_rng(seed), n_paths, SMALL))
    a = synthesize(cp, SMALL, random_pilots(SMALL, seed), n0, seed=seed).y
    b = synthesize(cp, SMALL, random_pilots(SMALL, seed), n0, seed=seed).y
    assert np.array_equal(a, b)


@settings(max_examples=10)
@given(seed=st.integers(0, 1000))
def test_campaign_deterministic_under_seed(seed):
    COUNTS["determinism"] += 1
    cc = CampaignConfig(array={"n_tx": 8, "n_rx": 8, "n_subcarriers": 6, "n_transmissions": 4},
                        snr_db=[5.0], n_trials=2, base_seed=seed)
    assert run_montecarlo(cc).records == run_montecarlo(cc).records


@settings(max_examples=200)
@given(x=st.floats(0.5, 20), y=st.floats(-10, 10), alpha=st.floats(-3, 3))
def test_los_pose_round_trip(x, y, alpha):
    COUNTS["los_round_trip"] += 1
    s = Scenario((0.0, 0.0), (x, y), alpha)
    cp = params_from_scenario(s, np.array([1.0 + 0j]))
    pose = solve_los(cp.paths[0], s.bs_pos)
    assert abs(pose.position.x - x) < 1e-9 * max(1.0, abs(x))
    assert abs(pose.position.y - y) < 1e-9 * max(1.0, abs(x))
    assert abs(wrap_pi(pose.rotation - alpha)) < 1e-9
