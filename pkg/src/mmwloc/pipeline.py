"""Observation to pose: detection, refinement and the location fit."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .beamspace import SensingSet, build_sensing
from .channel import ObservationSet, PilotBlock, single_path_response
from .config import ArrayOfdmConfig
from .errors import InsufficientPaths, NoPathDetected
from .fim import FimMatrix, fim_channel_params
from .geometry import ChannelParamSet, PathParams, wrap_angle
from .pose import (OlosSearchConfig, PoseSolution, direct_path_order, permute_paths, solve_los,
                   solve_nlos, solve_olos, solve_unknown)
from .sage import RefineConfig, RefinedEstimate, refine_paths
from .somp import CoarseEstimate, dcs_somp, per_path_delay_gain, stop_rule

CONDITIONS = ("los", "nlos", "olos", "unknown")


@dataclass
class EstimateResult:
    channel: ChannelParamSet          # delay-sorted, angles in the scene convention
    solution: PoseSolution
    fim: FimMatrix | None
    coarse: list
    refined: RefinedEstimate | None

    @property
    def n_paths(self) -> int:
        return len(self.channel.paths)


def detect_and_refine(sensing: SensingSet, cfg: ArrayOfdmConfig, threshold_noise_psd: float,
                      p_fa: float = 1e-3, rcfg: RefineConfig | None = None,
                      max_paths: int = 20):
    """Add one path at a time until the residual holds no detectable atom.

    Every new atom is picked on the residual left by the refined model of the
    paths found so far, and all paths are refined jointly before the next
    search.  Returns ``(coarse_list, refined)`` with arcsin-domain angles.
    """
    stop = stop_rule(sensing, p_fa, threshold_noise_psd)
    rows: list = []
    coarse_list: list[CoarseEstimate] = []
    refined = None
    residual = sensing.y
    while len(rows) < max_paths:
        try:
            c = dcs_somp(replace(sensing, y=residual), stop, cfg, max_atoms=1)
        except NoPathDetected:
            break
        c = per_path_delay_gain(c, cfg)
        coarse_list.append(c)
        rows.append((c.delay0[0], c.aod0[0], c.aoa0[0], c.gain0[0]))
        refined = refine_paths(np.array(rows, dtype=complex), sensing, cfg, rcfg)
        rows = [(p.delay, p.aod, p.aoa, p.gain) for p in refined.paths]
        model = _model(refined, sensing, cfg)
        residual = sensing.y - model
    if not rows:
        raise NoPathDetected("no path exceeds the detection threshold")
    return coarse_list, refined


def _model(refined: RefinedEstimate, sensing: SensingSet, cfg: ArrayOfdmConfig) -> np.ndarray:
    return sum(single_path_response(p.delay, p.aod, p.aoa, p.gain, cfg, sensing.f)
               for p in refined.paths)


def batch_coarse(sensing: SensingSet, cfg: ArrayOfdmConfig, threshold_noise_psd: float,
                 p_fa: float = 1e-3) -> CoarseEstimate:
    """All atoms in one greedy run, with per-path delays and gains."""
    c = dcs_somp(sensing, stop_rule(sensing, p_fa, threshold_noise_psd), cfg)
    return per_path_delay_gain(c, cfg)


def to_scene_convention(paths) -> ChannelParamSet:
    """Unfold receive angles to the back half-plane and sort paths by delay.

    A ULA cannot tell ``theta`` from ``pi - theta``; the MS faces the BS, so
    arrivals are reported in the half-plane behind the array broadside.
    """
    out = [PathParams(max(p.delay, 0.0), float(p.aod), float(wrap_angle(np.pi - p.aoa)), p.gain)
           for p in paths]
    out.sort(key=lambda p: p.delay)
    return ChannelParamSet(tuple(out), olos=True)


def estimate(obs: ObservationSet, pilots: PilotBlock, cfg: ArrayOfdmConfig,
             condition: str = "los", bs=(0.0, 0.0), p_fa: float = 1e-3,
             threshold_noise_psd: float | None = None, refine: bool = True,
             detection: str = "successive", rcfg: RefineConfig | None = None,
             search: OlosSearchConfig | None = None, weighting: str = "fim") -> EstimateResult:
    """Estimate the MS pose from one set of observations.

    ``threshold_noise_psd`` sets the noise level used by the detector (needed
    for noiseless input).  ``detection="batch"`` runs the greedy stage once
    over all atoms before refinement; ``refine=False`` stops after the grid
    stage.  ``weighting`` is ``"fim"`` or ``"identity"``.
    """
    if condition not in CONDITIONS:
        raise ValueError(f"condition must be one of {CONDITIONS}")
    n0 = threshold_noise_psd if threshold_noise_psd is not None else obs.noise_psd
    if not n0 > 0:
        raise ValueError("a positive noise level is needed for the detection threshold")
    sensing = build_sensing(obs, pilots, cfg)
    refined = None
    if detection == "successive" and refine:
        coarse, refined = detect_and_refine(sensing, cfg, n0, p_fa, rcfg)
        paths = refined.paths
    elif detection in ("successive", "batch"):
        c = batch_coarse(sensing, cfg, n0, p_fa)
        coarse = [c]
        if refine:
            init = np.array(list(zip(c.delay0, c.aod0, c.aoa0, c.gain0)), dtype=complex)
            refined = refine_paths(init, sensing, cfg, rcfg)
            paths = refined.paths
        else:
            paths = [PathParams(t, a, b, g) for t, a, b, g in zip(c.delay0, c.aod0, c.aoa0, c.gain0)]
    else:
        raise ValueError(f"unknown detection mode {detection!r}")

    cp = to_scene_convention(paths)
    fim = None
    if weighting == "fim":
        n0_fim = obs.noise_psd if obs.noise_psd > 0 else n0
        fim = fim_channel_params(cp, cfg, pilots, n0_fim)
    elif weighting != "identity":
        raise ValueError("weighting must be 'fim' or 'identity'")
    solution = solve_pose(cp, fim, bs, condition, search, cfg.light_speed, cfg.sample_period)
    return EstimateResult(cp, solution, fim, coarse, refined)


def solve_pose(cp: ChannelParamSet, fim, bs, condition: str,
               search: OlosSearchConfig | None, c: float,
               delay_resolution: float | None = None) -> PoseSolution:
    """Dispatch to the location solver of ``condition``.

    With a direct path, the path taken as direct is chosen by
    :func:`direct_path_order`.  Under ``"nlos"`` a single detected path falls
    back to the direct-path closed form.
    """
    if condition in ("los", "nlos"):
        cp, fim = permute_paths(cp, fim, direct_path_order(cp, delay_resolution))
    if condition == "los" or (condition == "nlos" and len(cp.paths) == 1):
        pose = solve_los(cp.paths[0], bs, c)
        return PoseSolution(pose, [], 0.0, "los", cp.gains[:1])
    if condition == "nlos":
        return solve_nlos(cp, fim, bs, c)
    if len(cp.paths) < 3:
        raise InsufficientPaths(f"{len(cp.paths)} paths detected, at least three needed")
    if condition == "olos":
        return solve_olos(cp, fim, bs, search, c)
    return solve_unknown(cp, fim, bs, search, c, delay_resolution)
