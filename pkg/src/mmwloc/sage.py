"""Off-grid refinement of path parameters by space-alternating EM.

Each path owns a hidden data space that receives all the noise when that
path is updated.  Within a path the angles and delay are updated one at a
time by bounded 1-D searches on the gain-concentrated objective, then the
gain is set by least squares.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .beamspace import SensingSet
from .channel import _ula, delay_phasor, single_path_response
from .config import ArrayOfdmConfig
from .errors import NonFinite, ZeroResponse
from .geometry import PathParams
from .somp import CoarseEstimate


@dataclass(frozen=True)
class RefineConfig:
    """Iteration limits and 1-D search settings.

    Angle brackets are measured in virtual-grid bins, the delay bracket in
    sample periods.  ``tol`` is the relative likelihood improvement below
    which the sweeps stop.
    """

    max_outer_iters: int = 30
    angle_bracket_bins: float = 1.0
    delay_bracket_samples: float = 0.5
    angle_xtol: float = 1e-12
    delay_xtol: float = 1e-9          # in units of the sample period
    tol: float = 1e-8

    def __post_init__(self):
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")
        if min(self.angle_bracket_bins, self.delay_bracket_samples, self.angle_xtol,
               self.delay_xtol, self.tol) <= 0:
            raise ValueError("brackets and tolerances must be positive")


@dataclass
class RefinedEstimate:
    """Refined paths with angles in ``[-pi/2, pi/2]`` and the sweep history.

    ``trajectory[i]`` is a ``(K, 5)`` array of ``[delay, aod, aoa, Re g, Im g]``
    after sweep ``i`` (entry 0 is the initial point); ``objective`` holds the
    residual energy at the same instants.
    """

    paths: list
    trajectory: list = field(default_factory=list)
    objective: list = field(default_factory=list)

    @property
    def n_iterations(self) -> int:
        return len(self.trajectory) - 1


def path_response(params: PathParams, sensing: SensingSet, cfg: ArrayOfdmConfig) -> np.ndarray:
    """Noiseless contribution of one path in observation layout ``(G, N, N_r)``."""
    return single_path_response(params.delay, params.aod, params.aoa, params.gain, cfg, sensing.f)


def gain_update(residual: np.ndarray, response: np.ndarray) -> complex:
    """Least-squares gain fitting ``response`` (at unit gain) to ``residual``."""
    energy = float(np.vdot(response, response).real)
    if energy <= 0:
        raise ZeroResponse("path response is identically zero")
    return complex(np.vdot(response, residual) / energy)


class _PathState:
    """Mutable per-path parameters plus the cached unit-gain response."""

    def __init__(self, delay, aod, aoa, gain, cfg, f):
        self.delay, self.aod, self.aoa, self.gain = float(delay), float(aod), float(aoa), complex(gain)
        self.cfg, self.f = cfg, f
        self.refresh()

    def tx_gain(self, aod):
        return np.einsum("nt,gnt->gn", _ula(self.cfg.n_tx, self.cfg.spacing,
                                            self.cfg.wavelengths, aod).conj(), self.f)

    def rx(self, aoa):
        return _ula(self.cfg.n_rx, self.cfg.spacing, self.cfg.wavelengths, aoa)

    def refresh(self):
        self.t = self.tx_gain(self.aod)
        self.a_r = self.rx(self.aoa)
        self.e = delay_phasor(self.cfg, self.delay)
        self.unit = (self.t * self.e)[:, :, None] * self.a_r[None]

    @property
    def response(self):
        return self.gain * self.unit

    def as_array(self):
        return np.array([self.delay, self.aod, self.aoa, self.gain.real, self.gain.imag])


def _angle_bracket(angle, n_ant, cfg, bins):
    width = bins * (cfg.wavelength / cfg.spacing) / n_ant / max(np.cos(angle), 0.05)
    return max(angle - width, -np.pi / 2), min(angle + width, np.pi / 2)


def _search(fun, x0, lo, hi, xtol):
    """Maximize ``fun`` on ``[lo, hi]``; keep ``x0`` unless the search improves on it."""
    best = fun(x0)
    if hi - lo <= xtol:
        return x0, best
    res = minimize_scalar(lambda x: -fun(x), bounds=(lo, hi), method="bounded",
                          options={"xatol": xtol, "maxiter": 200})
    if -res.fun > best:
        return float(res.x), -float(res.fun)
    return x0, best


def _update_path(s: _PathState, z: np.ndarray, cfg: ArrayOfdmConfig, rcfg: RefineConfig):
    """One Gauss-Seidel pass over the angles, delay and gain of a single path."""
    # transmit angle
    b = np.einsum("nr,gnr->gn", s.a_r.conj(), z)
    eb = s.e.conj()[None] * b

    def obj_tx(a):
        t = s.tx_gain(a)
        return abs(np.sum(t.conj() * eb)) ** 2 / np.sum(np.abs(t) ** 2)

    lo, hi = _angle_bracket(s.aod, cfg.n_tx, cfg, rcfg.angle_bracket_bins)
    s.aod, _ = _search(obj_tx, s.aod, lo, hi, rcfg.angle_xtol)
    s.t = s.tx_gain(s.aod)
    tt = np.sum(np.abs(s.t) ** 2)

    # receive angle
    c = np.einsum("gn,gnr->nr", (s.e[None] * s.t).conj(), z)

    def obj_rx(a):
        return abs(np.sum(s.rx(a).conj() * c)) ** 2 / tt

    lo, hi = _angle_bracket(s.aoa, cfg.n_rx, cfg, rcfg.angle_bracket_bins)
    s.aoa, _ = _search(obj_rx, s.aoa, lo, hi, rcfg.angle_xtol)
    s.a_r = s.rx(s.aoa)

    # delay, searched in sample periods
    ts = cfg.sample_period
    d = np.einsum("gn,gn->n", s.t.conj(), np.einsum("nr,gnr->gn", s.a_r.conj(), z))
    w = cfg.angular_freqs * ts

    def obj_tau(x):
        return abs(np.sum(np.exp(1j * w * x) * d)) ** 2 / tt

    x0 = s.delay / ts
    x, _ = _search(obj_tau, x0, max(x0 - rcfg.delay_bracket_samples, 0.0),
                   x0 + rcfg.delay_bracket_samples, rcfg.delay_xtol)
    s.delay = x * ts
    s.e = delay_phasor(cfg, s.delay)
    s.unit = (s.t * s.e)[:, :, None] * s.a_r[None]
    s.gain = gain_update(z, s.unit)


def refine_paths(init: np.ndarray, sensing: SensingSet, cfg: ArrayOfdmConfig,
                 rcfg: RefineConfig | None = None) -> RefinedEstimate:
    """Refine paths given as rows ``[delay, aod, aoa, gain]`` (complex gain)."""
    rcfg = rcfg or RefineConfig()
    y = sensing.y
    states = [_PathState(p[0].real, p[1].real, p[2].real, p[3], cfg, sensing.f) for p in init]
    if not states:
        raise ValueError("need at least one path to refine")
    model = sum(s.response for s in states)
    energy = float(np.sum(np.abs(y - model) ** 2))
    traj = [np.array([s.as_array() for s in states])]
    objective = [energy]
    for _ in range(rcfg.max_outer_iters):
        for k, s in enumerate(states):
            old = s.response
            z = y - model + old
            _update_path(s, z, cfg, rcfg)
            vals = s.as_array()
            if not np.all(np.isfinite(vals)):
                raise NonFinite(f"non-finite update for path {k}", k)
            model = model - old + s.response
        new_energy = float(np.sum(np.abs(y - model) ** 2))
        traj.append(np.array([s.as_array() for s in states]))
        objective.append(new_energy)
        improvement = energy - new_energy
        energy = new_energy
        if improvement <= rcfg.tol * max(energy + improvement, np.finfo(float).tiny):
            break
    paths = [PathParams(s.delay, s.aod, s.aoa, s.gain) for s in states]
    return RefinedEstimate(paths, traj, objective)


def sage_refine(coarse: CoarseEstimate, sensing: SensingSet, cfg: ArrayOfdmConfig,
                rcfg: RefineConfig | None = None) -> RefinedEstimate:
    """Refine a coarse estimate (which must carry delays and gains)."""
    if coarse.n_paths < 1:
        raise ValueError("coarse estimate holds no path")
    if len(coarse.delay0) != coarse.n_paths:
        raise ValueError("coarse estimate lacks delays; run per_path_delay_gain first")
    init = [(coarse.delay0[k], coarse.aod0[k], coarse.aoa0[k], coarse.gain0[k])
            for k in range(coarse.n_paths)]
    return refine_paths(np.array(init, dtype=complex), sensing, cfg, rcfg)
