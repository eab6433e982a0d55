"""Position and rotation from estimated channel parameters.

The direct-path case is closed form.  With scattered paths the location
parameters are fit to the channel estimate by weighted least squares, the
weight being the Fisher information of the channel parameters; this is the
extended-invariance route to the maximum-likelihood location estimate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import LIGHT_SPEED
from .errors import (InsufficientPaths, LinesNearParallel, LmDiverged, MmwlocError,
                     SingularLinearSystem)
from .geometry import (ChannelParamSet, PathParams, Pose, Scenario, _vec, channel_vector,
                       location_vector, scenario_from_location, transformation_matrix, wrap_pi)
from .lma import LmaResult, lma_minimize

PARALLEL_EPS = 1e-6
DELAY_UNIT = 1e-9          # delays enter the residual in nanoseconds


@dataclass(frozen=True)
class OlosSearchConfig:
    delta_alpha: float = 0.05
    alpha_max: float = 0.5

    def __post_init__(self):
        if not 0 < self.delta_alpha <= self.alpha_max:
            raise ValueError("need 0 < delta_alpha <= alpha_max")

    def grid(self) -> np.ndarray:
        n = int(round(self.alpha_max / self.delta_alpha))
        return np.arange(-n, n + 1) * self.delta_alpha


@dataclass
class PoseSolution:
    pose: Pose
    scatterers_hat: list
    cost: float
    branch: str
    gains: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))
    iterations: int = 0
    damping: float = 0.0
    delta_v: float | None = None
    alternative: "PoseSolution | None" = None


def solve_los(path0: PathParams, bs, c: float = LIGHT_SPEED) -> Pose:
    q = _vec(bs)
    r = c * path0.delay
    p = (q.x + r * math.cos(path0.aod), q.y + r * math.sin(path0.aod))
    return Pose(p, math.pi + path0.aod - path0.aoa)


def _ray_intersection(o1, d1, o2, d2):
    """Point where rays ``o1 + a d1`` and ``o2 + b d2`` meet (``a, b >= 0``)."""
    o1, d1, o2, d2 = map(np.asarray, (o1, d1, o2, d2))
    cross = d1[0] * d2[1] - d1[1] * d2[0]
    if abs(cross) < PARALLEL_EPS:
        raise LinesNearParallel("rays are nearly parallel")
    w = o2 - o1
    a = (w[0] * d2[1] - w[1] * d2[0]) / cross
    b = (w[0] * d1[1] - w[1] * d1[0]) / cross
    if a < 0 or b < 0:
        raise LinesNearParallel("rays diverge")
    return o1 + a * d1


def _closest_midpoint(o1, d1, o2, d2):
    """Midpoint of the closest points of two rays."""
    o1, d1, o2, d2 = map(np.asarray, (o1, d1, o2, d2))
    a = max((o2 - o1) @ d1, 0.0)
    b = max((o1 + a * d1 - o2) @ d2, 0.0)
    a = max((o2 + b * d2 - o1) @ d1, 0.0)
    return 0.5 * (o1 + a * d1 + o2 + b * d2)


def scatterer_from_rays(q, p, aod: float, aoa: float, alpha: float) -> np.ndarray:
    """Scatterer on the departure ray from ``q`` and the arrival ray from ``p``."""
    u = np.array([math.cos(aod), math.sin(aod)])
    m = np.array([math.cos(aoa + alpha), math.sin(aoa + alpha)])
    try:
        return _ray_intersection(q, u, p, m)
    except LinesNearParallel:
        return _closest_midpoint(q, u, p, m)


class _Fit:
    """Residual and Jacobian of ``eta_hat - f(eta_tilde)`` in nanosecond units."""

    def __init__(self, eta_hat: ChannelParamSet, fim_eta, bs, olos: bool, c: float):
        self.eta = eta_hat.to_vector()
        self.n_paths = len(eta_hat.paths)
        self.n_scat = self.n_paths - (0 if olos else 1)
        self.bs, self.olos, self.c = _vec(bs), olos, c
        scale = np.ones(5 * self.n_paths)
        scale[0::5] = DELAY_UNIT
        self.scale = scale
        if fim_eta is None:
            self.weight = None
        else:
            J = np.asarray(getattr(fim_eta, "entries", fim_eta), dtype=float)
            self.weight = J * np.outer(scale, scale)
        self.angle_slots = np.zeros(5 * self.n_paths, dtype=bool)
        self.angle_slots[1::5] = self.angle_slots[2::5] = True

    def scenario(self, x):
        return scenario_from_location(x, self.bs, self.olos, self.n_scat)

    def residual(self, x) -> np.ndarray:
        s, gains = self.scenario(x)
        model = channel_vector(s, gains, self.c)
        r = self.eta - model
        r[self.angle_slots] = wrap_pi(r[self.angle_slots])
        return r / self.scale

    def jacobian(self, x) -> np.ndarray:
        s, _ = self.scenario(x)
        return -transformation_matrix(s, self.c).T / self.scale[:, None]

    def cost(self, x) -> float:
        r = self.residual(x)
        return float(r @ (self.weight @ r)) if self.weight is not None else float(r @ r)

    def run(self, x0) -> LmaResult:
        return lma_minimize(self.residual, self.weight, x0, jac=self.jacobian)


def _solution(fit: _Fit, res: LmaResult, branch: str) -> PoseSolution:
    s, gains = fit.scenario(res.x)
    return PoseSolution(Pose(s.ms_pos, s.rotation), list(s.scatterers), res.cost, branch,
                        gains, res.iterations, res.damping)


def solve_nlos(eta_hat: ChannelParamSet, fim_eta, bs, c: float = LIGHT_SPEED) -> PoseSolution:
    """Fit ``[p, alpha, g_0, (s_k, g_k)...]`` with the first path taken as direct.

    The start point uses the direct-path closed form and intersects the
    departure and arrival rays of every other path.
    """
    if len(eta_hat.paths) < 2:
        raise InsufficientPaths("need a direct path and at least one scattered path")
    paths = eta_hat.paths
    pose = solve_los(paths[0], bs, c)
    q, p, alpha = np.array(_vec(bs)), np.array(pose.position), pose.rotation
    x0 = [p[0], p[1], alpha, paths[0].gain.real, paths[0].gain.imag]
    for path in paths[1:]:
        s = scatterer_from_rays(q, p, path.aod, path.aoa, alpha)
        x0 += [s[0], s[1], path.gain.real, path.gain.imag]
    fit = _Fit(eta_hat, fim_eta, bs, olos=False, c=c)
    return _solution(fit, fit.run(np.array(x0)), "nlos")


def olos_start(eta_hat: ChannelParamSet, bs, alpha: float, pair, c: float = LIGHT_SPEED
               ) -> np.ndarray:
    """Start point for a trial rotation from the linear system of two paths.

    For path ``k`` with departure direction ``u_k`` and the unit vector
    ``w_k`` pointing from the scatterer to the MS, ``p - d_k (u_k - w_k)
    = q + c tau_k w_k`` where ``d_k`` is the BS-scatterer distance.  Two
    paths give four equations in ``[p_x, p_y, d_k1, d_k2]``.
    """
    q = np.array(_vec(bs))
    paths = eta_hat.paths
    A = np.zeros((4, 4))
    rhs = np.zeros(4)
    u, w = {}, {}
    for row, k in enumerate(pair):
        path = paths[k]
        u[k] = np.array([math.cos(path.aod), math.sin(path.aod)])
        w[k] = -np.array([math.cos(path.aoa + alpha), math.sin(path.aoa + alpha)])
        A[2 * row:2 * row + 2, :2] = np.eye(2)
        A[2 * row:2 * row + 2, 2 + row] = -(u[k] - w[k])
        rhs[2 * row:2 * row + 2] = q + c * path.delay * w[k]
    if np.linalg.cond(A) > 1e12:
        raise SingularLinearSystem(f"trial rotation {alpha:.4f}: singular system")
    sol = np.linalg.solve(A, rhs)
    p = sol[:2]
    x0 = [p[0], p[1], alpha]
    for k, path in enumerate(paths):
        if k in pair:
            s = q + sol[2 + pair.index(k)] * u[k]
        else:
            s = scatterer_from_rays(q, p, path.aod, path.aoa, alpha)
        x0 += [s[0], s[1], path.gain.real, path.gain.imag]
    return np.array(x0)


def solve_olos(eta_hat: ChannelParamSet, fim_eta, bs, search: OlosSearchConfig | None = None,
               c: float = LIGHT_SPEED) -> PoseSolution:
    """Fit ``[p, alpha, (s_k, g_k)...]`` with every path scattered.

    One fit is started per trial rotation on the search grid; the lowest
    final cost wins.  The two strongest paths seed the position.
    """
    search = search or OlosSearchConfig()
    if len(eta_hat.paths) < 3:
        raise InsufficientPaths("at least three scattered paths are needed")
    cp = ChannelParamSet(eta_hat.paths, olos=True)
    pair = list(np.argsort(-np.abs(cp.gains), kind="stable")[:2])
    fit = _Fit(cp, fim_eta, bs, olos=True, c=c)
    best = None
    for alpha in search.grid():
        try:
            x0 = olos_start(cp, bs, alpha, pair, c)
            res = fit.run(x0)
        except (MmwlocError, np.linalg.LinAlgError):
            continue
        if best is None or res.cost < best.cost:
            best = res
    if best is None:
        raise LmDiverged("no trial rotation produced a valid fit")
    return _solution(fit, best, "olos")


def direct_path_order(eta_hat: ChannelParamSet, delay_resolution: float | None = None
                      ) -> np.ndarray:
    """Path order with the direct-path candidate first, the rest by delay.

    The candidate is the shortest-delay path.  With ``delay_resolution`` set,
    the strongest path among those within that delay of the shortest is
    taken instead, since delay ordering is unreliable below the resolution.
    """
    delays = eta_hat.delays
    order = np.argsort(delays, kind="stable")
    first = order[0]
    if delay_resolution is not None:
        near = order[delays[order] <= delays[first] + delay_resolution]
        first = near[np.argmax(np.abs(eta_hat.gains[near]))]
    return np.concatenate([[first], order[order != first]])


def permute_paths(eta_hat: ChannelParamSet, fim_eta, order):
    """Reorder paths and the matching FIM blocks; the result skips the delay-order check."""
    paths = tuple(eta_hat.paths[i] for i in order)
    J = None
    if fim_eta is not None:
        E = np.asarray(getattr(fim_eta, "entries", fim_eta))
        idx = np.concatenate([np.arange(5 * i, 5 * i + 5) for i in order])
        J = E[np.ix_(idx, idx)]
    return ChannelParamSet(paths, olos=True), J


def solve_unknown(eta_hat: ChannelParamSet, fim_eta, bs, search: OlosSearchConfig | None = None,
                  c: float = LIGHT_SPEED, delay_resolution: float | None = None) -> PoseSolution:
    """Fit both the direct-path and blocked-direct-path hypotheses and keep the cheaper.

    ``delta_v`` on the result is the ratio of the direct-path cost to the
    blocked-path cost.
    """
    if len(eta_hat.paths) < 3:
        raise InsufficientPaths("at least three paths are needed")
    cp, J = permute_paths(eta_hat, fim_eta, direct_path_order(eta_hat, delay_resolution))
    nlos = solve_nlos(cp, J, bs, c)
    olos = solve_olos(cp, J, bs, search, c)
    delta_v = nlos.cost / olos.cost if olos.cost > 0 else np.inf
    win, lose = (olos, nlos) if olos.cost < nlos.cost else (nlos, olos)
    win.delta_v = delta_v
    win.alternative = lose
    return win


def location_residual_cost(eta_hat: ChannelParamSet, fim_eta, s: Scenario, gains,
                           c: float = LIGHT_SPEED) -> float:
    """Weighted cost of a given scene against ``eta_hat`` (diagnostics)."""
    fit = _Fit(eta_hat, fim_eta, s.bs_pos, s.los_blocked, c)
    return fit.cost(location_vector(s, gains))

