"""Scenario geometry and the mapping between channel and location parameters.

Channel parameters of one path are ``[delay, aod, aoa, Re(gain), Im(gain)]``.
Location parameters are ``[p_x, p_y, alpha, Re(g_0), Im(g_0)]`` for the direct
path and ``[s_x, s_y, Re(g_k), Im(g_k)]`` for every scattered path.  When the
direct path is blocked the location vector is ``[p_x, p_y, alpha]`` followed
by the per-scatterer blocks.

Angle conventions
-----------------
The AOD is the direction of the first hop seen from the BS, measured from the
positive x-axis.  The AOA is ``pi + atan2(p - src) - alpha`` where ``src`` is
the BS for the direct path and the scatterer otherwise, i.e. the arrival
direction expressed in the rotated MS frame.  Both reduce to the arccos
expressions for points above the transmitter and stay differentiable when the
MS lies on the BS x-axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .config import LIGHT_SPEED
from .errors import DegenerateGeometry, DimensionMismatch, EmptyParamSet

DEGENERACY_EPS = 1e-9
PATH_FIELDS = ("delay", "aod", "aoa", "gain_re", "gain_im")


class Vec2(NamedTuple):
    x: float
    y: float

    def __sub__(self, other):
        return Vec2(self.x - other[0], self.y - other[1])

    def norm(self) -> float:
        return math.hypot(self.x, self.y)


def _vec(v) -> Vec2:
    v = Vec2(float(v[0]), float(v[1]))
    if not (math.isfinite(v.x) and math.isfinite(v.y)):
        raise ValueError(f"non-finite coordinate {v}")
    return v


def wrap_angle(a):
    """Wrap to [0, 2*pi)."""
    return np.mod(a, 2 * np.pi)


def wrap_pi(a):
    """Wrap to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2 * np.pi)


@dataclass(frozen=True)
class Scenario:
    bs_pos: Vec2
    ms_pos: Vec2
    rotation: float
    scatterers: tuple = ()
    los_blocked: bool = False

    def __post_init__(self):
        object.__setattr__(self, "bs_pos", _vec(self.bs_pos))
        object.__setattr__(self, "ms_pos", _vec(self.ms_pos))
        object.__setattr__(self, "scatterers", tuple(_vec(s) for s in self.scatterers))
        object.__setattr__(self, "rotation", float(wrap_angle(self.rotation)))
        if self.los_blocked and not self.scatterers:
            raise ValueError("a blocked direct path needs at least one scatterer")
        self.check_geometry()

    def check_geometry(self, eps: float = DEGENERACY_EPS):
        pts = [self.bs_pos, self.ms_pos, *self.scatterers]
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                if (pts[i] - pts[j]).norm() < eps:
                    raise DegenerateGeometry(f"points {i} and {j} coincide: {pts[i]}")

    @property
    def n_paths(self) -> int:
        return len(self.scatterers) + (0 if self.los_blocked else 1)

    def path_lengths(self) -> np.ndarray:
        lengths = [] if self.los_blocked else [(self.ms_pos - self.bs_pos).norm()]
        for s in self.scatterers:
            lengths.append((s - self.bs_pos).norm() + (self.ms_pos - s).norm())
        return np.array(lengths)

    def canonical(self) -> "Scenario":
        """Same scene with scatterers ordered by path delay, ties by AOD."""
        q, p = self.bs_pos, self.ms_pos

        def key(s):
            return ((s - q).norm() + (p - s).norm(), math.atan2(s.y - q.y, s.x - q.x))

        return Scenario(q, p, self.rotation, tuple(sorted(self.scatterers, key=key)),
                        self.los_blocked)

    def to_dict(self) -> dict:
        return {
            "bs_pos": list(self.bs_pos),
            "ms_pos": list(self.ms_pos),
            "rotation": self.rotation,
            "scatterers": [list(s) for s in self.scatterers],
            "los_blocked": self.los_blocked,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        return cls(
            bs_pos=d.get("bs_pos", (0.0, 0.0)),
            ms_pos=d["ms_pos"],
            rotation=d.get("rotation", 0.0),
            scatterers=tuple(tuple(s) for s in d.get("scatterers", ())),
            los_blocked=bool(d.get("los_blocked", False)),
        )


@dataclass(frozen=True)
class PathParams:
    delay: float
    aod: float
    aoa: float
    gain: complex = 1.0 + 0j

    def __post_init__(self):
        object.__setattr__(self, "gain", complex(self.gain))
        if not np.isfinite(self.gain):
            raise ValueError("path gain must be finite")
        if self.delay < 0:
            raise ValueError(f"negative delay {self.delay}")

    def as_array(self) -> np.ndarray:
        return np.array([self.delay, self.aod, self.aoa, self.gain.real, self.gain.imag])

    @classmethod
    def from_array(cls, v) -> "PathParams":
        return cls(float(v[0]), float(v[1]), float(v[2]), complex(v[3], v[4]))


@dataclass(frozen=True)
class ChannelParamSet:
    paths: tuple = field(default_factory=tuple)
    olos: bool = False

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(self.paths))
        if not self.olos and len(self.paths) > 1:
            d0 = self.paths[0].delay
            if any(p.delay <= d0 for p in self.paths[1:]):
                raise ValueError("direct path must have the strictly smallest delay")

    def __len__(self):
        return len(self.paths)

    def to_vector(self) -> np.ndarray:
        """Stacked real parameter vector, five entries per path."""
        if not self.paths:
            return np.zeros(0)
        return np.concatenate([p.as_array() for p in self.paths])

    @classmethod
    def from_vector(cls, v, olos: bool = False) -> "ChannelParamSet":
        v = np.asarray(v, dtype=float)
        if v.size % 5:
            raise DimensionMismatch("parameter vector length must be a multiple of 5")
        return cls(tuple(PathParams.from_array(b) for b in v.reshape(-1, 5)), olos)

    @property
    def delays(self):
        return np.array([p.delay for p in self.paths])

    @property
    def aods(self):
        return np.array([p.aod for p in self.paths])

    @property
    def aoas(self):
        return np.array([p.aoa for p in self.paths])

    @property
    def gains(self):
        return np.array([p.gain for p in self.paths], dtype=complex)


@dataclass(frozen=True)
class Pose:
    position: Vec2
    rotation: float

    def __post_init__(self):
        object.__setattr__(self, "position", _vec(self.position))
        object.__setattr__(self, "rotation", float(wrap_angle(self.rotation)))


def _geometry_angles(q, p, scatterers, alpha, los: bool, c: float):
    """Delays and angles in path order; shared by the mapping and its Jacobian."""
    out = []
    if los:
        r = p - q
        d0 = math.hypot(*r)
        aod = math.atan2(r[1], r[0])
        out.append((d0 / c, aod, math.pi + aod - alpha))
    for s in scatterers:
        r1, r2 = s - q, p - s
        d1, d2 = math.hypot(*r1), math.hypot(*r2)
        out.append(((d1 + d2) / c, math.atan2(r1[1], r1[0]),
                    math.pi + math.atan2(r2[1], r2[0]) - alpha))
    return out


def params_from_scenario(s: Scenario, gains: Sequence[complex],
                         c: float = LIGHT_SPEED) -> ChannelParamSet:
    """Channel parameters generated by ``s``.

    Paths follow the scenario order: the direct path first (unless blocked),
    then one path per scatterer.  Use :meth:`Scenario.canonical` beforehand to
    get delay-sorted scatterers.
    """
    gains = list(gains)
    if len(gains) != s.n_paths:
        raise DimensionMismatch(f"expected {s.n_paths} gains, got {len(gains)}")
    s.check_geometry()
    q = np.array(s.bs_pos)
    p = np.array(s.ms_pos)
    sc = [np.array(v) for v in s.scatterers]
    rows = _geometry_angles(q, p, sc, s.rotation, not s.los_blocked, c)
    paths = tuple(PathParams(t, a, b, g) for (t, a, b), g in zip(rows, gains))
    return ChannelParamSet(paths, olos=s.los_blocked)


def channel_vector(s: Scenario, gains: Sequence[complex], c: float = LIGHT_SPEED) -> np.ndarray:
    """Stacked ``[delay, aod, aoa, Re g, Im g]`` of ``s`` without ordering checks."""
    rows = _geometry_angles(np.array(s.bs_pos), np.array(s.ms_pos),
                            [np.array(v) for v in s.scatterers], s.rotation,
                            not s.los_blocked, c)
    gains = np.asarray(gains, dtype=complex)
    if len(gains) != len(rows):
        raise DimensionMismatch(f"expected {len(rows)} gains, got {len(gains)}")
    return np.array([[t, a, b, g.real, g.imag] for (t, a, b), g in zip(rows, gains)]).reshape(-1)


def location_dim(n_scatterers: int, olos: bool) -> int:
    return 3 + 4 * n_scatterers + (0 if olos else 2)


def location_vector(s: Scenario, gains: Sequence[complex]) -> np.ndarray:
    """Location parameter vector in the ordering used by :func:`transformation_matrix`."""
    gains = np.asarray(gains, dtype=complex)
    v = [s.ms_pos.x, s.ms_pos.y, s.rotation]
    k0 = 0
    if not s.los_blocked:
        v += [gains[0].real, gains[0].imag]
        k0 = 1
    for sc, g in zip(s.scatterers, gains[k0:]):
        v += [sc.x, sc.y, g.real, g.imag]
    return np.array(v)


def scenario_from_location(v, bs_pos, olos: bool, n_scatterers: int):
    """Inverse of :func:`location_vector`: returns ``(scenario, gains)``."""
    v = np.asarray(v, dtype=float)
    if v.size != location_dim(n_scatterers, olos):
        raise DimensionMismatch("location vector has the wrong length")
    gains = []
    i = 3
    if not olos:
        gains.append(complex(v[3], v[4]))
        i = 5
    scat = []
    for _ in range(n_scatterers):
        scat.append((v[i], v[i + 1]))
        gains.append(complex(v[i + 2], v[i + 3]))
        i += 4
    s = Scenario(bs_pos, (v[0], v[1]), v[2], tuple(scat), olos)
    return s, np.array(gains)


def transformation_matrix(s: Scenario, c: float = LIGHT_SPEED) -> np.ndarray:
    """Jacobian ``d eta^T / d eta_tilde`` of the geometric mapping.

    Rows index location parameters and columns channel parameters, so the
    location-domain information is ``T @ J_eta @ T.T``.  Shape is
    ``(4K+5, 5(K+1))`` with a direct path and ``(4K+3, 5K)`` without.
    """
    s.check_geometry()
    q = np.array(s.bs_pos)
    p = np.array(s.ms_pos)
    los = not s.los_blocked
    K = len(s.scatterers)
    n_paths = K + (1 if los else 0)
    T = np.zeros((location_dim(K, not los), 5 * n_paths))

    col = 0
    if los:
        r = p - q
        d0 = np.hypot(*r)
        u = r / d0
        nrm = np.array([-u[1], u[0]])
        T[0:2, 0] = u / c                      # d tau_0 / d p
        T[0:2, 1] = nrm / d0                   # d aod_0 / d p
        T[0:2, 2] = nrm / d0                   # d aoa_0 / d p
        T[2, 2] = -1.0                         # d aoa_0 / d alpha
        T[3:5, 3:5] = np.eye(2)
        col = 5
    row = 5 if los else 3
    for sc in s.scatterers:
        sc = np.array(sc)
        r1, r2 = sc - q, p - sc
        d1, d2 = np.hypot(*r1), np.hypot(*r2)
        u1, u2 = r1 / d1, r2 / d2
        n1 = np.array([-u1[1], u1[0]])
        n2 = np.array([-u2[1], u2[0]])
        T[0:2, col] = u2 / c                   # d tau_k / d p
        T[0:2, col + 2] = n2 / d2              # d aoa_k / d p
        T[2, col + 2] = -1.0                   # d aoa_k / d alpha
        T[row:row + 2, col] = (u1 - u2) / c    # d tau_k / d s_k
        T[row:row + 2, col + 1] = n1 / d1      # d aod_k / d s_k
        T[row:row + 2, col + 2] = -n2 / d2     # d aoa_k / d s_k
        T[row + 2:row + 4, col + 3:col + 5] = np.eye(2)
        row += 4
        col += 5
    return T


def olos_param_subset(cp: ChannelParamSet) -> ChannelParamSet:
    """Drop the direct path, keeping only scattered paths."""
    if cp.olos:
        return cp
    if len(cp.paths) < 2:
        raise EmptyParamSet("no scattered path left after removing the direct path")
    return ChannelParamSet(cp.paths[1:], olos=True)
