"""Fisher information of channel parameters, its location-domain transform and the bounds."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .channel import PilotBlock, _ula, _ula_derivative, delay_phasor
from .config import ArrayOfdmConfig, LIGHT_SPEED
from .errors import DimensionMismatch, SingularFim, SingularInput
from .geometry import (PATH_FIELDS, ChannelParamSet, Scenario, olos_param_subset,
                       params_from_scenario, transformation_matrix)

UNRELIABLE_CONDITION = 1e12
SINGULAR_CONDITION = 1e15


@dataclass(frozen=True)
class FimMatrix:
    entries: np.ndarray
    labels: tuple = field(default_factory=tuple)

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise DimensionMismatch("FIM must be square")
        object.__setattr__(self, "entries", e)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def block(self, r: int, s: int, size: int = 5) -> np.ndarray:
        return self.entries[r * size:(r + 1) * size, s * size:(s + 1) * size]


@dataclass(frozen=True)
class BoundReport:
    peb: float
    reb: float
    crb_delay: np.ndarray = field(default_factory=lambda: np.zeros(0))
    crb_aod: np.ndarray = field(default_factory=lambda: np.zeros(0))
    crb_aoa: np.ndarray = field(default_factory=lambda: np.zeros(0))
    condition: float = 1.0
    reliable: bool = True


def channel_labels(n_paths: int) -> tuple:
    return tuple((k, name) for k in range(n_paths) for name in PATH_FIELDS)


def _derivative_terms(cp: ChannelParamSet, cfg: ArrayOfdmConfig, f: np.ndarray, origin: str):
    """Per-parameter scalar coefficients and receive-side vectors.

    Every derivative of the noiseless observation with respect to a channel
    parameter factorizes as ``coef[g, n] * vec[n]`` with ``vec`` either the
    receive steering vector or its angular derivative.  Returns
    ``coef (G, N, P)`` and ``vec (N, P, N_r)`` with ``P = 5 * n_paths``.
    """
    G, N = f.shape[:2]
    P = 5 * len(cp.paths)
    coef = np.zeros((G, N, P), dtype=complex)
    vec = np.zeros((N, P, cfg.n_rx), dtype=complex)
    lam = cfg.wavelengths
    w = cfg.angular_freqs
    for k, p in enumerate(cp.paths):
        a_t = _ula(cfg.n_tx, cfg.spacing, lam, p.aod)
        da_t = _ula_derivative(cfg.n_tx, cfg.spacing, lam, p.aod, origin)
        a_r = _ula(cfg.n_rx, cfg.spacing, lam, p.aoa)
        da_r = _ula_derivative(cfg.n_rx, cfg.spacing, lam, p.aoa, origin)
        t = np.einsum("nt,gnt->gn", a_t.conj(), f)         # a_tx^H F x
        dt = np.einsum("nt,gnt->gn", da_t.conj(), f)       # (D a_tx)^H F x
        e = delay_phasor(cfg, p.delay)
        he = p.gain * e
        i = 5 * k
        coef[:, :, i] = -1j * w * he * t
        coef[:, :, i + 1] = he * dt
        coef[:, :, i + 2] = he * t
        coef[:, :, i + 3] = e * t
        coef[:, :, i + 4] = 1j * e * t
        vec[:, i] = a_r
        vec[:, i + 1] = a_r
        vec[:, i + 2] = da_r
        vec[:, i + 3] = a_r
        vec[:, i + 4] = a_r
    return coef, vec


def fim_channel_params(cp: ChannelParamSet, cfg: ArrayOfdmConfig, pilots: PilotBlock,
                       noise_psd: float, derivative_origin: str = "centered") -> FimMatrix:
    """FIM of ``[delay, aod, aoa, Re g, Im g]`` for every path.

    Each entry is ``2/N0 sum_{g,n} Re{d mu^H/dx_r d mu/dx_s}``.  The sum factors
    into a receive Gram term (``a_rx^H a_rx`` and the versions with the angular
    derivative matrices) times a transmit term built from ``a_tx^H F x``, the
    pilot outer products and the subcarrier frequency powers; contributions of
    all transmissions are added.
    """
    if noise_psd <= 0:
        raise ValueError("noise_psd must be positive")
    f = pilots.effective if isinstance(pilots, PilotBlock) else np.asarray(pilots)
    if not np.any(f):
        raise SingularInput("all pilots are zero")
    coef, vec = _derivative_terms(cp, cfg, f, derivative_origin)
    tx = np.einsum("gni,gnj->nij", coef.conj(), coef)        # transmit terms, summed over g
    rx = np.einsum("nir,njr->nij", vec.conj(), vec)          # receive Gram terms
    J = (2.0 / noise_psd) * np.real(np.sum(tx * rx, axis=0))
    J = 0.5 * (J + J.T)
    return FimMatrix(J, channel_labels(len(cp.paths)))


def fim_location(s: Scenario, fim_eta: FimMatrix, c: float = LIGHT_SPEED) -> FimMatrix:
    """``T J_eta T^T`` in the location ordering of :func:`transformation_matrix`."""
    T = transformation_matrix(s, c)
    if T.shape[1] != fim_eta.dim:
        raise DimensionMismatch(
            f"transformation has {T.shape[1]} channel columns, FIM has dimension {fim_eta.dim}")
    return FimMatrix(T @ fim_eta.entries @ T.T)


def equilibrated_inverse(J: np.ndarray):
    """Inverse via symmetric-indefinite factorization on the unit-diagonal scaling.

    Returns ``(inverse, condition)`` where ``condition`` is the 2-norm condition
    number of ``D^-1/2 J D^-1/2``.
    """
    J = np.asarray(J, dtype=float)
    d = np.sqrt(np.abs(np.diag(J)))
    if np.any(d == 0) or not np.all(np.isfinite(J)):
        raise SingularFim("FIM has a zero or non-finite diagonal entry")
    A = J / np.outer(d, d)
    sv = np.linalg.svd(A, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    if not cond < SINGULAR_CONDITION:
        raise SingularFim(f"FIM is singular (condition {cond:.3g})", cond)
    Ainv = scipy.linalg.solve(A, np.eye(len(A)), assume_a="sym")
    inv = Ainv / np.outer(d, d)
    return 0.5 * (inv + inv.T), cond


def bounds(fim_loc: FimMatrix, fim_eta: FimMatrix | None = None, n_rows_hint: int | None = None
           ) -> BoundReport:
    """PEB, REB and (when ``fim_eta`` is given) per-path channel-parameter CRBs.

    All values are square roots of diagonal entries of the relevant inverse.
    ``n_rows_hint`` lets callers flag a structurally rank deficient location
    FIM (more location unknowns than channel measurements).
    """
    if n_rows_hint is not None and fim_loc.dim > n_rows_hint:
        raise SingularFim(
            f"{fim_loc.dim} location unknowns but only {n_rows_hint} channel parameters")
    inv, cond = equilibrated_inverse(fim_loc.entries)
    peb = float(np.sqrt(inv[0, 0] + inv[1, 1]))
    reb = float(np.sqrt(inv[2, 2]))
    crb = [np.zeros(0)] * 3
    if fim_eta is not None:
        inv_eta, cond_eta = equilibrated_inverse(fim_eta.entries)
        diag = np.sqrt(np.diag(inv_eta)).reshape(-1, 5)
        crb = [diag[:, 0], diag[:, 1], diag[:, 2]]
        cond = max(cond, cond_eta)
    return BoundReport(peb, reb, crb[0], crb[1], crb[2], cond, cond < UNRELIABLE_CONDITION)


def scenario_bounds(s: Scenario, gains, cfg: ArrayOfdmConfig, pilots: PilotBlock,
                    noise_psd: float) -> BoundReport:
    """End-to-end bounds for a scenario: FIM, transform and inversion."""
    cp = params_from_scenario(s, gains, cfg.light_speed)
    J = fim_channel_params(cp, cfg, pilots, noise_psd)
    L = fim_location(s, J, cfg.light_speed)
    return bounds(L, J, n_rows_hint=J.dim)


def _schur_gain(block: np.ndarray) -> np.ndarray:
    """EFIM of ``[delay, aod, aoa]`` after eliminating the two gain entries."""
    A, B, C = block[:3, :3], block[:3, 3:], block[3:, 3:]
    return A - B @ np.linalg.solve(C, B.T)


def efim_position_rotation(s: Scenario, cp: ChannelParamSet, cfg: ArrayOfdmConfig,
                           pilots: PilotBlock, noise_psd: float) -> np.ndarray:
    """Large-array EFIM of ``[p_x, p_y, alpha]`` ignoring inter-path cross terms.

    The direct path contributes ``T00 Lambda T00^T`` with ``Lambda`` the gain-free
    EFIM of its delay and angles; every scattered path contributes the Schur
    complement of its own information after eliminating the scatterer position
    and gain.
    """
    if len(cp.paths) < 1:
        raise ValueError("need at least one path")
    J = fim_channel_params(cp, cfg, pilots, noise_psd)
    T = transformation_matrix(s, cfg.light_speed)
    out = np.zeros((3, 3))
    k0 = 0
    if not s.los_blocked:
        Lam = _schur_gain(J.block(0, 0))
        T00 = T[:3, :3]
        out += T00 @ Lam @ T00.T
        k0 = 1
    row0 = 5 if not s.los_blocked else 3
    for j in range(len(s.scatterers)):
        k = k0 + j
        Psi = J.block(k, k)
        Tk0 = T[:3, 5 * k:5 * k + 5]
        Tkk = T[row0 + 4 * j:row0 + 4 * j + 4, 5 * k:5 * k + 5]
        A = Tk0 @ Psi @ Tk0.T
        B = Tk0 @ Psi @ Tkk.T
        C = Tkk @ Psi @ Tkk.T
        out += A - B @ np.linalg.solve(C, B.T)
    return 0.5 * (out + out.T)


def efim_bounds(efim: np.ndarray) -> tuple:
    """``(PEB, REB)`` from a 3x3 position/rotation EFIM."""
    inv, _ = equilibrated_inverse(efim)
    return float(np.sqrt(inv[0, 0] + inv[1, 1])), float(np.sqrt(inv[2, 2]))


def olos_fim(cp: ChannelParamSet, cfg: ArrayOfdmConfig, pilots: PilotBlock, noise_psd: float
             ) -> FimMatrix:
    """FIM restricted to the scattered paths (direct path removed)."""
    return fim_channel_params(olos_param_subset(cp), cfg, pilots, noise_psd)
