"""Virtual-angle transforms and the joint-sparse sensing model.

The beamspace channel of subcarrier ``n`` is ``Hv[n] = U_rx^H H[n] U_tx``.
With ``Z[n] = U_tx^H F[n] x[n]`` the received vector of transmission ``g``
is ``(Z^T kron U_rx) vec(Hv[n])`` where ``vec`` stacks columns, so atom
``m = i_tx * N_r + i_rx`` pairs transmit beam ``i_tx`` with receive beam
``i_rx``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ObservationSet, PilotBlock, array_indices, channel_matrix
from .config import ArrayOfdmConfig
from .errors import DimensionMismatch
from .geometry import ChannelParamSet


def virtual_transform(n_antennas: int) -> np.ndarray:
    """Unitary DFT-like matrix whose columns are steering vectors on the virtual grid.

    Entry ``(i, p)`` is ``exp(j 2 pi i_c p_c / N) / sqrt(N)`` with both indices
    centered.  Odd ``N`` gives an integer grid, even ``N`` a half-integer one.
    """
    if n_antennas < 1:
        raise ValueError("n_antennas must be >= 1")
    c = array_indices(n_antennas)
    return np.exp(2j * np.pi * np.outer(c, c) / n_antennas) / np.sqrt(n_antennas)


def grid_spatial_freq(n_antennas: int) -> np.ndarray:
    """Spatial frequency ``d sin(theta) / lambda`` of every virtual-grid column."""
    return array_indices(n_antennas) / n_antennas


def grid_angle(index, n_antennas: int, cfg: ArrayOfdmConfig) -> np.ndarray:
    """Angle in ``[-pi/2, pi/2]`` of virtual-grid column ``index``."""
    s = (cfg.wavelength / cfg.spacing) * (np.asarray(index) - (n_antennas - 1) / 2) / n_antennas
    return np.arcsin(np.clip(s, -1.0, 1.0))


def chi(phi, n: int) -> np.ndarray:
    """Array kernel ``sin(pi n phi) / (sqrt(n) sin(pi phi))`` with its limits at the poles."""
    phi = np.asarray(phi, dtype=float)
    num = np.sin(np.pi * n * phi)
    den = np.sqrt(n) * np.sin(np.pi * phi)
    near = np.abs(den) < 1e-12
    # at phi = integer m the ratio tends to sqrt(n) * (-1)^(m (n-1))
    m = np.rint(phi)
    limit = np.sqrt(n) * np.where(np.mod(m * (n - 1), 2) == 0, 1.0, -1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(near, limit, num / np.where(near, 1.0, den))


def beamspace_channel_entry(cp: ChannelParamSet, cfg: ArrayOfdmConfig, n: int,
                            i_rx: int, i_tx: int) -> complex:
    """Entry ``(i_rx, i_tx)`` of ``U_rx^H H[n] U_tx`` from the closed-form kernels."""
    lam = cfg.wavelengths[n]
    grid_r = grid_spatial_freq(cfg.n_rx)[i_rx]
    grid_t = grid_spatial_freq(cfg.n_tx)[i_tx]
    out = 0j
    for p in cp.paths:
        gamma = p.gain * np.exp(-1j * cfg.angular_freqs[n] * p.delay)
        phi_r = cfg.spacing * np.sin(p.aoa) / lam - grid_r
        phi_t = cfg.spacing * np.sin(p.aod) / lam - grid_t
        out += gamma * chi(phi_r, cfg.n_rx) * chi(phi_t, cfg.n_tx) / np.sqrt(cfg.n_rx * cfg.n_tx)
    return complex(out)


@dataclass(frozen=True)
class SensingSet:
    """Structured sensing operator plus the stacked observations.

    ``z`` holds ``U_tx^H F x`` with shape ``(N, G, N_t)``; ``u_rx`` is the
    receive transform; ``y`` keeps the antenna-domain observations
    ``(G, N, N_r)``.  Dense ``Omega[n]`` matrices are built only on request.
    """

    z: np.ndarray
    u_rx: np.ndarray
    y: np.ndarray
    noise_psd: float
    f: np.ndarray

    @property
    def n_subcarriers(self) -> int:
        return self.z.shape[0]

    @property
    def n_transmissions(self) -> int:
        return self.z.shape[1]

    @property
    def n_tx(self) -> int:
        return self.z.shape[2]

    @property
    def n_rx(self) -> int:
        return self.u_rx.shape[0]

    @property
    def n_atoms(self) -> int:
        return self.n_tx * self.n_rx

    def y_check(self, n: int) -> np.ndarray:
        """Observation of subcarrier ``n`` stacked over transmissions."""
        return self.y[:, n, :].reshape(-1)

    def omega(self, n: int) -> np.ndarray:
        """Dense ``(G N_r) x (N_r N_t)`` sensing matrix of subcarrier ``n``."""
        return np.kron(self.z[n], self.u_rx)

    def column(self, m: int) -> np.ndarray:
        """Atom ``m`` on every subcarrier, shape ``(N, G, N_r)``."""
        i_tx, i_rx = divmod(m, self.n_rx)
        return self.z[:, :, i_tx, None] * self.u_rx[None, None, :, i_rx]

    def column_norms(self) -> np.ndarray:
        """``||omega_m[n]||`` with shape ``(N, N_atoms)``."""
        tx = np.sqrt(np.sum(np.abs(self.z) ** 2, axis=1))          # (N, N_t)
        return np.repeat(tx, self.n_rx, axis=1)

    def correlate(self, r: np.ndarray) -> np.ndarray:
        """Matched-filter outputs ``omega_m[n]^H r[n]`` for all atoms, shape ``(N, N_atoms)``.

        ``r`` has the observation layout ``(G, N, N_r)``.
        """
        b = np.einsum("ri,gnr->ngi", self.u_rx.conj(), r)              # U_rx^H r
        c = np.einsum("ngt,ngi->nti", self.z.conj(), b)
        return c.reshape(self.n_subcarriers, -1)

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        """``Omega[n] coeffs[n]`` in observation layout; ``coeffs`` is ``(N, N_atoms)``."""
        hv = coeffs.reshape(self.n_subcarriers, self.n_tx, self.n_rx)
        rx = np.einsum("ri,nti->ntr", self.u_rx, hv)                 # U_rx Hv column by column
        return np.einsum("ngt,ntr->gnr", self.z, rx)


def build_sensing(obs: ObservationSet, pilots, cfg: ArrayOfdmConfig) -> SensingSet:
    f = pilots.effective if isinstance(pilots, PilotBlock) else np.asarray(pilots)
    y = np.asarray(obs.y)
    if f.shape[:2] != y.shape[:2] or f.shape[2] != cfg.n_tx or y.shape[2] != cfg.n_rx:
        raise DimensionMismatch(
            f"observations {y.shape} do not match pilots {f.shape} and arrays "
            f"{cfg.n_tx}x{cfg.n_rx}")
    if y.shape[1] != cfg.n_subcarriers:
        raise DimensionMismatch("subcarrier count mismatch")
    u_tx = virtual_transform(cfg.n_tx)
    z = np.einsum("ti,gnt->ngi", u_tx.conj(), f)
    return SensingSet(z, virtual_transform(cfg.n_rx), y, obs.noise_psd, f)


def beamspace_channel(cp: ChannelParamSet, cfg: ArrayOfdmConfig, n: int) -> np.ndarray:
    """``U_rx^H H[n] U_tx`` by direct matrix products."""
    return virtual_transform(cfg.n_rx).conj().T @ channel_matrix(cp, cfg, n) @ virtual_transform(cfg.n_tx)
