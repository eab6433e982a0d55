"""Wideband ULA channel, random pilots and noisy frequency-domain observations."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ArrayOfdmConfig
from .errors import DelayExceedsCp, ZeroSignal
from .geometry import ChannelParamSet, Scenario

# Constants of the geometry-based path-loss model (60 GHz indoor).
POISSON_DENSITY = 1.0 / 7.0
ATMOSPHERIC_DB_PER_M = 16e-3
REFLECTION_LOSS_MEAN_DB = -10.0
REFLECTION_LOSS_STD_DB = 4.0


def array_indices(n: int) -> np.ndarray:
    """Element positions -(n-1)/2, ..., (n-1)/2 in units of the spacing."""
    return np.arange(n) - (n - 1) / 2


def _ula(n_ant: int, spacing: float, wavelengths, angle) -> np.ndarray:
    # rows: subcarriers (or whatever wavelengths is), columns: elements
    kappa = 2 * np.pi * spacing / np.asarray(wavelengths, dtype=float)
    phase = np.multiply.outer(kappa * np.sin(angle), array_indices(n_ant))
    return np.exp(1j * phase) / np.sqrt(n_ant)


def _ula_derivative(n_ant: int, spacing: float, wavelengths, angle, origin="centered"):
    """d a / d angle for every wavelength, shape ``(len(wavelengths), n_ant)``.

    ``origin="first"`` reproduces the 0..N-1 index weighting instead of the
    centered one; that variant is not the derivative of the centered steering
    vector and is kept only for comparison.
    """
    kappa = 2 * np.pi * spacing / np.asarray(wavelengths, dtype=float)
    a = _ula(n_ant, spacing, wavelengths, angle)
    idx = array_indices(n_ant) if origin == "centered" else np.arange(n_ant, dtype=float)
    return a * (1j * np.multiply.outer(kappa * np.cos(angle), idx))


def steering_vector(side: str, cfg: ArrayOfdmConfig, angle: float, subcarrier: int) -> np.ndarray:
    """Unit-norm ULA response of the transmitter (``"tx"``) or receiver (``"rx"``)."""
    if not 0 <= subcarrier < cfg.n_subcarriers:
        raise IndexError(f"subcarrier {subcarrier} out of range")
    if side not in ("tx", "rx"):
        raise ValueError("side must be 'tx' or 'rx'")
    n = cfg.n_tx if side == "tx" else cfg.n_rx
    return _ula(n, cfg.spacing, cfg.wavelengths[subcarrier], angle)


def steering_matrix(side: str, cfg: ArrayOfdmConfig, angle: float) -> np.ndarray:
    """Steering vectors on all subcarriers, shape ``(N, n_ant)``."""
    n = cfg.n_tx if side == "tx" else cfg.n_rx
    return _ula(n, cfg.spacing, cfg.wavelengths, angle)


def delay_phasor(cfg: ArrayOfdmConfig, delay: float) -> np.ndarray:
    return np.exp(-1j * cfg.angular_freqs * delay)


def channel_matrix(cp: ChannelParamSet, cfg: ArrayOfdmConfig, subcarrier: int) -> np.ndarray:
    """``H[n] = A_rx Gamma A_tx^H`` for one subcarrier."""
    H = np.zeros((cfg.n_rx, cfg.n_tx), dtype=complex)
    w = cfg.angular_freqs[subcarrier]
    for p in cp.paths:
        a_t = steering_vector("tx", cfg, p.aod, subcarrier)
        a_r = steering_vector("rx", cfg, p.aoa, subcarrier)
        H += p.gain * np.exp(-1j * w * p.delay) * np.outer(a_r, a_t.conj())
    return H


@dataclass(frozen=True)
class PilotBlock:
    """Beamformers ``(G, N, N_t, M_t)`` and symbols ``(G, N, M_t)``."""

    beamformers: np.ndarray
    symbols: np.ndarray

    @property
    def effective(self) -> np.ndarray:
        """Transmitted vectors ``F x`` with shape ``(G, N, N_t)``."""
        return np.einsum("gntm,gnm->gnt", self.beamformers, self.symbols)

    @property
    def n_transmissions(self) -> int:
        return self.beamformers.shape[0]

    def subset(self, n_transmissions: int) -> "PilotBlock":
        """First ``n_transmissions`` transmissions (nested pilot sets)."""
        return PilotBlock(self.beamformers[:n_transmissions], self.symbols[:n_transmissions])

    def scaled(self, factor: float) -> "PilotBlock":
        return PilotBlock(self.beamformers * factor, self.symbols)


def random_pilots(cfg: ArrayOfdmConfig, seed) -> PilotBlock:
    """Random analog beams and unit-modulus symbols.

    The analog beamformer of transmission ``g`` has unit-modulus entries with
    uniform phases and is shared by all subcarriers; it is normalized to unit
    Frobenius norm.  Symbols carry independent uniform phases per ``(g, n)``.
    """
    rng = np.random.default_rng(seed)
    G, N, Nt, Mt = cfg.n_transmissions, cfg.n_subcarriers, cfg.n_tx, cfg.n_beams_per_tx
    rf = np.exp(2j * np.pi * rng.random((G, Nt, Mt)))
    rf /= np.linalg.norm(rf, axis=(1, 2), keepdims=True)
    F = np.broadcast_to(rf[:, None], (G, N, Nt, Mt)).copy()
    x = np.exp(2j * np.pi * rng.random((G, N, Mt)))
    return PilotBlock(F, x)


def pilots_from_rf(rf: np.ndarray, baseband: np.ndarray, symbols: np.ndarray) -> PilotBlock:
    """Build a block from an analog part ``(G, N_t, M_RF)`` and digital part ``(G, N, M_RF, M_t)``."""
    F = np.einsum("gtr,gnrm->gntm", rf, baseband)
    F = F / np.linalg.norm(F, axis=(2, 3), keepdims=True)
    return PilotBlock(F, symbols)


def path_loss(k: int, s: Scenario, cfg: ArrayOfdmConfig,
              reflection_loss_db: float = REFLECTION_LOSS_MEAN_DB) -> float:
    """Geometry-based path loss ``rho_k`` (linear, >= 1 for realistic ranges).

    ``k`` indexes the scenario paths (direct path first when present).
    """
    lam = cfg.wavelength
    if not s.los_blocked and k == 0:
        d = (s.ms_pos - s.bs_pos).norm()
        inv = _atmospheric(d) * (lam / (4 * np.pi * d)) ** 2
        return 1.0 / inv
    if not s.los_blocked:
        k -= 1
    if not 0 <= k < len(s.scatterers):
        raise IndexError("path index out of range")
    sc = s.scatterers[k]
    d1 = (sc - s.bs_pos).norm()
    d2 = (s.ms_pos - sc).norm()
    d = d1 + d2
    poisson = (POISSON_DENSITY * d2) ** 2 * np.exp(-POISSON_DENSITY * d2)
    sigma2 = 10 ** (reflection_loss_db / 10)
    inv = sigma2 * poisson * _atmospheric(d) * (lam / (4 * np.pi * d)) ** 2
    return 1.0 / inv


def _atmospheric(d: float) -> float:
    return 10 ** (-ATMOSPHERIC_DB_PER_M * d / 10)


def draw_gains(s: Scenario, cfg: ArrayOfdmConfig, seed, fading: str = "phase",
               reflection_std_db: float = REFLECTION_LOSS_STD_DB) -> np.ndarray:
    """Effective complex gains ``sqrt(N_t N_r / rho_k) h_k`` for every path.

    ``fading="phase"`` draws unit-magnitude ``h_k`` with uniform phase;
    ``"rayleigh"`` draws circular complex normal ``h_k``.  Reflection losses
    are log-normal around -10 dB with ``reflection_std_db`` spread.
    """
    rng = np.random.default_rng(seed)
    gains = []
    n_direct = 0 if s.los_blocked else 1
    for k in range(s.n_paths):
        refl = REFLECTION_LOSS_MEAN_DB + reflection_std_db * rng.standard_normal()
        rho = path_loss(k, s, cfg, refl if k >= n_direct else REFLECTION_LOSS_MEAN_DB)
        if fading == "phase":
            h = np.exp(2j * np.pi * rng.random())
        elif fading == "rayleigh":
            h = (rng.standard_normal() + 1j * rng.standard_normal()) / np.sqrt(2)
        else:
            raise ValueError(f"unknown fading {fading!r}")
        gains.append(np.sqrt(cfg.n_tx * cfg.n_rx / rho) * h)
    return np.array(gains)


@dataclass(frozen=True)
class ObservationSet:
    """Received vectors ``y`` with shape ``(G, N, N_r)``."""

    y: np.ndarray
    noise_psd: float


def noiseless_response(cp: ChannelParamSet, cfg: ArrayOfdmConfig, pilots) -> np.ndarray:
    """``H[n] F^(g)[n] x^(g)[n]`` for all ``g, n``; shape ``(G, N, N_r)``."""
    f = pilots.effective if isinstance(pilots, PilotBlock) else np.asarray(pilots)
    mu = np.zeros((f.shape[0], cfg.n_subcarriers, cfg.n_rx), dtype=complex)
    for p in cp.paths:
        mu += single_path_response(p.delay, p.aod, p.aoa, p.gain, cfg, f)
    return mu


def single_path_response(delay, aod, aoa, gain, cfg: ArrayOfdmConfig, f: np.ndarray) -> np.ndarray:
    a_t = steering_matrix("tx", cfg, aod)                  # (N, Nt)
    a_r = steering_matrix("rx", cfg, aoa)                  # (N, Nr)
    t = np.einsum("nt,gnt->gn", a_t.conj(), f)             # a_tx^H f
    e = gain * delay_phasor(cfg, delay)                    # (N,)
    return (t * e)[:, :, None] * a_r[None]


def check_delays(cp: ChannelParamSet, cfg: ArrayOfdmConfig):
    if len(cp.paths) and cp.delays.max() >= cfg.cp_duration:
        raise DelayExceedsCp(
            f"max delay {cp.delays.max():.3e}s exceeds CP duration {cfg.cp_duration:.3e}s")


def synthesize(cp: ChannelParamSet, cfg: ArrayOfdmConfig, pilots: PilotBlock,
               noise_psd: float, seed=None, noise: np.ndarray | None = None) -> ObservationSet:
    """Noisy observations; noise is circular Gaussian with variance ``noise_psd``.

    A pre-drawn unit-variance ``noise`` array may be passed to reuse the same
    realization across noise levels.
    """
    check_delays(cp, cfg)
    mu = noiseless_response(cp, cfg, pilots)
    if noise_psd > 0:
        if noise is None:
            noise = standard_noise(mu.shape, seed)
        mu = mu + np.sqrt(noise_psd) * noise
    return ObservationSet(mu, float(noise_psd))


def standard_noise(shape, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def signal_energy(cp: ChannelParamSet, cfg: ArrayOfdmConfig, pilots: PilotBlock) -> float:
    return float(np.sum(np.abs(noiseless_response(cp, cfg, pilots)) ** 2))


def noise_psd_for_snr(cp: ChannelParamSet, cfg: ArrayOfdmConfig, pilots: PilotBlock,
                      target_snr_db: float) -> float:
    """Noise level giving ``target_snr_db`` for the stacked observation.

    The expected noise energy is ``G N N_r N_0``; the signal energy is that of
    the noiseless stacked observation.  The unitary beamspace transforms leave
    both unchanged.
    """
    energy = signal_energy(cp, cfg, pilots)
    if energy <= 0:
        raise ZeroSignal("noiseless observation has zero energy")
    n_samples = pilots.n_transmissions * cfg.n_subcarriers * cfg.n_rx
    return energy / (n_samples * 10 ** (target_snr_db / 10))
