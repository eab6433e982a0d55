"""Joint-sparse greedy recovery of path angles, then per-path delay and gain."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaincinv

from .beamspace import SensingSet, chi, grid_angle
from .config import ArrayOfdmConfig
from .errors import NoPathDetected, ZeroKernel

MAX_ATOMS = 20
DELAY_OVERSAMPLING = 10


@dataclass(frozen=True)
class StopRule:
    delta: float
    p_fa: float = 1e-3

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")


def stopping_threshold(noise_psd: float, n_subcarriers: int, n_rx: int, n_tx: int,
                       p_fa: float = 1e-3) -> float:
    """Energy threshold for one atom under noise only.

    Under noise only, the energy an atom captures over ``N`` subcarriers is
    Gamma(N, N_0) distributed.  The threshold is the quantile at which the
    maximum over ``N_r N_t`` independent atoms exceeds it with probability
    ``p_fa``.
    """
    if not 0 < p_fa < 1:
        raise ValueError("p_fa must lie in (0, 1)")
    q = (1.0 - p_fa) ** (1.0 / (n_rx * n_tx))
    return float(noise_psd * gammaincinv(n_subcarriers, q))


def stop_rule(sensing: SensingSet, p_fa: float = 1e-3, noise_psd: float | None = None) -> StopRule:
    n0 = sensing.noise_psd if noise_psd is None else noise_psd
    return StopRule(stopping_threshold(n0, sensing.n_subcarriers, sensing.n_rx,
                                       sensing.n_tx, p_fa), p_fa)


@dataclass
class CoarseEstimate:
    """Output of the greedy stage.

    ``hv`` holds the per-subcarrier beamspace gains with shape ``(K, N)``;
    ``aod0``/``aoa0`` are grid angles in ``[-pi/2, pi/2]``.
    """

    atoms: list
    aod0: np.ndarray
    aoa0: np.ndarray
    hv: np.ndarray
    residual: np.ndarray
    n_rx: int
    energies: list = field(default_factory=list)
    delay0: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gain0: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))

    @property
    def n_paths(self) -> int:
        return len(self.atoms)

    @property
    def indices(self) -> list:
        """``(i_tx, i_rx)`` grid indices of every selected atom."""
        return [divmod(m, self.n_rx) for m in self.atoms]


def _select(corr: np.ndarray, norms: np.ndarray, mask: np.ndarray) -> int:
    score = np.sum(np.abs(corr) / norms, axis=0)
    score[mask] = -np.inf
    return int(np.argmax(score))


def dcs_somp(sensing: SensingSet, stop: StopRule, cfg: ArrayOfdmConfig,
             max_atoms: int | None = None) -> CoarseEstimate:
    """Greedy joint-support recovery across subcarriers.

    Each step picks the atom with the largest sum over subcarriers of
    normalized matched-filter magnitudes, orthogonalizes it against the
    atoms already chosen (per subcarrier) and removes its projection from the
    residual.  The loop continues while the energy removed by the last step
    exceeds ``stop.delta``; an atom whose energy does not exceed the threshold
    is discarded.
    """
    N, G, Nr = sensing.n_subcarriers, sensing.n_transmissions, sensing.n_rx
    k_max = min(G * Nr, MAX_ATOMS) if max_atoms is None else min(max_atoms, sensing.n_atoms)
    norms = sensing.column_norms()
    mask = np.zeros(sensing.n_atoms, dtype=bool)
    r = np.array(sensing.y, dtype=complex)
    rhos: list[np.ndarray] = []          # orthogonalized atoms, each (G, N, N_r)
    rho_sq: list[np.ndarray] = []        # their per-subcarrier energies, (N,)
    betas: list[np.ndarray] = []
    R = np.zeros((k_max, k_max, N), dtype=complex)
    atoms: list[int] = []
    energies: list[float] = []

    last_change = float(np.sum(np.abs(r) ** 2))
    while last_change > stop.delta and len(atoms) < k_max:
        m = _select(sensing.correlate(r), norms, mask)
        w = np.transpose(sensing.column(m), (1, 0, 2))              # (G, N, N_r)
        t = len(atoms)
        rho = w.copy()
        for j in range(t):
            coef = np.einsum("gnr,gnr->n", rhos[j].conj(), w) / rho_sq[j]
            R[j, t] = coef
            rho -= coef[None, :, None] * rhos[j]
        sq = np.sum(np.abs(rho) ** 2, axis=(0, 2))
        if np.any(sq <= 1e-14 * np.sum(np.abs(w) ** 2, axis=(0, 2))):
            mask[m] = True        # atom lies in the span of earlier ones
            continue
        beta = np.einsum("gnr,gnr->n", rho.conj(), r) / sq
        energy = float(np.sum(np.abs(beta) ** 2 * sq))
        last_change = energy
        if energy <= stop.delta:
            break
        R[t, t] = 1.0
        r = r - beta[None, :, None] * rho
        mask[m] = True
        atoms.append(m)
        rhos.append(rho)
        rho_sq.append(sq)
        betas.append(beta)
        energies.append(energy)

    if not atoms:
        raise NoPathDetected("no atom exceeds the detection threshold")
    K = len(atoms)
    hv = np.zeros((K, N), dtype=complex)
    B = np.array(betas)                                              # (K, N)
    for n in range(N):
        hv[:, n] = _back_substitute(R[:K, :K, n], B[:, n])
    idx = [divmod(m, Nr) for m in atoms]
    aod = grid_angle(np.array([i for i, _ in idx]), sensing.n_tx, cfg)
    aoa = grid_angle(np.array([j for _, j in idx]), Nr, cfg)
    return CoarseEstimate(atoms, aod, aoa, hv, r, Nr, energies)


def _back_substitute(R: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``R x = b`` with ``R`` unit upper triangular."""
    x = np.array(b, dtype=complex)
    for i in range(len(b) - 1, -1, -1):
        x[i] -= R[i, i + 1:] @ x[i + 1:]
    return x


def delay_spectrum(h: np.ndarray, cfg: ArrayOfdmConfig, oversampling: int = DELAY_OVERSAMPLING):
    """``|a(tau)^H h|^2`` on ``oversampling * N`` delays spanning ``[0, N T_s)``."""
    N = len(h)
    n_grid = oversampling * N
    spec = np.fft.ifft(h, n_grid) * n_grid
    taus = np.arange(n_grid) * cfg.delay_span / n_grid
    return taus, np.abs(spec) ** 2


def estimate_delay(h: np.ndarray, cfg: ArrayOfdmConfig,
                   oversampling: int = DELAY_OVERSAMPLING) -> float:
    """Delay maximizing the matched filter, refined by a 3-point parabola."""
    taus, p = delay_spectrum(h, cfg, oversampling)
    j = int(np.argmax(p))
    left, mid, right = p[j - 1], p[j], p[(j + 1) % len(p)]
    den = left - 2 * mid + right
    shift = 0.5 * (left - right) / den if den < 0 else 0.0
    step = taus[1] - taus[0] if len(taus) > 1 else cfg.delay_span
    return float(np.mod(taus[j] + np.clip(shift, -0.5, 0.5) * step, cfg.delay_span))


def per_path_delay_gain(coarse: CoarseEstimate, cfg: ArrayOfdmConfig) -> CoarseEstimate:
    """Fill in ``delay0`` and ``gain0`` from the per-subcarrier beamspace gains.

    The gain divides the matched-filter output by ``N`` and by the narrowband
    array kernel evaluated at the grid angles (unity for an on-grid path).
    """
    delays, gains = [], []
    for k in range(coarse.n_paths):
        h = coarse.hv[k]
        tau = estimate_delay(h, cfg)
        a = np.exp(-1j * cfg.angular_freqs * tau)
        z = float(chi(0.0, cfg.n_rx) * chi(0.0, cfg.n_tx)) / np.sqrt(cfg.n_rx * cfg.n_tx)
        if abs(z) < 1e-12:
            raise ZeroKernel(f"array kernel vanishes for path {k}")
        delays.append(tau)
        gains.append(np.vdot(a, h) / (z * len(h)))
    return replace(coarse, delay0=np.array(delays), gain0=np.array(gains, dtype=complex))
