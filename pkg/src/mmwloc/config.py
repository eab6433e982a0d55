"""Radio and OFDM constants."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

# Speed of light used throughout the simulations, 0.299792 m/ns.
LIGHT_SPEED = 0.299792e9


@dataclass(frozen=True)
class ArrayOfdmConfig:
    """Antenna arrays, OFDM numerology and pilot dimensions.

    ``spacing`` defaults to half the carrier wavelength. With ``narrowband``
    set, every subcarrier uses the carrier wavelength (useful to isolate the
    wideband array effect).
    """

    n_tx: int = 16
    n_rx: int = 16
    carrier_hz: float = 60e9
    bandwidth_hz: float = 100e6
    n_subcarriers: int = 10
    n_beams_per_tx: int = 1
    n_transmissions: int = 16
    cp_len_symbols: int = 4
    light_speed: float = LIGHT_SPEED
    spacing: float | None = None
    narrowband: bool = False

    def __post_init__(self):
        if self.n_tx < 1 or self.n_rx < 1:
            raise ValueError("antenna counts must be positive")
        if self.n_subcarriers < 1:
            raise ValueError("n_subcarriers must be >= 1")
        if self.n_transmissions < 1 or self.n_beams_per_tx < 1:
            raise ValueError("n_transmissions and n_beams_per_tx must be >= 1")
        if not 0 < self.bandwidth_hz <= self.carrier_hz:
            raise ValueError("bandwidth must be positive and not exceed the carrier")
        if self.spacing is None:
            object.__setattr__(self, "spacing", self.wavelength / 2)

    @classmethod
    def desk(cls, **overrides) -> "ArrayOfdmConfig":
        return cls(**overrides)

    @classmethod
    def paper(cls, **overrides) -> "ArrayOfdmConfig":
        base = dict(n_tx=65, n_rx=65, n_subcarriers=20, n_transmissions=32)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_profile(cls, profile: str, **overrides) -> "ArrayOfdmConfig":
        if profile == "desk":
            return cls.desk(**overrides)
        if profile == "paper":
            return cls.paper(**overrides)
        raise ValueError(f"unknown profile {profile!r}")

    def with_(self, **changes) -> "ArrayOfdmConfig":
        if "carrier_hz" in changes and "spacing" not in changes:
            changes["spacing"] = None
        return replace(self, **changes)

    @property
    def sample_period(self) -> float:
        return 1.0 / self.bandwidth_hz

    @property
    def wavelength(self) -> float:
        return self.light_speed / self.carrier_hz

    @property
    def cp_duration(self) -> float:
        return self.cp_len_symbols * self.sample_period

    @property
    def delay_span(self) -> float:
        """Unambiguous delay range N*T_s."""
        return self.n_subcarriers * self.sample_period

    @property
    def subcarrier_freqs(self) -> np.ndarray:
        """Baseband frequency offset n/(N T_s) of every subcarrier."""
        return np.arange(self.n_subcarriers) / self.delay_span

    @property
    def angular_freqs(self) -> np.ndarray:
        """2*pi*n/(N T_s), the delay phase slope per subcarrier."""
        return 2 * np.pi * self.subcarrier_freqs

    @property
    def wavelengths(self) -> np.ndarray:
        if self.narrowband:
            return np.full(self.n_subcarriers, self.wavelength)
        return self.light_speed / (self.subcarrier_freqs + self.carrier_hz)
