"""Shared vocabulary: polarizations, lasers, detectors, configuration records.

All times are in picoseconds.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


class Polarization(enum.Enum):
    H = "H"
    V = "V"
    D = "D"
    A = "A"

    @property
    def index(self) -> int:
        return _POL_ORDER.index(self)

    @property
    def rectilinear(self) -> bool:
        return self in (Polarization.H, Polarization.V)

    @property
    def orthogonal(self) -> "Polarization":
        return _ORTHOGONAL[self]


_POL_ORDER = (Polarization.H, Polarization.V, Polarization.D, Polarization.A)
_ORTHOGONAL = {
    Polarization.H: Polarization.V,
    Polarization.V: Polarization.H,
    Polarization.D: Polarization.A,
    Polarization.A: Polarization.D,
}
POLARIZATIONS = _POL_ORDER

# One detector per output port of the passive BB84 receiver, named by the
# polarization it is meant to register.
Detector = Polarization
DETECTORS = _POL_ORDER


class IntensityClass(enum.Enum):
    SIGNAL = "signal"
    DECOY = "decoy"
    VACUUM = "vacuum"


@dataclass(frozen=True, order=True)
class LaserId:
    polarization: Polarization
    intensity: IntensityClass

    def __post_init__(self):
        if self.intensity is IntensityClass.VACUUM:
            raise ValueError("vacuum states have no laser")

    @property
    def code(self) -> int:
        """Dense integer code: H_s..A_s -> 0..3, H_d..A_d -> 4..7."""
        offset = 0 if self.intensity is IntensityClass.SIGNAL else 4
        return offset + self.polarization.index

    @classmethod
    def from_code(cls, code: int) -> "LaserId":
        return LASERS[code]

    @classmethod
    def parse(cls, name: str) -> "LaserId":
        try:
            pol, tag = name.strip().split("_")
            intensity = {"s": IntensityClass.SIGNAL, "d": IntensityClass.DECOY}[tag]
            return cls(Polarization(pol), intensity)
        except (ValueError, KeyError):
            raise ValueError(f"not a laser name: {name!r}") from None

    def __str__(self) -> str:
        tag = "s" if self.intensity is IntensityClass.SIGNAL else "d"
        return f"{self.polarization.value}_{tag}"


LASERS: tuple[LaserId, ...] = tuple(
    LaserId(p, c) for c in (IntensityClass.SIGNAL, IntensityClass.DECOY) for p in _POL_ORDER
)
H_S = LASERS[0]


class AnnouncedClass(enum.Enum):
    """What Bob learns about a slot after sifting.

    Signal slots reveal only their basis; decoy slots reveal the full state.
    """

    HV_S = "H_s/V_s"
    DA_S = "D_s/A_s"
    H_D = "H_d"
    V_D = "V_d"
    D_D = "D_d"
    A_D = "A_d"
    VACUUM = "vacuum"

    @property
    def code(self) -> int:
        return _ANNOUNCED_ORDER.index(self)

    @classmethod
    def from_code(cls, code: int) -> "AnnouncedClass":
        return _ANNOUNCED_ORDER[code]

    @classmethod
    def of_laser(cls, laser: LaserId | None) -> "AnnouncedClass":
        if laser is None:
            return cls.VACUUM
        if laser.intensity is IntensityClass.SIGNAL:
            return cls.HV_S if laser.polarization.rectilinear else cls.DA_S
        return cls(str(laser))


_ANNOUNCED_ORDER = tuple(AnnouncedClass)

# laser code (0..7) and vacuum (8) -> announced class code
ANNOUNCE_OF_CODE = np.array(
    [AnnouncedClass.of_laser(l).code for l in LASERS] + [AnnouncedClass.VACUUM.code],
    dtype=np.int8,
)


def sigma_from_fwhm(fwhm: float) -> float:
    if not fwhm > 0 or not math.isfinite(fwhm):
        raise ValueError(f"FWHM must be positive and finite, got {fwhm}")
    return fwhm / FWHM_PER_SIGMA


def fwhm_from_sigma(sigma: float) -> float:
    if not sigma > 0 or not math.isfinite(sigma):
        raise ValueError(f"sigma must be positive and finite, got {sigma}")
    return sigma * FWHM_PER_SIGMA


def select_state(bits: Sequence[int]) -> tuple[IntensityClass, Polarization | None]:
    """Map four fair random bits to the prepared state.

    Bits 0-1 pick the intensity class: 00 and 01 signal, 10 decoy, 11 vacuum.
    Bits 2-3 pick the polarization H, V, D, A (ignored for vacuum).
    """
    if len(bits) != 4 or any(b not in (0, 1) for b in bits):
        raise ValueError(f"expected four bits, got {bits!r}")
    b0, b1, b2, b3 = bits
    if b0 == 0:
        intensity = IntensityClass.SIGNAL
    elif b1 == 0:
        intensity = IntensityClass.DECOY
    else:
        return IntensityClass.VACUUM, None
    return intensity, _POL_ORDER[2 * b2 + b3]


def _laser_map(values, default: float | None, name: str) -> dict[LaserId, float]:
    if values is None:
        if default is None:
            raise ValueError(f"{name} is required")
        return {l: float(default) for l in LASERS}
    if isinstance(values, (int, float)):
        return {l: float(values) for l in LASERS}
    out = {}
    for key, v in dict(values).items():
        laser = key if isinstance(key, LaserId) else LaserId.parse(str(key))
        out[laser] = float(v)
    missing = [str(l) for l in LASERS if l not in out]
    if missing:
        if default is None:
            raise ValueError(f"{name} missing lasers: {', '.join(missing)}")
        for l in LASERS:
            out.setdefault(l, float(default))
    return out


def _detector_map(values) -> dict[Detector, float]:
    out = {d: 0.0 for d in DETECTORS}
    for key, v in dict(values or {}).items():
        det = key if isinstance(key, Polarization) else Polarization(str(key))
        out[det] = float(v)
    return out


@dataclass(frozen=True)
class EmissionConfig:
    """Transmitter: slot period, per-laser firing delays and widths, intensities."""

    period: float = 10_000.0
    delay: Mapping[LaserId, float] = field(default_factory=dict)
    fwhm: Mapping[LaserId, float] = field(default_factory=dict)
    mean_photons_signal: float = 0.8
    mean_photons_decoy: float = 0.1
    prob_signal: float = 0.5
    prob_decoy: float = 0.25
    prob_vacuum: float = 0.25

    def __post_init__(self):
        object.__setattr__(self, "delay", _laser_map(self.delay or None, 0.0, "delay"))
        object.__setattr__(self, "fwhm", _laser_map(self.fwhm or None, 200.0, "fwhm"))
        probs = (self.prob_signal, self.prob_decoy, self.prob_vacuum)
        if any(p < 0 for p in probs) or abs(sum(probs) - 1.0) > 1e-12:
            raise ValueError(f"state probabilities must be non-negative and sum to 1, got {probs}")
        if self.mean_photons_signal < 0 or self.mean_photons_decoy < 0:
            raise ValueError("mean photon numbers must be non-negative")
        for laser, w in self.fwhm.items():
            if not w > 0:
                raise ValueError(f"fwhm of {laser} must be positive, got {w}")
        if not self.period > self.pulse_extent:
            raise ValueError(
                f"period {self.period} ps does not exceed the pulse extent {self.pulse_extent} ps"
            )

    @property
    def pulse_extent(self) -> float:
        """Span of [-extent, +extent] around slot start that holds every pulse (3 FWHM margin)."""
        return max(abs(self.delay[l]) + 3.0 * self.fwhm[l] for l in LASERS)

    def sigma(self, laser: LaserId) -> float:
        return sigma_from_fwhm(self.fwhm[laser])

    def mean_photons(self, intensity: IntensityClass) -> float:
        if intensity is IntensityClass.SIGNAL:
            return self.mean_photons_signal
        if intensity is IntensityClass.DECOY:
            return self.mean_photons_decoy
        return 0.0


@dataclass(frozen=True)
class ChannelConfig:
    """Everything between the transmitter and Bob's time tagger, collapsed."""

    transmittance: float = 2.5e-4
    propagation_delay: float = 0.0
    jitter_sigma: float = 720.0
    background_rate_hz: float = 0.0
    extinction_ratio: float = 150.0
    detector_offset: Mapping[Detector, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "detector_offset", _detector_map(self.detector_offset))
        if not 0.0 <= self.transmittance <= 1.0:
            raise ValueError(f"transmittance must lie in [0, 1], got {self.transmittance}")
        if not self.jitter_sigma >= 0:
            raise ValueError("jitter_sigma must be non-negative")
        if not self.extinction_ratio >= 1:
            raise ValueError("extinction_ratio must be at least 1")
        if not self.background_rate_hz >= 0:
            raise ValueError("background_rate_hz must be non-negative")
        if not math.isfinite(self.propagation_delay):
            raise ValueError("propagation_delay must be finite")


@dataclass(frozen=True)
class GaussianPeak:
    amplitude: float
    mean: float
    sigma: float

    def __post_init__(self):
        if not self.amplitude > 0:
            raise ValueError(f"amplitude must be positive, got {self.amplitude}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.amplitude * np.exp(-0.5 * ((x - self.mean) / self.sigma) ** 2)
