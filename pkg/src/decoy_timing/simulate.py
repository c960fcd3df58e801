"""Seeded Monte Carlo generator of detection-event streams for one pass.

A slot ``i`` fires laser ``X`` at ``T*i + delay[X]``; each surviving photon is
registered at

    T*i + delay[X] + pulse + propagation_delay + detector_offset[det] + jitter

with Gaussian pulse shape and Gaussian jitter.  Slots are processed in fixed
blocks of ``BLOCK_SLOTS``; every block draws from its own Philox stream keyed
on ``(seed, block index)``, so the output does not depend on how many workers
generate it.  Only slots that produce a click are materialized: per block the
numbers of signal/decoy slots with at least one surviving photon are drawn
jointly from a multinomial and placed uniformly, which has the same law as
sampling every slot and discarding the empty ones.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .model import (
    ANNOUNCE_OF_CODE,
    DETECTORS,
    LASERS,
    AnnouncedClass,
    ChannelConfig,
    Detector,
    EmissionConfig,
    IntensityClass,
    LaserId,
    Polarization,
)

log = logging.getLogger(__name__)

BLOCK_SLOTS = 1 << 22
SOURCE_VACUUM = 8
SOURCE_BACKGROUND = 9
TIME_RESOLUTION = 0.1  # ps, resolution of the event log


class DetectionEvent(NamedTuple):
    slot: int
    detector: Detector
    timestamp: float


def source_name(code: int) -> str:
    if code == SOURCE_VACUUM:
        return "vacuum"
    if code == SOURCE_BACKGROUND:
        return "background"
    return str(LASERS[code])


def source_code(name: str) -> int:
    if name == "vacuum":
        return SOURCE_VACUUM
    if name == "background":
        return SOURCE_BACKGROUND
    return LaserId.parse(name).code


def _arrays_equal(a, b, names) -> bool:
    return all(np.array_equal(getattr(a, n), getattr(b, n)) for n in names)


@dataclass(frozen=True, eq=False)
class EventStream:
    """Column store of clicks, sorted by timestamp."""

    slot: np.ndarray  # int64
    detector: np.ndarray  # int8, index into DETECTORS
    timestamp: np.ndarray  # float64, ps

    def __len__(self) -> int:
        return len(self.timestamp)

    def __iter__(self) -> Iterator[DetectionEvent]:
        for s, d, t in zip(self.slot.tolist(), self.detector.tolist(), self.timestamp.tolist()):
            yield DetectionEvent(s, DETECTORS[d], t)

    def __eq__(self, other):
        if not isinstance(other, EventStream):
            return NotImplemented
        return _arrays_equal(self, other, ("slot", "detector", "timestamp"))

    def select(self, mask) -> "EventStream":
        return EventStream(self.slot[mask], self.detector[mask], self.timestamp[mask])

    @classmethod
    def empty(cls) -> "EventStream":
        return cls(np.zeros(0, np.int64), np.zeros(0, np.int8), np.zeros(0, float))

    @classmethod
    def from_events(cls, events) -> "EventStream":
        events = list(events)
        return cls(
            np.array([e.slot for e in events], dtype=np.int64),
            np.array([e.detector.index for e in events], dtype=np.int8),
            np.array([e.timestamp for e in events], dtype=float),
        )


@dataclass(frozen=True, eq=False)
class SlotTable:
    """Per-slot integer labels sorted by slot; one record per slot."""

    slot: np.ndarray  # int64, strictly increasing
    code: np.ndarray  # int8

    def __len__(self) -> int:
        return len(self.slot)

    def __eq__(self, other):
        if not isinstance(other, SlotTable):
            return NotImplemented
        return type(self) is type(other) and _arrays_equal(self, other, ("slot", "code"))

    def lookup(self, slots, missing: int = -1) -> np.ndarray:
        slots = np.asarray(slots, dtype=np.int64)
        if len(self.slot) == 0:
            return np.full(slots.shape, missing, dtype=np.int16)
        idx = np.searchsorted(self.slot, slots)
        idx_c = np.minimum(idx, len(self.slot) - 1)
        found = self.slot[idx_c] == slots
        return np.where(found, self.code[idx_c].astype(np.int16), missing)


class TruthLog(SlotTable):
    """What the transmitter actually did in every slot that shows up in the event log.

    Codes 0..7 are lasers (``LaserId.code``); ``SOURCE_BACKGROUND`` marks slots
    whose clicks are all background.
    """

    def sources(self) -> list[str]:
        return [source_name(c) for c in self.code.tolist()]


class Announcements(SlotTable):
    """Sifting information Bob receives, coded by ``AnnouncedClass.code``."""

    def classes(self) -> list[AnnouncedClass]:
        return [AnnouncedClass.from_code(c) for c in self.code.tolist()]


@dataclass(frozen=True, eq=False)
class SimulationResult:
    events: EventStream
    truth: TruthLog
    announcements: Announcements


def _block_rng(seed: int, block: int) -> np.random.Generator:
    entropy = [abs(int(seed)), 1 if seed < 0 else 0]
    ss = np.random.SeedSequence(entropy, spawn_key=(block,))
    return np.random.Generator(np.random.Philox(ss))


def route_ports(pol_index: np.ndarray, extinction_ratio: float, rng: np.random.Generator) -> np.ndarray:
    """Vectorized passive basis choice + polarizing splitter.

    ``pol_index`` uses the H, V, D, A ordering; orthogonal partners differ in
    the lowest bit.
    """
    pol_index = np.asarray(pol_index, dtype=np.int8)
    n = pol_index.shape[0]
    rect_basis = rng.random(n) < 0.5
    u = rng.random(n)
    matched = rect_basis == (pol_index < 2)
    p_wrong = 1.0 / (extinction_ratio + 1.0)
    in_basis = np.where(u < p_wrong, pol_index ^ 1, pol_index)
    conjugate = np.where(rect_basis, 0, 2) + (u < 0.5)
    return np.where(matched, in_basis, conjugate).astype(np.int8)


def route_detector(pol: Polarization, extinction_ratio: float, rng: np.random.Generator) -> Detector:
    if extinction_ratio < 1:
        raise ValueError("extinction_ratio must be at least 1")
    port = route_ports(np.array([pol.index], dtype=np.int8), extinction_ratio, rng)[0]
    return DETECTORS[int(port)]


def _positive_poisson_table(lam: float) -> tuple[float, np.ndarray]:
    k = np.arange(0, int(lam + 12 * math.sqrt(lam) + 40))
    log_pmf = k * math.log(lam) - lam - np.array([math.lgamma(i + 1) for i in k])
    cdf = np.cumsum(np.exp(log_pmf))
    cdf[-1] = np.inf
    return -math.expm1(-lam), cdf


def _positive_poisson(table: tuple[float, np.ndarray], u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw from Poisson(lam) conditioned on being >= 1."""
    p_pos, cdf = table
    target = (1.0 - p_pos) + u * p_pos
    return np.searchsorted(cdf, target, side="right").astype(np.int64)


class _Plan:
    """Per-run constants shared by all blocks."""

    def __init__(self, emission: EmissionConfig, channel: ChannelConfig, n_slots: int):
        self.n_slots = n_slots
        self.period = emission.period
        eta = channel.transmittance
        self.lam = {
            IntensityClass.SIGNAL: emission.mean_photons_signal * eta,
            IntensityClass.DECOY: emission.mean_photons_decoy * eta,
        }
        self.p_click = {c: -math.expm1(-lam) for c, lam in self.lam.items()}
        self.photon_table = {c: _positive_poisson_table(lam) for c, lam in self.lam.items() if lam > 0}
        ps, pd = emission.prob_signal, emission.prob_decoy
        self.multinomial_p = np.array(
            [ps * self.p_click[IntensityClass.SIGNAL], pd * self.p_click[IntensityClass.DECOY]]
        )
        # state of a slot given that no transmitter photon was detected
        quiet = [
            (ps if l.intensity is IntensityClass.SIGNAL else pd) / 4 * math.exp(-self.lam[l.intensity])
            for l in LASERS
        ] + [emission.prob_vacuum]
        self.quiet_p = np.array(quiet) / sum(quiet)
        self.delay = np.array([emission.delay[l] for l in LASERS])
        self.sigma = np.array([emission.sigma(l) for l in LASERS])
        self.offset = np.array([channel.detector_offset[d] for d in DETECTORS])
        self.t_p = channel.propagation_delay
        self.jitter = channel.jitter_sigma
        self.er = channel.extinction_ratio
        self.bg_rate = channel.background_rate_hz

    def block(self, seed: int, b: int):
        rng = _block_rng(seed, b)
        start = b * BLOCK_SLOTS
        m = min(BLOCK_SLOTS, self.n_slots - start)
        T = self.period

        n_sig, n_dec, _ = rng.multinomial(m, np.append(self.multinomial_p, 1 - self.multinomial_p.sum()))
        n_hit = n_sig + n_dec
        local = rng.choice(m, size=n_hit, replace=False) if n_hit else np.zeros(0, np.int64)
        pol = rng.integers(0, 4, size=n_hit)
        laser = np.concatenate([pol[:n_sig], pol[n_sig:] + 4]).astype(np.int64)

        u = rng.random(n_hit)
        photons = np.empty(n_hit, dtype=np.int64)
        for cls, sl in ((IntensityClass.SIGNAL, slice(0, n_sig)), (IntensityClass.DECOY, slice(n_sig, n_hit))):
            if sl.stop > sl.start:
                photons[sl] = _positive_poisson(self.photon_table[cls], u[sl])

        ph_slot = np.repeat(local, photons)
        ph_laser = np.repeat(laser, photons)
        n_ph = len(ph_slot)
        pulse = rng.standard_normal(n_ph) * self.sigma[ph_laser]
        jitter = rng.standard_normal(n_ph) * self.jitter
        det = route_ports(ph_laser % 4, self.er, rng)
        rel = self.delay[ph_laser] + pulse + self.t_p + self.offset[det] + jitter

        # threshold detectors: one click per (slot, detector), the earliest photon
        key = ph_slot * 4 + det
        order = np.lexsort((rel, key))
        key_sorted = key[order]
        first = np.ones(n_ph, dtype=bool)
        first[1:] = key_sorted[1:] != key_sorted[:-1]
        keep = order[first]
        ev_slot = start + ph_slot[keep]
        ev_det = det[keep]
        ev_time = T * ev_slot + rel[keep]

        n_bg = rng.poisson(self.bg_rate * m * T * 1e-12) if self.bg_rate > 0 else 0
        bg_time = rng.uniform(start * T, (start + m) * T, size=n_bg)
        bg_det = rng.integers(0, 4, size=n_bg).astype(np.int8)
        bg_slot = np.clip(np.floor(bg_time / T).astype(np.int64), start, start + m - 1)
        quiet_slots = np.setdiff1d(bg_slot, start + local)
        quiet_state = rng.choice(len(self.quiet_p), size=len(quiet_slots), p=self.quiet_p)

        events = (
            np.concatenate([ev_slot, bg_slot]),
            np.concatenate([ev_det, bg_det]).astype(np.int8),
            np.concatenate([ev_time, bg_time]),
        )
        truth_slot = np.concatenate([start + local, quiet_slots])
        truth_code = np.concatenate([laser, np.full(len(quiet_slots), SOURCE_BACKGROUND)])
        ann_code = np.concatenate([ANNOUNCE_OF_CODE[laser], ANNOUNCE_OF_CODE[quiet_state]])
        return events, truth_slot, truth_code, ann_code


def simulate_pass(
    emission: EmissionConfig,
    channel: ChannelConfig,
    n_slots: int,
    seed: int,
    workers: int = 1,
) -> SimulationResult:
    """Simulate ``n_slots`` qubit slots and return clicks, truth and announcements.

    Output is bit-identical for identical ``(emission, channel, n_slots, seed)``
    regardless of ``workers``.  Clicks that would land before time zero are
    dropped, as are truth/announcement records of slots left without clicks.
    """
    if int(n_slots) != n_slots or n_slots < 1:
        raise ValueError(f"n_slots must be a positive integer, got {n_slots}")
    plan = _Plan(emission, channel, int(n_slots))
    n_blocks = -(-int(n_slots) // BLOCK_SLOTS)
    if workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: plan.block(seed, b), range(n_blocks)))
    else:
        parts = [plan.block(seed, b) for b in range(n_blocks)]

    slot = np.concatenate([p[0][0] for p in parts])
    det = np.concatenate([p[0][1] for p in parts])
    ts = np.round(np.concatenate([p[0][2] for p in parts]), 1)
    ok = ts >= 0
    slot, det, ts = slot[ok], det[ok], ts[ok]
    order = np.lexsort((det, slot, ts))
    events = EventStream(slot[order], det[order], ts[order])

    t_slot = np.concatenate([p[1] for p in parts])
    t_code = np.concatenate([p[2] for p in parts]).astype(np.int8)
    a_code = np.concatenate([p[3] for p in parts]).astype(np.int8)
    live = np.isin(t_slot, events.slot)
    t_slot, t_code, a_code = t_slot[live], t_code[live], a_code[live]
    order = np.argsort(t_slot, kind="stable")
    log.debug("simulated %d slots: %d clicks", n_slots, len(events))
    return SimulationResult(
        events,
        TruthLog(t_slot[order], t_code[order]),
        Announcements(t_slot[order], a_code[order]),
    )
