"""Laser firing delays relative to H_s from fitted peak times.

Every delay is a signed sum of peak times ``t(class -> detector)`` built only
from Bob-visible (sifted) classes; signal states contribute through their
basis-pooled classes H_s/V_s and D_s/A_s.  Peak times are treated as
independent, so the variance of a delay is the sum of its terms' variances.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .histogram import DEFAULT_BIN_WIDTH, FitError, GaussianFit, fit_gaussian, fold_events
from .model import (
    H_S,
    LASERS,
    AnnouncedClass,
    ChannelConfig,
    Detector,
    EmissionConfig,
    LaserId,
)
from .simulate import Announcements, EventStream, simulate_pass

log = logging.getLogger(__name__)

C = AnnouncedClass
H, V, D, A = Detector.H, Detector.V, Detector.D, Detector.A

PeakKey = tuple[AnnouncedClass, Detector]

# delay of each laser w.r.t. H_s as (sign, class, detector) terms
DELAY_TERMS: dict[LaserId, tuple[tuple[int, AnnouncedClass, Detector], ...]] = {
    LaserId.parse("V_s"): ((+1, C.HV_S, V), (-1, C.HV_S, H), (-1, C.DA_S, V), (+1, C.DA_S, H)),
    LaserId.parse("D_s"): ((+1, C.DA_S, D), (-1, C.D_D, D), (+1, C.D_D, H), (-1, C.HV_S, H)),
    LaserId.parse("A_s"): ((+1, C.DA_S, A), (-1, C.A_D, A), (+1, C.A_D, H), (-1, C.HV_S, H)),
    LaserId.parse("H_d"): ((+1, C.H_D, H), (-1, C.HV_S, H)),
    LaserId.parse("V_d"): ((+1, C.V_D, V), (-1, C.HV_S, H), (-1, C.DA_S, V), (+1, C.DA_S, H)),
    LaserId.parse("D_d"): ((+1, C.D_D, H), (-1, C.HV_S, H)),
    LaserId.parse("A_d"): ((+1, C.A_D, H), (-1, C.HV_S, H)),
}
REPORTED_LASERS = tuple(l for l in LASERS if l != H_S)

REQUIRED_PEAKS: tuple[PeakKey, ...] = tuple(
    dict.fromkeys((c, d) for terms in DELAY_TERMS.values() for _, c, d in terms)
)
# detector pair -> the pooled signal class whose photons split evenly between them
OFFSET_PROBES: dict[tuple[Detector, Detector], AnnouncedClass] = {
    (V, H): C.DA_S,
    (A, D): C.HV_S,
}
OPTIONAL_PEAKS: tuple[PeakKey, ...] = ((C.HV_S, D), (C.HV_S, A))


class MissingPeakError(KeyError):
    def __str__(self):
        return str(self.args[0])


@dataclass(frozen=True)
class PeakTime:
    klass: AnnouncedClass
    detector: Detector
    mean: float
    variance: float

    @property
    def key(self) -> PeakKey:
        return (self.klass, self.detector)


@dataclass(frozen=True)
class DelayEstimate:
    laser: LaserId
    value: float
    variance: float

    @property
    def three_sigma(self) -> float:
        return 3.0 * math.sqrt(self.variance)


@dataclass(frozen=True)
class DetectorOffset:
    detector: Detector
    reference: Detector
    value: float
    variance: float

    @property
    def three_sigma(self) -> float:
        return 3.0 * math.sqrt(self.variance)


@dataclass(frozen=True)
class DelayReport:
    session: str
    estimates: tuple[DelayEstimate, ...]
    detector_offsets: tuple[DetectorOffset, ...] = ()
    # covariance induced by peak times shared between delays (not corrected for)
    covariance: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        lasers = [e.laser for e in self.estimates]
        if len(lasers) != 7 or set(lasers) != set(REPORTED_LASERS):
            raise ValueError("a delay report holds exactly the seven non-reference lasers")

    def __getitem__(self, laser: LaserId | str) -> DelayEstimate:
        if isinstance(laser, str):
            laser = LaserId.parse(laser)
        for e in self.estimates:
            if e.laser == laser:
                return e
        raise KeyError(str(laser))

    def values(self) -> dict[str, float]:
        return {str(e.laser): e.value for e in self.estimates}


def _peak_table(peaks) -> dict[PeakKey, PeakTime]:
    if isinstance(peaks, Mapping):
        peaks = peaks.values()
    return {p.key: p for p in peaks}


def _wrap(value: float, period: float | None) -> float:
    if period is None:
        return value
    return float((value + period / 2) % period - period / 2)


def _peak_name(key: PeakKey) -> str:
    return f"t({key[0].value}->{key[1].value})"


def detector_offset(
    peaks,
    detector: Detector = V,
    reference: Detector = H,
    period: float | None = None,
) -> DetectorOffset:
    """Response-time difference between two detectors of one basis, measured
    with the conjugate-basis signal states that hit both equally."""
    table = _peak_table(peaks)
    pair = (detector, reference)
    probe = OFFSET_PROBES.get(pair) or OFFSET_PROBES.get(pair[::-1])
    if probe is None:
        raise ValueError(f"no probe class for detectors {detector.value}/{reference.value}")
    a, b = (probe, detector), (probe, reference)
    for key in (a, b):
        if key not in table:
            raise MissingPeakError(f"detector offset {detector.value}-{reference.value}: missing {_peak_name(key)}")
    value = _wrap(table[a].mean - table[b].mean, period)
    return DetectorOffset(detector, reference, value, table[a].variance + table[b].variance)


def solve_delays(peaks, session: str = "", period: float | None = None) -> DelayReport:
    """Seven firing delays relative to H_s with summed variances.

    With ``period`` set, each delay is wrapped into [-period/2, period/2) so
    that peak means folded into [0, period) combine correctly.
    """
    table = _peak_table(peaks)
    estimates = []
    for laser in REPORTED_LASERS:
        terms = DELAY_TERMS[laser]
        missing = [_peak_name((c, d)) for _, c, d in terms if (c, d) not in table]
        if missing:
            raise MissingPeakError(f"cannot solve delay of {laser}: missing {', '.join(missing)}")
        value = sum(s * table[(c, d)].mean for s, c, d in terms)
        variance = sum(table[(c, d)].variance for _, c, d in terms)
        estimates.append(DelayEstimate(laser, _wrap(value, period), variance))

    offsets = []
    for pair in OFFSET_PROBES:
        try:
            offsets.append(detector_offset(table, *pair, period=period))
        except MissingPeakError:
            pass
    return DelayReport(session, tuple(estimates), tuple(offsets), delay_covariance(table))


def delay_covariance(peaks) -> np.ndarray:
    """7x7 covariance of the delays from peak times they share."""
    table = _peak_table(peaks)
    n = len(REPORTED_LASERS)
    cov = np.zeros((n, n))
    for i, li in enumerate(REPORTED_LASERS):
        ti = {(c, d): s for s, c, d in DELAY_TERMS[li]}
        for j, lj in enumerate(REPORTED_LASERS):
            for s, c, d in DELAY_TERMS[lj]:
                if (c, d) in ti and (c, d) in table:
                    cov[i, j] += ti[(c, d)] * s * table[(c, d)].variance
    return cov


def fit_peaks(
    events: EventStream,
    announcements: Announcements,
    period: float,
    bin_width: float = DEFAULT_BIN_WIDTH,
    window: tuple[float | None, float | None] | None = None,
    keys=None,
    fit_options: Mapping | None = None,
) -> dict[PeakKey, GaussianFit]:
    """Fold and fit every required peak; raises FitError naming the first failure."""
    keys = REQUIRED_PEAKS if keys is None else keys
    fits = {}
    for klass, det in keys:
        hist = fold_events(events, announcements, klass, det, period, bin_width, window)
        fits[(klass, det)] = fit_gaussian(hist, label=_peak_name((klass, det)), **(fit_options or {}))
    return fits


def peak_times(fits: Mapping[PeakKey, GaussianFit]) -> dict[PeakKey, PeakTime]:
    return {k: PeakTime(k[0], k[1], f.mean, f.mean_variance) for k, f in fits.items()}


def analyze_session(
    events: EventStream,
    announcements: Announcements,
    period: float,
    bin_width: float = DEFAULT_BIN_WIDTH,
    window=None,
    session: str = "",
    fit_options: Mapping | None = None,
) -> tuple[DelayReport, dict[PeakKey, GaussianFit]]:
    fits = fit_peaks(events, announcements, period, bin_width, window, fit_options=fit_options)
    for key in OPTIONAL_PEAKS:
        try:
            fits.update(fit_peaks(events, announcements, period, bin_width, window, [key], fit_options))
        except FitError:
            log.info("optional peak %s not fitted", _peak_name(key))
    report = solve_delays(peak_times(fits), session=session, period=period)
    return report, fits


def true_delays(emission: EmissionConfig) -> dict[LaserId, float]:
    ref = emission.delay[H_S]
    return {l: emission.delay[l] - ref for l in REPORTED_LASERS}


@dataclass
class CoverageStats:
    n_seeds: int
    covered: dict[str, int]
    trials: dict[str, int]
    failures: list[tuple[int, str]]
    errors: dict[str, list[float]] = field(default_factory=dict)

    def fraction(self, laser: LaserId | str) -> float:
        key = str(laser)
        return self.covered[key] / self.trials[key]

    @property
    def pooled(self) -> float:
        return sum(self.covered.values()) / sum(self.trials.values())

    def per_laser(self) -> dict[str, float]:
        return {k: self.fraction(k) for k in self.trials}


def is_covered(estimate: DelayEstimate, truth: float, atol: float = 1e-9) -> bool:
    return abs(estimate.value - truth) <= estimate.three_sigma + atol


def _coverage_one(args):
    emission, channel, n_slots, seed, bin_width, window, fit_options = args
    sim = simulate_pass(emission, channel, n_slots, seed)
    try:
        report, _ = analyze_session(
            sim.events, sim.announcements, emission.period, bin_width, window, fit_options=fit_options
        )
    except (FitError, MissingPeakError, ValueError) as exc:
        return seed, None, str(exc)
    return seed, report, None


def coverage_trial(
    emission: EmissionConfig,
    channel: ChannelConfig,
    n_seeds: int,
    n_slots: int,
    first_seed: int = 0,
    bin_width: float = DEFAULT_BIN_WIDTH,
    window=None,
    fit_options: Mapping | None = None,
    workers: int = 1,
    min_seeds: int = 30,
) -> CoverageStats:
    """Simulate ``n_seeds`` passes and count how often each +/-3 sigma bar covers the planted delay.

    A pipeline failure counts as a non-covering trial for every laser and is
    listed in ``failures``.
    """
    if n_seeds < min_seeds:
        raise ValueError(f"coverage needs at least {min_seeds} seeds, got {n_seeds}")
    truth = true_delays(emission)
    names = [str(l) for l in REPORTED_LASERS]
    stats = CoverageStats(n_seeds, dict.fromkeys(names, 0), dict.fromkeys(names, 0), [], {n: [] for n in names})
    jobs = [
        (emission, channel, n_slots, first_seed + k, bin_width, window, fit_options) for k in range(n_seeds)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_coverage_one, jobs))
    else:
        results = map(_coverage_one, jobs)
    for seed, report, err in results:
        for laser in REPORTED_LASERS:
            stats.trials[str(laser)] += 1
        if report is None:
            stats.failures.append((seed, err))
            log.warning("seed %d failed: %s", seed, err)
            continue
        for est in report.estimates:
            miss = est.value - truth[est.laser]
            stats.errors[str(est.laser)].append(miss / math.sqrt(est.variance) if est.variance > 0 else 0.0)
            if is_covered(est, truth[est.laser]):
                stats.covered[str(est.laser)] += 1
    return stats
