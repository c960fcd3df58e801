"""Two-gate signal/decoy discrimination by detection time.

The eavesdropper opens one gate centred on the signal pulse and one on the
decoy pulse.  A click in neither gate is discarded.  Failure is counted among
accepted clicks only: P(wrong gate) / (P(own gate) + P(wrong gate)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf, erfinv, ndtr

from .model import LASERS, IntensityClass
from .simulate import SOURCE_BACKGROUND, EventStream, TruthLog

SIGNAL, DECOY, DISCARD = 0, 1, 2
LABELS = ("signal", "decoy", "discard")
TRUTH_ROWS = ("signal", "decoy", "other")


def effective_sigma(pulse_sigma: float, eve_jitter: float = 0.0) -> float:
    return math.hypot(pulse_sigma, eve_jitter)


def acceptance_fraction(gate_width: float, sigma: float) -> float:
    """Mass of a centred Gaussian inside a centred gate of full width ``gate_width``."""
    if not gate_width > 0 or not sigma > 0:
        raise ValueError("gate_width and sigma must be positive")
    if math.isinf(gate_width):
        return 1.0
    return float(erf(gate_width / (2.0 * sigma * math.sqrt(2.0))))


def min_gate_width(target_fraction: float, sigma: float) -> float:
    """Narrowest centred gate that keeps ``target_fraction`` of a Gaussian pulse."""
    if not 0.0 < target_fraction < 1.0:
        raise ValueError(f"target fraction must lie in (0, 1), got {target_fraction}")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return float(2.0 * sigma * math.sqrt(2.0) * erfinv(target_fraction))


def gate_masses(separation: float, gate_width: float, sigma: float) -> tuple[float, float]:
    """(own-gate mass, wrong-gate mass) of one pulse when gates sit on both pulses."""
    half = gate_width / 2.0
    own = acceptance_fraction(gate_width, sigma)
    d = abs(separation)
    wrong = float(ndtr((d + half) / sigma) - ndtr((d - half) / sigma))
    return own, wrong


def misclassification_probability(separation: float, gate_width: float, sigma: float) -> float:
    if not sigma > 0 or not gate_width > 0:
        raise ValueError("gate_width and sigma must be positive")
    if not abs(separation) > gate_width:
        raise ValueError(f"gates overlap: separation {separation} ps <= width {gate_width} ps")
    own, wrong = gate_masses(separation, gate_width, sigma)
    return wrong / (own + wrong)


def tail_mass(separation: float, gate_width: float, sigma: float) -> float:
    """Unconditional probability that a pulse lands in the other pulse's gate."""
    return gate_masses(separation, gate_width, sigma)[1]


@dataclass(frozen=True)
class GateConfig:
    signal_center: float
    decoy_center: float
    width: float

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("gate width must be positive")
        if not abs(self.decoy_center - self.signal_center) > self.width:
            raise ValueError("signal and decoy gates overlap")

    @property
    def separation(self) -> float:
        return abs(self.decoy_center - self.signal_center)


def _circular_offset(t, center, period):
    return np.mod(np.asarray(t) - center + period / 2.0, period) - period / 2.0


def classify_events(events: EventStream, gates: GateConfig, period: float) -> np.ndarray:
    """Label each click SIGNAL, DECOY or DISCARD from its time within the slot."""
    folded = np.mod(events.timestamp - period * events.slot, period)
    half = gates.width / 2.0
    in_signal = np.abs(_circular_offset(folded, gates.signal_center, period)) <= half
    in_decoy = np.abs(_circular_offset(folded, gates.decoy_center, period)) <= half
    return np.where(in_signal, SIGNAL, np.where(in_decoy, DECOY, DISCARD)).astype(np.int8)


class InputConsistencyError(ValueError):
    pass


@dataclass
class AttackReport:
    gates: GateConfig
    sigma: float
    acceptance_fraction_signal: float
    acceptance_fraction_decoy: float
    discard_fraction: float
    failure_probability: float
    tail_mass: float
    confusion: np.ndarray | None = None  # rows TRUTH_ROWS, columns LABELS
    empirical: dict = field(default_factory=dict)

    @property
    def distinguish_probability(self) -> float:
        return 1.0 - self.failure_probability

    def as_dict(self) -> dict:
        out = {
            "signal_center_ps": self.gates.signal_center,
            "decoy_center_ps": self.gates.decoy_center,
            "gate_width_ps": self.gates.width,
            "separation_ps": self.gates.separation,
            "pulse_sigma_ps": self.sigma,
            "acceptance_fraction_signal": self.acceptance_fraction_signal,
            "acceptance_fraction_decoy": self.acceptance_fraction_decoy,
            "discard_fraction": self.discard_fraction,
            "failure_probability": self.failure_probability,
            "distinguish_probability": self.distinguish_probability,
            "unconditional_tail_mass": self.tail_mass,
        }
        out.update(self.empirical)
        return out


def _truth_rows(truth: TruthLog, slots: np.ndarray) -> np.ndarray:
    codes = truth.lookup(slots)
    if (codes < 0).any():
        missing = int(slots[codes < 0][0])
        raise InputConsistencyError(f"slot {missing} has clicks but no truth record")
    rows = np.full(codes.shape, 2, dtype=np.int8)
    transmitter = codes < len(LASERS)
    signal_codes = [l.code for l in LASERS if l.intensity is IntensityClass.SIGNAL]
    rows[transmitter & np.isin(codes, signal_codes)] = 0
    rows[transmitter & ~np.isin(codes, signal_codes)] = 1
    return rows


def attack_report(
    events: EventStream | None,
    truth: TruthLog | None,
    gates: GateConfig,
    period: float,
    sigma: float,
    polarizations=None,
) -> AttackReport:
    """Analytic gate statistics, plus an empirical confusion matrix when a truth log is given.

    ``polarizations`` restricts the empirical part to clicks whose truth
    laser has one of those polarizations (background clicks are kept in the
    ``other`` row).  Empirical rates are pooled over all accepted
    transmitter clicks, so they carry the signal/decoy priors and intensities.
    """
    own, wrong = gate_masses(gates.separation, gates.width, sigma)
    report = AttackReport(
        gates=gates,
        sigma=sigma,
        acceptance_fraction_signal=own,
        acceptance_fraction_decoy=own,
        discard_fraction=1.0 - own - wrong,
        failure_probability=wrong / (own + wrong),
        tail_mass=wrong,
    )
    if events is None or truth is None:
        return report

    codes = truth.lookup(events.slot)
    keep = np.ones(len(events), dtype=bool)
    if polarizations is not None:
        allowed = [l.code for l in LASERS if l.polarization in set(polarizations)] + [SOURCE_BACKGROUND]
        keep = np.isin(codes, allowed)
    events = events.select(keep)
    rows = _truth_rows(truth, events.slot)
    labels = classify_events(events, gates, period)
    confusion = np.zeros((3, 3), dtype=np.int64)
    np.add.at(confusion, (rows, labels), 1)
    report.confusion = confusion

    tx = confusion[:2]
    accepted = int(tx[:, :2].sum())
    wrong_n = int(tx[0, DECOY] + tx[1, SIGNAL])
    total = int(tx.sum())
    emp = {
        "empirical_transmitter_events": total,
        "empirical_accepted_events": accepted,
        "empirical_discard_fraction": (total - accepted) / total if total else float("nan"),
    }
    if accepted:
        fail = wrong_n / accepted
        emp["empirical_failure_probability"] = fail
        emp["empirical_distinguish_probability"] = 1.0 - fail
        emp["empirical_failure_stderr"] = math.sqrt(fail * (1 - fail) / accepted)
    for i, row in enumerate(("signal", "decoy")):
        row_acc = int(tx[i, :2].sum())
        if row_acc:
            emp[f"empirical_failure_given_{row}"] = int(tx[i, 1 - i]) / row_acc
    report.empirical = emp
    return report


def failure_sweep(separations, widths, sigma: float):
    """Yield (separation, width, failure probability) over a grid, skipping overlapping gates."""
    for sep in separations:
        for w in widths:
            if abs(sep) > w:
                yield float(sep), float(w), misclassification_probability(sep, w, sigma)
