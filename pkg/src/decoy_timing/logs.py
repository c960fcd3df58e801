"""Text formats for event, truth and announcement logs, histogram dumps and reports.

Lines starting with ``#`` are comments.  Timestamps are written with 0.1 ps
resolution; the simulator already quantizes to that grid, so a write/read
round trip is exact.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .attack import LABELS, TRUTH_ROWS, AttackReport
from .delays import DelayEstimate, DelayReport, DetectorOffset
from .histogram import Histogram
from .model import DETECTORS, AnnouncedClass, Detector, LaserId
from .simulate import Announcements, EventStream, TruthLog, source_code, source_name

EVENT_HEADER = "# slot_index,detector,timestamp_ps"
TRUTH_HEADER = "# slot_index,source"
ANNOUNCE_HEADER = "# slot_index,announced_class"
DELAY_HEADER = "laser,value_ps,three_sigma_ps"

_DET_NAMES = [d.value for d in DETECTORS]
_DET_CODE = {d.value: d.index for d in DETECTORS}
_CLASS_CODE = {c.value: c.code for c in AnnouncedClass}


class LogFormatError(ValueError):
    def __init__(self, path, lineno: int, line: str, reason: str):
        super().__init__(f"{path}:{lineno}: {reason}: {line.strip()!r}")
        self.lineno = lineno


def _records(path):
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if s and not s.startswith("#"):
                yield lineno, line, s.split(",")


def write_events(path, events: EventStream) -> None:
    with open(path, "w") as fh:
        fh.write(EVENT_HEADER + "\n")
        names = _DET_NAMES
        fh.writelines(
            f"{s},{names[d]},{t:.1f}\n"
            for s, d, t in zip(events.slot.tolist(), events.detector.tolist(), events.timestamp.tolist())
        )


def read_events(path) -> EventStream:
    slots, dets, times = [], [], []
    for lineno, line, parts in _records(path):
        try:
            s, d, t = parts
            slot, det, ts = int(s), _DET_CODE[d.strip()], float(t)
        except (ValueError, KeyError):
            raise LogFormatError(path, lineno, line, "expected slot_index,detector,timestamp_ps") from None
        if slot < 0 or not ts >= 0 or math.isinf(ts):
            raise LogFormatError(path, lineno, line, "negative or non-finite value")
        slots.append(slot)
        dets.append(det)
        times.append(ts)
    return EventStream(
        np.array(slots, dtype=np.int64), np.array(dets, dtype=np.int8), np.array(times, dtype=float)
    )


def _write_slot_table(path, header, table, name_of) -> None:
    with open(path, "w") as fh:
        fh.write(header + "\n")
        fh.writelines(f"{s},{name_of(c)}\n" for s, c in zip(table.slot.tolist(), table.code.tolist()))


def _read_slot_table(path, cls, code_of, what):
    slots, codes = [], []
    for lineno, line, parts in _records(path):
        try:
            s, name = parts
            slot, code = int(s), code_of(name.strip())
        except (ValueError, KeyError):
            raise LogFormatError(path, lineno, line, f"expected slot_index,{what}") from None
        if slots and slot <= slots[-1]:
            raise LogFormatError(path, lineno, line, "slot indices must be strictly increasing")
        slots.append(slot)
        codes.append(code)
    return cls(np.array(slots, dtype=np.int64), np.array(codes, dtype=np.int8))


def write_truth(path, truth: TruthLog) -> None:
    _write_slot_table(path, TRUTH_HEADER, truth, source_name)


def read_truth(path) -> TruthLog:
    return _read_slot_table(path, TruthLog, source_code, "source")


def write_announcements(path, ann: Announcements) -> None:
    _write_slot_table(path, ANNOUNCE_HEADER, ann, lambda c: AnnouncedClass.from_code(c).value)


def read_announcements(path) -> Announcements:
    return _read_slot_table(path, Announcements, lambda n: _CLASS_CODE[n], "announced_class")


def write_histogram(path, hist: Histogram) -> None:
    with open(path, "w") as fh:
        fh.write("bin_center_ps,count\n")
        fh.writelines(f"{x:.3f},{int(c)}\n" for x, c in zip(hist.centers.tolist(), hist.counts.tolist()))


def histogram_filename(klass: AnnouncedClass, detector: Detector) -> str:
    return f"hist_{klass.value.replace('/', '')}_{detector.value}.csv"


def format_delay_report(report: DelayReport) -> str:
    lines = [f"# session={report.session}", DELAY_HEADER]
    lines += [f"{e.laser},{e.value:.4f},{e.three_sigma:.4f}" for e in report.estimates]
    for o in report.detector_offsets:
        lines.append(
            f"# detector_offset {o.detector.value}-{o.reference.value},{o.value:.4f},{o.three_sigma:.4f}"
        )
    return "\n".join(lines) + "\n"


def write_delay_report(path, report: DelayReport) -> None:
    Path(path).write_text(format_delay_report(report))


def read_delay_report(path) -> DelayReport:
    session = ""
    estimates, offsets = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s == DELAY_HEADER:
                continue
            if s.startswith("# session="):
                session = s[len("# session="):]
                continue
            try:
                if s.startswith("# detector_offset "):
                    pair, value, three = s[len("# detector_offset "):].split(",")
                    det, ref = pair.split("-")
                    offsets.append(DetectorOffset(Detector(det), Detector(ref), float(value), (float(three) / 3) ** 2))
                    continue
                if s.startswith("#"):
                    continue
                name, value, three = s.split(",")
                estimates.append(DelayEstimate(LaserId.parse(name), float(value), (float(three) / 3) ** 2))
            except ValueError:
                raise LogFormatError(path, lineno, line, f"expected {DELAY_HEADER}") from None
    return DelayReport(session, tuple(estimates), tuple(offsets))


def human_delay_table(report: DelayReport) -> str:
    rows = [f"Laser delays relative to H_s ({report.session or 'session'})", f"{'laser':<6}{'delay, ps':>14}"]
    rows += [f"{str(e.laser):<6}{e.value:>8.1f} +/- {e.three_sigma:<5.1f}" for e in report.estimates]
    for o in report.detector_offsets:
        rows.append(f"detector {o.detector.value}-{o.reference.value}: {o.value:.1f} +/- {o.three_sigma:.1f} ps")
    return "\n".join(rows)


def format_attack_report(report: AttackReport) -> str:
    lines = [f"{k}={v:.10g}" if isinstance(v, float) else f"{k}={v}" for k, v in report.as_dict().items()]
    if report.confusion is not None:
        lines.append("")
        lines.append("truth," + ",".join(LABELS))
        for name, row in zip(TRUTH_ROWS, report.confusion.tolist()):
            lines.append(name + "," + ",".join(str(v) for v in row))
    return "\n".join(lines) + "\n"


def parse_attack_report(text: str) -> dict:
    """Key/value part of an attack report as floats (ints where exact)."""
    out = {}
    for line in text.splitlines():
        if "=" not in line:
            continue
        k, v = line.split("=", 1)
        num = float(v)
        out[k] = int(num) if num.is_integer() and "." not in v and "e" not in v else num
    return out
