"""Command-line entry point: simulate, analyze, attack, sweep, coverage.

Exit status is 0 on success, 1 for invalid input or configuration and 2 for
runtime failures (unparseable logs, failed fits, I/O).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .attack import GateConfig, attack_report, failure_sweep, min_gate_width
from .config import ConfigError, SessionConfig, load_config
from .delays import REPORTED_LASERS, MissingPeakError, analyze_session, coverage_trial, true_delays
from .histogram import FitError, fold_events
from .logs import (
    LogFormatError,
    format_attack_report,
    format_delay_report,
    histogram_filename,
    human_delay_table,
    read_announcements,
    read_delay_report,
    read_events,
    read_truth,
    write_announcements,
    write_events,
    write_histogram,
    write_truth,
)
from .model import H_S
from .simulate import simulate_pass

log = logging.getLogger("decoy_timing")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(ValueError):
    pass


def _config(args) -> SessionConfig:
    cfg = load_config(args.config)
    return cfg.override(
        seed=getattr(args, "seed", None),
        n_slots=getattr(args, "n_slots", None),
        bin_width=getattr(args, "bin_width", None),
        window_start=getattr(args, "window_start", None),
        window_end=getattr(args, "window_end", None),
    )


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    sim = simulate_pass(cfg.emission, cfg.channel, cfg.n_slots, cfg.seed, workers=args.workers)
    write_events(out / "events.csv", sim.events)
    write_truth(out / "truth.csv", sim.truth)
    write_announcements(out / "announcements.csv", sim.announcements)
    manifest = {
        "session": cfg.session,
        "config_sha256": cfg.digest,
        "seed": cfg.seed,
        "n_slots": cfg.n_slots,
        "events": len(sim.events),
        "truth_records": len(sim.truth),
        "version": __version__,
        "files": ["events.csv", "truth.csv", "announcements.csv"],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    log.info("simulated %d slots, %d clicks in %.1f s", cfg.n_slots, len(sim.events), time.perf_counter() - t0)
    print(f"wrote {len(sim.events)} events to {out}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = _config(args)
    events = read_events(args.events)
    ann = read_announcements(args.announcements)
    period = cfg.emission.period
    report, fits = analyze_session(
        events,
        ann,
        period,
        cfg.analysis.bin_width,
        cfg.analysis.window,
        session=cfg.session,
        fit_options=cfg.analysis.fit_options,
    )
    text = format_delay_report(report)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "delays.csv").write_text(text)
        for (klass, det), fit in fits.items():
            hist = fold_events(events, ann, klass, det, period, cfg.analysis.bin_width, cfg.analysis.window)
            write_histogram(out / histogram_filename(klass, det), hist)
        peaks = {
            f"{k.value}->{d.value}": {"mean_ps": f.mean, "three_sigma_ps": f.three_sigma, "sigma_ps": f.peak.sigma,
                                      "amplitude": f.peak.amplitude, "warnings": list(f.warnings)}
            for (k, d), f in fits.items()
        }
        (out / "peaks.json").write_text(json.dumps(peaks, indent=2) + "\n")
    print(human_delay_table(report), file=sys.stderr)
    sys.stdout.write(text)
    return EXIT_OK


def _gates(cfg: SessionConfig, delay_report_path) -> GateConfig:
    att = cfg.attack
    sig_laser, dec_laser = att.lasers
    if delay_report_path:
        rep = read_delay_report(delay_report_path)
        value = lambda l: 0.0 if l == H_S else rep[l].value
        centers = (att.reference_time + value(sig_laser), att.reference_time + value(dec_laser))
    elif att.signal_center is not None and att.decoy_center is not None:
        centers = (att.signal_center, att.decoy_center)
    else:
        base = cfg.channel.propagation_delay
        centers = (base + cfg.emission.delay[sig_laser], base + cfg.emission.delay[dec_laser])
    width = att.width if att.width is not None else min_gate_width(att.target_acceptance, att.sigma)
    return GateConfig(centers[0], centers[1], width)


def cmd_attack(args) -> int:
    cfg = _config(args)
    gates = _gates(cfg, args.delay_report)
    events = truth = None
    if args.truth:
        events = read_events(args.events)
        truth = read_truth(args.truth)
    else:
        log.warning("no truth log: reporting analytic gate statistics only")
    pol = cfg.attack.lasers[0].polarization
    report = attack_report(events, truth, gates, cfg.emission.period, cfg.attack.sigma, polarizations=[pol])
    text = format_attack_report(report)
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def _grid(text: str) -> np.ndarray:
    try:
        start, stop, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise UsageError(f"grid must be start:stop:step, got {text!r}") from None
    if step <= 0 or stop < start:
        raise UsageError(f"empty grid {text!r}")
    return start + step * np.arange(int(np.floor((stop - start) / step + 1e-9)) + 1)


def cmd_sweep(args) -> int:
    cfg = _config(args)
    lines = ["separation_ps,width_ps,failure_prob"]
    for sep, w, p in failure_sweep(_grid(args.separations), _grid(args.widths), cfg.attack.sigma):
        lines.append(f"{sep:g},{w:g},{p:.8g}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_coverage(args) -> int:
    cfg = _config(args)
    stats = coverage_trial(
        cfg.emission,
        cfg.channel,
        args.seeds,
        cfg.n_slots,
        first_seed=cfg.seed,
        bin_width=cfg.analysis.bin_width,
        window=cfg.analysis.window,
        fit_options=cfg.analysis.fit_options,
        workers=args.workers,
    )
    truth = true_delays(cfg.emission)
    lines = ["laser,true_ps,coverage,trials"]
    for laser in REPORTED_LASERS:
        name = str(laser)
        lines.append(f"{name},{truth[laser]:g},{stats.fraction(name):.4f},{stats.trials[name]}")
    lines.append(f"pooled,,{stats.pooled:.4f},{sum(stats.trials.values())}")
    for seed, err in stats.failures:
        lines.append(f"# seed {seed} failed: {err}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="decoy-timing", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp, analysis=False):
        sp.add_argument("--config", default=None, help="TOML session file or built-in name (oct31, eve_oct31)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--n-slots", type=int)
        if analysis:
            sp.add_argument("--bin-width", type=float, help="ps")
            sp.add_argument("--window-start", type=float, help="ps, inclusive")
            sp.add_argument("--window-end", type=float, help="ps, exclusive")

    s = sub.add_parser("simulate", help="write event, truth and announcement logs")
    common(s)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="fit peaks and solve the seven laser delays")
    common(a, analysis=True)
    a.add_argument("--events", required=True)
    a.add_argument("--announcements", required=True)
    a.add_argument("--out", help="directory for delays.csv, peaks.json and histogram dumps")
    a.set_defaults(func=cmd_analyze)

    t = sub.add_parser("attack", help="two-gate signal/decoy discrimination report")
    common(t)
    t.add_argument("--events")
    t.add_argument("--truth")
    t.add_argument("--delay-report", help="delays.csv from analyze; gates are centred on its estimates")
    t.add_argument("--out")
    t.set_defaults(func=cmd_attack)

    w = sub.add_parser("sweep", help="failure probability over separation x width")
    common(w)
    w.add_argument("--separations", default="100:600:10", help="start:stop:step in ps")
    w.add_argument("--widths", default="50:500:5", help="start:stop:step in ps")
    w.add_argument("--out")
    w.set_defaults(func=cmd_sweep)

    c = sub.add_parser("coverage", help="3-sigma coverage of planted delays over many seeds")
    common(c, analysis=True)
    c.add_argument("--seeds", type=int, default=100)
    c.add_argument("--workers", type=int, default=1)
    c.add_argument("--out")
    c.set_defaults(func=cmd_coverage)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if args.cmd == "attack" and args.truth and not args.events:
        print("error: --truth requires --events", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (LogFormatError, FitError, MissingPeakError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
