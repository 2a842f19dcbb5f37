"""Command-line front end.

Exit codes: 0 success, 1 I/O, 2 configuration, 3 statistics, 4 integrity/format.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings

import numpy as np

from . import calib, correct, metrics, pipeline, sim
from .clock import DEFAULT_KI, DEFAULT_KP, ClockSpec
from .core import (
    ConfigError,
    DetectorConfig,
    FormatError,
    IntegrityError,
    LaserConfig,
    StatisticsError,
    TagIOError,
    WalkError,
    read_tags,
    write_tags,
)

EXIT_IO, EXIT_CONFIG, EXIT_STATS, EXIT_INTEGRITY = 1, 2, 3, 4


def _print_warnings(caught) -> None:
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)


def _load_config(path):
    if path is None:
        return LaserConfig(), DetectorConfig()
    return sim.load_config(path)


def _add_clock_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--nominal-period-ps", type=float, default=1e12 / 537.5e6,
                   help="laser period (default: 537.5 MHz)")
    p.add_argument("--pll-kp", type=float, default=DEFAULT_KP)
    p.add_argument("--pll-ki", type=float, default=DEFAULT_KI)
    p.add_argument("--ideal-clock-phase-ps", type=float, default=None,
                   help="bypass the PLL and use a known clock with this phase")


def _clock_spec(args) -> ClockSpec:
    return ClockSpec(args.nominal_period_ps, args.pll_kp, args.pll_ki, args.ideal_clock_phase_ps)


def cmd_config(args) -> int:
    laser, det = _load_config(args.config)
    json.dump(sim.config_to_dict(laser, det), sys.stdout, indent=2)
    print()
    return 0


def cmd_simulate(args) -> int:
    laser, det = _load_config(args.config)
    if args.duration_ps is not None:
        laser = LaserConfig(laser.period_ps, laser.mean_photon_number, args.duration_ps, laser.phase_ps)
    if args.photon_rate_cps is not None:
        laser = laser.with_photon_rate(args.photon_rate_cps)
    s_photons, s_detect = np.random.SeedSequence(args.seed).spawn(2)
    photons = sim.generate_photons(laser, s_photons)
    tags = sim.detect(photons, det, s_detect)
    write_tags(tags, args.out)
    seconds = laser.duration_ps * 1e-12
    print(f"photons generated: {len(photons)}")
    print(f"tags emitted:      {len(tags)}")
    print(f"detected rate:     {len(tags) / seconds:.6g} cps")
    return 0


def cmd_calibrate(args) -> int:
    tags = read_tags(args.tags)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        curve = pipeline.calibrate(
            tags, _clock_spec(args), discard_tags=args.discard_tags,
            bin_width_ps=args.bin_width_ps, min_samples=args.min_samples,
            baseline_tprime_ps=args.baseline_tprime_ps, max_tprime_ps=args.max_tprime_ps,
        )
    calib.write_curve(curve, args.out)
    print(f"bins:        {len(curve.bins)}")
    print(f"baseline_ps: {curve.baseline_ps:.3f}")
    print(f"t' range:    {curve.t_prime[0]:.1f} .. {curve.t_prime[-1]:.1f} ps")
    _print_warnings(caught)
    return 0


def cmd_correct(args) -> int:
    tags = read_tags(args.tags)
    curve = calib.read_curve(args.curve)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        out = correct.correct_stream(tags, curve, chained=args.chained)
    write_tags(out, args.out)
    changed = int(np.count_nonzero(out.times != tags.times))
    print(f"tags: {len(out)}  times changed: {changed}")
    _print_warnings(caught)
    return 0


def cmd_filter(args) -> int:
    tags = read_tags(args.tags)
    out = correct.deadtime_filter(tags, args.deadtime_ps, paralyzable=args.paralyzable)
    write_tags(out, args.out)
    print(f"kept {len(out)} of {len(tags)} tags")
    if len(out) >= 2:
        print(f"usable rate: {metrics.count_rate(out):.6g} cps")
    return 0


def cmd_analyze(args) -> int:
    spec = _clock_spec(args)
    before = read_tags(args.before)
    if args.after is None:
        rep, hist = metrics.stream_report(before, spec, args.bin_width_ps)
        report = {"before": rep}
        hists = {"before": hist}
    else:
        after = read_tags(args.after)
        full = metrics.compare_widths(before, after, spec, args.bin_width_ps)
        report = {k: full[k] for k in ("before", "after", "ratio")}
        hists = dict(zip(("before", "after"), full["histograms"]))
    if args.hist_prefix:
        for name, h in hists.items():
            metrics.write_histogram_csv(h, f"{args.hist_prefix}_{name}.csv")
    if args.report:
        metrics.write_report_json(report, args.report)
    json.dump(report, sys.stdout, indent=2)
    print()
    return 0


def cmd_sweep(args) -> int:
    laser, det = _load_config(args.config)
    rates = [float(r) for r in args.rates_cps.split(",")]
    res = pipeline.rate_sweep(laser, det, rates, args.seed, args.deadtime_ps,
                              paralyzable=args.paralyzable, target_photons=args.photons_per_point)
    try:
        fh = open(args.out, "w", newline="") if args.out else sys.stdout
    except OSError as e:
        raise TagIOError(e.errno, f"cannot write sweep: {e.strerror}", args.out) from e
    w = csv.writer(fh)
    w.writerow(["incident_rate_cps", "detected_rate_cps", "usable_rate_cps", "normalized_efficiency"])
    for row in zip(res.incident_cps, res.detected_cps, res.usable_cps, res.normalized_efficiency):
        w.writerow([repr(float(v)) for v in row])
    if fh is not sys.stdout:
        fh.close()
    if res.three_db_incident_cps is None:
        print("3 dB point: not reached", file=sys.stderr)
    else:
        print(f"3 dB point: {res.three_db_incident_cps:.6g} cps incident", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="snspdwalk", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("config", help="print the (default or given) simulator config as JSON")
    p.add_argument("config", nargs="?")
    p.set_defaults(func=cmd_config)

    p = sub.add_parser("simulate", help="simulate laser + detector, write a TTG1 tag file")
    p.add_argument("config", nargs="?", help="simulator JSON config (defaults if omitted)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--photon-rate-cps", type=float)
    p.add_argument("--duration-ps", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="build a delay-vs-separation curve from a tag file")
    p.add_argument("--tags", required=True)
    p.add_argument("--out", required=True)
    _add_clock_flags(p)
    p.add_argument("--bin-width-ps", type=float, default=1.0)
    p.add_argument("--min-samples", type=int, default=100)
    p.add_argument("--baseline-tprime-ps", type=float, default=500_000.0)
    p.add_argument("--max-tprime-ps", type=float)
    p.add_argument("--discard-tags", type=int, help="skip pairs in the first N tags (default: PLL window)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("correct", help="apply a calibration curve to a tag file")
    p.add_argument("--tags", required=True)
    p.add_argument("--curve", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--chained", action="store_true", help="measure gaps to the corrected predecessor")
    p.set_defaults(func=cmd_correct)

    p = sub.add_parser("filter", help="software dead time")
    p.add_argument("--tags", required=True)
    p.add_argument("--deadtime-ps", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--paralyzable", action="store_true",
                   help="measure gaps to the previous tag, kept or not")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("analyze", help="IRF histograms and FWHM/FW10%%M/FW1%%M report")
    p.add_argument("--before", required=True)
    p.add_argument("--after")
    _add_clock_flags(p)
    p.add_argument("--bin-width-ps", type=float, default=1.0)
    p.add_argument("--hist-prefix", help="write <prefix>_before.csv / <prefix>_after.csv")
    p.add_argument("--report", help="width-report JSON path")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", help="detected and usable rate versus incident rate")
    p.add_argument("config", nargs="?")
    p.add_argument("--rates-cps", required=True, help="comma-separated ascending incident rates")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--deadtime-ps", type=int, default=100_000)
    p.add_argument("--paralyzable", action="store_true")
    p.add_argument("--photons-per-point", type=int, default=200_000)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except StatisticsError as e:
        print(f"statistics error: {e}", file=sys.stderr)
        return EXIT_STATS
    except (IntegrityError, FormatError) as e:
        print(f"integrity error: {e}", file=sys.stderr)
        return EXIT_INTEGRITY
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except WalkError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INTEGRITY


if __name__ == "__main__":
    sys.exit(main())
