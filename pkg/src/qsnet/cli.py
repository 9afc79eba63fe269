"""Command-line front end.

Subcommands:
    run        full pipeline (QKD + sensing + localization) for a scenario
    skr-sweep  closed-form key rate vs fiber length table
    sense      sensing-only pass (spectrum flags + vibration recovery)
    locate     solve the source position from explicit time differences
    calibrate  shot-noise-unit calibration on a simulated noise-only capture

Exit codes: 0 success, 1 at least one node failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import localize as loc
from . import pipeline, qkd, runner, sensing
from .errors import QsnetError, ScenarioError
from .receiver import detect
from .scenario import ScenarioConfig, bundled_scenario_path, load_scenario
from .signal_core import ComplexWaveform, snu_calibrate


def _load(path_or_name: str) -> ScenarioConfig:
    p = Path(path_or_name)
    if p.exists():
        return load_scenario(p)
    return load_scenario(bundled_scenario_path(path_or_name))


def _cmd_run(args) -> int:
    config = _load(args.scenario)
    artifacts = runner.run(config, out_dir=args.out_dir, seed=args.seed,
                           dump_waveforms=args.dump_waveforms)
    for r in artifacts.skr_reports:
        if r.error:
            line = f"node {r.node_id}: FAILED ({r.error})"
        elif r.qkd_suspended:
            line = f"node {r.node_id}: QKD suspended (vibration beyond pilot recovery)"
        else:
            line = (f"node {r.node_id}: K = {r.k_bits_per_s / 1e6:.4f} Mbit/s"
                    f"  (T={r.estimate.t_hat:.4f}, "
                    f"eps={r.estimate.eps_hat * 1e3:.2f} mSNU)"
                    + ("  [ABORT: negative rate]" if r.abort else ""))
        print(line)
    for r in artifacts.sensing_reports:
        status = r.band_status
        if status is not None and (status.castdown or status.splitting):
            print(f"node {r.node_id}: vibration flags castdown={status.castdown} "
                  f"splitting={status.splitting} sidebands="
                  f"{[f'{s:.0f}' for s in status.splitting_sidebands_hz]} Hz")
    for e in artifacts.event_estimates:
        print(f"event at ({e.position[0]:.2f}, {e.position[1]:.2f}) m, "
              f"residual {e.residual_m:.2f} m, magnitude {e.magnitude:.2f} rad")
    return 1 if artifacts.failed_nodes else 0


def _cmd_skr_sweep(args) -> int:
    config = _load(args.scenario)
    lengths = np.arange(args.start_km, args.stop_km + 1e-9, args.step_km)
    rows = runner.skr_sweep(config, lengths)
    out = Path(args.out_dir) if args.out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
        for node in sorted({r["node_id"] for r in rows}):
            sel = [r for r in rows if r["node_id"] == node]
            runner.write_table(out / f"skr_vs_length_node{node}.csv",
                               ("length_km", "k_bits_per_s"),
                               np.array([r["length_km"] for r in sel]),
                               np.array([r["k_bits_per_s"] for r in sel]))
    for r in rows:
        print(f"L={r['length_km']:6.2f} km node {r['node_id']}: "
              f"{r['k_bits_per_s'] / 1e6:.4f} Mbit/s"
              + ("  [ABORT]" if r["abort"] else ""))
    return 0


def _cmd_sense(args) -> int:
    config = _load(args.scenario)
    reports = sensing.run_spm(config, seed=args.seed)
    failed = False
    for r in reports:
        if r.error:
            print(f"node {r.node_id}: FAILED ({r.error})")
            failed = True
            continue
        s = r.band_status
        peak = r.vibration.max_phase_rad if r.vibration is not None else 0.0
        print(f"node {r.node_id}: castdown={s.castdown} splitting={s.splitting} "
              f"peak_phase={peak:.2f} rad suspended={r.qkd_suspended}")
    return 1 if failed else 0


def _cmd_locate(args) -> int:
    config = _load(args.scenario)
    geometry = config.geometry()
    if geometry is None:
        print("scenario has no 3-node geometry", file=sys.stderr)
        return 2
    ids = geometry.node_ids
    delays = {(ids[1], ids[2]): args.dt12, (ids[0], ids[1]): args.dt23}
    estimate = loc.locate(delays, geometry)
    print(f"position: ({estimate.position[0]:.2f}, {estimate.position[1]:.2f}) m")
    print(f"residual: {estimate.residual_m:.3f} m")
    if estimate.ambiguous:
        print(f"ambiguous alternates: {estimate.alternates}")
    return 0


def _cmd_calibrate(args) -> int:
    config = _load(args.scenario)
    sps = int(round(config.sample_rate_hz / config.rep_rate_hz))
    zero = ComplexWaveform(samples=np.zeros(args.symbols * sps, dtype=complex),
                           sample_rate=config.sample_rate_hz,
                           snu_scale=float(sps))
    noise_only = detect(zero, config.detector, args.seed or config.seed)
    scale = snu_calibrate(noise_only, sps)
    print(json.dumps({"snu_scale": scale, "samples_per_symbol": sps,
                      "expected": (1.0 + config.detector.electronic_noise_snu) * sps},
                     sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsnet", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("scenario", help="scenario file path or bundled name "
                       "(paper_3node, desk_3node, eq_triangle)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the scenario seed")

    p = sub.add_parser("run", help="full QKD + sensing pipeline")
    common(p)
    p.add_argument("--out-dir", default=None, help="write report.json and tables")
    p.add_argument("--dump-waveforms", action="store_true",
                   help="also dump the detected waveform and its spectrum")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("skr-sweep", help="closed-form SKR vs fiber length")
    common(p)
    p.add_argument("--start-km", type=float, default=0.0)
    p.add_argument("--stop-km", type=float, default=50.0)
    p.add_argument("--step-km", type=float, default=2.0)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=_cmd_skr_sweep)

    p = sub.add_parser("sense", help="sensing-only pass")
    common(p)
    p.set_defaults(func=_cmd_sense)

    p = sub.add_parser("locate", help="solve source position from time differences")
    common(p)
    p.add_argument("--dt12", type=float, required=True,
                   help="arrival difference, second minus first node (s)")
    p.add_argument("--dt23", type=float, required=True,
                   help="arrival difference, third minus second node (s)")
    p.set_defaults(func=_cmd_locate)

    p = sub.add_parser("calibrate", help="shot-noise-unit calibration")
    common(p)
    p.add_argument("--symbols", type=int, default=20000)
    p.set_defaults(func=_cmd_calibrate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 2
    except QsnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
