"""Command-line entry points.

    markovmix simulate  --preset standard --out runs/demo
    markovmix calibrate --config cfg.json --out runs/cal
    markovmix evaluate  --log runs/demo/session_06_test.jsonl --out report.json
    markovmix chance    --preset standard --runs 100 --out chance.json
    markovmix inspect   --archive runs/demo/decoder.zip
    markovmix replay    --archive runs/demo/decoder.zip \
                        --stream runs/demo/session_06_test_stream.bin \
                        --log runs/demo/session_06_test.jsonl

Every command writes deterministic artifacts and exits nonzero on any error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .archive import ArchiveError, load_decoder, save_decoder
from .config import ConfigError, load_config, save_config, standard_benchmark
from .experiment import replay_frames, run_experiment
from .features import ControlLayout, FeatureConfig
from .metrics import indicator_report, report_csv_row, save_report_json
from .sessionlog import SessionLog
from .simulator import chance_baseline, make_schedule
from .streams import read_frames, write_frames


def _config_from_args(args):
    if args.config:
        return load_config(args.config)
    if args.preset == "standard":
        return standard_benchmark()
    raise ConfigError(f"unknown preset {args.preset!r}")


def _add_config_options(sub):
    group = sub.add_mutually_exclusive_group(required=True)
    group.add_argument("--config", help="session config JSON")
    group.add_argument("--preset", choices=["standard"], help="built-in configuration")


def _write_session_artifacts(out_dir: Path, result, record_streams: bool) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for log in result.logs:
        base = f"session_{log.meta['session_index']:02d}_{log.meta['phase']}"
        log.save_jsonl(out_dir / f"{base}.jsonl")
        log.save_trials_csv(out_dir / f"{base}_trials.csv")
    if record_streams:
        for log, frames in zip(result.test_logs, result.test_streams):
            base = f"session_{log.meta['session_index']:02d}_{log.meta['phase']}"
            write_frames(out_dir / f"{base}_stream.bin", frames,
                         result.config.features.rate)


def cmd_simulate(args) -> int:
    cfg = _config_from_args(args)
    out_dir = Path(args.out)
    result = run_experiment(cfg, record_test_streams=not args.no_streams)
    _write_session_artifacts(out_dir, result, record_streams=not args.no_streams)
    save_decoder(out_dir / "decoder.zip", result.decoder, config=cfg.to_dict(),
                 provenance={"sessions": len(result.logs)})
    save_config(cfg, out_dir / "config.json")
    for log in result.test_logs:
        report = indicator_report(log, cfg.layout)
        save_report_json(
            report, out_dir / f"session_{log.meta['session_index']:02d}_report.json"
        )
        print(
            f"session {log.meta['session_index']:02d} [test]: "
            f"accuracy={report['accuracy']:.3f} f_score={report['f_score']:.3f} "
            f"error_blocks/min={report['error_blocks']['rate_per_min']:.2f}"
        )
    print(f"artifacts written to {out_dir}")
    return 0


def cmd_calibrate(args) -> int:
    cfg = _config_from_args(args)
    out_dir = Path(args.out)
    result = run_experiment(cfg, train_only=True)
    _write_session_artifacts(out_dir, result, record_streams=False)
    save_decoder(out_dir / "decoder.zip", result.decoder, config=cfg.to_dict(),
                 provenance={"sessions": len(result.train_logs)})
    save_config(cfg, out_dir / "config.json")
    print(f"calibrated over {len(result.train_logs)} sessions "
          f"({result.decoder.n_calibrations} updates); archive at {out_dir / 'decoder.zip'}")
    return 0


def _layout_from_log(log: SessionLog) -> ControlLayout:
    doc = log.meta.get("layout")
    if doc is None:
        raise ValueError("log carries no layout metadata; pass --config")
    return ControlLayout(
        state_names=tuple(doc["names"]),
        kinds=tuple(doc["kinds"]),
        masks=tuple(tuple(m) for m in doc["masks"]),
    )


def cmd_evaluate(args) -> int:
    log = SessionLog.load_jsonl(args.log)
    layout = load_config(args.config).layout if args.config else _layout_from_log(log)
    report = indicator_report(log, layout)
    if args.out:
        save_report_json(report, args.out)
    if args.csv:
        _append_csv_row(args.csv, report_csv_row(report))
    print(json.dumps(report, indent=2, default=float))
    return 0


def _append_csv_row(path, row: dict) -> None:
    import csv

    path = Path(path)
    new_file = not path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(row.keys()))
        if new_file:
            writer.writeheader()
        writer.writerow(row)


def cmd_chance(args) -> int:
    cfg = _config_from_args(args)
    schedule = make_schedule(
        cfg.layout,
        cycles=cfg.schedule.cycles,
        trials_per_task=cfg.schedule.trials_per_task,
        idle_s=cfg.schedule.idle_s,
    )
    stats = chance_baseline(
        schedule, cfg.settings(), n_runs=args.runs, seed=cfg.seed
    )
    doc = {}
    for name, values in stats.items():
        sr = values["sr"]
        rr = values["r_ratio"]
        doc[name] = {
            "sr_mean": float(sr.mean()),
            "sr_sd": float(sr.std()),
            "r_ratio_mean": float(rr.mean()) if rr.size else None,
            "r_ratio_sd": float(rr.std()) if rr.size else None,
            "runs": int(sr.size),
        }
        ratio = doc[name]["r_ratio_mean"]
        print(
            f"{name}: SR {doc[name]['sr_mean']:.1f} +- {doc[name]['sr_sd']:.1f} % "
            f"(R-ratio {'n/a' if ratio is None else format(ratio, '.1f')})"
        )
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    return 0


def cmd_inspect(args) -> int:
    decoder, manifest = load_decoder(args.archive)
    print(f"archive version {manifest['version']}, "
          f"updates={manifest['provenance'].get('n_calibrations')}")
    print(f"states: {decoder.n_states}, output_dim: {decoder.output_dim}, "
          f"dynamic_gating: {decoder.dynamic_gating}")
    for k, expert in enumerate(decoder.experts):
        if not decoder.masks[k]:
            print(f"  state {k}: idle (constant zero map)")
            continue
        series = expert.selected_distance_series()
        tail = ", ".join(f"{v:.3g}" for v in series[-5:]) if series.size else "none"
        print(f"  state {k}: mask={decoder.masks[k]} f*={expert.best_factors} "
              f"updates={expert.n_updates} convergence tail=[{tail}]")
    print(f"gating f*={decoder.gating.classifier.best_factors}")
    print("transition matrix:")
    for row in decoder.gating.transition:
        print("   " + "  ".join(f"{v:.3f}" for v in row))
    print("class priors: " + "  ".join(f"{v:.3f}" for v in decoder.gating.class_priors))
    return 0


def cmd_replay(args) -> int:
    decoder, _ = load_decoder(args.archive)
    _, frames, rate = read_frames(args.stream)
    log = SessionLog.load_jsonl(args.log)
    feature_cfg = _feature_cfg_from_args(args, rate, frames.shape[1])
    y_hat, _ = replay_frames(decoder, frames, feature_cfg)
    logged = log.y_hat()
    if y_hat.shape != logged.shape:
        print(f"replay produced {y_hat.shape[0]} ticks, log has {logged.shape[0]}",
              file=sys.stderr)
        return 1
    if not np.array_equal(y_hat, logged):
        worst = float(np.max(np.abs(y_hat - logged)))
        print(f"replay mismatch: max |delta| = {worst:.3e}", file=sys.stderr)
        return 1
    if args.out:
        np.savetxt(args.out, y_hat, delimiter=",")
    print(f"replay bit-identical over {y_hat.shape[0]} ticks")
    return 0


def _feature_cfg_from_args(args, rate: float, channels: int) -> FeatureConfig:
    if args.config:
        return load_config(args.config).features
    cfg = standard_benchmark().features
    if cfg.rate != rate or cfg.n_channels != channels:
        raise ConfigError(
            "stream geometry does not match the standard preset; pass --config"
        )
    return cfg


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("MARKOVMIX_LOG", "WARNING").upper())
    parser = argparse.ArgumentParser(
        prog="markovmix",
        description="closed-loop mixture-of-multilinear-experts decoder tools",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run all configured phases, write artifacts")
    _add_config_options(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-streams", action="store_true",
                   help="skip raw frame stream recording")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("calibrate", help="run training phases only, save the archive")
    _add_config_options(p)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_calibrate)

    p = sub.add_parser("evaluate", help="compute the indicator report for a log")
    p.add_argument("--log", required=True)
    p.add_argument("--config", help="config JSON (layout fallback)")
    p.add_argument("--out", help="write the report JSON here")
    p.add_argument("--csv", help="append a flat row here for cross-session slope analysis")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("chance", help="random-walk baseline statistics")
    _add_config_options(p)
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_chance)

    p = sub.add_parser("inspect", help="summarize a decoder archive")
    p.add_argument("--archive", required=True)
    p.set_defaults(fn=cmd_inspect)

    p = sub.add_parser("replay", help="re-decode a recorded stream, verify bit-exactness")
    p.add_argument("--archive", required=True)
    p.add_argument("--stream", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--config")
    p.add_argument("--out", help="write replayed y_hat as CSV")
    p.set_defaults(fn=cmd_replay)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ArchiveError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
