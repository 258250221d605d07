"""Command line entry point: ``simulate``, ``gen-traces`` and ``compare``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import bandwidth as bw
from .config import ALGORITHMS, ConfigError, TraceConfig, load_config
from .netsim import run_experiment, synthetic_traces
from .report import (
    comparison_payload,
    summary_payload,
    write_json,
    write_metrics_csv,
)

log = logging.getLogger("adapcomfl")

OUT_ENV = "ADAPCOMFL_OUT"


def _out_dir(arg: str | None) -> Path:
    out = arg or os.environ.get(OUT_ENV)
    if not out:
        raise ConfigError(["--out: no output directory given (or set $ADAPCOMFL_OUT)"])
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load(path: str):
    if not Path(path).is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    return load_config(path)


def cmd_simulate(config_path: str, out_dir: str | None) -> int:
    cfg = _load(config_path)
    out = _out_dir(out_dir)
    result = run_experiment(cfg)
    write_metrics_csv(result, out / "metrics.csv")
    write_json(summary_payload(result), out / "summary.json")
    s = result.summary
    print(f"{cfg.algorithm}: final accuracy {s['final_accuracy_pct']:.2f}% "
          f"mean cr {s['mean_cr']:.4f} mean uplink {s['mean_uplink_time_s']:.4f}s "
          f"deadline misses {s['deadline_violations']}")
    return 0


def cmd_compare(config_path: str, out_dir: str | None) -> int:
    cfg = _load(config_path)
    out = _out_dir(out_dir)
    results = {}
    for algorithm in ALGORITHMS:
        result = run_experiment(cfg.replace(algorithm=algorithm))
        sub = out / algorithm
        sub.mkdir(exist_ok=True)
        write_metrics_csv(result, sub / "metrics.csv")
        write_json(summary_payload(result), sub / "summary.json")
        results[algorithm] = result
    digests = {tuple(r.shard_digests) for r in results.values()}
    if len(digests) != 1:
        raise RuntimeError("algorithms were run on different client shards")
    write_json(comparison_payload(results), out / "comparison.json")
    for name, res in results.items():
        s = res.summary
        print(f"{name:>10}: acc {s['final_accuracy_pct']:6.2f}%  "
              f"D' {s['mean_d_prime_slots']:8.1f} slots  T' {s['mean_uplink_time_s']:.4f}s")
    return 0


def cmd_gen_traces(clients: int, duration: int, seed: int, out: str, base: float,
                   amplitude: float, noise: float, shift_prob: float,
                   period: float, spread: float) -> int:
    traces = synthetic_traces(seed, clients, duration, base, amplitude, noise,
                              shift_prob, period, spread)
    bw.write_traces(traces, out)
    print(f"wrote {clients} traces x {duration} s to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adapcomfl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (("simulate", "run one algorithm"),
                            ("compare", "run fedavg, sketchfl and adapcomfl on shared data")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV})")

    d = TraceConfig()
    g = sub.add_parser("gen-traces", help="write synthetic bandwidth traces as CSV")
    g.add_argument("--clients", type=int, required=True)
    g.add_argument("--duration", type=int, required=True, help="seconds of 1 Hz samples")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--base", type=float, default=d.base_bw, help="mean level, MB/s")
    g.add_argument("--amplitude", type=float, default=d.amplitude, help="sinusoid amplitude, MB/s")
    g.add_argument("--noise", type=float, default=d.noise, help="AR(1) noise std, MB/s")
    g.add_argument("--shift-prob", type=float, default=d.shift_prob, help="per-second regime shift probability")
    g.add_argument("--period", type=float, default=d.period_s, help="sinusoid period, s")
    g.add_argument("--spread", type=float, default=d.spread, help="client level spread factor (>= 1)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "simulate":
            return cmd_simulate(args.config, args.out)
        if args.command == "compare":
            return cmd_compare(args.config, args.out)
        if args.clients < 1 or args.duration < 1 or args.seed < 0:
            raise ConfigError(["--clients, --duration must be >= 1 and --seed >= 0"])
        if args.base <= 0 or args.spread < 1 or not 0 <= args.shift_prob <= 1:
            raise ConfigError(["--base must be > 0, --spread >= 1, --shift-prob in [0, 1]"])
        return cmd_gen_traces(args.clients, args.duration, args.seed, args.out, args.base,
                              args.amplitude, args.noise, args.shift_prob, args.period, args.spread)
    except (ConfigError, FileNotFoundError, bw.TraceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
