"""Command line front end.

Subcommands: ``run`` (one mix under one resource manager), ``sweep``
(mix x resource-manager matrix), ``classify`` (cache/bandwidth/prefetch
sensitivity of the synthetic apps in a mix) and ``gen-trace`` (write a
synthetic stream to a trace file).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import SimConfig, dump_config, load_config
from .harness import (RM_NAMES, RmConfig, classify_mix, emit_results,
                      run_experiment, sweep)
from .traces import generate_synthetic, load_mix, parse_synthetic_spec, write_trace


def _load_cfg(args) -> SimConfig:
    if args.config:
        return load_config(args.config)
    return SimConfig().validate()


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE", help="key=value config file")
    p.add_argument("--mix", metavar="FILE", required=True,
                   help="mix file: one 'synthetic:...' or 'trace:...' per line")
    p.add_argument("--out", metavar="DIR", default="results",
                   help="output directory (default: results)")
    p.add_argument("--seed", type=int, default=0, metavar="U64")
    p.add_argument("--instructions", type=int, default=None, metavar="N",
                   help="detailed instructions per app (default from config)")
    p.add_argument("--warmup", type=int, default=None, metavar="N",
                   help="warmup instructions per app (default from config)")


def _cmd_run(args) -> int:
    cfg = _load_cfg(args)
    mix = load_mix(args.mix)
    report = run_experiment(mix, args.rm, cfg,
                            detailed_instructions=args.instructions,
                            warmup_instructions=args.warmup, seed=args.seed)
    paths = emit_results([report], args.out)
    print(f"{mix.name} under {args.rm}: weighted speedup "
          f"{report.weighted_speedup:.4f}, ANTT {report.antt:.4f}")
    print(f"wrote {', '.join(str(p) for p in paths)}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_cfg(args)
    mix = load_mix(args.mix)
    rm_names = RM_NAMES if args.rm == "all" else tuple(
        name.strip() for name in args.rm.split(","))
    for name in rm_names:
        RmConfig.by_name(name)  # validate early
    reports = sweep([mix], rm_names, cfg,
                    detailed_instructions=args.instructions,
                    warmup_instructions=args.warmup, seed=args.seed,
                    jobs=args.jobs)
    paths = emit_results(reports, args.out)
    for rep in reports:
        print(f"{rep.mix_name:>12s} {rep.rm_name:>10s}  "
              f"ws={rep.weighted_speedup:.4f}  antt={rep.antt:.4f}")
    print(f"wrote {paths[0]} and {len(paths) - 1} time-series files")
    return 0


def _cmd_classify(args) -> int:
    cfg = _load_cfg(args)
    mix = load_mix(args.mix)
    results = classify_mix(mix, cfg, instructions=args.instructions or 200_000,
                           warmup=args.warmup or 50_000, seed=args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / f"classify_{mix.name}.csv"
    with out_path.open("w") as fh:
        fh.write("app,cache_sensitive,bandwidth_sensitive,prefetch_sensitive\n")
        for app in sorted(results):
            r = results[app]
            fh.write(f"{app},{int(r.cache_sensitive)},"
                     f"{int(r.bandwidth_sensitive)},{int(r.prefetch_sensitive)}\n")
            tags = [tag for tag, on in (("CS", r.cache_sensitive),
                                        ("BS", r.bandwidth_sensitive),
                                        ("PS", r.prefetch_sensitive)) if on]
            print(f"app {app}: {'-'.join(tags) if tags else 'insensitive'}")
    print(f"wrote {out_path}")
    return 0


def _cmd_gen_trace(args) -> int:
    spec = parse_synthetic_spec(args.spec)
    records = generate_synthetic(spec, args.instructions)
    count = write_trace(records, args.out_file, fmt=args.format)
    print(f"wrote {count} records to {args.out_file}")
    return 0


def _cmd_show_config(args) -> int:
    cfg = _load_cfg(args)
    dump_config(cfg, args.out_file)
    print(f"wrote {args.out_file}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cbpsim",
        description="Multicore memory-system simulator with coordinated "
                    "cache partitioning, bandwidth partitioning and "
                    "prefetch throttling.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one mix under one resource manager")
    _add_common(p)
    p.add_argument("--rm", default="cbp", choices=RM_NAMES,
                   help="resource manager (default: cbp)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="run a mix under many resource managers")
    _add_common(p)
    p.add_argument("--rm", default="all",
                   help="comma-separated resource managers or 'all'")
    p.add_argument("--jobs", type=int, default=1, metavar="N",
                   help="parallel worker processes")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("classify",
                       help="classify mix apps as cache/bandwidth/prefetch "
                            "sensitive")
    _add_common(p)
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("gen-trace", help="write a synthetic trace file")
    p.add_argument("--spec", required=True, metavar="KV",
                   help="synthetic spec, e.g. "
                        "'working_set_bytes=256KiB,mem_intensity=100,seed=1'")
    p.add_argument("--instructions", type=int, required=True, metavar="N")
    p.add_argument("--out", dest="out_file", required=True, metavar="FILE")
    p.add_argument("--format", choices=("text", "binary"), default="text")
    p.set_defaults(func=_cmd_gen_trace)

    p = sub.add_parser("show-config", help="dump the effective configuration")
    p.add_argument("--config", metavar="FILE")
    p.add_argument("--out", dest="out_file", default="config.txt", metavar="FILE")
    p.set_defaults(func=_cmd_show_config)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
