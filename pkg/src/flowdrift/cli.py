"""Command-line entry point: ``flowdrift <command> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import protocol
from .evaluation import snapshots_to_json
from .features import (
    IpLabeler, extract_batch, read_column_mapping, read_feature_csv, write_feature_csv,
)
from .flows import (
    DEFAULT_IDLE_TIMEOUT, PROTO_ARP, PROTO_NAMES, FilterPolicy, FilterReport, assemble,
    filter_packets, read_packets,
)
from .preprocess import SplitPlan, split
from .synthetic import DriftSpec, drift_pair

_PROTO_BY_NAME = {v.lower(): k for k, v in PROTO_NAMES.items()}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    for key in protocol.CONFIG_KEYS:
        # Every config key doubles as a flag of the same name.
        p.add_argument(f"--{key}", dest=key.replace(".", "__"), default=None, metavar="VALUE")


def _config_from(args) -> protocol.ExperimentConfig:
    overrides = {}
    for key in protocol.CONFIG_KEYS:
        val = getattr(args, key.replace(".", "__"), None)
        if val is not None:
            overrides[key] = val
    values = protocol.parse_config_text(Path(args.config).read_text()) if args.config else {}
    values.update(overrides)
    return protocol.make_config(values)


def _parse_attackers(items) -> dict[str, str]:
    out = {}
    for item in items or []:
        ip, _, kind = item.partition("=")
        if not ip or not kind:
            raise SystemExit(f"--attacker expects IP=AttackType, got {item!r}")
        out[ip.strip()] = kind.strip()
    return out


def cmd_extract(args) -> int:
    if args.flows:
        mapping = read_column_mapping(args.mapping) if args.mapping else None
        data = read_feature_csv(args.flows, mapping, origin=args.origin)
        write_feature_csv(data, args.out)
        print(f"{len(data)} flows written to {args.out}")
        return 0
    drop = {_PROTO_BY_NAME.get(p.lower(), None) or int(p) for p in args.drop} if args.drop else {PROTO_ARP}
    report = FilterReport()
    packets = filter_packets(read_packets(args.packets), FilterPolicy(frozenset(drop)), report)
    flows = assemble(packets, args.idle_timeout)
    samples, dropped = extract_batch(flows, IpLabeler(_parse_attackers(args.attacker)),
                                     args.origin or "")
    write_feature_csv(samples, args.out)
    dropped_pkts = ", ".join(f"{k}: {v}" for k, v in sorted(report.dropped.items())) or "none"
    print(f"{len(packets)} packets kept (dropped {dropped_pkts}); {len(flows)} flows; "
          f"{len(samples)} samples written to {args.out}; {dropped} unlabeled flows dropped")
    return 0


def cmd_stats(args) -> int:
    mapping = read_column_mapping(args.mapping) if args.mapping else None
    data = read_feature_csv(args.path, mapping, origin=args.origin)
    stats = protocol.dataset_stats(data)
    if args.json:
        print(json.dumps(stats.to_dict(), indent=2))
    else:
        print(stats.table(), end="")
    return 0


def cmd_split(args) -> int:
    mapping = read_column_mapping(args.mapping) if args.mapping else None
    data = read_feature_csv(args.path, mapping)
    if args.origin:
        data = data.where_origin(args.origin)
    plan = SplitPlan(args.train_fraction, args.seed, not args.no_shuffle)
    train, test = split(data, plan)
    write_feature_csv(train, args.train_out)
    write_feature_csv(test, args.test_out)
    print(f"{len(data)} samples -> train {len(train)}, test {len(test)}")
    return 0


def cmd_synth(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    offline, incoming = drift_pair(DriftSpec(args.n_offline, args.n_incoming, seed=args.seed))
    write_feature_csv(offline, out / "offline.csv")
    write_feature_csv(incoming, out / "incoming.csv")
    print(f"wrote {out / 'offline.csv'} ({len(offline)}) and {out / 'incoming.csv'} ({len(incoming)})")
    return 0


def cmd_train_offline(args) -> int:
    cfg = _config_from(args)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = protocol.prepare(cfg, *protocol.load_sources(cfg))
    data.scaler.save(out / "scaler.json")
    snaps = []
    for kind in cfg.model_kinds:
        res = protocol.run_offline_phase(cfg, data, kind, out)
        snaps += [res.offline_test, res.incoming_test]
        print(f"{kind}: offline-test acc {res.offline_test.accuracy:.4f}, "
              f"incoming-test acc {res.incoming_test.accuracy:.4f} -> {out / res.checkpoint}")
    (out / "offline_snapshots.json").write_text(snapshots_to_json(snaps))
    return 0


def cmd_train_incremental(args) -> int:
    cfg = _config_from(args)
    out = Path(cfg.output_dir)
    data = protocol.prepare(cfg, *protocol.load_sources(cfg))
    ckpt = Path(args.checkpoint)
    baseline = Path(args.baseline) if args.baseline else ckpt
    res = protocol.resume_incremental(cfg, data, ckpt, baseline, args.model_id, out)
    res.curve.write_csv(out / f"curve_{res.model_id}.csv")
    (out / f"snapshots_{res.model_id}.json").write_text(snapshots_to_json(res.snapshots))
    if len(res.curve):
        print(f"{res.model_id}: {res.batches_run} batches, incoming acc "
              f"{res.curve.incoming_acc[-1]:.4f}, forgetting {res.curve.forgetting[-1]:.4f}"
              + (" (stopped early)" if res.stopped_early else ""))
    else:
        print(f"{res.model_id}: no batches left to run")
    return 0


def cmd_run_protocol(args) -> int:
    cfg = _config_from(args)
    protocol.run_protocol(cfg)
    print((Path(cfg.output_dir) / "tables.txt").read_text(), end="")
    return 0


def cmd_report(args) -> int:
    report = protocol.ExperimentReport.from_files(args.run_dir)
    if args.rewrite:
        protocol.emit_reports(report, args.run_dir)
    print(protocol.render_tables(report), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowdrift", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="packets -> flows -> feature CSV (or remap a flow CSV)")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--packets", help="packet CSV or JSONL")
    src.add_argument("--flows", help="third-party flow CSV to remap")
    p.add_argument("--mapping", help="column mapping file (external_name=fNN)")
    p.add_argument("--out", required=True)
    p.add_argument("--origin", default=None)
    p.add_argument("--attacker", action="append", metavar="IP=TYPE",
                   help="label flows touching IP as TYPE (repeatable)")
    p.add_argument("--idle-timeout", type=float, default=DEFAULT_IDLE_TIMEOUT)
    p.add_argument("--drop", action="append", metavar="PROTO",
                   help="protocol to drop (name or number; repeatable; default ARP)")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("stats", help="flow counts per origin and traffic type")
    p.add_argument("path")
    p.add_argument("--mapping")
    p.add_argument("--origin", default=None, help="override the origin column")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("split", help="seeded train/test split of a feature CSV")
    p.add_argument("path")
    p.add_argument("--train-out", required=True)
    p.add_argument("--test-out", required=True)
    p.add_argument("--train_fraction", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--no-shuffle", action="store_true")
    p.add_argument("--origin", help="keep only this origin before splitting")
    p.add_argument("--mapping")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("synth", help="write a synthetic offline/incoming drift pair")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-offline", type=int, default=10_000)
    p.add_argument("--n-incoming", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-offline", help="offline phase only")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train_offline)

    p = sub.add_parser("train-incremental", help="incremental phase from a checkpoint")
    _add_config_flags(p)
    p.add_argument("--checkpoint", required=True, help="offline or batch checkpoint to continue")
    p.add_argument("--baseline", help="offline checkpoint for the forgetting baseline")
    p.add_argument("--model-id", default=None)
    p.set_defaults(func=cmd_train_incremental)

    p = sub.add_parser("run-protocol", help="all phases, reports included")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run_protocol)

    p = sub.add_parser("report", help="print (and optionally rewrite) a run's tables")
    p.add_argument("run_dir")
    p.add_argument("--rewrite", action="store_true", help="re-emit tables and curve CSVs")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"flowdrift: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
