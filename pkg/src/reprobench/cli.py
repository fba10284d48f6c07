"""``reprobench`` command line.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 no protocol of the grid produced results.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .analysis import embed_2d, select_protocol, zscore_signatures
from .config import load_config, load_grid
from .errors import ConfigError, DataError, NoSuccessfulProtocols, ReprobenchError
from .ingest import FORMATS, dataset_stats, parse_interactions, write_canonical
from .protocol import enumerate_grid
from .report import build_report, pooled_signatures, robustness_rows, write_csv
from .runner import dumps, load_results, protocol_id, run_experiment
from .synth import SynthSpec, generate_synthetic

log = logging.getLogger("reprobench")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NO_PROTOCOLS = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _print_json(obj):
    sys.stdout.write(dumps(obj))


def cmd_ingest(args):
    d = parse_interactions(args.format, args.input, args.source_id)
    if args.output:
        write_canonical(d, args.output)
    _print_json({"source_id": d.source_id, **dataclasses.asdict(dataset_stats(d))})


def cmd_synth(args):
    spec = SynthSpec(
        n_users=args.n_users, n_items=args.n_items, popularity_skew=args.popularity_skew,
        taste_dim=args.taste_dim, mean_events_per_user=args.mean_events_per_user,
        rating_noise=args.rating_noise, seed=args.seed, source_id=args.source_id,
    )
    d = generate_synthetic(spec)
    write_canonical(d, args.output)
    _print_json({"source_id": d.source_id, **dataclasses.asdict(dataset_stats(d))})


def cmd_grid(args):
    protocols = enumerate_grid(load_grid(args.config))
    manifest = {"n_protocols": len(protocols),
                "protocols": {protocol_id(i): p.to_dict() for i, p in enumerate(protocols)}}
    if args.output:
        Path(args.output).write_text(dumps(manifest))
    _print_json(manifest)


def cmd_run(args):
    config = load_config(args.config)
    if args.seed is not None:
        config.master_seed = args.seed
    if args.parallelism is not None:
        config.parallelism = "auto" if args.parallelism == "auto" else int(args.parallelism)
    if args.output_dir is not None:
        config.output_dir = Path(args.output_dir)
    results = run_experiment(config)
    print(f"{len(results['protocols'])} protocols evaluated, {len(results['skipped'])} skipped; "
          f"results in {config.output_dir}")


def cmd_robustness(args):
    rows = robustness_rows([load_results(p) for p in args.results], args.metric)
    header = ["dataset_id", "metric", "robustness", "n_pdatasets", "n_pairs", "n_skipped_pairs"]
    if args.output:
        write_csv(args.output, header, rows)
    for r in rows:
        print(" ".join(str(v) for v in r))


def _signatures(args):
    sigs = pooled_signatures([load_results(p) for p in args.results], args.metric)
    if args.zscore:
        z = zscore_signatures([s for _, s in sigs])
        sigs = [(sid, s) for (sid, _), s in zip(sigs, z)]
    return sigs


def cmd_signature(args):
    sigs = _signatures(args)
    if args.protocol:
        sigs = [(sid, s) for sid, s in sigs if sid.rpartition("/")[2] == args.protocol or sid == args.protocol]
        if not sigs:
            raise DataError(f"no protocol {args.protocol!r} in the results")
    first = sigs[0][1]
    header = ["id"] + [f"{m}|{a}" for m in first.metric_order for a in first.algo_order]
    rows = [[sid, *s.values] for sid, s in sigs]
    if args.output:
        write_csv(args.output, header, rows)
    else:
        write_csv("/dev/stdout", header, rows)


def cmd_select(args):
    targets = pooled_signatures([load_results(args.target)], args.metric)
    pool = pooled_signatures([load_results(p) for p in args.pool], args.metric)
    if args.zscore:
        z = zscore_signatures([s for _, s in targets + pool])
        targets = [(sid, s) for (sid, _), s in zip(targets, z[:len(targets)])]
        pool = [(sid, s) for (sid, _), s in zip(pool, z[len(targets):])]
    if args.target_protocol:
        targets = [(sid, s) for sid, s in targets if sid.rpartition("/")[2] == args.target_protocol]
        if not targets:
            raise DataError(f"no protocol {args.target_protocol!r} in {args.target}")
    for sid, sig in targets:
        best, dist = select_protocol(sig, pool)
        print(f"{sid} -> {best} {dist!r}" if len(targets) > 1 else f"{best} {dist!r}")


def cmd_embed(args):
    sigs = _signatures(args)
    coords = embed_2d([s for _, s in sigs], args.method, args.seed)
    rows = [[sid.rpartition("/")[0], sid.rpartition("/")[2], x, y] for (sid, _), (x, y) in zip(sigs, coords)]
    write_csv(args.output or "/dev/stdout", ["dataset_id", "protocol_id", "x", "y"], rows)


def cmd_report(args):
    info = build_report([load_results(p) for p in args.results], args.output_dir, args.metric,
                        args.flip_metric, args.method, args.seed, render=not args.no_render)
    for name, path in info["written"].items():
        print(f"{name}: {path}")
    print(f"ranking flips on {args.flip_metric}: {info['n_flips']}")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="reprobench", description="Robustness of recommender benchmarks to dataset preprocessing.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="parse a ratings file, print stats, optionally write canonical CSV")
    p.add_argument("--format", choices=FORMATS, required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output")
    p.add_argument("--source-id")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic rating log in canonical format")
    defaults = SynthSpec()
    p.add_argument("--n-users", type=int, default=defaults.n_users)
    p.add_argument("--n-items", type=int, default=defaults.n_items)
    p.add_argument("--popularity-skew", type=float, default=defaults.popularity_skew)
    p.add_argument("--taste-dim", type=int, default=defaults.taste_dim)
    p.add_argument("--mean-events-per-user", type=float, default=defaults.mean_events_per_user)
    p.add_argument("--rating-noise", type=float, default=defaults.rating_noise)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--source-id", default="synthetic")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("grid", help="enumerate the protocol grid of a config")
    p.add_argument("--config", required=True)
    p.add_argument("--output")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("run", help="run the full experiment of a config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--parallelism")
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_run)

    def add_results(p, nargs="+"):
        p.add_argument("--results", nargs=nargs, required=True)
        p.add_argument("--metric", action="append", help="restrict to these metrics (repeatable)")

    p = sub.add_parser("robustness", help="robustness per dataset and metric")
    add_results(p)
    p.add_argument("--output")
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("signature", help="p-dataset signatures as CSV")
    add_results(p)
    p.add_argument("--protocol")
    p.add_argument("--zscore", action="store_true")
    p.add_argument("--output")
    p.set_defaults(func=cmd_signature)

    p = sub.add_parser("select", help="nearest public p-dataset for a target signature")
    p.add_argument("--target", required=True)
    p.add_argument("--target-protocol")
    p.add_argument("--pool", nargs="+", required=True)
    p.add_argument("--metric", action="append")
    p.add_argument("--zscore", action="store_true")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("embed", help="2-D embedding of signatures")
    add_results(p)
    p.add_argument("--method", choices=("pca", "tsne"), default="pca")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--zscore", action="store_true")
    p.add_argument("--output")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("report", help="figure data files and SVG renderings")
    add_results(p)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--flip-metric", default="precision@10")
    p.add_argument("--method", choices=("pca", "tsne"), default="pca")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-render", action="store_true")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"reprobench: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NoSuccessfulProtocols as exc:
        print(f"reprobench: {exc}", file=sys.stderr)
        return EXIT_NO_PROTOCOLS
    except (ReprobenchError, OSError, json.JSONDecodeError) as exc:
        print(f"reprobench: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
