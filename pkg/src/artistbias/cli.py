"""
Command-line entry point.

Every subcommand reads and writes plain files, so a long pipeline can be
restarted from any intermediate step::

    artistbias ingest --dataset lfm1b --events listens.tsv --profiles users.tsv --out work/
    artistbias resolve-gender --events work/events.tsv --out work/gender_map.tsv
    artistbias filter --events work/events.tsv --profiles work/profiles.tsv \\
        --gender-map work/gender_map.tsv --out work/filtered/
    artistbias run --config exp.cfg --out results/
    artistbias ttest --metrics results/metrics.csv --column ndcg --a NMF --b UserKNNAvg
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, build_config, read_config_file
from .corpus import (
    CorpusError, FilterPolicy, apply_filters, load_gender_map, parse_lfm1b, parse_lfm360k,
    write_gender_map, write_lfm360k, write_profiles,
)
from .experiment import PipelineError, run_experiment
from .report import ReportError, emit_result, read_audit, read_metrics, write_figures
from .stats import t_test
from .synth import SynthesisError, generate_synthetic, spec_from_mapping

_log = logging.getLogger("artistbias")


def _parse(dataset, events, profiles):
    parser = parse_lfm1b if dataset == "lfm1b" else parse_lfm360k
    return parser(events, profiles)


def cmd_ingest(args) -> int:
    parsed = _parse(args.dataset, args.events, args.profiles)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_lfm360k(parsed.records, out / "events.tsv")
    write_profiles(parsed.profiles.values(), out / "profiles.tsv")
    print(f"{len(parsed.records)} user-artist pairs, {len(parsed.profiles)} profiles, "
          f"{parsed.malformed_lines} malformed lines, {parsed.dropped_empty_mbid} without artist id")
    return 0


def cmd_resolve_gender(args) -> int:
    from .musicbrainz import MusicBrainzFetcher

    artists = sorted({line.split("\t")[1] for line in Path(args.events).read_text(encoding="utf-8").splitlines()
                      if line.count("\t") >= 1})
    fetcher = MusicBrainzFetcher(rate=args.rate)
    labels = fetcher.fetch_gender_map(artists, args.out)
    print(f"resolved {len(labels)} artists into {args.out}")
    return 0


def cmd_filter(args) -> int:
    parsed = parse_lfm360k(args.events, args.profiles)
    genders = load_gender_map(args.gender_map)
    policy = FilterPolicy(
        min_unique_artists_per_user=args.min_artists,
        min_users_per_artist=args.min_users,
        max_unknown_gender_fraction=args.max_unknown,
        unknown_fraction_by=args.unknown_by,
    )
    records = [r for r in parsed.records if r.user_id in parsed.profiles]
    corpus = apply_filters(records, parsed.profiles, genders, policy)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_lfm360k(corpus.records, out / "events.tsv")
    write_profiles(corpus.user_profiles.values(), out / "profiles.tsv")
    write_gender_map(corpus.artist_genders, out / "gender_map.tsv")
    (out / "filter_report.json").write_text(json.dumps(corpus.report.as_dict(), indent=2))
    print(f"{corpus.n_users} users, {corpus.n_artists} artists, {len(corpus.records)} records kept")
    return 0


def _config_values(args) -> dict[str, str]:
    values = read_config_file(args.config) if args.config else {}
    overrides = {
        "dataset": args.dataset,
        "experiment": args.experiment,
        "algorithms": args.algorithms,
        "candidates": args.candidates,
        "seed": None if args.seed is None else str(args.seed),
        "out": args.out,
        "events": getattr(args, "events", None),
        "profiles": getattr(args, "profiles", None),
        "gender_map": getattr(args, "gender_map", None),
    }
    values.update({k: str(v) for k, v in overrides.items() if v is not None})
    if args.no_svg:
        values["svg"] = "false"
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        values[k.strip()] = v.strip()
    return values


def cmd_synth(args) -> int:
    values = read_config_file(args.config) if args.config else {}
    synth = {k[len("synth."):]: v for k, v in values.items() if k.startswith("synth.")}
    for item in args.set or []:
        k, v = item.split("=", 1)
        synth[k.strip().removeprefix("synth.")] = v.strip()
    if args.seed is not None:
        synth["seed"] = str(args.seed)
    result = generate_synthetic(spec_from_mapping(synth))
    paths = result.write(args.out)
    realized = ", ".join(f"{g} users {v:.4f}" for g, v in sorted(result.realized_pr_male.items()))
    print(f"wrote {paths['events']} ({len(result.records)} records); PR toward male artists: {realized}")
    return 0


def cmd_run(args) -> int:
    cfg = build_config(_config_values(args))
    result = run_experiment(cfg)
    files = emit_result(result, cfg.out_dir, svg=cfg.svg)
    _print_summary(result.cells, result.metrics)
    print(f"wrote {len(files)} files to {cfg.out_dir}")
    return 0


def _fmt(x):
    return "-" if x is None else f"{x:+.4f}"


def _print_summary(cells, metrics):
    means = [m for m in metrics if m.fold == "mean"]
    if means:
        print(f"{'algorithm':<12} {'prec':>7} {'ndcg':>7} {'cover':>9} {'spread':>7} {'longtail':>9}")
        for m in means:
            r = m.report
            print(f"{m.algorithm:<12} {r.precision:7.4f} {r.ndcg:7.4f} {r.coverage:9.2e} "
                  f"{r.spread:7.3f} {r.longtail_pct:9.2e}")
    for c in cells:
        if c.fold == "mean":
            print(f"BD {c.algorithm:<12} {c.user_group:<13} {c.item_category:<15} {_fmt(c.bias_disparity)}"
                  + (f"  ({c.skip_reason})" if c.skip_reason else ""))


def cmd_report(args) -> int:
    d = Path(args.dir)
    cells = read_audit(d / "audit.csv")
    metrics = read_metrics(d / "metrics.csv")
    bad = [c for c in cells if c.bias_disparity is not None and c.pr_input
           and abs((c.pr_output - c.pr_input) / c.pr_input - c.bias_disparity) > 1e-12]
    if not args.no_svg:
        write_figures(cells, d)
    _print_summary(cells, metrics)
    if bad:
        print(f"{len(bad)} audit rows whose bias disparity does not match their PR fields", file=sys.stderr)
        return 1
    return 0


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def cmd_ttest(args) -> int:
    if args.metrics:
        if not (args.column and args.a and args.b):
            raise ConfigError("--metrics needs --column, --a and --b")
        rows = [r for r in read_metrics(args.metrics) if r.fold != "mean"]
        if args.experiment:
            rows = [r for r in rows if r.experiment == args.experiment]

        def col(algo):
            vals = [getattr(r.report, args.column) for r in rows if r.algorithm == algo]
            if not vals:
                raise ConfigError(f"no per-fold rows for algorithm {algo}")
            return vals

        a, b = col(args.a), col(args.b)
    else:
        if not (args.values_a and args.values_b):
            raise ConfigError("give either --metrics or both --values-a and --values-b")
        a, b = _floats(args.values_a), _floats(args.values_b)
    res = t_test(a, b, args.alpha)
    print(json.dumps({"significant": res.significant, "p_value": res.p_value,
                      "statistic": res.statistic, "alpha": args.alpha}))
    return 0


def _experiment_flags(p):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--dataset", choices=["lfm360k", "lfm1b", "synthetic"])
    p.add_argument("--experiment", choices=["whole", "extreme"])
    p.add_argument("--algorithms", help="comma-separated algorithm names")
    p.add_argument("--candidates", choices=["testset", "catalog"])
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--no-svg", action="store_true")
    p.add_argument("--events")
    p.add_argument("--profiles")
    p.add_argument("--gender-map", dest="gender_map")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="artistbias", description="Gender bias audit of music recommenders")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse raw listening logs into aggregated events")
    p.add_argument("--dataset", choices=["lfm360k", "lfm1b"], default="lfm360k")
    p.add_argument("--events", required=True)
    p.add_argument("--profiles", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("resolve-gender", help="build an artist gender map from MusicBrainz")
    p.add_argument("--events", required=True, help="aggregated events TSV")
    p.add_argument("--out", required=True)
    p.add_argument("--rate", type=float, default=1.0, help="requests per second")
    p.set_defaults(func=cmd_resolve_gender)

    p = sub.add_parser("filter", help="apply interaction and gender filters")
    p.add_argument("--events", required=True)
    p.add_argument("--profiles", required=True)
    p.add_argument("--gender-map", dest="gender_map", required=True)
    p.add_argument("--out", required=True)
    d = FilterPolicy()
    p.add_argument("--min-artists", type=int, default=d.min_unique_artists_per_user)
    p.add_argument("--min-users", type=int, default=d.min_users_per_artist)
    p.add_argument("--max-unknown", type=float, default=d.max_unknown_gender_fraction)
    p.add_argument("--unknown-by", choices=["artists", "plays"], default=d.unknown_fraction_by)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("synth", help="write a synthetic corpus")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--set", action="append", metavar="FIELD=VALUE")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="run an audit experiment and write the report")
    _experiment_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="re-render charts and summary from a results directory")
    p.add_argument("dir")
    p.add_argument("--no-svg", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("ttest", help="Welch t-test on per-fold metric values")
    p.add_argument("--metrics", help="metrics.csv to read per-fold values from")
    p.add_argument("--column", choices=["precision", "ndcg", "coverage", "spread", "longtail_pct"])
    p.add_argument("--a")
    p.add_argument("--b")
    p.add_argument("--experiment")
    p.add_argument("--values-a")
    p.add_argument("--values-b")
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_ttest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except PipelineError as e:
        print(f"error in stage {e.stage}: {e.cause}", file=sys.stderr)
    except (ConfigError, CorpusError, SynthesisError, ReportError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
