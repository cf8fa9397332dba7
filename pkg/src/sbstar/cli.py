"""Command-line entry points: synth, ingest, cal, simulate, report, serve."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .bundle import CorpusBundle, ingest
from .cal import checkpoint_path, run_cal_checkpoints
from .config import RunConfig
from .evaluation import ALL_STRATEGIES, GridResult, emit_reports, run_grid
from .synthetic import make_topic, write_dataset

log = logging.getLogger(__name__)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override its values")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")


def _floats(raw: str) -> list[float]:
    return [float(x) for x in raw.split(",") if x.strip()]


def _ints(raw: str) -> list[int]:
    return [int(x) for x in raw.split(",") if x.strip()]


def _strs(raw: str) -> list[str]:
    return [x.strip() for x in raw.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sbstar",
        description="Total-recall review: active learning plus entity-question search.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic demo dataset")
    _add_common(p)
    p.add_argument("--out", required=True, help="output directory for the dataset files")
    p.add_argument("--topics", type=int, default=2, dest="n_topics")
    p.add_argument("--docs", type=int, default=1000)
    p.add_argument("--relevant", type=int, default=30)
    p.add_argument("--entities", type=int, default=240)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("ingest", help="build and cache a corpus bundle")
    _add_common(p)
    p.add_argument("--corpus")
    p.add_argument("--annotations")
    p.add_argument("--lexicon", help="text file with one entity surface form per line")
    p.add_argument("--qrels")
    p.add_argument("--topics", dest="topics")
    p.add_argument("--out", dest="bundle_dir")

    p = sub.add_parser("cal", help="run the review phase and write checkpoints")
    _add_common(p)
    p.add_argument("--bundle", dest="bundle_dir")
    p.add_argument("--topic", action="append", dest="topic_ids",
                   help="topic to run (repeatable); default: all topics in the bundle")
    p.add_argument("--stop-ratios", type=_floats, dest="stop_ratios")
    p.add_argument("--batch-growth", type=float, dest="batch_growth")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", dest="checkpoint_dir")

    p = sub.add_parser("simulate", help="run the evaluation grid with the simulated reviewer")
    _add_common(p)
    p.add_argument("--bundle", dest="bundle_dir")
    p.add_argument("--topic", action="append", dest="topic_ids")
    p.add_argument("--stop-ratios", type=_floats, dest="stop_ratios")
    p.add_argument("--questions", type=_ints, dest="question_counts")
    p.add_argument("--strategies", type=_strs, help=f"comma list from {','.join(ALL_STRATEGIES)}")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", dest="report_dir")

    p = sub.add_parser("report", help="re-emit report files from saved raw results")
    _add_common(p)
    p.add_argument("--raw", required=True, help="raw_results.json from a previous simulate run")
    p.add_argument("--out", dest="report_dir")

    p = sub.add_parser("serve", help="start the HTTP session service")
    _add_common(p)
    p.add_argument("--bundle", dest="bundle_dir")
    p.add_argument("--checkpoints", dest="checkpoint_dir")
    p.add_argument("--sessions", dest="sessions_dir")
    p.add_argument("--host")
    p.add_argument("--port", type=int, help="default: $SBSTAR_PORT or 8000")

    return parser


def _config_from(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {k: v for k, v in vars(args).items()
                 if k not in ("command", "config", "verbose")}
    config = config.with_overrides(overrides)
    env_port = os.environ.get("SBSTAR_PORT")
    if env_port and getattr(args, "port", None) is None:
        config = config.with_overrides({"port": int(env_port)})
    config.validate()
    return config


def cmd_synth(args: argparse.Namespace) -> int:
    out = Path(args.out)
    topics = [
        make_topic(f"topic{i:02d}", n_docs=args.docs, n_relevant=args.relevant,
                   n_entities=args.entities, seed=args.seed + i)
        for i in range(args.n_topics)
    ]
    paths = write_dataset(out, topics)
    print(f"wrote {args.n_topics} topics x {args.docs} docs to {out}")
    for name, path in paths.items():
        print(f"  {name}: {path}")
    return 0


def cmd_ingest(args: argparse.Namespace) -> int:
    config = _config_from(args)
    if not config.corpus or not config.qrels or not config.topics:
        raise SystemExit("ingest requires --corpus, --qrels, and --topics (or a config file)")
    lexicon = None
    if config.lexicon:
        lexicon = [line.strip() for line in Path(config.lexicon).read_text(encoding="utf-8").splitlines()
                   if line.strip()]
    bundle_dir, cache_hit = ingest(
        config.corpus, config.qrels, config.topics,
        out_dir=config.bundle_dir,
        annotations_path=config.annotations,
        lexicon=lexicon,
    )
    config.save(Path(bundle_dir) / "run_config.json")
    print(f"bundle at {bundle_dir} ({'cache hit' if cache_hit else 'built'})")
    return 0


def _select_topics(bundle: CorpusBundle, topic_ids: list[str] | None):
    if not topic_ids:
        return [bundle.topics[t] for t in sorted(bundle.topics)]
    missing = [t for t in topic_ids if t not in bundle.topics]
    if missing:
        raise SystemExit(f"topics not in bundle: {missing}")
    return [bundle.topics[t] for t in topic_ids]


def cmd_cal(args: argparse.Namespace) -> int:
    config = _config_from(args)
    bundle = CorpusBundle.load(config.bundle_dir)
    topics = _select_topics(bundle, args.topic_ids)
    ratios = config.stop_ratios or [config.stop_ratio]
    out = Path(config.checkpoint_dir)
    out.mkdir(parents=True, exist_ok=True)
    for topic in topics:
        states = run_cal_checkpoints(
            bundle.store, bundle.features, topic, bundle.qrels, ratios,
            hyper=config.lr_hyper(), seed=config.seed, batch_growth=config.batch_growth,
        )
        for ratio, state in states.items():
            path = checkpoint_path(out, topic.topic_id, ratio)
            state.save(path)
            found = sum(r.label for r in state.reviewed)
            print(f"{topic.topic_id} @ {ratio:.2f}: reviewed {len(state.reviewed)}"
                  f" docs, {found} relevant found -> {path}")
    config.save(out / "run_config.json")
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _config_from(args)
    bundle = CorpusBundle.load(config.bundle_dir)
    topics = _select_topics(bundle, args.topic_ids)
    result = run_grid(
        bundle, topics,
        stop_ratios=config.stop_ratios,
        question_counts=config.question_counts,
        strategies=config.strategies,
        base_seed=config.seed,
        hyper=config.lr_hyper(),
        batch_growth=config.batch_growth,
        min_df=config.min_df,
        max_df_ratio=config.max_df_ratio,
        alpha_floor=config.alpha_floor,
        prior_scale=config.prior_scale,
    )
    written = emit_reports(result, config.report_dir, config_snapshot=config.to_dict())
    for name, path in sorted(written.items()):
        print(f"{name}: {path}")
    if result.failures:
        print(f"{len(result.failures)} cell(s) failed; see report_manifest.json", file=sys.stderr)
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    config = _config_from(args)
    result = GridResult.from_json_dict(json.loads(Path(args.raw).read_text(encoding="utf-8")))
    written = emit_reports(result, config.report_dir)
    for name, path in sorted(written.items()):
        print(f"{name}: {path}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    config = _config_from(args)
    bundle = CorpusBundle.load(config.bundle_dir)
    app = create_app(bundle, config.checkpoint_dir, config.sessions_dir, config)
    print(f"serving on http://{config.host}:{config.port}")
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "cal": cmd_cal,
    "simulate": cmd_simulate,
    "report": cmd_report,
    "serve": cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    raise SystemExit(main())
