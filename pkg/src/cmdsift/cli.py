"""Single entry point for every workflow: plan and generate data, train and
calibrate, replay event files, serve the API, and run the evaluation
experiments."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from cmdsift import core, evalharness
from cmdsift import classifier as clf
from cmdsift.calibrate import CalibrationError, CalibrationInput, calibrate, pr_curve
from cmdsift.config import Config, ConfigError, load_config
from cmdsift.core import Label
from cmdsift.fixtures import data_path
from cmdsift.rules import RuleCompileError, RuleSyntaxError, load_rules
from cmdsift.service import ScenarioEngine, replay_events
from cmdsift.store import ScenarioStore
from cmdsift.synthgen import (
    BackendError,
    GenerationError,
    PlanError,
    build_taxonomy,
    draft_plan,
    dump_taxonomy,
    generate_dataset,
    load_plan,
    parse_taxonomy,
)
from cmdsift.trainer import AssemblyError
from cmdsift.vectorize import vectorize

logger = logging.getLogger(__name__)

EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_BACKEND = 5
EXIT_RUNTIME = 6


def _now_ms() -> int:
    return int(time.time() * 1000)


def _load_config(args) -> Config:
    if getattr(args, "config", None):
        return load_config(args.config)
    return Config()


def _resolve(state_dir: str, path: str) -> str:
    p = Path(path)
    return str(p if p.is_absolute() else Path(state_dir) / p)


def _build_engine(config: Config, state_dir: str, scenario_id: str) -> ScenarioEngine:
    scenario = config.scenarios.get(scenario_id)
    if scenario is None:
        raise ConfigError(f"scenario {scenario_id!r} not in config")
    rules = load_rules(_resolve(state_dir, scenario.rule_file))
    store = ScenarioStore(state_dir, scenario_id)
    synthetic_path = Path(state_dir) / scenario_id / "synthetic.tsv"
    synthetic = core.read_samples(str(synthetic_path)) if synthetic_path.exists() else []
    return ScenarioEngine(
        scenario,
        store,
        rules,
        config.vectorizer,
        config.classifier,
        synthetic,
        config.service,
    )


# --- subcommands ---------------------------------------------------------------


def cmd_plan(args) -> int:
    config = _load_config(args)
    backend = config.backend.build()
    if args.objective:
        text = draft_plan(args.objective, backend)
    else:
        bundled = data_path("plans", f"{args.bundled}.plan")
        text = bundled.read_text(encoding="utf-8")
    Path(args.out).write_text(text, encoding="utf-8")
    print(f"plan written to {args.out}; review and edit before generating")
    return 0


def cmd_generate_data(args) -> int:
    config = _load_config(args)
    if args.backend:
        config.backend.kind = args.backend
    if args.seed is not None:
        config.backend.seed = args.seed
    backend = config.backend.build()
    plan = load_plan(args.plan)
    taxonomies = {}
    tax_dir = Path(args.taxonomy_dir) if args.taxonomy_dir else None
    for strategy in plan.strategies:
        existing = tax_dir / f"{strategy.name}.tree" if tax_dir else None
        if existing and existing.exists() and not args.rebuild_taxonomies:
            taxonomies[strategy.name] = parse_taxonomy(existing.read_text(encoding="utf-8"))
            continue
        root, stats = build_taxonomy(strategy, strategy.taxonomy_instruction, backend, plan)
        taxonomies[strategy.name] = root
        logger.info("taxonomy %s: %d leaves (%s)", strategy.name, len(root.leaf_paths()), stats)
        if existing:
            tax_dir.mkdir(parents=True, exist_ok=True)
            existing.write_text(dump_taxonomy(root), encoding="utf-8")
    now_ms = args.now_ms if args.now_ms is not None else _now_ms()
    counts = {Label.POSITIVE: args.positive, Label.NEGATIVE: args.negative}
    samples, generated, stats = generate_dataset(
        plan, taxonomies, counts, backend, seed=args.seed or 0, now_ms=now_ms
    )
    core.write_samples(args.out, samples)
    print(
        f"wrote {len(samples)} samples to {args.out} "
        f"(attempts {stats.attempts}, acceptance {stats.acceptance_rate:.2f})"
    )
    if args.meta_out:
        with open(args.meta_out, "w", encoding="utf-8") as fh:
            for g in generated:
                mix = f"{g.mix.strategy}:" + ">".join(g.mix.leaf_path)
                fh.write(
                    "\t".join(
                        [
                            "accepted" if g.accepted else f"discarded:{g.discard_reason}",
                            g.classification,
                            str(g.score),
                            core.escape_field(mix),
                            core.escape_field(g.scenario),
                            core.escape_field(g.command_line),
                        ]
                    )
                    + "\n"
                )
    return 0


def cmd_train(args) -> int:
    config = _load_config(args)
    state_dir = args.state_dir
    engine = _build_engine(config, state_dir, args.scenario)
    if args.data:
        engine.synthetic = core.read_samples(args.data)
    if not engine.synthetic:
        raise AssemblyError(
            f"no synthetic samples; provide --data or {args.scenario}/synthetic.tsv"
        )
    if args.data:
        # Adopt the file as the scenario's synthetic dataset for later retrains.
        core.write_samples(
            str(Path(state_dir) / args.scenario / "synthetic.tsv"), engine.synthetic
        )
    now_ms = args.now_ms if args.now_ms is not None else _now_ms()
    artifact = engine.retrain_now(now_ms)
    if artifact is None:
        print("retrain failed; previous artifact (if any) remains current", file=sys.stderr)
        return EXIT_DATA
    if args.out:
        core.write_artifact(args.out, artifact)
    print(
        f"published version {artifact.version} threshold {artifact.threshold:.4f} "
        f"f1 {artifact.meta.get('f1_at_threshold')} "
        f"projected {artifact.meta.get('projected_daily_tickets')}/day"
    )
    return 0


def cmd_calibrate(args) -> int:
    artifact = core.read_artifact(args.model)
    from cmdsift.trainer import model_from_artifact

    model = model_from_artifact(artifact)
    labeled_samples = core.read_samples(args.labeled)
    labeled = []
    for s in labeled_samples:
        score = clf.score(model, vectorize(artifact.vectorizer_config, s.command_line))
        labeled.append((score, s.label is Label.POSITIVE))
    historical: list[float] = []
    if args.history:
        reader = core.EventReader(args.history)
        for event in reader:
            historical.append(
                clf.score(model, vectorize(artifact.vectorizer_config, event.command_line))
            )
    result = calibrate(
        CalibrationInput(
            labeled_scores=tuple(labeled),
            historical_scores=tuple(historical),
            budget_n=args.budget,
            history_span_days=args.span_days,
        )
    )
    print(
        f"threshold {result.threshold!r} f1 {result.f1_at_threshold:.4f} "
        f"projected {result.projected_daily_tickets:.3f}/day"
        + (" BUDGET UNMET" if result.budget_unmet else "")
    )
    print("threshold,precision,recall")
    for point in pr_curve(labeled):
        print(f"{point.threshold!r},{point.precision:.6f},{point.recall:.6f}")
    return 0


def cmd_replay(args) -> int:
    config = _load_config(args)
    engine = _build_engine(config, args.state_dir, args.scenario)
    reader = core.EventReader(args.events)
    if args.speed and args.speed > 0:
        def paced():
            prev = None
            for event in reader:
                if prev is not None and event.timestamp_ms > prev:
                    time.sleep((event.timestamp_ms - prev) / 1000.0 / args.speed)
                prev = event.timestamp_ms
                yield event
        stats = replay_events(engine, paced())
    else:
        stats = replay_events(engine, reader)
    stats["malformed_skipped"] = reader.skipped
    print(
        " ".join(f"{k}={v}" for k, v in stats.items())
        + f" serving_version={engine.serving_version}"
    )
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from cmdsift.api import create_app

    config = _load_config(args)
    engines = {}
    for sid in config.scenarios:
        engine = _build_engine(config, args.state_dir, sid)
        if engine.serving is None and args.bootstrap:
            if not engine.synthetic:
                raise AssemblyError(f"scenario {sid!r}: no synthetic.tsv to bootstrap from")
            engine.bootstrap(_now_ms())
        engines[sid] = engine
    app = create_app(engines, static_dir=args.ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_vectorize(args) -> int:
    config = _load_config(args)
    fv = vectorize(config.vectorizer, args.text)
    for idx, value in fv.nonzero():
        print(f"{idx}\t{value!r}")
    return 0


def cmd_evaluate(args) -> int:
    config = _load_config(args)
    if args.funnel_state:
        store = ScenarioStore(args.funnel_state, args.scenario)
        span = max(1, len(store.counters))
        report = evalharness.funnel_report(store.counters, span, args.scenario)
        print(report.format_table())
        return 0
    synthetic = core.read_samples(args.data)
    eval_set = core.read_samples(args.eval_data)
    sizes = [int(s) if s != "full" else len(synthetic) for s in args.sizes.split(",")]
    rows = evalharness.dataset_size_study(
        synthetic, sizes, eval_set, config.vectorizer, config.classifier, seed=args.seed or 0
    )
    print("size,max_f1")
    for size, f1 in rows:
        print(f"{size},{f1:.4f}")
    return 0


def cmd_simulate_ab(args) -> int:
    config = _load_config(args)
    scenario = core.DetectionScenario(
        scenario_id="ab",
        rule_file=args.rules,
        budget_n=args.budget,
        decay_horizon_days=args.horizon_days,
        feedback_ratio=args.ratio,
    )
    rules = load_rules(args.rules)
    synthetic = core.read_samples(args.data)
    seeds = [int(s) for s in args.seeds.split(",")]
    wins = 0
    csv_rows = ["seed,fixed_f1,active_f1,tp_only_active,tp_only_fixed,tp_shared,"
                "fp_only_active,fp_only_fixed,fp_shared"]
    for seed in seeds:
        spec = evalharness.StreamSpec(
            days=args.days,
            events_per_day=args.events_per_day,
            drift_day=args.drift_day if args.drift_day >= 0 else None,
        )
        stream = evalharness.make_stream(spec, seed)
        outcome = evalharness.ab_experiment(
            synthetic,
            stream,
            rules,
            scenario,
            config.vectorizer,
            config.classifier,
            bootstrap_days=args.bootstrap_days,
        )
        wins += outcome.active_f1_post >= outcome.fixed_f1_post
        r = outcome.result
        csv_rows.append(
            f"{seed},{outcome.fixed_f1_post:.4f},{outcome.active_f1_post:.4f},"
            f"{r.tp_only_active},{r.tp_only_fixed},{r.tp_shared},"
            f"{r.fp_only_active},{r.fp_only_fixed},{r.fp_shared}"
        )
        print(f"seed {seed}: fixed F1 {outcome.fixed_f1_post:.4f} "
              f"active F1 {outcome.active_f1_post:.4f}")
        print(outcome.result.format_table())
    print(f"active >= fixed in {wins}/{len(seeds)} seeds")
    print("\n".join(csv_rows))
    return 0


# --- dispatcher -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cmdsift",
        description="Two-stage command-line attack detection pipeline.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="write a generation plan file for review")
    p.add_argument("--config", help="config file")
    p.add_argument("--objective", help="draft a plan from this objective via the backend")
    p.add_argument("--bundled", default="reverse_shell",
                   help="bundled plan to copy when no --objective is given")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("generate-data", help="build taxonomies and generate a labeled dataset")
    p.add_argument("--config", help="config file")
    p.add_argument("--plan", required=True)
    p.add_argument("--backend", choices=["mock", "http"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--positive", type=int, required=True)
    p.add_argument("--negative", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--meta-out", help="per-attempt metadata file")
    p.add_argument("--taxonomy-dir", help="persist/reuse taxonomy trees here")
    p.add_argument("--rebuild-taxonomies", action="store_true")
    p.add_argument("--now-ms", type=int, help="fixed generation timestamp")
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("train", help="run one retrain cycle and publish the artifact")
    p.add_argument("--config", help="config file")
    p.add_argument("--state-dir", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--data", help="synthetic samples file (adopted into the state dir)")
    p.add_argument("--out", help="also write the artifact to this path")
    p.add_argument("--now-ms", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("calibrate", help="calibrate a threshold for an artifact")
    p.add_argument("--model", required=True)
    p.add_argument("--labeled", required=True, help="labeled samples file")
    p.add_argument("--history", help="historical events file")
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--span-days", type=float, default=30.0)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("replay", help="replay an event file through a scenario")
    p.add_argument("--config", help="config file")
    p.add_argument("--state-dir", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--events", required=True)
    p.add_argument("--speed", type=float, default=0.0,
                   help="realtime pacing factor; 0 replays as fast as possible")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--config", help="config file")
    p.add_argument("--state-dir", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8750)
    p.add_argument("--ui-dir", help="static triage UI bundle to serve at /")
    p.add_argument("--bootstrap", action="store_true",
                   help="train initial models from synthetic.tsv when missing")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("vectorize", help="print nonzero features of a command line")
    p.add_argument("--config", help="config file")
    p.add_argument("--text", required=True)
    p.set_defaults(func=cmd_vectorize)

    p = sub.add_parser("evaluate", help="dataset-size study or funnel report")
    p.add_argument("--config", help="config file")
    p.add_argument("--data", help="synthetic samples file")
    p.add_argument("--eval-data", help="held-out labeled samples file")
    p.add_argument("--sizes", default="100,1000,full")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--funnel-state", help="state dir: print the funnel report instead")
    p.add_argument("--scenario", default="reverse_shell")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate-ab", help="fixed vs. active-learning A/B simulation")
    p.add_argument("--config", help="config file")
    p.add_argument("--rules", required=True)
    p.add_argument("--data", required=True, help="synthetic samples file")
    p.add_argument("--seeds", default="1,2,3,4,5")
    p.add_argument("--days", type=int, default=30)
    p.add_argument("--events-per-day", type=int, default=200)
    p.add_argument("--drift-day", type=int, default=10, help="-1 for no drift")
    p.add_argument("--bootstrap-days", type=int, default=5)
    p.add_argument("--budget", type=int, default=20)
    p.add_argument("--horizon-days", type=float, default=180.0)
    p.add_argument("--ratio", type=float, default=1.0)
    p.set_defaults(func=cmd_simulate_ab)

    return parser


_ERROR_CODES = [
    ((ConfigError, PlanError, RuleSyntaxError, RuleCompileError), EXIT_CONFIG),
    ((core.FormatError, core.CoreError, clf.DegenerateDataError, AssemblyError,
      CalibrationError, GenerationError, FileNotFoundError), EXIT_DATA),
    ((BackendError,), EXIT_BACKEND),
]


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except Exception as exc:
        for types, code in _ERROR_CODES:
            if isinstance(exc, types):
                print(f"error: {exc}", file=sys.stderr)
                return code
        logger.exception("unhandled error")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
