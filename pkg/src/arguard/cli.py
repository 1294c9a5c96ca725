"""Command-line interface.

    arguard eval obstruct --dataset DIR --method METHOD [...]
    arguard eval manip --dataset DIR [...]
    arguard synth --out DIR --n N --seed S [...]
    arguard client simulate --service URL --dataset DIR [...]
    arguard serve [--config FILE | --backends URL... | --fixtures DIR]

Exit codes: 0 success, 2 partial evaluation (backend outage mid-run),
3 invalid input.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import load_config
from .errors import ArguardError
from .gateway.backends import Backends
from .gateway.scripted import FixtureStore, ScriptedBackend
from .harness.dataset import KIND_MANIPULATION, KIND_OBSTRUCTION, load_dataset
from .harness.evaluate import (
    OBSTRUCTION_METHODS,
    EvalSpec,
    GroundTruthBackend,
    capture_fixtures,
    evaluate_manipulation,
    evaluate_obstruction,
    replay_fixtures,
)
from .harness.report import render_report
from .harness.synth import generate_obstruction_dataset
from .imaging import DiffConfig
from .obstruction import ObstructionConfig

EXIT_OK = 0
EXIT_PARTIAL = 2
EXIT_INVALID = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; invalid input is 3 here
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(EXIT_INVALID)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="arguard", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    eval_cmd = sub.add_parser("eval", help="score a detector over a dataset")
    eval_sub = eval_cmd.add_subparsers(dest="task", required=True)

    def add_backend_args(p):
        p.add_argument("--backends", nargs="+", metavar="URL",
                       help="backend base URL(s): one shared, or vlm detector segmenter")
        p.add_argument("--fixtures", metavar="DIR", help="fixture directory (capture or replay)")
        p.add_argument("--replay", action="store_true", help="replay strictly from fixtures")
        p.add_argument("--format", choices=("table", "json"), default="table")
        p.add_argument("--out", metavar="FILE", help="also write the JSON report here")

    obstruct = eval_sub.add_parser("obstruct", help="obstruction detection metrics")
    obstruct.add_argument("--dataset", required=True)
    obstruct.add_argument("--method", choices=OBSTRUCTION_METHODS, default="standard")
    obstruct.add_argument("--alpha", type=float, default=0.25)
    obstruct.add_argument("--box-confidence-min", type=float, default=0.35)
    obstruct.add_argument("--diff-tolerance", type=int, default=0,
                          help="0 for synthetic datasets; raise for camera captures")
    obstruct.add_argument("--min-component-area", type=int, default=0)
    obstruct.add_argument("--synonyms", metavar="FILE",
                          help="JSON object mapping phrases to canonical names")
    obstruct.add_argument("--oracle", action="store_true",
                          help="use dataset ground truth as scripted backends")
    add_backend_args(obstruct)

    manip = eval_sub.add_parser("manip", help="manipulation detection metrics")
    manip.add_argument("--dataset", required=True)
    manip.add_argument("--no-verdict-policy", choices=("incorrect", "skip"), default="incorrect")
    add_backend_args(manip)

    synth = sub.add_parser("synth", help="generate a labeled synthetic dataset")
    synth.add_argument("--out", required=True)
    synth.add_argument("--n", type=int, required=True)
    synth.add_argument("--seed", type=int, required=True)
    synth.add_argument("--alpha", type=float, default=0.25)
    synth.add_argument("--size", type=int, default=96)
    synth.add_argument("--single-class", action="store_true",
                       help="every sample shares one key-object class")

    client = sub.add_parser("client", help="simulated AR client")
    client_sub = client.add_subparsers(dest="client_command", required=True)
    simulate = client_sub.add_parser("simulate", help="stream dataset pairs to a service")
    simulate.add_argument("--service", required=True, metavar="URL")
    simulate.add_argument("--dataset", required=True)
    simulate.add_argument("--frames", type=int, help="limit the number of frames")
    simulate.add_argument("--manipulation", action="store_true",
                          help="issue manipulation checks instead of frames")

    serve = sub.add_parser("serve", help="run the edge service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8080)
    serve.add_argument("--config", metavar="FILE", help="key-value config file")
    serve.add_argument("--backends", nargs="+", metavar="URL")
    serve.add_argument("--fixtures", metavar="DIR")
    serve.add_argument("--log-dir", metavar="DIR")

    return parser


def _backends_from_args(args) -> tuple[Backends | None, FixtureStore | None, str]:
    """Resolve (backends, capture_store, digest) from CLI flags."""
    if args.replay:
        if not args.fixtures:
            raise ValueError("--replay needs --fixtures DIR")
        store = FixtureStore(args.fixtures)
        return ScriptedBackend(store, strict=True).as_backends(), None, store.digest()
    if args.backends:
        urls = args.backends
        if len(urls) == 1:
            live = Backends.from_urls(urls[0])
        elif len(urls) == 3:
            live = Backends.from_urls(*urls)
        else:
            raise ValueError("--backends takes one shared URL or three (vlm detector segmenter)")
        store = FixtureStore(args.fixtures) if args.fixtures else None
        return live, store, ""
    return None, None, ""


def _emit_report(report, args) -> int:
    print(render_report(report, args.format))
    if args.out:
        Path(args.out).write_text(render_report(report, "json") + "\n", encoding="utf-8")
    return EXIT_PARTIAL if report.partial else EXIT_OK


def _cmd_eval_obstruct(args) -> int:
    samples = load_dataset(args.dataset, KIND_OBSTRUCTION)
    config = ObstructionConfig(
        alpha=args.alpha,
        box_confidence_min=args.box_confidence_min,
        diff=DiffConfig(tolerance=args.diff_tolerance, min_component_area=args.min_component_area),
    )
    synonyms = None
    if args.synonyms:
        synonyms = json.loads(Path(args.synonyms).read_text("utf-8"))

    needs_backends = args.method not in ("saliency", "canny")
    if args.oracle:
        backends, capture_store, digest = GroundTruthBackend(samples).as_backends(), None, ""
    else:
        backends, capture_store, digest = _backends_from_args(args)
    if needs_backends and backends is None:
        raise ValueError(f"method {args.method!r} needs --backends, --oracle or --replay")

    spec = EvalSpec(task="obstruction", method=args.method, config=config, synonyms=synonyms)
    if capture_store is not None:
        report = capture_fixtures(spec, samples, backends, capture_store)
    elif args.replay:
        report = replay_fixtures(spec, samples, FixtureStore(args.fixtures))
    else:
        report = evaluate_obstruction(
            samples, config, backends, args.method, synonyms=synonyms, fixture_digest=digest
        )
    return _emit_report(report, args)


def _cmd_eval_manip(args) -> int:
    samples = load_dataset(args.dataset, KIND_MANIPULATION)
    backends, capture_store, digest = _backends_from_args(args)
    if backends is None:
        raise ValueError("manipulation evaluation needs --backends or --replay")
    spec = EvalSpec(task="manipulation", no_verdict_policy=args.no_verdict_policy)
    if capture_store is not None:
        report = capture_fixtures(spec, samples, backends, capture_store)
    elif args.replay:
        report = replay_fixtures(spec, samples, FixtureStore(args.fixtures))
    else:
        report = evaluate_manipulation(
            samples, backends, no_verdict_policy=args.no_verdict_policy, fixture_digest=digest
        )
    return _emit_report(report, args)


def _cmd_synth(args) -> int:
    manifest = generate_obstruction_dataset(
        args.out,
        args.n,
        args.seed,
        alpha=args.alpha,
        size=args.size,
        single_class=args.single_class,
    )
    print(f"wrote {args.n} samples; manifest at {manifest}")
    return EXIT_OK


def _cmd_client_simulate(args) -> int:
    from .harness.simclient import simulate_manipulation_checks, simulate_obstruction

    if args.manipulation:
        samples = load_dataset(args.dataset, KIND_MANIPULATION)
        if args.frames:
            samples = samples[: args.frames]
        results = simulate_manipulation_checks(args.service, samples)
        warned = sum(1 for r in results if r["directive"]["action"] == "warn")
        print(f"{len(results)} checks, {warned} warnings issued")
        return EXIT_OK

    samples = load_dataset(args.dataset, KIND_OBSTRUCTION)
    if args.frames:
        samples = samples[: args.frames]
    result = simulate_obstruction(args.service, samples)
    obstructed = sum(1 for f in result.frames if f.obstructed)
    print(f"session {result.session_id}: key objects {result.key_objects}")
    print(f"{len(result.frames)} frames, {obstructed} obstructed")
    stats = result.latency_stats.get("obstruction", {})
    if stats:
        print(
            f"latency mean {stats['mean_s'] * 1000:.1f} ms, "
            f"median {stats['median_s'] * 1000:.1f} ms, p95 {stats['p95_s'] * 1000:.1f} ms "
            f"(backend mean {stats['mean_backend_total_s'] * 1000:.1f} ms)"
        )
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    if args.config:
        config = load_config(args.config)
        if args.log_dir:
            config.log_dir = args.log_dir
        backends = config.build_backends()
        settings = config.service_settings()
    else:
        from .service.sessions import ServiceSettings

        if args.fixtures:
            backends = ScriptedBackend(FixtureStore(args.fixtures), strict=True).as_backends()
        elif args.backends and len(args.backends) in (1, 3):
            backends = Backends.from_urls(*args.backends)
        else:
            raise ValueError("serve needs --config, --fixtures or --backends")
        settings = ServiceSettings(log_dir=args.log_dir)

    uvicorn.run(create_app(backends, settings), host=args.host, port=args.port)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "eval" and args.task == "obstruct":
            return _cmd_eval_obstruct(args)
        if args.command == "eval" and args.task == "manip":
            return _cmd_eval_manip(args)
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "client":
            return _cmd_client_simulate(args)
        if args.command == "serve":
            return _cmd_serve(args)
        parser.print_help()
        return EXIT_INVALID
    except (ValueError, OSError, json.JSONDecodeError, ArguardError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
