"""Command-line entry point: ``evoccupancy {generate,train,run,evaluate,replay-serve}``.

Every command that writes an artifact also writes ``<artifact>.manifest.json``
recording the resolved configuration and the SHA-256 of each input and output.
Exit codes: 0 success, 1 runtime failure, 2 invalid input or configuration.
"""
from __future__ import annotations

import argparse
import dataclasses
import datetime as dt
import hashlib
import json
import logging
import os
import sys
import threading
import time
from pathlib import Path
from typing import Optional, Sequence

from . import __version__, datagen, evaluation, pipeline
from .domain import CalendarContext, ValidationError, format_ts, parse_ts, year_span
from .experiment import TOPIC, select_training_year, test_samples, training_data
from .model import ModelFormatError, TrainConfig, TrainingDiverged, fit_batch, load, save
from .stream import Broker, ReplayConfig, ReplayServer, consume_tcp, replay, replay_in_background

log = logging.getLogger("evoccupancy")

CONFIG_ENV = "EVOCCUPANCY_CONFIG"
TRAIN_KEYS = {"epochs", "step_size", "l2", "train_seed", "batch_size", "year"}
RUN_KEYS = {"horizon", "window", "speedup", "test_year"}
EVAL_KEYS = {"thresholds"}
GENERATOR_KEYS = {"seed", "years", "hourly_weights", "duration_mu", "duration_sigma", "min_duration",
                  "sessions_per_year", "festivities", "shifts", *(f"mult_{k}" for k in datagen.DAY_TYPES)}
COMMON_KEYS = {"calendar"}
ALL_KEYS = TRAIN_KEYS | RUN_KEYS | EVAL_KEYS | GENERATOR_KEYS | COMMON_KEYS


class UsageError(Exception):
    """Bad input or configuration; maps to exit code 2."""


def read_kv(path: str | Path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` comments and blank lines are ignored."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        if key not in ALL_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value.strip()
    return out


def load_config(args: argparse.Namespace) -> dict[str, str]:
    path = args.config or os.environ.get(CONFIG_ENV)
    values = read_kv(path) if path else {}
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep or key.strip() not in ALL_KEYS:
            raise UsageError(f"bad --set {item!r}")
        values[key.strip()] = value.strip()
    return values


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: str | Path, command: str, config: dict, inputs: Sequence[str | Path],
                   outputs: Sequence[str | Path], t0: float, **extra) -> Path:
    manifest = {
        "command": command,
        "version": __version__,
        "config": config,
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": {str(p): sha256_file(p) for p in outputs},
        "wall_seconds": round(time.perf_counter() - t0, 3),
        **extra,
    }
    path = Path(f"{out}.manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return path


def _calendar(values: dict[str, str], flag: Optional[str]) -> tuple[CalendarContext, list[str]]:
    path = flag or values.get("calendar")
    if not path:
        return CalendarContext(), []
    return CalendarContext.from_file(path), [path]


def _speedup(text: Optional[str]) -> Optional[float]:
    if text is None or text == "max":
        return None
    try:
        value = float(text)
    except ValueError:
        raise UsageError(f"speedup must be a positive number or 'max', got {text!r}") from None
    if not value > 0:
        raise UsageError("speedup must be positive")
    return value


def parse_thresholds(text: Optional[str]) -> tuple[float, ...]:
    if not text:
        return evaluation.DEFAULT_GRID
    try:
        grid = tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise UsageError(f"bad threshold list {text!r}") from None
    if not grid or any(not 0 <= t <= 1 for t in grid):
        raise UsageError("thresholds must be a non-empty list of values in [0, 1]")
    return grid


def cmd_generate(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    values = {k: v for k, v in load_config(args).items() if k in GENERATOR_KEYS}
    if args.seed is not None:
        values["seed"] = str(args.seed)
    if args.years:
        values["years"] = args.years
    if args.shift:
        values["shifts"] = ";".join(args.shift)
    cfg = datagen.GeneratorConfig.from_mapping(values)
    dataset = datagen.generate(cfg)
    datagen.write_dataset(args.out, dataset.sessions)
    write_manifest(args.out, "generate", {"generator": cfg.to_text()}, [], [args.out], t0,
                   config_fingerprint=dataset.config_fingerprint, sessions=len(dataset.sessions))
    per_year = {y: len(dataset.sessions_in_year(y)) for y in cfg.years}
    print(f"wrote {len(dataset.sessions)} sessions to {args.out} {per_year}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    values = load_config(args)
    sessions = datagen.read_dataset(args.dataset)
    year_text = args.year or values.get("year", "auto")
    year = select_training_year(sessions) if year_text == "auto" else int(year_text)
    try:
        cfg = TrainConfig(
            epochs=args.epochs if args.epochs is not None else int(values.get("epochs", TrainConfig.epochs)),
            step_size=args.step_size if args.step_size is not None else float(values.get("step_size", TrainConfig.step_size)),
            l2=args.l2 if args.l2 is not None else float(values.get("l2", TrainConfig.l2)),
            seed=args.seed if args.seed is not None else int(values.get("train_seed", 0)),
            batch_size=args.batch_size if args.batch_size is not None else (
                int(values["batch_size"]) if values.get("batch_size") else None),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    cal, cal_inputs = _calendar(values, args.calendar)
    X, y = training_data(sessions, year, cal)
    model = fit_batch(X, y, cfg)
    Path(args.out).write_bytes(save(model))
    write_manifest(args.out, "train", {"year": year, **dataclasses.asdict(cfg)}, [args.dataset, *cal_inputs], [args.out], t0,
                   dataset_sha256=sha256_file(args.dataset), training_minutes=int(X.shape[0]),
                   training_positives=int(y.sum()))
    print(f"trained on {year} ({X.shape[0]} minutes, {int(y.sum())} occupied); model written to {args.out}")
    return 0


def _test_span(args: argparse.Namespace, values: dict[str, str], sessions) -> tuple[dt.datetime, dt.datetime]:
    if args.start or args.end:
        if not (args.start and args.end):
            raise UsageError("--from and --to must be given together")
        start, end = parse_ts(args.start), parse_ts(args.end)
    else:
        year_text = args.year or values.get("test_year")
        if not year_text:
            raise UsageError("give --year or --from/--to for the test span")
        start, end = year_span(int(year_text), inclusive=True)
    if end <= start:
        raise UsageError("test span is empty")
    return start, end


def cmd_run(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    values = load_config(args)
    horizon = args.horizon if args.horizon is not None else int(values.get("horizon", pipeline.DEFAULT_HORIZON))
    window_text = values.get("window", str(pipeline.DEFAULT_WINDOW)) if args.window is None else str(args.window)
    window = None if args.no_update or window_text in ("inf", "none") else int(window_text)
    speedup = _speedup(args.speedup or values.get("speedup"))
    if horizon <= 0:
        raise UsageError(f"horizon must be positive, got {horizon}")
    if window is not None and window <= 0:
        raise UsageError(f"window must be positive, got {window}")

    try:
        model = load(Path(args.model).read_bytes())
    except ModelFormatError as exc:
        raise UsageError(f"{args.model}: {exc}") from exc
    cal, cal_inputs = _calendar(values, args.calendar)
    cfg = pipeline.PipelineConfig(model, horizon, window, cal, compare=True)

    broker = Broker()
    broker.create_topic(args.topic)
    consumer = broker.subscribe(args.topic)
    inputs: list = [args.model, *cal_inputs]
    span_desc: dict = {}
    if args.source:
        host, _, port = args.source.removeprefix("tcp://").rpartition(":")
        if not host or not port.isdigit():
            raise UsageError(f"--source must look like tcp://HOST:PORT, got {args.source!r}")
        errors: list = []

        def pump() -> None:
            try:
                consume_tcp(host, int(port), broker, args.topic)
            except BaseException as exc:
                errors.append(exc)
                broker.close(args.topic)

        producer = threading.Thread(target=pump, daemon=True)
        producer.start()
        span_desc["source"] = args.source
    else:
        if not args.dataset:
            raise UsageError("--dataset is required unless --source is given")
        sessions = datagen.read_dataset(args.dataset)
        start, end = _test_span(args, values, sessions)
        samples = test_samples(sessions, start, end)
        inputs.insert(0, args.dataset)
        span_desc.update({"from": format_ts(start), "to": format_ts(end)})
        producer, errors = replay_in_background(ReplayConfig(samples, speedup), broker, args.topic)

    with open(args.out, "w", newline="") as fh:
        sinks: list = [pipeline.ForecastCsvSink(fh)]
        lp = open(args.line_protocol, "w") if args.line_protocol else None
        if lp:
            sinks.append(pipeline.LineProtocolSink(lp))
        try:
            report, final = pipeline.run(cfg, consumer, sinks)
        finally:
            if lp:
                lp.close()
    producer.join()
    failures = [e for e in errors if isinstance(e, BaseException)]
    if failures:
        raise failures[0]

    outputs = [args.out] + ([args.line_protocol] if args.line_protocol else [])
    final_path = None
    if args.final_model:
        Path(args.final_model).write_bytes(save(final))
        outputs.append(args.final_model)
        final_path = args.final_model
    resolved_cfg = {"horizon": horizon, "window": window, "speedup": speedup, "topic": args.topic, **span_desc}
    write_manifest(args.out, "run", resolved_cfg, inputs, outputs, t0,
                   events=report.events, issued=report.issued, resolved=report.resolved,
                   pending=report.pending, missing_target=report.missing_target,
                   updates=report.updates, final_model=final_path)
    print(f"{report.events} events, {report.issued} forecasts issued, {report.resolved} resolved, "
          f"{report.unresolved} unresolved, {report.updates} model updates")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    values = load_config(args)
    grid = parse_thresholds(args.thresholds or values.get("thresholds"))
    records = pipeline.read_forecasts(Path(args.forecasts))
    pairs = pipeline.resolve_ledger(records)
    if not pairs.streaming:
        raise UsageError(f"{args.forecasts}: no resolved forecasts to evaluate")
    if pairs.batch is None:
        reports = evaluation.sweep(pairs.streaming, grid)
        table = evaluation.report_csv([("streaming", reports)])
        best = evaluation.best_threshold(reports)
        summary = ("best streaming: F1 undefined at every threshold\n" if best is None else
                   f"best streaming: threshold={best.threshold:g} F1={best.f1:.4f}\n")
        curves = {"streaming": reports}
    else:
        comparison = evaluation.compare(pairs.streaming, pairs.batch, grid)
        table = comparison.to_csv()
        summary = comparison.summary()
        curves = {"streaming": [r.streaming for r in comparison.rows],
                  "batch": [r.batch for r in comparison.rows]}
    summary = f"{len(pairs.streaming)} resolved forecasts ({pairs.excluded} unresolved excluded)\n" + summary
    Path(args.out).write_text(table)
    outputs = [args.out]
    if args.summary:
        Path(args.summary).write_text(summary)
        outputs.append(args.summary)
    if args.pr_prefix:
        for name, reports in curves.items():
            path = f"{args.pr_prefix}{name}.csv"
            Path(path).write_text(evaluation.pr_curve_csv(reports))
            outputs.append(path)
    write_manifest(args.out, "evaluate", {"thresholds": list(grid)}, [args.forecasts], outputs, t0,
                   resolved=len(pairs.streaming), excluded=pairs.excluded)
    sys.stdout.write(summary)
    return 0


def cmd_replay_serve(args: argparse.Namespace) -> int:
    values = load_config(args)
    sessions = datagen.read_dataset(args.dataset)
    start, end = _test_span(args, values, sessions)
    cfg = ReplayConfig(test_samples(sessions, start, end), _speedup(args.speedup or values.get("speedup")))
    with ReplayServer((args.host, args.port), cfg) as server:
        host, port = server.server_address[:2]
        print(f"serving {len(cfg.source)} records on tcp://{host}:{port} (topic {args.topic})", flush=True)
        if args.once:
            server.handle_request()
        else:
            try:
                server.serve_forever()
            except KeyboardInterrupt:
                pass
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evoccupancy", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help=f"flat key = value config file (default: ${CONFIG_ENV})")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")

    p = sub.add_parser("generate", help="write a synthetic session dataset")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--years", help="comma-separated calendar years")
    p.add_argument("--shift", action="append", metavar="FIRST..LAST*MULT",
                   help="scale arrivals between two dates (repeatable)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="fit the batch model on one year")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--year", help="training year, or 'auto' for the year with most sessions")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--step-size", type=float)
    p.add_argument("--l2", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--calendar", help="festivity file, one ISO date per line")
    p.set_defaults(func=cmd_train)

    def span(p: argparse.ArgumentParser) -> None:
        p.add_argument("--year", help="test year; spans Jan 1 00:00 through the next Jan 1 00:00 inclusive")
        p.add_argument("--from", dest="start", metavar="TS", help="first minute, YYYY-MM-DDTHH:MM")
        p.add_argument("--to", dest="end", metavar="TS", help="end minute (exclusive)")
        p.add_argument("--speedup", help="simulated minutes per wall minute, or 'max' (default)")
        p.add_argument("--topic", default=TOPIC)

    p = sub.add_parser("run", help="replay a test span through the streaming pipeline")
    common(p)
    p.add_argument("--dataset")
    p.add_argument("--source", help="read the stream from a replay-serve endpoint, tcp://HOST:PORT")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="forecast CSV")
    p.add_argument("--line-protocol", help="also write time-series line protocol here")
    p.add_argument("--final-model", help="save the streaming model after the run")
    p.add_argument("--horizon", type=int)
    p.add_argument("--window", help="samples per streaming update, or 'inf'")
    p.add_argument("--no-update", action="store_true", help="disable streaming updates")
    p.add_argument("--calendar")
    span(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("evaluate", help="threshold sweep over a forecast CSV")
    common(p)
    p.add_argument("--forecasts", required=True)
    p.add_argument("--out", required=True, help="report CSV")
    p.add_argument("--thresholds", help="comma-separated grid (default 0.30..0.50 step 0.05)")
    p.add_argument("--summary", help="also write the text summary here")
    p.add_argument("--pr-prefix", help="write <prefix><model>.csv precision/recall curves")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("replay-serve", help="serve a test span as newline-delimited JSON over TCP")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=9099)
    p.add_argument("--once", action="store_true", help="exit after one client")
    span(p)
    p.set_defaults(func=cmd_replay_serve)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ValidationError, ModelFormatError, FileNotFoundError, ValueError) as exc:
        print(f"evoccupancy {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"evoccupancy {args.command}: training failed: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        log.debug("unhandled failure", exc_info=True)
        print(f"evoccupancy {args.command}: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
