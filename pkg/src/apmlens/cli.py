"""Command-line front end: ``apmlens sign|detect|analyze|obfuscate|validate|icfg``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from . import detect, graph, lint
from .detect import DetectError, LibraryProfile, SignatureIndex
from .model import ModelError, load_program_model, save_program_model, validate
from .obfuscate import obfuscate
from .pipeline import AnalysisConfig, AnalysisError, analyze_model, dumps_report, render_text

EXIT_OK, EXIT_FINDINGS, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("apmlens")


class CliError(Exception):
    pass


def _fail(message: str) -> int:
    print(f"apmlens: error: {message}", file=sys.stderr)
    return EXIT_USAGE


def _load_indexes(paths: Sequence[str]) -> list[SignatureIndex]:
    return [SignatureIndex.load(p) for p in paths or ()]


def _write(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------
# Commands


def cmd_sign(args) -> int:
    try:
        model = load_program_model(args.library)
        profile = LibraryProfile.load(args.profile)
        index = detect.build_index(model, profile)
    except (ModelError, DetectError, ValueError, OSError) as exc:
        return _fail(str(exc))
    _write(index.dumps(), args.output)
    for w in index.warnings:
        print(f"apmlens: warning: {w}", file=sys.stderr)
    return EXIT_OK


def cmd_detect(args) -> int:
    try:
        app = load_program_model(args.app)
        indexes = _load_indexes(args.index)
        results = detect.detect_libraries(app, indexes)
    except (ModelError, DetectError, ValueError, OSError) as exc:
        return _fail(str(exc))
    usage = detect.library_usage(results)
    if args.format == "json":
        doc = {"libraries": usage, "detections": [r.to_json() for r in results]}
        _write(json.dumps(doc, sort_keys=True, indent=2) + "\n", args.output)
    else:
        lines = [f"{lib}: {status}" for lib, status in usage.items()] or ["no library detected"]
        lines += [f"  {r.role:<8} {r.matched_via:<12} {r.app_method} ~ {r.api}" for r in results]
        _write("\n".join(lines) + "\n", args.output)
    return EXIT_OK


def _config_from_args(args) -> AnalysisConfig:
    base = AnalysisConfig.load(args.config) if args.config else AnalysisConfig()
    rules = None
    if args.rules:
        rules = tuple(r.strip() for r in args.rules.split(",") if r.strip())
        unknown = set(rules) - set(lint.RULES)
        if unknown:
            raise CliError(f"unknown rules: {', '.join(sorted(unknown))}")
    return base.merged(
        sources_sinks=args.sources_sinks, kb=args.kb, lexicon=args.lexicon,
        permissions=args.permissions, rules=rules, timing=True if args.timing else None,
    )


def _analyze_one(job: tuple[str, list[str], AnalysisConfig]) -> dict:
    path, index_paths, config = job
    app = load_program_model(path)
    indexes = _load_indexes(index_paths)
    return analyze_model(app, indexes, config, name=Path(path).name)


def cmd_analyze(args) -> int:
    try:
        config = _config_from_args(args)
        for p in args.app:
            load_program_model(p)
        _load_indexes(args.index)
    except (ModelError, DetectError, ValueError, OSError, CliError) as exc:
        return _fail(str(exc))
    jobs = [(p, list(args.index or ()), config) for p in args.app]
    try:
        if args.jobs > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                reports = list(pool.map(_analyze_one, jobs))
        else:
            reports = [_analyze_one(j) for j in jobs]
    except AnalysisError as exc:
        return _fail(str(exc))
    if args.format == "json":
        doc = reports[0] if len(reports) == 1 else {"schema_version": 1, "reports": reports}
        _write(dumps_report(doc), args.output)
    else:
        _write("".join(render_text(r) for r in reports), args.output)
    return EXIT_FINDINGS if any(r["summary"]["errors"] for r in reports) else EXIT_OK


def cmd_obfuscate(args) -> int:
    try:
        app = load_program_model(args.app)
    except (ModelError, OSError) as exc:
        return _fail(str(exc))
    out, rmap = obfuscate(app, args.seed)
    save_program_model(out, args.output)
    if args.map:
        Path(args.map).write_text(json.dumps(rmap.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        app = load_program_model(args.app)
    except (ModelError, OSError) as exc:
        return _fail(str(exc))
    problems = validate(app)
    for v in problems:
        print(str(v))
    if not problems:
        print("ok")
    return EXIT_FINDINGS if problems else EXIT_OK


def cmd_icfg(args) -> int:
    try:
        app = load_program_model(args.app)
    except (ModelError, OSError) as exc:
        return _fail(str(exc))
    _write(graph.build_icfg(app).to_dot(), args.output)
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="apmlens", description="Find and audit monitoring libraries in program models.")
    p.add_argument("-v", "--verbose", action="store_true", help="log debug messages to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sign", help="build a signature index for a library")
    s.add_argument("library", help="library program model (JSON)")
    s.add_argument("profile", help="library profile naming init/logging/tracking APIs (JSON)")
    s.add_argument("-o", "--output", help="index file to write (default: stdout)")
    s.set_defaults(func=cmd_sign)

    d = sub.add_parser("detect", help="match an app against signature indexes")
    d.add_argument("app")
    d.add_argument("--index", action="append", default=[], help="signature index (repeatable)")
    d.add_argument("--format", choices=("text", "json"), default="text")
    d.add_argument("-o", "--output")
    d.set_defaults(func=cmd_detect)

    a = sub.add_parser("analyze", help="run the full pipeline and report")
    a.add_argument("app", nargs="+")
    a.add_argument("--index", action="append", default=[], help="signature index (repeatable)")
    a.add_argument("--sources-sinks", help="SOURCE/SINK specification file")
    a.add_argument("--permissions", help="API to permission map (methodRef,permission lines)")
    a.add_argument("--kb", help="knowledge base (apm-kb.json)")
    a.add_argument("--lexicon", help="sensitive UI lexicon (JSON)")
    a.add_argument("--rules", help="comma-separated lint rules to enable, e.g. R1,R3")
    a.add_argument("--format", choices=("text", "json"), default="text")
    a.add_argument("--jobs", type=int, default=1, help="worker processes for several apps")
    a.add_argument("--config", help="JSON config file; flags override it")
    a.add_argument("--timing", action="store_true", help="include per-module timings (not reproducible)")
    a.add_argument("-o", "--output")
    a.set_defaults(func=cmd_analyze)

    o = sub.add_parser("obfuscate", help="rename app identifiers deterministically")
    o.add_argument("app")
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("-o", "--output", required=True)
    o.add_argument("--map", help="write the rename map here")
    o.set_defaults(func=cmd_obfuscate)

    v = sub.add_parser("validate", help="check a program model")
    v.add_argument("app")
    v.set_defaults(func=cmd_validate)

    g = sub.add_parser("icfg", help="export the ICFG as Graphviz text")
    g.add_argument("app")
    g.add_argument("-o", "--output")
    g.set_defaults(func=cmd_icfg)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="apmlens: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
