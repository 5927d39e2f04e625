"""End-to-end analysis of one program and the versioned report it produces."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

from . import detect, graph, lint, strings, taint
from .model import Invoke, ProgramModel
from .sig import DEFAULT_REGISTRY, SignatureEncoder, SystemRegistry

REPORT_SCHEMA_VERSION = 1


class AnalysisError(Exception):
    def __init__(self, module: str, exc: BaseException):
        super().__init__(f"{module}: {exc}")
        self.module = module


@dataclass(frozen=True)
class AnalysisConfig:
    """Paths of data files (``None`` selects the shipped default) and analysis knobs."""

    sources_sinks: Optional[str] = None
    permissions: Optional[str] = None
    lexicon: Optional[str] = None
    kb: Optional[str] = None
    lifecycle: Optional[str] = None
    callbacks: Optional[str] = None
    builders: Optional[str] = None
    rules: tuple[str, ...] = lint.RULES
    k: int = strings.K_DEFAULT
    budget: int = taint.DEFAULT_BUDGET
    timing: bool = False

    @classmethod
    def from_json(cls, data: dict) -> "AnalysisConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        data = dict(data)
        if "rules" in data:
            data["rules"] = tuple(data["rules"])
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "AnalysisConfig":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def merged(self, **overrides: Any) -> "AnalysisConfig":
        """Copy with every non-None override applied."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


@dataclass
class _Stage:
    timings: dict[str, float] = field(default_factory=dict)

    def run(self, module: str, fn, *args, **kwargs):
        start = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        except AnalysisError:
            raise
        except Exception as exc:  # surfaced with the failing module's name
            raise AnalysisError(module, exc) from exc
        finally:
            self.timings[module] = self.timings.get(module, 0.0) + time.perf_counter() - start


def signature_sinks(indexes: list[detect.SignatureIndex]) -> dict[str, str]:
    out = {}
    for idx in indexes:
        for sig, entry in idx.entries.items():
            if entry.role in ("logging", "tracking"):
                out[sig] = str(entry.origin)
    return out


def analyze_model(app: ProgramModel, indexes: list[detect.SignatureIndex],
                  config: AnalysisConfig = AnalysisConfig(), name: str = "app",
                  registry: SystemRegistry = DEFAULT_REGISTRY) -> dict:
    """Run detect, graph, strings, taint and lint; return the structured report."""
    st = _Stage()
    encoder = SignatureEncoder(app, registry)
    detections = st.run("detect", detect.detect_libraries, app, indexes, registry, encoder)
    usage = detect.library_usage(detections)

    builders = st.run("strings", strings.load_builders, config.builders) if config.builders \
        else strings.default_builders()
    oracle = strings.StringOracle(builders, config.k)
    regs = st.run("graph", graph.load_registries, config.lifecycle, config.callbacks)
    entries = st.run("graph", graph.discover_entry_points, app, regs)
    icfg = st.run("graph", graph.build_icfg, app, entries, oracle, registry)
    init_sites = st.run("detect", detect.locate_initialization, app, detections, icfg)

    source_specs, sink_specs = st.run("taint", taint.load_sources_sinks, config.sources_sinks)
    pmap = st.run("taint", taint.load_permission_map, config.permissions)
    lexicon = st.run("taint", taint.load_lexicon, config.lexicon)
    ui_map = taint.classify_ui_elements(app.layouts, lexicon)
    sources = st.run("taint", taint.derive_sources, icfg, pmap, ui_map, source_specs)
    matcher = taint.SinkMatcher(sink_specs, signature_sinks(indexes), encoder.call_entry)
    plumbing = st.run("taint", taint.icc_plumbing, icfg, oracle)
    result = st.run("taint", taint.propagate, icfg, sources, matcher, plumbing, config.budget)

    kb = st.run("lint", lint.load_kb, config.kb)
    findings = st.run("lint", lint.run_lints, app, init_sites, icfg, kb, result.leaks, oracle, config.rules)
    logged = st.run("strings", logged_strings, app, matcher, oracle)

    counts = {s: sum(1 for f in findings if f.severity == s) for s in lint.SEVERITIES}
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "app": name,
        "libraries": usage,
        "detections": [d.to_json() for d in detections],
        "init_sites": [s.to_json() for s in init_sites],
        "entry_points": [e.to_json() for e in entries],
        "icc_edges": [e.to_json() for e in icfg.icc_edges],
        "ui_sensitive": ui_map,
        "leaks": [lp.to_json() for lp in result.leaks],
        "taint_complete": result.complete,
        "lint": [f.to_json() for f in findings],
        "logged_strings": logged,
        "warnings": sorted(set(encoder.ctx.warnings)),
        "summary": {"errors": counts["error"], "warnings": counts["warning"], "infos": counts["info"]},
    }
    if config.timing:
        report["timing"] = {k: round(v, 6) for k, v in sorted(st.timings.items())}
    return report


def logged_strings(app: ProgramModel, matcher: taint.SinkMatcher, oracle: strings.StringOracle) -> list[dict]:
    """Constant values reaching logging or tracking calls from app code."""
    out = []
    for cls, m in app.methods():
        if cls.origin == "embedded-library":
            continue
        ref = m.ref(cls.name)
        for i, ins in enumerate(m.body):
            if not isinstance(ins, Invoke):
                continue
            hit = matcher.match(ref, ins)
            if hit is None:
                continue
            positions = range(len(ins.args)) if hit.positions is None else hit.positions
            for pos in positions:
                if pos >= len(ins.args):
                    continue
                value = oracle(m, ins.args[pos], i)
                out.append({"method": str(ref), "site": i, "api": hit.api, "arg": pos,
                            "values": value.to_json()})
    return out


def dumps_report(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def render_text(report: dict) -> str:
    """Human-readable summary derived from the structured report."""
    lines = [f"== {report['app']} =="]
    libs = report["libraries"]
    lines.append("libraries: " + (", ".join(f"{k} ({v})" for k, v in libs.items()) if libs else "none"))
    for s in report["init_sites"]:
        where = "Application entry" if s["is_application_entry"] else \
            ("lifecycle" if s["is_lifecycle"] else "helper")
        lines.append(f"  init {s['library']} in {s['method']} sites {s['sites']} [{where}]")
    unresolved = [e for e in report["icc_edges"] if e["resolution"] == "unresolved"]
    lines.append(f"entry points: {len(report['entry_points'])}; ICC edges: {len(report['icc_edges'])}"
                 f" ({len(unresolved)} unresolved)")
    lines.append(f"leaks: {len(report['leaks'])}" + ("" if report["taint_complete"] else " (incomplete: budget hit)"))
    for f in report["lint"]:
        lines.append(f"  [{f['severity']}] {f['rule']} {f['message']}")
    for s in report["logged_strings"]:
        vals = "unknown" if s["values"] is None else ", ".join(repr(v) for v in s["values"])
        lines.append(f"  logged at {s['method']}:{s['site']} arg {s['arg']}: {vals}")
    sm = report["summary"]
    lines.append(f"summary: {sm['errors']} error(s), {sm['warnings']} warning(s), {sm['infos']} info")
    return "\n".join(lines) + "\n"
