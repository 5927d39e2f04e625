"""Source-to-sink taint propagation over the ICFG.

Sources are calls to permission-protected framework APIs and ``FindView``
reads of UI elements whose text marks them as sensitive.  Sinks are library
logging and tracking APIs, named by pattern or recognised by signature so
that renamed library code is still caught.

The analysis is flow-sensitive inside a method and context-insensitive
across calls.  Fields are one cell per ``(owner, field)``; intent extras are
one cell per ``(target component, key)`` with a wildcard key when the key is
not a single constant.  Arrays and aliasing are not modelled.
"""
from __future__ import annotations

import fnmatch
import json
import re
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Optional

from .graph import ICFG, intent_allocations
from .model import (
    Concat, FieldGet, FieldPut, FindView, GetExtra, Invoke, MethodDef, MethodRef, Move, ProgramModel,
    PutExtra, Return, StartComponent, UiElement, successors,
)
from .strings import StringOracle

DEFAULT_BUDGET = 1_000_000
ANY_KEY = "*"
ALL_POSITIONS = None


def _data_text(name: str, path: Optional[str | Path]) -> str:
    if path is None:
        return resources.files("apmlens").joinpath(f"data/{name}").read_text(encoding="utf-8")
    return Path(path).read_text(encoding="utf-8")


# --------------------------------------------------------------------------
# Specifications


@dataclass(frozen=True)
class SourceSpec:
    pattern: str
    permissions: tuple[str, ...] = ()

    def matches(self, ref: MethodRef) -> bool:
        return fnmatch.fnmatchcase(str(ref), self.pattern)


@dataclass(frozen=True)
class SinkSpec:
    pattern: str
    positions: Optional[tuple[int, ...]] = ALL_POSITIONS

    def matches(self, ref: MethodRef) -> bool:
        return fnmatch.fnmatchcase(str(ref), self.pattern)


class SpecFormatError(ValueError):
    pass


def parse_sources_sinks(text: str) -> tuple[list[SourceSpec], list[SinkSpec]]:
    """Read the line format ``SOURCE|SINK <methodRef> [argPositions|permissions]``."""
    sources, sinks = [], []
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        kind = parts[0]
        if kind not in ("SOURCE", "SINK") or len(parts) < 2 or len(parts) > 3:
            raise SpecFormatError(f"line {n}: expected SOURCE|SINK <methodRef> [extra]")
        pattern = parts[1]
        extra = parts[2] if len(parts) == 3 else ""
        if "(" not in pattern or ")" not in pattern:
            raise SpecFormatError(f"line {n}: malformed method pattern {pattern!r}")
        if kind == "SOURCE":
            perms = tuple(p for p in extra.split(",") if p)
            sources.append(SourceSpec(pattern, perms))
            continue
        if extra in ("", "*"):
            positions = ALL_POSITIONS
        else:
            try:
                positions = tuple(sorted({int(p) for p in extra.split(",")}))
            except ValueError:
                raise SpecFormatError(f"line {n}: bad argument positions {extra!r}") from None
            if any(p < 0 for p in positions):
                raise SpecFormatError(f"line {n}: negative argument position")
            if "*" not in pattern:
                arity = len([p for p in pattern[pattern.index("(") + 1:pattern.index(")")].split(",") if p])
                if any(p >= arity for p in positions):
                    raise SpecFormatError(f"line {n}: argument position beyond arity {arity}")
        sinks.append(SinkSpec(pattern, positions))
    return sources, sinks


def load_sources_sinks(path: Optional[str | Path] = None) -> tuple[list[SourceSpec], list[SinkSpec]]:
    return parse_sources_sinks(_data_text("sources_sinks.txt", path))


def parse_permission_map(text: str) -> dict[MethodRef, tuple[str, ...]]:
    out: dict[MethodRef, list[str]] = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        ref_text, sep, perm = line.rpartition(",")
        perm = perm.strip()
        if not sep or not perm:
            raise SpecFormatError(f"line {n}: expected methodRef,permission")
        ref = MethodRef.parse(ref_text)
        perms = out.setdefault(ref, [])
        if perm not in perms:
            perms.append(perm)
    return {k: tuple(sorted(v)) for k, v in out.items()}


def load_permission_map(path: Optional[str | Path] = None) -> dict[MethodRef, tuple[str, ...]]:
    return parse_permission_map(_data_text("permissions.csv", path))


# --------------------------------------------------------------------------
# Sensitive UI lexicon


@dataclass(frozen=True)
class Lexicon:
    categories: tuple[tuple[str, tuple[str, ...]], ...]

    def __post_init__(self):
        for name, stems in self.categories:
            if any(s != s.lower() for s in stems) or len(set(stems)) != len(stems):
                raise ValueError(f"lexicon stems for {name!r} must be lowercase and unique")

    def classify(self, text: str) -> Optional[str]:
        norm = " " + _normalise(text) + " "
        for name, stems in self.categories:
            for stem in stems:
                if re.search(r"(?<![a-z0-9])" + re.escape(stem), norm):
                    return name
        return None


def _normalise(text: str) -> str:
    return " ".join(re.sub(r"[^a-z0-9]+", " ", text.lower()).split())


def load_lexicon(path: Optional[str | Path] = None) -> Lexicon:
    data = json.loads(_data_text("lexicon.json", path))
    cats = []
    for c in data["categories"]:
        stems = tuple(dict.fromkeys(_normalise(s) for s in c["stems"]))
        cats.append((c["name"], stems))
    return Lexicon(tuple(cats))


@lru_cache(maxsize=1)
def default_lexicon() -> Lexicon:
    return load_lexicon()


# Widgets that only display text; users cannot type secrets into them.
DISPLAY_WIDGETS = frozenset({"Button", "ImageButton", "ImageView", "TextView", "CheckBox", "RadioButton", "Switch",
                             "ToggleButton", "ProgressBar"})


def classify_ui_elements(layouts: Iterable[UiElement], lexicon: Optional[Lexicon] = None,
                         display_widgets: frozenset[str] = DISPLAY_WIDGETS) -> dict[str, str]:
    """Map resource id to sensitive category; untagged elements are omitted.

    Display-only widgets are never tagged, whatever their text says.  Widget
    kinds are compared on the simple class name, so ``android.widget.Button``
    counts as ``Button``.
    """
    lex = lexicon or default_lexicon()
    out = {}
    for el in layouts:
        if el.widget.rsplit(".", 1)[-1] in display_widgets:
            continue
        cat = lex.classify(f"{el.label} {el.hint}")
        if cat is not None:
            out[el.id] = cat
    return dict(sorted(out.items()))


# --------------------------------------------------------------------------
# Sources and sinks in a program


@dataclass(frozen=True, order=True)
class SourceSite:
    method: MethodRef
    site: int
    kind: str  # api | ui
    what: str  # API reference or resource id
    permissions: tuple[str, ...] = ()
    ui_category: Optional[str] = None

    def to_json(self) -> dict:
        return {
            "method": str(self.method), "site": self.site, "kind": self.kind, "what": self.what,
            "permissions": list(self.permissions), "ui_category": self.ui_category,
        }


def _system_targets(icfg: ICFG, caller: MethodRef, site: int, ins: Invoke) -> list[MethodRef]:
    refs = [e.callee for e in icfg.callees(caller, site) if e.system]
    if ins.callee not in refs:
        refs.append(ins.callee)
    return refs


def derive_sources(icfg: ICFG, permission_map: dict[MethodRef, tuple[str, ...]],
                   ui_map: dict[str, str], specs: Iterable[SourceSpec] = ()) -> list[SourceSite]:
    specs = list(specs)
    out = []
    for cls, m in icfg.app.methods():
        ref = m.ref(cls.name)
        for i, ins in enumerate(m.body):
            if isinstance(ins, Invoke) and ins.dst is not None:
                for target in _system_targets(icfg, ref, i, ins):
                    perms = set(permission_map.get(target, ()))
                    hit = target in permission_map
                    for s in specs:
                        if s.matches(target):
                            hit = True
                            perms.update(s.permissions)
                    if hit:
                        out.append(SourceSite(ref, i, "api", str(target), tuple(sorted(perms))))
                        break
            elif isinstance(ins, FindView) and ins.resource in ui_map:
                out.append(SourceSite(ref, i, "ui", ins.resource, (), ui_map[ins.resource]))
    return sorted(out)


@dataclass(frozen=True)
class SinkMatch:
    api: str
    positions: Optional[tuple[int, ...]]


class SinkMatcher:
    """Recognises sink calls by pattern and, optionally, by index signature."""

    def __init__(self, specs: Iterable[SinkSpec] = (), signature_sinks: Optional[dict[str, str]] = None,
                 entry_of: Optional[Callable[[Invoke, MethodRef], str]] = None):
        self.specs = list(specs)
        self.signature_sinks = signature_sinks or {}
        self.entry_of = entry_of

    def match(self, caller: MethodRef, ins: Invoke) -> Optional[SinkMatch]:
        for s in self.specs:
            if s.matches(ins.callee):
                return SinkMatch(str(ins.callee), s.positions)
        if self.signature_sinks and self.entry_of is not None:
            api = self.signature_sinks.get(self.entry_of(ins, caller))
            if api is not None:
                return SinkMatch(api, ALL_POSITIONS)
        return None


def sensitive_args(ins: Invoke, positions: Optional[tuple[int, ...]]) -> list[int]:
    if positions is None:
        return list(ins.args)
    return [ins.args[p] for p in positions if p < len(ins.args)]


# --------------------------------------------------------------------------
# Inter-component plumbing


@dataclass(frozen=True)
class IccPlumbing:
    """Extra cells written by each ``PutExtra`` and read by each ``GetExtra``."""

    puts: dict[tuple[MethodRef, int], tuple[tuple[str, str], ...]]
    gets: dict[tuple[MethodRef, int], tuple[str, tuple[str, ...]]]

    def readers(self, cell: tuple[str, str]) -> list[tuple[MethodRef, int]]:
        comp, key = cell
        return sorted(site for site, (c, keys) in self.gets.items()
                      if c == comp and (key == ANY_KEY or ANY_KEY in keys or key in keys))


def _keys(oracle: StringOracle, method: MethodDef, reg: int, site: int) -> tuple[str, ...]:
    v = oracle(method, reg, site)
    return (ANY_KEY,) if v.is_top else tuple(sorted(v.values))


def icc_plumbing(icfg: ICFG, oracle: Optional[StringOracle] = None) -> IccPlumbing:
    oracle = oracle or StringOracle()
    resolved = {(e.caller, e.site): e.target for e in icfg.icc_edges if e.target is not None}
    puts: dict[tuple[MethodRef, int], tuple[tuple[str, str], ...]] = {}
    gets: dict[tuple[MethodRef, int], tuple[str, str]] = {}
    for cls, m in icfg.app.methods():
        ref = m.ref(cls.name)
        allocs = None
        for i, ins in enumerate(m.body):
            if isinstance(ins, GetExtra):
                gets[(ref, i)] = (cls.name, _keys(oracle, m, ins.key, i))
            elif isinstance(ins, PutExtra):
                if allocs is None:
                    allocs = intent_allocations(m.body)
                if allocs[i] is None:
                    continue
                mine = allocs[i].get(ins.intent, frozenset())
                targets = set()
                for j, other in enumerate(m.body):
                    if isinstance(other, StartComponent) and allocs[j] is not None and (ref, j) in resolved \
                            and allocs[j].get(other.intent, frozenset()) & mine:
                        targets.add(resolved[(ref, j)])
                keys = _keys(oracle, m, ins.key, i)
                cells = tuple(sorted((t, k) for t in targets for k in keys))
                if cells:
                    puts[(ref, i)] = cells
    return IccPlumbing(puts, gets)


# --------------------------------------------------------------------------
# Propagation


@dataclass(frozen=True)
class SinkSite:
    method: MethodRef
    site: int
    api: str

    def to_json(self) -> dict:
        return {"method": str(self.method), "site": self.site, "api": self.api}


@dataclass(frozen=True)
class LeakPath:
    source: SourceSite
    sink: SinkSite
    steps: tuple[tuple[MethodRef, int], ...]

    @property
    def key(self) -> tuple[MethodRef, int, MethodRef, int]:
        return (self.source.method, self.source.site, self.sink.method, self.sink.site)

    @property
    def permissions(self) -> tuple[str, ...]:
        return self.source.permissions

    @property
    def ui_category(self) -> Optional[str]:
        return self.source.ui_category

    def to_json(self) -> dict:
        return {
            "source": self.source.to_json(),
            "sink": self.sink.to_json(),
            "steps": [{"method": str(m), "site": s} for m, s in self.steps],
            "permissions": list(self.permissions),
            "ui_category": self.ui_category,
        }


@dataclass
class TaintResult:
    leaks: list[LeakPath]
    complete: bool = True
    steps: int = 0


@dataclass
class _Run:
    icfg: ICFG
    sinks: SinkMatcher
    plumbing: IccPlumbing
    budget: int
    # fact -> (parent, step) where step is the instruction that created the fact
    parent: dict = field(default_factory=dict)
    work: deque = field(default_factory=deque)
    steps: int = 0


def _param_register(target: MethodDef, arg_index: int) -> Optional[int]:
    """Register in ``target`` that receives call operand ``arg_index`` (receiver is operand -1)."""
    base = 0 if target.static else 1
    if arg_index == -1:
        return None if target.static else 0
    reg = base + arg_index
    return reg if reg < len(target.param_registers()) else None


def propagate(icfg: ICFG, sources: Iterable[SourceSite], sinks: SinkMatcher,
              plumbing: Optional[IccPlumbing] = None, budget: int = DEFAULT_BUDGET) -> TaintResult:
    """Forward worklist propagation; returns one leak per (source site, sink site)."""
    run = _Run(icfg, sinks, plumbing or icc_plumbing(icfg), budget)
    leaks: dict[tuple, LeakPath] = {}
    app = icfg.app
    return_sites: dict[MethodRef, list[tuple[MethodRef, int]]] = {}
    for e in icfg.call_graph.edges:
        if not e.system:
            return_sites.setdefault(e.callee, []).append((e.caller, e.site))
    field_readers: dict[tuple[str, str], list[tuple[MethodRef, int]]] = {}
    for cls, m in app.methods():
        for i, ins in enumerate(m.body):
            if isinstance(ins, FieldGet):
                field_readers.setdefault((ins.owner, ins.field), []).append((m.ref(cls.name), i))

    def add(fact, parent, step) -> None:
        if fact not in run.parent:
            run.parent[fact] = (parent, step)
            run.work.append(fact)

    def define_after(method: MethodRef, site: int, reg: int, src, parent, step) -> None:
        body = app.method_def(method).body
        for s in successors(body, site):
            add(("reg", method, s, reg, src), parent, step)

    for src in sorted(sources):
        body = app.method_def(src.method).body
        root = ("src", src)
        run.parent[root] = (None, (src.method, src.site))
        dst = body[src.site].defines()
        for s in successors(body, src.site):
            add(("reg", src.method, s, dst, src), root, None)

    complete = True
    while run.work:
        run.steps += 1
        if run.steps > budget:
            complete = False
            break
        fact = run.work.popleft()
        kind = fact[0]
        if kind == "field":
            _, cell, src = fact
            for method, site in field_readers.get(cell, ()):
                dst = app.method_def(method).body[site].dst
                define_after(method, site, dst, src, fact, (method, site))
            continue
        if kind == "extra":
            _, cell, src = fact
            for method, site in run.plumbing.readers(cell):
                dst = app.method_def(method).body[site].dst
                define_after(method, site, dst, src, fact, (method, site))
            continue
        if kind == "ret":
            _, target, src = fact
            for caller, site in return_sites.get(target, ()):
                ins = app.method_def(caller).body[site]
                if ins.dst is not None:
                    define_after(caller, site, ins.dst, src, fact, (caller, site))
            continue
        if kind == "param":
            _, target, reg, src = fact
            add(("reg", target, 0, reg, src), fact, None)
            continue

        _, method, p, reg, src = fact
        mdef = app.method_def(method)
        ins = mdef.body[p]
        here = (method, p)
        uses = reg in ins.uses()
        if uses:
            if isinstance(ins, (Move, Concat)):
                define_after(method, p, ins.dst, src, fact, here)
            elif isinstance(ins, FieldPut) and ins.src == reg:
                add(("field", (ins.owner, ins.field), src), fact, here)
            elif isinstance(ins, PutExtra) and ins.value == reg:
                for cell in run.plumbing.puts.get(here, ()):
                    add(("extra", cell, src), fact, here)
            elif isinstance(ins, Return):
                add(("ret", method, src), fact, here)
            elif isinstance(ins, Invoke):
                _invoke(run, add, define_after, fact, method, p, ins, reg, src, leaks)
        if ins.defines() != reg:
            for s in successors(mdef.body, p):
                add(("reg", method, s, reg, src), fact, None)

    ordered = sorted(leaks.values(), key=lambda lp: (str(lp.key[0]), lp.key[1], str(lp.key[2]), lp.key[3]))
    return TaintResult(ordered, complete, run.steps)


def _invoke(run: _Run, add, define_after, fact, method, p, ins: Invoke, reg, src, leaks) -> None:
    here = (method, p)
    app = run.icfg.app
    edges = run.icfg.callees(method, p)
    wrapper = not edges or any(e.system for e in edges)
    for e in edges:
        if e.system:
            continue
        target = app.method_def(e.callee)
        operands = ([-1] if ins.receiver is not None else []) + list(range(len(ins.args)))
        for op in operands:
            r = ins.receiver if op == -1 else ins.args[op]
            if r != reg:
                continue
            preg = _param_register(target, op)
            if preg is not None:
                add(("param", e.callee, preg, src), fact, here)
    if wrapper and ins.dst is not None:
        define_after(method, p, ins.dst, src, fact, here)
    m = run.sinks.match(method, ins)
    if m is not None and reg in sensitive_args(ins, m.positions):
        sink = SinkSite(method, p, m.api)
        key = (src.method, src.site, method, p)
        if key not in leaks:
            leaks[key] = LeakPath(src, sink, _witness(run, fact, here))


def _witness(run: _Run, fact, sink_step) -> tuple[tuple[MethodRef, int], ...]:
    steps = [sink_step]
    cur = fact
    while cur is not None:
        parent, step = run.parent[cur]
        if step is not None and step != steps[-1]:
            steps.append(step)
        cur = parent
    return tuple(reversed(steps))


def replay_witness(app: ProgramModel, leak: LeakPath) -> bool:
    """Check that every step of a witness names an existing instruction."""
    if leak.steps[0] != (leak.source.method, leak.source.site):
        return False
    if leak.steps[-1] != (leak.sink.method, leak.sink.site):
        return False
    for method, site in leak.steps:
        mdef = app.method_def(method)
        if mdef is None or not 0 <= site < len(mdef.body):
            return False
    return True
