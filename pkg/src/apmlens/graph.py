"""Entry points, call graph and inter-component edges.

Entry points come from two declarative registries shipped in ``data/``:
lifecycle methods of framework components and handler methods of UI callback
interfaces.  Virtual calls are resolved by class hierarchy analysis.  Each
``StartComponent`` site is linked to its target component when the intent's
target class or action can be pinned down by string analysis.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Optional

import networkx as nx

from .model import (
    IntentSetAction, IntentSetTargetClass, Invoke, MethodDef, MethodRef, Move, NewIntent,
    ProgramModel, StartComponent, successors,
)
from .sig import DEFAULT_REGISTRY, SystemRegistry
from .strings import StringOracle, StringValue

ROOT = MethodRef("<synthetic>", "dummyMain", (), "void")
ENTRY_KINDS = ("lifecycle", "ui-callback")
RESOLUTIONS = ("explicit", "implicit", "unresolved")

StringOracleFn = Callable[[MethodDef, int, int], StringValue]


# --------------------------------------------------------------------------
# Registries


@dataclass(frozen=True)
class LifecycleEntry:
    type: str
    kind: str
    methods: frozenset[str]


@dataclass(frozen=True)
class Registries:
    lifecycle: tuple[LifecycleEntry, ...]
    callbacks: dict[str, frozenset[str]]

    def lifecycle_for(self, declared: str, name: str) -> Optional[LifecycleEntry]:
        for e in self.lifecycle:
            if e.type == declared and name in e.methods:
                return e
        return None

    def is_callback(self, declared: str, name: str) -> bool:
        return name in self.callbacks.get(declared, ())


def _read_data(name: str, path: Optional[str | Path]) -> dict:
    if path is None:
        return json.loads(resources.files("apmlens").joinpath(f"data/{name}").read_text(encoding="utf-8"))
    return json.loads(Path(path).read_text(encoding="utf-8"))


def load_registries(lifecycle_path: Optional[str | Path] = None,
                    callbacks_path: Optional[str | Path] = None) -> Registries:
    lc = _read_data("lifecycle.json", lifecycle_path)
    cb = _read_data("callbacks.json", callbacks_path)
    lifecycle = tuple(
        LifecycleEntry(e["type"], e["kind"], frozenset(e["methods"])) for e in lc["components"])
    callbacks: dict[str, frozenset[str]] = {}
    for e in cb["callbacks"]:
        callbacks[e["type"]] = callbacks.get(e["type"], frozenset()) | frozenset(e["methods"])
    return Registries(lifecycle, callbacks)


@lru_cache(maxsize=1)
def default_registries() -> Registries:
    return load_registries()


# --------------------------------------------------------------------------
# Entry points


@dataclass(frozen=True, order=True)
class EntryPoint:
    method: MethodRef
    kind: str  # lifecycle | ui-callback
    declared: str  # registry type the method overrides

    def to_json(self) -> dict:
        return {"method": str(self.method), "kind": self.kind, "declared": self.declared}


def discover_entry_points(app: ProgramModel, registries: Optional[Registries] = None) -> list[EntryPoint]:
    """Methods whose declared override names a registered lifecycle or callback method."""
    reg = registries or default_registries()
    out = []
    for cls in sorted(app.classes.values(), key=lambda c: c.name):
        for m in sorted(cls.methods, key=lambda m: (m.name, m.params)):
            declared = m.declared_overrides
            if declared is None or m.static or not app.is_subtype(cls.name, declared):
                continue
            if reg.lifecycle_for(declared, m.name) is not None:
                out.append(EntryPoint(m.ref(cls.name), "lifecycle", declared))
            elif reg.is_callback(declared, m.name):
                out.append(EntryPoint(m.ref(cls.name), "ui-callback", declared))
    return out


# --------------------------------------------------------------------------
# Call graph


@dataclass(frozen=True, order=True)
class CallEdge:
    caller: MethodRef
    site: int
    callee: MethodRef
    system: bool = False


@dataclass(frozen=True, order=True)
class OpaqueLeaf:
    caller: MethodRef
    site: int
    callee: MethodRef


@dataclass
class CallGraph:
    nodes: set[MethodRef] = field(default_factory=set)
    edges: list[CallEdge] = field(default_factory=list)
    opaque: list[OpaqueLeaf] = field(default_factory=list)


class _Hierarchy:
    def __init__(self, app: ProgramModel, registry: SystemRegistry):
        self.app = app
        self.registry = registry
        self._subtypes: dict[str, list[str]] = {}
        self._ancestors = {c: set(app.ancestors(c)) | {c} for c in app.classes}

    def subtypes(self, name: str) -> list[str]:
        hit = self._subtypes.get(name)
        if hit is None:
            hit = sorted(c for c, anc in self._ancestors.items() if name in anc)
            self._subtypes[name] = hit
        return hit

    def _target(self, host: str, callee: MethodRef) -> Optional[tuple[MethodRef, bool]]:
        if self.registry.is_system(host):
            return MethodRef(host, callee.name, callee.params, callee.ret), True
        declaring, mdef = self.app.resolve(MethodRef(host, callee.name, callee.params, callee.ret))
        if mdef is not None:
            return mdef.ref(declaring), False
        if self.registry.is_system(declaring):
            return MethodRef(declaring, callee.name, callee.params, callee.ret), True
        return None

    def dispatch(self, ins: Invoke) -> tuple[list[tuple[MethodRef, bool]], bool]:
        """Targets of a call as ``(ref, is_system)`` pairs, plus whether an opaque leaf remains.

        Virtual calls go to the method each app subtype of the static host
        would run; static and special calls resolve the host only.
        """
        callee = ins.callee
        targets: dict[MethodRef, bool] = {}
        own = self._target(callee.host, callee)
        if own is not None:
            targets[own[0]] = own[1]
        if ins.is_virtual:
            for sub in self.subtypes(callee.host):
                if sub == callee.host:
                    continue
                hit = self._target(sub, callee)
                if hit is None:
                    continue
                ref, system = hit
                if not system and self.app.method_def(ref).static:
                    continue
                targets[ref] = system
        return sorted(targets.items()), own is None and not targets


def build_call_graph(app: ProgramModel, registry: SystemRegistry = DEFAULT_REGISTRY) -> CallGraph:
    h = _Hierarchy(app, registry)
    cg = CallGraph()
    for cls, m in app.methods():
        caller = m.ref(cls.name)
        cg.nodes.add(caller)
        for i, ins in enumerate(m.body):
            if not isinstance(ins, Invoke):
                continue
            targets, opaque = h.dispatch(ins)
            for ref, system in targets:
                cg.nodes.add(ref)
                cg.edges.append(CallEdge(caller, i, ref, system))
            if opaque:
                cg.opaque.append(OpaqueLeaf(caller, i, ins.callee))
    cg.edges.sort()
    cg.opaque.sort()
    return cg


# --------------------------------------------------------------------------
# Inter-component edges


@dataclass(frozen=True, order=True)
class IccEdge:
    caller: MethodRef
    site: int
    target: Optional[str]
    resolution: str
    note: str = ""

    def to_json(self) -> dict:
        return {
            "from": str(self.caller), "site": self.site, "target": self.target,
            "resolution": self.resolution, "note": self.note,
        }


def intent_allocations(body) -> list[Optional[dict[int, frozenset[int]]]]:
    """For each instruction, which ``NewIntent`` sites each register may hold before it runs."""
    states: list[Optional[dict[int, frozenset[int]]]] = [None] * len(body)
    if not body:
        return states
    states[0] = {}
    work = [0]
    while work:
        i = work.pop()
        s = states[i]
        ins = body[i]
        out = dict(s)
        d = ins.defines()
        if isinstance(ins, NewIntent):
            out[ins.dst] = frozenset({i})
        elif isinstance(ins, Move) and ins.src in s:
            out[ins.dst] = s[ins.src]
        elif d is not None:
            out.pop(d, None)
        for j in successors(body, i):
            cur = states[j]
            if cur is None:
                states[j] = out
                work.append(j)
                continue
            merged = dict(cur)
            for r, v in out.items():
                merged[r] = merged.get(r, frozenset()) | v
            if merged != cur:
                states[j] = merged
                work.append(j)
    return states


def _union(values: Iterable[StringValue]) -> StringValue:
    acc: set[str] = set()
    for v in values:
        if v.is_top:
            return StringValue(None)
        acc |= v.values
    return StringValue(frozenset(acc))


def resolve_intents(app: ProgramModel, caller: MethodRef, method: MethodDef,
                    oracle: StringOracleFn) -> list[IccEdge]:
    allocs = intent_allocations(method.body)
    out = []
    for i, ins in enumerate(method.body):
        if not isinstance(ins, StartComponent) or allocs[i] is None:
            continue
        mine = allocs[i].get(ins.intent, frozenset())
        if not mine:
            out.append(IccEdge(caller, i, None, "unresolved", "intent not allocated in this method"))
            continue
        classes, actions = [], []
        for j, other in enumerate(method.body):
            if allocs[j] is None or not isinstance(other, (IntentSetTargetClass, IntentSetAction)):
                continue
            if not allocs[j].get(other.intent, frozenset()) & mine:
                continue
            value = oracle(method, other.src, j)
            (classes if isinstance(other, IntentSetTargetClass) else actions).append(value)
        out.append(_classify_intent(app, caller, i, classes, actions))
    return out


def _classify_intent(app: ProgramModel, caller: MethodRef, site: int,
                     classes: list[StringValue], actions: list[StringValue]) -> IccEdge:
    if classes:
        value = _union(classes)
        name = value.singleton()
        if name is None:
            note = "target class is not a constant" if value.is_top else \
                "several candidate targets: " + ", ".join(sorted(value.values))
            return IccEdge(caller, site, None, "unresolved", note)
        if name not in app.classes:
            return IccEdge(caller, site, None, "unresolved", f"target class {name} is not defined in the app")
        return IccEdge(caller, site, name, "explicit")
    if actions:
        value = _union(actions)
        action = value.singleton()
        if action is None:
            note = "action is not a constant" if value.is_top else \
                "several candidate actions: " + ", ".join(sorted(value.values))
            return IccEdge(caller, site, None, "unresolved", note)
        matches = sorted(c.name for c in app.manifest.components if action in c.actions)
        if len(matches) == 1:
            return IccEdge(caller, site, matches[0], "implicit")
        if not matches:
            return IccEdge(caller, site, None, "unresolved", f"no intent filter declares {action}")
        return IccEdge(caller, site, None, "unresolved",
                       f"action {action} is ambiguous between " + ", ".join(matches))
    return IccEdge(caller, site, None, "unresolved", "intent has neither target class nor action")


# --------------------------------------------------------------------------
# ICFG


@dataclass
class ICFG:
    app: ProgramModel
    entries: list[EntryPoint]
    call_graph: CallGraph
    icc_edges: list[IccEdge]
    _callers: dict[MethodRef, list[tuple[MethodRef, int]]] = field(default_factory=dict, repr=False)
    _callees: dict[tuple[MethodRef, int], list[CallEdge]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for e in self.call_graph.edges:
            self._callers.setdefault(e.callee, []).append((e.caller, e.site))
            self._callees.setdefault((e.caller, e.site), []).append(e)
        self._entry_kind = {e.method: e.kind for e in self.entries}

    @property
    def root(self) -> MethodRef:
        return ROOT

    def entry_kind(self, ref: MethodRef) -> Optional[str]:
        return self._entry_kind.get(ref)

    def callers(self, ref: MethodRef) -> list[tuple[MethodRef, int]]:
        return self._callers.get(ref, [])

    def callees(self, ref: MethodRef, site: int) -> list[CallEdge]:
        return self._callees.get((ref, site), [])

    def method(self, ref: MethodRef) -> Optional[MethodDef]:
        return self.app.method_def(ref)

    def component_entries(self, component: str) -> list[EntryPoint]:
        return [e for e in self.entries if e.method.host == component]

    def successors(self, ref: MethodRef) -> list[MethodRef]:
        """Methods directly reachable from ``ref`` by a call or an inter-component edge."""
        if ref == ROOT:
            return [e.method for e in self.entries]
        out = {e.callee for e in self.call_graph.edges if e.caller == ref and not e.system}
        for icc in self.icc_edges:
            if icc.caller == ref and icc.target is not None:
                out.update(e.method for e in self.component_entries(icc.target))
        return sorted(out)

    def reachable(self) -> set[MethodRef]:
        seen = {ROOT}
        stack = [ROOT]
        while stack:
            for n in self.successors(stack.pop()):
                if n not in seen:
                    seen.add(n)
                    stack.append(n)
        return seen

    def to_networkx(self) -> nx.MultiDiGraph:
        g = nx.MultiDiGraph()
        g.add_node(str(ROOT))
        for n in sorted(self.call_graph.nodes):
            g.add_node(str(n))
        for e in self.entries:
            g.add_edge(str(ROOT), str(e.method), kind="entry")
        for e in self.call_graph.edges:
            g.add_edge(str(e.caller), str(e.callee), kind="call", site=e.site)
        for icc in self.icc_edges:
            if icc.target is not None:
                for e in self.component_entries(icc.target):
                    g.add_edge(str(icc.caller), str(e.method), kind="icc", site=icc.site)
        return g

    def to_dot(self) -> str:
        """Graphviz text, stable across runs."""
        def q(s) -> str:
            return '"' + str(s).replace("\\", "\\\\").replace('"', '\\"') + '"'

        lines = ["digraph icfg {", f"  {q(ROOT)} [shape=box];"]
        for n in sorted(self.call_graph.nodes):
            lines.append(f"  {q(n)};")
        for e in self.entries:
            lines.append(f"  {q(ROOT)} -> {q(e.method)} [label={q(e.kind)}];")
        for e in self.call_graph.edges:
            lines.append(f"  {q(e.caller)} -> {q(e.callee)} [label={q(e.site)}];")
        for leaf in self.call_graph.opaque:
            lines.append(f"  {q(leaf.caller)} -> {q('opaque:' + str(leaf.callee))} [label={q(leaf.site)}, style=dotted];")
        for icc in self.icc_edges:
            target = icc.target if icc.target is not None else "unresolved"
            lines.append(f"  {q(icc.caller)} -> {q(target)} [label={q(icc.resolution)}, style=dashed];")
        lines.append("}")
        return "\n".join(lines) + "\n"


def build_icfg(app: ProgramModel, entries: Optional[list[EntryPoint]] = None,
               oracle: Optional[StringOracleFn] = None,
               registry: SystemRegistry = DEFAULT_REGISTRY) -> ICFG:
    if entries is None:
        entries = discover_entry_points(app)
    oracle = oracle or StringOracle()
    cg = build_call_graph(app, registry)
    icc = []
    for cls, m in app.methods():
        icc.extend(resolve_intents(app, m.ref(cls.name), m, oracle))
    icc.sort()
    return ICFG(app, list(entries), cg, icc)


# --------------------------------------------------------------------------
# Intra-method ordering


def method_cfg(method: MethodDef) -> nx.DiGraph:
    g = nx.DiGraph()
    g.add_nodes_from(range(len(method.body)))
    for i in range(len(method.body)):
        for j in successors(method.body, i):
            g.add_edge(i, j)
    return g


def dominates(method: MethodDef, a: int, b: int) -> bool:
    """True when every path from the method entry to ``b`` passes through ``a``."""
    if not method.body:
        return False
    g = method_cfg(method)
    idom = nx.immediate_dominators(g, 0)
    if b not in idom:
        return False
    node = b
    while True:
        if node == a:
            return True
        parent = idom[node]
        if parent == node:
            return False
        node = parent


def can_reach(method: MethodDef, a: int, b: int) -> bool:
    """True when ``b`` is reachable from ``a`` by at least one control-flow step."""
    g = method_cfg(method)
    return any(b == s or nx.has_path(g, s, b) for s in g.successors(a))
