"""Misuse and compatibility checks for monitoring libraries.

Rules:

* R1  a deprecated or dangerous permission is requested
* R2  a sensitive system file path reaches a file-open call
* R3  more than one crash-capturing library is initialized
* R4  an API is used outside the SDK levels where it behaves
* R5  sensitive data reaches a library logging or tracking call

The thresholds, paths and permission lists live in ``data/apm-kb.json``.
"""
from __future__ import annotations

import fnmatch
import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

from .detect import InitSite
from .graph import ICFG, can_reach, dominates
from .model import Invoke, MethodRef, ProgramModel
from .strings import StringOracle
from .taint import LeakPath

RULES = ("R1", "R2", "R3", "R4", "R5")
SEVERITIES = ("error", "warning", "info")
MAX_API_LEVEL = 40


class KnowledgeBaseError(ValueError):
    pass


@dataclass(frozen=True)
class PermissionEntry:
    name: str
    severity: str
    status: str
    reason: str

    @property
    def short(self) -> str:
        return self.name.rsplit(".", 1)[-1]


@dataclass(frozen=True)
class PathEntry:
    path: str
    pattern: str
    reason: str
    broken_from_level: Optional[int] = None

    def matches(self, value: str) -> bool:
        return re.match(self.pattern, value) is not None


@dataclass(frozen=True)
class FileOpenApi:
    api: str
    path_arg: int


@dataclass(frozen=True)
class ApiConstraint:
    id: str
    feature: str
    api: str
    consequence: str
    min_level: Optional[int] = None
    max_level: Optional[int] = None


@dataclass(frozen=True)
class ApmKnowledgeBase:
    permissions: tuple[PermissionEntry, ...]
    sensitive_paths: tuple[PathEntry, ...]
    file_open_apis: tuple[FileOpenApi, ...]
    api_constraints: tuple[ApiConstraint, ...]
    libraries: tuple[dict, ...] = ()
    anti_patterns: tuple[dict, ...] = ()

    def permission(self, name: str) -> Optional[PermissionEntry]:
        for p in self.permissions:
            if name in (p.name, p.short):
                return p
        return None

    def library(self, name: str) -> Optional[dict]:
        key = name.lower().replace(" ", "")
        for lib in self.libraries:
            if lib["name"].lower().replace(" ", "") == key:
                return lib
        return None

    def captures_crashes(self, library: str) -> bool:
        """Libraries missing from the table are assumed to install a crash handler."""
        lib = self.library(library)
        return lib is None or bool(lib["functions"].get("crash_java", True))


def _level(value, where: str) -> Optional[int]:
    if value is None:
        return None
    if not isinstance(value, int) or isinstance(value, bool) or not 1 <= value <= MAX_API_LEVEL:
        raise KnowledgeBaseError(f"{where}: invalid API level {value!r}")
    return value


def _cite(entry: dict, where: str) -> None:
    if "rule" not in entry:
        raise KnowledgeBaseError(f"{where}: entry does not cite a rule id")


def parse_kb(data: dict) -> ApmKnowledgeBase:
    try:
        perms, paths, apis, cons = [], [], [], []
        for i, e in enumerate(data["permissions"]):
            _cite(e, f"permissions[{i}]")
            if e["severity"] not in SEVERITIES:
                raise KnowledgeBaseError(f"permissions[{i}]: bad severity {e['severity']!r}")
            perms.append(PermissionEntry(e["name"], e["severity"], e.get("status", ""), e["reason"]))
        for i, e in enumerate(data["sensitive_paths"]):
            _cite(e, f"sensitive_paths[{i}]")
            re.compile(e["pattern"])
            paths.append(PathEntry(e["path"], e["pattern"], e["reason"],
                                   _level(e.get("broken_from_level"), f"sensitive_paths[{i}]")))
        for i, e in enumerate(data.get("file_open_apis", [])):
            _cite(e, f"file_open_apis[{i}]")
            apis.append(FileOpenApi(e["api"], int(e["path_arg"])))
        for i, e in enumerate(data["api_constraints"]):
            where = f"api_constraints[{i}]"
            _cite(e, where)
            c = ApiConstraint(e["id"], e["feature"], e["api"], e["consequence"],
                              _level(e.get("min_level"), where), _level(e.get("max_level"), where))
            if c.min_level is None and c.max_level is None:
                raise KnowledgeBaseError(f"{where}: needs min_level or max_level")
            cons.append(c)
        for i, e in enumerate(data.get("libraries", [])):
            _cite(e, f"libraries[{i}]")
        for i, e in enumerate(data.get("anti_patterns", [])):
            _cite(e, f"anti_patterns[{i}]")
    except KeyError as exc:
        raise KnowledgeBaseError(f"knowledge base is missing field {exc}") from None
    return ApmKnowledgeBase(tuple(perms), tuple(paths), tuple(apis), tuple(cons),
                            tuple(data.get("libraries", [])), tuple(data.get("anti_patterns", [])))


def load_kb(path: Optional[str | Path] = None) -> ApmKnowledgeBase:
    if path is None:
        text = resources.files("apmlens").joinpath("data/apm-kb.json").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return parse_kb(json.loads(text))


# --------------------------------------------------------------------------
# Findings


@dataclass(frozen=True, order=True)
class Evidence:
    """A call site, or a manifest entry when ``method`` is None."""

    method: Optional[MethodRef]
    site: Optional[int]
    note: str = ""

    def to_json(self) -> dict:
        return {"method": None if self.method is None else str(self.method), "site": self.site, "note": self.note}


@dataclass(frozen=True)
class LintFinding:
    rule: str
    severity: str
    subject: str
    evidence: tuple[Evidence, ...]
    message: str

    def sort_key(self):
        return (self.rule, self.subject, [(str(e.method), e.site, e.note) for e in self.evidence], self.message)

    def to_json(self) -> dict:
        return {
            "rule": self.rule, "severity": self.severity, "subject": self.subject,
            "evidence": [e.to_json() for e in self.evidence], "message": self.message,
        }


def evidence_resolves(app: ProgramModel, finding: LintFinding) -> bool:
    for e in finding.evidence:
        if e.method is None:
            if e.note.startswith("manifest permission ") and \
                    e.note[len("manifest permission "):] not in app.manifest.permissions:
                return False
            continue
        mdef = app.method_def(e.method)
        if mdef is None or e.site is None or not 0 <= e.site < len(mdef.body):
            return False
    return True


def _short(ref: MethodRef) -> str:
    return f"{ref.host}.{ref.name}"


# --------------------------------------------------------------------------
# Rules


def rule_permissions(app: ProgramModel, kb: ApmKnowledgeBase) -> list[LintFinding]:
    out = []
    for perm in app.manifest.permissions:
        entry = kb.permission(perm)
        if entry is None:
            continue
        out.append(LintFinding(
            "R1", entry.severity, perm, (Evidence(None, None, f"manifest permission {perm}"),),
            f"manifest requests {entry.short} ({entry.status}): {entry.reason}",
        ))
    return out


def _call_targets(icfg: ICFG, caller: MethodRef, site: int, ins: Invoke) -> list[str]:
    names = {str(ins.callee)}
    names.update(str(e.callee) for e in icfg.callees(caller, site) if e.system)
    return sorted(names)


def rule_sensitive_paths(app: ProgramModel, icfg: ICFG, kb: ApmKnowledgeBase,
                         oracle: StringOracle) -> list[LintFinding]:
    apis = {a.api: a for a in kb.file_open_apis}
    out = []
    for cls, m in app.methods():
        ref = m.ref(cls.name)
        for i, ins in enumerate(m.body):
            if not isinstance(ins, Invoke):
                continue
            api = next((apis[t] for t in _call_targets(icfg, ref, i, ins) if t in apis), None)
            if api is None or api.path_arg >= len(ins.args):
                continue
            value = oracle(m, ins.args[api.path_arg], i)
            if value.is_top:
                continue
            for entry in kb.sensitive_paths:
                hits = sorted(v for v in value.values if entry.matches(v))
                if not hits:
                    continue
                ev = (Evidence(ref, i, f"opens {hits[0]}"),)
                if entry.broken_from_level is not None:
                    level = entry.broken_from_level
                    broken = app.manifest.min_sdk >= level
                    msg = (f"{_short(ref)} opens {entry.path}, which apps cannot read from API {level} on "
                           f"(minSdk {app.manifest.min_sdk}); it also exposes {entry.reason}")
                    out.append(LintFinding("R2", "error" if broken else "warning", entry.path, ev, msg))
                else:
                    msg = f"{_short(ref)} opens {entry.path}, which exposes {entry.reason}"
                    out.append(LintFinding("R2", "warning", entry.path, ev, msg))
    return out


def _chain(icfg: ICFG, method: MethodRef, sites: tuple[int, ...]) -> list[tuple[MethodRef, tuple[int, ...]]]:
    """Walk up while a method has exactly one calling method and is not an entry point."""
    chain = [(method, sites)]
    seen = {method}
    while icfg.entry_kind(method) is None:
        callers = icfg.callers(method)
        methods = {c for c, _ in callers}
        if len(methods) != 1:
            break
        caller = methods.pop()
        if caller in seen:
            break
        seen.add(caller)
        method, sites = caller, tuple(sorted(s for c, s in callers if c == caller))
        chain.append((method, sites))
    return chain


def _last_initialized(icfg: ICFG, by_lib: dict[str, list[InitSite]]) -> Optional[tuple[str, MethodRef, int]]:
    """Library whose init provably runs after every other one, with the deciding site."""
    projections: dict[str, dict[MethodRef, set[int]]] = {}
    for lib, inits in by_lib.items():
        common: Optional[dict[MethodRef, set[int]]] = None
        for init in inits:
            here = {m: set(s) for m, s in _chain(icfg, init.method, init.sites)}
            if common is None:
                common = here
            else:
                common = {m: common[m] | here[m] for m in common if m in here}
        projections[lib] = common or {}
    libs = sorted(projections)
    shared = set.intersection(*(set(p) for p in projections.values()))
    for method in sorted(shared):
        mdef = icfg.method(method)
        for last in libs:
            others = [lib for lib in libs if lib != last]
            last_sites = projections[last][method]
            ordered = all(
                a != b and dominates(mdef, a, b) and not can_reach(mdef, b, a)
                for lib in others for a in projections[lib][method] for b in last_sites
            )
            if ordered:
                return last, method, max(last_sites)
    return None


def rule_multiple_apms(icfg: ICFG, init_sites: Iterable[InitSite], kb: ApmKnowledgeBase) -> list[LintFinding]:
    by_lib: dict[str, list[InitSite]] = {}
    for s in init_sites:
        if kb.captures_crashes(s.library):
            by_lib.setdefault(s.library, []).append(s)
    if len(by_lib) < 2:
        return []
    libs = sorted(by_lib)
    evidence = tuple(sorted(Evidence(s.method, site, f"{s.library} init")
                            for lib in libs for s in by_lib[lib] for site in s.sites))
    msg = (f"{len(libs)} crash-reporting libraries are initialized ({', '.join(libs)}); "
           f"each replaces the default uncaught-exception handler, so only the last initialized one reports Java crashes")
    winner = _last_initialized(icfg, by_lib)
    if winner is None:
        msg += "; the initialization order is not statically provable"
    else:
        lib, method, site = winner
        msg += f"; {lib} is the last initialized (at {_short(method)}:{site}) and wins crash capture"
    return [LintFinding("R3", "warning", ",".join(libs), evidence, msg)]


def rule_api_levels(app: ProgramModel, icfg: ICFG, kb: ApmKnowledgeBase) -> list[LintFinding]:
    out = []
    man = app.manifest
    for c in kb.api_constraints:
        sites = []
        for cls, m in app.methods():
            ref = m.ref(cls.name)
            for i, ins in enumerate(m.body):
                if isinstance(ins, Invoke) and any(fnmatch.fnmatchcase(t, c.api)
                                                   for t in _call_targets(icfg, ref, i, ins)):
                    sites.append(Evidence(ref, i, str(ins.callee)))
        if not sites:
            continue
        if c.min_level is not None and man.min_sdk < c.min_level:
            msg = f"{c.feature} needs API {c.min_level} but minSdk is {man.min_sdk}: {c.consequence}"
            out.append(LintFinding("R4", "warning", c.id, tuple(sorted(sites)), msg))
        if c.max_level is not None and man.target_sdk > c.max_level:
            msg = f"{c.feature} changes after API {c.max_level} and targetSdk is {man.target_sdk}: {c.consequence}"
            out.append(LintFinding("R4", "warning", c.id, tuple(sorted(sites)), msg))
    return out


def rule_leaks(leaks: Iterable[LeakPath]) -> list[LintFinding]:
    out = []
    for leak in leaks:
        src = leak.source
        origin = f"UI field {src.what} ({src.ui_category})" if src.kind == "ui" else src.what
        perms = f" guarded by {', '.join(src.permissions)}" if src.permissions else ""
        msg = (f"sensitive data from {origin}{perms} at {_short(src.method)}:{src.site} "
               f"reaches {leak.sink.api} at {_short(leak.sink.method)}:{leak.sink.site}")
        ev = (Evidence(src.method, src.site, "source"), Evidence(leak.sink.method, leak.sink.site, "sink"))
        out.append(LintFinding("R5", "error", leak.sink.api, ev, msg))
    return out


def run_lints(app: ProgramModel, init_sites: Iterable[InitSite], icfg: ICFG, kb: ApmKnowledgeBase,
              leaks: Iterable[LeakPath] = (), oracle: Optional[StringOracle] = None,
              rules: Iterable[str] = RULES) -> list[LintFinding]:
    enabled = set(rules)
    unknown = enabled - set(RULES)
    if unknown:
        raise ValueError(f"unknown lint rules: {', '.join(sorted(unknown))}")
    oracle = oracle or StringOracle()
    out: list[LintFinding] = []
    if "R1" in enabled:
        out += rule_permissions(app, kb)
    if "R2" in enabled:
        out += rule_sensitive_paths(app, icfg, kb, oracle)
    if "R3" in enabled:
        out += rule_multiple_apms(icfg, init_sites, kb)
    if "R4" in enabled:
        out += rule_api_levels(app, icfg, kb)
    if "R5" in enabled:
        out += rule_leaks(leaks)
    return sorted(out, key=LintFinding.sort_key)
