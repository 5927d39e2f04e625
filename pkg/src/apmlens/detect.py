"""Signature indexes for libraries and their detection in programs."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Optional

from .model import Invoke, MethodRef, ProgramModel
from .sig import DEFAULT_REGISTRY, GRAMMAR_VERSION, SignatureEncoder, SystemRegistry

if TYPE_CHECKING:
    from .graph import ICFG

log = logging.getLogger(__name__)

ROLES = ("init", "logging", "tracking", "other")
_ROLE_RANK = {r: i for i, r in enumerate(ROLES)}
APPLICATION = "android.app.Application"


class DetectError(Exception):
    pass


class UnresolvedProfileApi(DetectError):
    def __init__(self, ref: MethodRef):
        super().__init__(f"profile API not found in library model: {ref}")
        self.ref = ref


class EmptyLibrary(DetectError):
    pass


class GrammarVersionMismatch(DetectError):
    pass


class IndexFormatError(DetectError):
    pass


@dataclass(frozen=True)
class LibraryProfile:
    library: str
    init_apis: tuple[MethodRef, ...]
    logging_apis: tuple[MethodRef, ...] = ()
    tracking_apis: tuple[MethodRef, ...] = ()

    def __post_init__(self):
        if not self.init_apis:
            raise ValueError(f"profile {self.library!r} declares no init API")

    def role_of(self, ref: MethodRef) -> str:
        for role, apis in (("init", self.init_apis), ("logging", self.logging_apis),
                           ("tracking", self.tracking_apis)):
            if ref in apis:
                return role
        return "other"

    def all_apis(self) -> Iterable[MethodRef]:
        yield from self.init_apis
        yield from self.logging_apis
        yield from self.tracking_apis

    @classmethod
    def from_json(cls, data: dict) -> "LibraryProfile":
        try:
            return cls(
                data["library"],
                tuple(MethodRef.parse(s) for s in data.get("init", [])),
                tuple(MethodRef.parse(s) for s in data.get("logging", [])),
                tuple(MethodRef.parse(s) for s in data.get("tracking", [])),
            )
        except KeyError as exc:
            raise ValueError(f"profile is missing field {exc}") from None

    def to_json(self) -> dict:
        return {
            "library": self.library,
            "init": [str(r) for r in self.init_apis],
            "logging": [str(r) for r in self.logging_apis],
            "tracking": [str(r) for r in self.tracking_apis],
        }

    @classmethod
    def load(cls, path: str | Path) -> "LibraryProfile":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class IndexEntry:
    role: str
    origin: MethodRef


@dataclass
class SignatureIndex:
    library: str
    entries: dict[str, IndexEntry]
    version: int = GRAMMAR_VERSION
    warnings: list[str] = field(default_factory=list)

    def role_count(self, role: str) -> int:
        return sum(1 for e in self.entries.values() if e.role == role)

    def dumps(self) -> str:
        lines = [f"sigidx v{self.version} {self.library}"]
        for sig, e in sorted(self.entries.items()):
            lines.append(f"{e.role}\t{e.origin}\t{sig}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8", newline="\n")

    @classmethod
    def loads(cls, text: str) -> "SignatureIndex":
        lines = text.split("\n")
        header = lines[0].split(" ")
        if len(header) != 3 or header[0] != "sigidx" or not header[1].startswith("v"):
            raise IndexFormatError(f"bad index header: {lines[0]!r}")
        try:
            version = int(header[1][1:])
        except ValueError:
            raise IndexFormatError(f"bad index version: {header[1]!r}") from None
        entries = {}
        for n, line in enumerate(lines[1:], start=2):
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3 or parts[0] not in ROLES:
                raise IndexFormatError(f"line {n}: expected role<TAB>origin<TAB>signature")
            entries[parts[2]] = IndexEntry(parts[0], MethodRef.parse(parts[1]))
        return cls(header[2], entries, version)

    @classmethod
    def load(cls, path: str | Path) -> "SignatureIndex":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def build_index(library_model: ProgramModel, profile: LibraryProfile,
                registry: SystemRegistry = DEFAULT_REGISTRY) -> SignatureIndex:
    """Sign every method of the library and tag profile APIs with their roles."""
    methods = [m.ref(c.name) for c, m in library_model.methods()]
    if not methods:
        raise EmptyLibrary(f"library model for {profile.library!r} has no methods to sign")
    for api in profile.all_apis():
        if library_model.method_def(api) is None:
            raise UnresolvedProfileApi(api)
    enc = SignatureEncoder(library_model, registry)
    groups: dict[str, list[MethodRef]] = {}
    for ref in methods:
        groups.setdefault(enc.signature(ref), []).append(ref)
    index = SignatureIndex(profile.library, {})
    for sig, origins in groups.items():
        origins.sort(key=lambda r: (_ROLE_RANK[profile.role_of(r)], str(r)))
        chosen = origins[0]
        index.entries[sig] = IndexEntry(profile.role_of(chosen), chosen)
        if len(origins) > 1:
            msg = f"signature collision in {profile.library}: " + ", ".join(map(str, origins))
            log.warning(msg)
            index.warnings.append(msg)
    return index


@dataclass(frozen=True, order=True)
class DetectionResult:
    library: str
    app_method: MethodRef
    matched_via: str  # "own-method" | "callee-entry"
    role: str
    api: MethodRef  # library method whose signature matched
    in_library_code: bool = False
    sites: tuple[int, ...] = ()

    def to_json(self) -> dict:
        return {
            "library": self.library,
            "app_method": str(self.app_method),
            "matched_via": self.matched_via,
            "role": self.role,
            "api": str(self.api),
            "in_library_code": self.in_library_code,
            "sites": list(self.sites),
        }


def detect_libraries(app: ProgramModel, indexes: list[SignatureIndex],
                     registry: SystemRegistry = DEFAULT_REGISTRY,
                     encoder: Optional[SignatureEncoder] = None) -> list[DetectionResult]:
    """Match every app method against the indexes, by own signature and by callee entries."""
    for idx in indexes:
        if idx.version != GRAMMAR_VERSION:
            raise GrammarVersionMismatch(
                f"index {idx.library!r} uses grammar v{idx.version}, expected v{GRAMMAR_VERSION}")
    enc = encoder or SignatureEncoder(app, registry)
    results: set[DetectionResult] = set()
    for cls, m in app.methods():
        ref = m.ref(cls.name)
        in_lib = cls.origin == "embedded-library"
        own = enc.signature(ref)
        entries = set(enc.callee_entries(ref))
        for idx in indexes:
            hit = idx.entries.get(own)
            if hit is not None:
                results.add(DetectionResult(idx.library, ref, "own-method", hit.role, hit.origin, in_lib))
            for sig in entries:
                hit = idx.entries.get(sig)
                if hit is None or hit.role == "other":
                    continue
                sites = tuple(
                    i for i, ins in enumerate(m.body)
                    if isinstance(ins, Invoke) and enc.call_entry(ins, ref) == sig
                )
                results.add(DetectionResult(idx.library, ref, "callee-entry", hit.role, hit.origin, in_lib, sites))
    return sorted(results, key=_result_key)


def _result_key(r: DetectionResult):
    return (r.library, str(r.app_method), r.matched_via, r.role, str(r.api), r.sites)


def library_usage(results: Iterable[DetectionResult]) -> dict[str, str]:
    """``used`` when app code calls an init API, otherwise ``present``."""
    status: dict[str, str] = {}
    for r in results:
        if r.role == "init" and r.matched_via == "callee-entry" and not r.in_library_code:
            status[r.library] = "used"
        else:
            status.setdefault(r.library, "present")
    return dict(sorted(status.items()))


@dataclass(frozen=True)
class InitSite:
    library: str
    method: MethodRef
    class_name: str
    sites: tuple[int, ...]
    is_application_entry: bool
    is_lifecycle: bool

    def to_json(self) -> dict:
        return {
            "library": self.library,
            "method": str(self.method),
            "class": self.class_name,
            "sites": list(self.sites),
            "is_application_entry": self.is_application_entry,
            "is_lifecycle": self.is_lifecycle,
        }


def locate_initialization(app: ProgramModel, results: Iterable[DetectionResult], icfg: "ICFG") -> list[InitSite]:
    out = []
    for r in results:
        if r.role != "init" or r.matched_via != "callee-entry" or r.in_library_code:
            continue
        kind = icfg.entry_kind(r.app_method)
        is_lifecycle = kind == "lifecycle"
        mdef = app.method_def(r.app_method)
        overrides = mdef.declared_overrides if mdef else None
        is_app_entry = is_lifecycle and (
            overrides == APPLICATION or app.is_subtype(r.app_method.host, APPLICATION))
        out.append(InitSite(r.library, r.app_method, r.app_method.host, r.sites, is_app_entry, is_lifecycle))
    return sorted(out, key=lambda s: (s.library, str(s.method)))
