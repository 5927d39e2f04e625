"""Rename-invariant type and method signatures.

A type defined in the analysed program is encoded by its shape in the class
hierarchy (superclass encoding followed by the sorted interface encodings in
brackets); system types keep their names and opaque external types become
``x``.  A method signature is the host encoding, the parameter and return
encodings, and the sorted, deduplicated set of callee entries: system callees
appear by name, program callees by their own (recursive) signature.

Grammar (version 1, see ``docs/SIGNATURE-FORMAT.md``)::

    signature := type "(" [type ("," type)*] ")" type ["{" [entry (";" entry)*] "}"]
    entry     := "@rec" | signature
    type      := NAME ("[" [type ("," type)*] "]")*
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Optional, Union

from .model import OBJECT, SYSTEM_PREFIXES, Invoke, MethodRef, ProgramModel, element_type, is_system_type

log = logging.getLogger(__name__)

GRAMMAR_VERSION = 1
OPAQUE = "x"
OPAQUE_CALLEE = "x()x{}"
REC = "@rec"


class HierarchyCycle(Exception):
    pass


@dataclass(frozen=True)
class SystemRegistry:
    prefixes: tuple[str, ...] = SYSTEM_PREFIXES

    def __post_init__(self):
        if not self.prefixes or any(not p.endswith(".") for p in self.prefixes):
            raise ValueError("system prefixes must be non-empty and end with '.'")

    def is_system(self, name: str) -> bool:
        return is_system_type(name, self.prefixes)


DEFAULT_REGISTRY = SystemRegistry()


@dataclass
class EncodingContext:
    """Per-run caches.  ``in_progress`` is empty between top-level calls."""

    memo: dict[MethodRef, str] = field(default_factory=dict)
    in_progress: dict[MethodRef, None] = field(default_factory=dict)
    entries: dict[MethodRef, tuple[str, ...]] = field(default_factory=dict)
    cut_memo: dict[tuple[MethodRef, frozenset], tuple[str, frozenset]] = field(default_factory=dict)
    types: dict[str, str] = field(default_factory=dict)
    reach: dict[MethodRef, frozenset] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)


class SignatureEncoder:
    """Signature computation over one model, with caching."""

    def __init__(self, model: ProgramModel, registry: SystemRegistry = DEFAULT_REGISTRY,
                 ctx: Optional[EncodingContext] = None):
        self.model = model
        self.registry = registry
        self.ctx = ctx if ctx is not None else EncodingContext()

    # -- types -------------------------------------------------------------
    def encode_type(self, target: str, host: Optional[str] = None) -> str:
        # ``host`` is accepted for parity with the algorithm's signature; the
        # encoding does not depend on it.
        cached = self.ctx.types.get(target)
        if cached is None:
            cached = self._encode_type(target, ())
            self.ctx.types[target] = cached
        return cached

    def _encode_type(self, target: str, stack: tuple[str, ...]) -> str:
        base = element_type(target)
        dims = (len(target) - len(base)) // 2
        if base in stack:
            raise HierarchyCycle(" -> ".join((*stack, base)))
        if self.registry.is_system(base):
            text = base
        elif base in self.model.classes:
            cls = self.model.classes[base]
            inner = (*stack, base)
            sup = self._encode_type(cls.superclass or OBJECT, inner)
            ifaces = sorted(self._encode_type(i, inner) for i in cls.interfaces)
            text = f"{sup}[{','.join(ifaces)}]"
        else:
            text = OPAQUE
        return text + "[]" * dims

    # -- methods -----------------------------------------------------------
    def classify_callee(self, callee: MethodRef) -> tuple[str, Optional[MethodRef]]:
        """Return ``("app", declaring_ref)``, ``("system", system_ref)`` or ``("opaque", None)``."""
        if self.registry.is_system(callee.host):
            return "system", callee
        declaring, mdef = self.model.resolve(callee)
        if mdef is not None:
            return "app", mdef.ref(declaring)
        if self.registry.is_system(declaring):
            return "system", MethodRef(declaring, callee.name, callee.params, callee.ret)
        return "opaque", None

    def system_entry(self, ref: MethodRef) -> str:
        params = ",".join(self.encode_type(p) for p in ref.params)
        return f"{ref.host}.{ref.name}({params}){self.encode_type(ref.ret)}"

    def signature(self, ref: MethodRef) -> str:
        kind, target = self.classify_callee(ref)
        if kind == "system":
            return self.system_entry(target)
        if kind == "opaque":
            self._warn(f"unresolved method {ref}")
            return OPAQUE_CALLEE
        assert not self.ctx.in_progress
        text, _ = self._signature(target)
        return text

    def callee_entries(self, ref: MethodRef) -> tuple[str, ...]:
        """Sorted callee entries of ``ref`` as they appear in its signature."""
        kind, target = self.classify_callee(ref)
        if kind != "app":
            return ()
        if target not in self.ctx.entries:
            self.signature(target)
        return self.ctx.entries[target]

    def call_entry(self, ins: Invoke, caller: Optional[MethodRef] = None) -> str:
        """Entry a call site contributes to its caller's signature."""
        kind, target = self.classify_callee(ins.callee)
        if kind == "system":
            return self.system_entry(target)
        if kind == "opaque":
            return OPAQUE_CALLEE
        if caller is None:
            return self.signature(target)
        if target == caller:
            return REC
        self.ctx.in_progress[caller] = None
        try:
            text, _ = self._signature(target)
        finally:
            del self.ctx.in_progress[caller]
        return text

    def _reach(self, ref: MethodRef) -> frozenset:
        """App methods transitively callable from ``ref`` (including itself)."""
        if ref in self.ctx.reach:
            return self.ctx.reach[ref]
        seen = {ref}
        stack = [ref]
        while stack:
            cur = stack.pop()
            mdef = self.model.method_def(cur)
            for ins in mdef.body if mdef else ():
                if isinstance(ins, Invoke):
                    kind, tgt = self.classify_callee(ins.callee)
                    if kind == "app" and tgt not in seen:
                        seen.add(tgt)
                        stack.append(tgt)
        result = frozenset(seen)
        self.ctx.reach[ref] = result
        return result

    def _signature(self, ref: MethodRef) -> tuple[str, frozenset]:
        """Return the signature text and the in-progress methods cut below ``ref``."""
        ctx = self.ctx
        # The result depends only on which reachable methods are in progress.
        relevant = frozenset(ctx.in_progress) & self._reach(ref)
        if not relevant and ref in ctx.memo:
            return ctx.memo[ref], frozenset()
        key = (ref, relevant)
        if key in ctx.cut_memo:
            return ctx.cut_memo[key]
        mdef = self.model.method_def(ref)
        ctx.in_progress[ref] = None
        try:
            entries: set[str] = set()
            cuts: set[MethodRef] = set()
            for ins in mdef.body:
                if not isinstance(ins, Invoke):
                    continue
                kind, target = self.classify_callee(ins.callee)
                if kind == "system":
                    entries.add(self.system_entry(target))
                elif kind == "opaque":
                    self._warn(f"unresolved callee {ins.callee} in {ref}")
                    entries.add(OPAQUE_CALLEE)
                elif target in ctx.in_progress:
                    entries.add(REC)
                    cuts.add(target)
                else:
                    text, sub_cuts = self._signature(target)
                    entries.add(text)
                    cuts |= sub_cuts
        finally:
            del ctx.in_progress[ref]
        cuts.discard(ref)
        ordered = tuple(sorted(entries))
        host = self.encode_type(ref.host)
        params = ",".join(self.encode_type(p) for p in ref.params)
        text = f"{host}({params}){self.encode_type(ref.ret)}{{{';'.join(ordered)}}}"
        if relevant:
            ctx.cut_memo[key] = (text, frozenset(cuts))
        else:
            ctx.entries[ref] = ordered
            ctx.memo[ref] = text
        return text, frozenset(cuts)

    def _warn(self, message: str) -> None:
        if message not in self.ctx.warnings:
            log.debug(message)
            self.ctx.warnings.append(message)


def encode_type(host: str, target: str, model: ProgramModel,
                registry: SystemRegistry = DEFAULT_REGISTRY) -> str:
    """Rename-invariant encoding of ``target`` as used from ``host``."""
    return SignatureEncoder(model, registry).encode_type(target, host)


def method_signature(f: MethodRef, model: ProgramModel, registry: SystemRegistry = DEFAULT_REGISTRY,
                     ctx: Optional[EncodingContext] = None) -> str:
    return SignatureEncoder(model, registry, ctx).signature(f)


def canonical_compare(a: str, b: str) -> bool:
    """Signatures match only when textually identical."""
    return a == b


# --------------------------------------------------------------------------
# Parser


@dataclass(frozen=True)
class TypeNode:
    name: str
    groups: tuple[tuple["TypeNode", ...], ...] = ()

    def __str__(self) -> str:
        return self.name + "".join("[" + ",".join(map(str, g)) + "]" for g in self.groups)


@dataclass(frozen=True)
class SigNode:
    head: TypeNode
    params: tuple[TypeNode, ...]
    ret: TypeNode
    callees: Optional[tuple[Union["SigNode", str], ...]] = None

    @property
    def is_system_entry(self) -> bool:
        return self.callees is None

    def __str__(self) -> str:
        text = f"{self.head}({','.join(map(str, self.params))}){self.ret}"
        if self.callees is not None:
            text += "{" + ";".join(map(str, self.callees)) + "}"
        return text


class SignatureSyntaxError(ValueError):
    pass


_NAME = re.compile(r"[A-Za-z0-9_$.<>]+")


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, msg: str) -> SignatureSyntaxError:
        return SignatureSyntaxError(f"{msg} at offset {self.pos} in {self.text!r}")

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str) -> None:
        if self.peek() != ch:
            raise self.error(f"expected {ch!r}")
        self.pos += 1

    def type(self) -> TypeNode:
        m = _NAME.match(self.text, self.pos)
        if not m:
            raise self.error("expected a type name")
        self.pos = m.end()
        groups = []
        while self.peek() == "[":
            self.pos += 1
            groups.append(self.type_list("]"))
            self.expect("]")
        return TypeNode(m.group(), tuple(groups))

    def type_list(self, close: str) -> tuple[TypeNode, ...]:
        items = []
        if self.peek() != close:
            items.append(self.type())
            while self.peek() == ",":
                self.pos += 1
                items.append(self.type())
        return tuple(items)

    def signature(self) -> SigNode:
        head = self.type()
        self.expect("(")
        params = self.type_list(")")
        self.expect(")")
        ret = self.type()
        callees = None
        if self.peek() == "{":
            self.pos += 1
            entries: list[Union[SigNode, str]] = []
            if self.peek() != "}":
                entries.append(self.entry())
                while self.peek() == ";":
                    self.pos += 1
                    entries.append(self.entry())
            self.expect("}")
            callees = tuple(entries)
        return SigNode(head, params, ret, callees)

    def entry(self) -> Union[SigNode, str]:
        if self.text.startswith(REC, self.pos):
            self.pos += len(REC)
            return REC
        return self.signature()


def parse_signature(text: str) -> SigNode:
    p = _Parser(text)
    node = p.signature()
    if p.pos != len(text):
        raise p.error("trailing input")
    return node
