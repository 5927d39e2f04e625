"""Normalized program model: a small register-based IR plus manifest and layout data.

The on-disk form is JSON (see ``docs/MODEL-SCHEMA.md``).  Everything in this
module is immutable after loading; analyses share one model by reference.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, ClassVar, Iterable, Iterator, Optional

SCHEMA_VERSION = 1

SYSTEM_PREFIXES: tuple[str, ...] = ("java.", "javax.", "android.", "androidx.", "kotlin.", "dalvik.")
PRIMITIVES = frozenset({"void", "boolean", "byte", "char", "short", "int", "long", "float", "double"})
OBJECT = "java.lang.Object"

ORIGINS = ("app", "embedded-library")
COMPONENT_KINDS = ("activity", "service", "receiver")

_TYPE_RE = re.compile(r"^[A-Za-z_$][\w$.]*(\[\])*$")
_METHOD_REF_RE = re.compile(
    r"^(?P<host>[^\s()]+)\.(?P<name>[^\s.()]+)\((?P<params>[^()]*)\)(?P<ret>[^\s()]+)$"
)


class ModelError(Exception):
    """Base class for model loading problems."""


class ParseError(ModelError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class SchemaError(ModelError):
    pass


def is_valid_type_name(name: str) -> bool:
    return bool(name) and _TYPE_RE.match(name) is not None


def element_type(name: str) -> str:
    while name.endswith("[]"):
        name = name[:-2]
    return name


def is_system_type(name: str, prefixes: Iterable[str] = SYSTEM_PREFIXES) -> bool:
    base = element_type(name)
    return base in PRIMITIVES or any(base.startswith(p) for p in prefixes)


@dataclass(frozen=True, order=True)
class MethodRef:
    host: str
    name: str
    params: tuple[str, ...] = ()
    ret: str = "void"

    def __str__(self) -> str:
        return f"{self.host}.{self.name}({','.join(self.params)}){self.ret}"

    @classmethod
    def parse(cls, text: str) -> "MethodRef":
        m = _METHOD_REF_RE.match(text.strip())
        if not m:
            raise ValueError(f"malformed method reference: {text!r}")
        params = tuple(p.strip() for p in m["params"].split(",") if p.strip())
        return cls(m["host"], m["name"], params, m["ret"])

    @property
    def subsig(self) -> tuple[str, tuple[str, ...]]:
        return (self.name, self.params)


# --------------------------------------------------------------------------
# Instructions


@dataclass(frozen=True)
class Instruction:
    op: ClassVar[str] = ""

    def uses(self) -> tuple[int, ...]:
        return ()

    def defines(self) -> Optional[int]:
        return getattr(self, "dst", None)


@dataclass(frozen=True)
class ConstString(Instruction):
    op: ClassVar[str] = "const-string"
    dst: int
    value: str


@dataclass(frozen=True)
class ConstOther(Instruction):
    op: ClassVar[str] = "const"
    dst: int
    type: str


@dataclass(frozen=True)
class Move(Instruction):
    op: ClassVar[str] = "move"
    dst: int
    src: int

    def uses(self):
        return (self.src,)


@dataclass(frozen=True)
class Concat(Instruction):
    op: ClassVar[str] = "concat"
    dst: int
    a: int
    b: int

    def uses(self):
        return (self.a, self.b)


@dataclass(frozen=True)
class Invoke(Instruction):
    op: ClassVar[str] = "invoke"
    callee: MethodRef
    args: tuple[int, ...] = ()
    dst: Optional[int] = None
    receiver: Optional[int] = None
    kind: str = "static"  # static | virtual | special

    def uses(self):
        if self.receiver is None:
            return tuple(self.args)
        return (self.receiver, *self.args)

    @property
    def is_virtual(self) -> bool:
        return self.kind == "virtual"


@dataclass(frozen=True)
class FieldPut(Instruction):
    op: ClassVar[str] = "field-put"
    owner: str
    field: str
    src: int

    def uses(self):
        return (self.src,)


@dataclass(frozen=True)
class FieldGet(Instruction):
    op: ClassVar[str] = "field-get"
    dst: int
    owner: str
    field: str


@dataclass(frozen=True)
class FindView(Instruction):
    op: ClassVar[str] = "find-view"
    dst: int
    resource: str


@dataclass(frozen=True)
class NewIntent(Instruction):
    op: ClassVar[str] = "new-intent"
    dst: int


@dataclass(frozen=True)
class IntentSetTargetClass(Instruction):
    op: ClassVar[str] = "intent-set-class"
    intent: int
    src: int

    def uses(self):
        return (self.intent, self.src)


@dataclass(frozen=True)
class IntentSetAction(Instruction):
    op: ClassVar[str] = "intent-set-action"
    intent: int
    src: int

    def uses(self):
        return (self.intent, self.src)


@dataclass(frozen=True)
class PutExtra(Instruction):
    op: ClassVar[str] = "put-extra"
    intent: int
    key: int
    value: int

    def uses(self):
        return (self.intent, self.key, self.value)


@dataclass(frozen=True)
class GetExtra(Instruction):
    op: ClassVar[str] = "get-extra"
    dst: int
    key: int

    def uses(self):
        return (self.key,)


@dataclass(frozen=True)
class StartComponent(Instruction):
    op: ClassVar[str] = "start-component"
    intent: int

    def uses(self):
        return (self.intent,)


@dataclass(frozen=True)
class Return(Instruction):
    op: ClassVar[str] = "return"
    src: Optional[int] = None

    def uses(self):
        return () if self.src is None else (self.src,)


@dataclass(frozen=True)
class Goto(Instruction):
    op: ClassVar[str] = "goto"
    target: int


@dataclass(frozen=True)
class Branch(Instruction):
    """Nondeterministic branch: falls through or jumps to any of ``targets``."""

    op: ClassVar[str] = "branch"
    targets: tuple[int, ...]


INSTRUCTION_TYPES: dict[str, type[Instruction]] = {
    cls.op: cls
    for cls in (
        ConstString, ConstOther, Move, Concat, Invoke, FieldPut, FieldGet, FindView,
        NewIntent, IntentSetTargetClass, IntentSetAction, PutExtra, GetExtra,
        StartComponent, Return, Goto, Branch,
    )
}


def successors(body: tuple[Instruction, ...], index: int) -> tuple[int, ...]:
    """Control-flow successors of ``body[index]``; out-of-range targets are dropped."""
    ins = body[index]
    n = len(body)
    if isinstance(ins, Return):
        out: tuple[int, ...] = ()
    elif isinstance(ins, Goto):
        out = (ins.target,)
    elif isinstance(ins, Branch):
        out = (index + 1, *ins.targets)
    else:
        out = (index + 1,)
    return tuple(sorted({s for s in out if 0 <= s < n}))


def predecessors(body: tuple[Instruction, ...]) -> list[list[int]]:
    preds: list[list[int]] = [[] for _ in body]
    for i in range(len(body)):
        for s in successors(body, i):
            preds[s].append(i)
    return preds


# --------------------------------------------------------------------------
# Declarations


@dataclass(frozen=True)
class MethodDef:
    name: str
    params: tuple[str, ...] = ()
    return_type: str = "void"
    body: tuple[Instruction, ...] = ()
    declared_overrides: Optional[str] = None
    static: bool = False

    def ref(self, host: str) -> MethodRef:
        return MethodRef(host, self.name, self.params, self.return_type)

    @property
    def subsig(self) -> tuple[str, tuple[str, ...]]:
        return (self.name, self.params)

    def param_registers(self) -> tuple[int, ...]:
        """Registers holding the receiver (instance methods) and parameters at entry."""
        n = len(self.params) + (0 if self.static else 1)
        return tuple(range(n))


@dataclass(frozen=True)
class ClassDef:
    name: str
    superclass: Optional[str] = None
    interfaces: tuple[str, ...] = ()
    methods: tuple[MethodDef, ...] = ()
    origin: str = "app"

    def method(self, name: str, params: tuple[str, ...]) -> Optional[MethodDef]:
        for m in self.methods:
            if m.name == name and m.params == params:
                return m
        return None


@dataclass(frozen=True)
class Component:
    name: str
    kind: str
    actions: tuple[str, ...] = ()


@dataclass(frozen=True)
class ManifestModel:
    components: tuple[Component, ...] = ()
    permissions: tuple[str, ...] = ()
    min_sdk: int = 1
    target_sdk: int = 1

    def component(self, name: str) -> Optional[Component]:
        for c in self.components:
            if c.name == name:
                return c
        return None


@dataclass(frozen=True)
class UiElement:
    id: str
    widget: str = ""
    label: str = ""
    hint: str = ""


@dataclass(frozen=True, eq=False)
class ProgramModel:
    classes: dict[str, ClassDef]
    manifest: ManifestModel = field(default_factory=ManifestModel)
    layouts: tuple[UiElement, ...] = ()
    system_prefixes: tuple[str, ...] = SYSTEM_PREFIXES

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ProgramModel):
            return NotImplemented
        return (
            list(self.classes.items()) == list(other.classes.items())
            and self.manifest == other.manifest
            and self.layouts == other.layouts
        )

    __hash__ = None  # type: ignore[assignment]

    # -- type queries ----------------------------------------------------
    def is_system(self, name: str) -> bool:
        return is_system_type(name, self.system_prefixes)

    def is_external(self, name: str) -> bool:
        """Referenced, non-system and not defined here: an opaque external type."""
        base = element_type(name)
        return not self.is_system(base) and base not in self.classes

    def superclass_of(self, name: str) -> Optional[str]:
        cls = self.classes.get(name)
        if cls is None:
            return None
        return cls.superclass or (OBJECT if name != OBJECT else None)

    def supertypes(self, name: str) -> Iterator[str]:
        """Direct supertypes (superclass first, then interfaces) of an app type."""
        cls = self.classes.get(name)
        if cls is None:
            return
        sup = self.superclass_of(name)
        if sup is not None:
            yield sup
        yield from cls.interfaces

    def ancestors(self, name: str) -> list[str]:
        """All transitive supertypes, breadth-first, cycle-safe."""
        seen: list[str] = []
        frontier = [name]
        while frontier:
            nxt = []
            for t in frontier:
                for s in self.supertypes(t):
                    if s not in seen and s != name:
                        seen.append(s)
                        nxt.append(s)
            frontier = nxt
        return seen

    def is_subtype(self, name: str, ancestor: str) -> bool:
        return name == ancestor or ancestor in self.ancestors(name)

    def subtypes(self, name: str) -> list[str]:
        """App classes that are (reflexively) subtypes of ``name``, sorted."""
        return sorted(c for c in self.classes if self.is_subtype(c, name))

    # -- method queries --------------------------------------------------
    def methods(self) -> Iterator[tuple[ClassDef, MethodDef]]:
        for cls in self.classes.values():
            for m in cls.methods:
                yield cls, m

    def method_def(self, ref: MethodRef) -> Optional[MethodDef]:
        cls = self.classes.get(ref.host)
        if cls is None:
            return None
        return cls.method(ref.name, ref.params)

    def resolve(self, ref: MethodRef) -> tuple[str, Optional[MethodDef]]:
        """Walk up from ``ref.host`` to the declaring class, Java style.

        The superclass chain is searched first, then the interfaces of every
        class on it (breadth-first).  Returns ``(declaring_type, method)``: an
        app class with its MethodDef, a system ancestor with ``None`` (a system
        method), or ``(external_type, None)`` when the chain ends in an opaque
        type and no interface declares the method.
        """
        chain: list[str] = []
        t: Optional[str] = ref.host
        end = ref.host
        while t is not None and t not in chain:
            if self.is_system(t) or t not in self.classes:
                end = t
                break
            m = self.classes[t].method(ref.name, ref.params)
            if m is not None:
                return t, m
            chain.append(t)
            t = self.superclass_of(t)
        visited = set(chain)
        frontier = [i for c in chain for i in self.classes[c].interfaces]
        first_system = None
        while frontier:
            t = frontier.pop(0)
            if t in visited:
                continue
            visited.add(t)
            cls = self.classes.get(t)
            if cls is None:
                if first_system is None and self.is_system(t):
                    first_system = t
                continue
            m = cls.method(ref.name, ref.params)
            if m is not None:
                return t, m
            frontier.extend(self.supertypes(t))
        if self.is_system(end) or first_system is None:
            return end, None
        return first_system, None

    def referenced_types(self) -> set[str]:
        refs: set[str] = set()
        for cls in self.classes.values():
            refs.update(t for t in (cls.superclass, *cls.interfaces) if t)
            for m in cls.methods:
                refs.update(m.params)
                refs.add(m.return_type)
                for ins in m.body:
                    if isinstance(ins, Invoke):
                        refs.update((ins.callee.host, *ins.callee.params, ins.callee.ret))
                    elif isinstance(ins, (FieldGet, FieldPut)):
                        refs.add(ins.owner)
                    elif isinstance(ins, ConstOther):
                        refs.add(ins.type)
        return {element_type(t) for t in refs}

    def external_types(self) -> list[str]:
        """Referenced types that are neither system nor defined: treated as opaque."""
        return sorted(t for t in self.referenced_types() if self.is_external(t))

    def layout(self, resource: str) -> Optional[UiElement]:
        for el in self.layouts:
            if el.id == resource:
                return el
        return None


# --------------------------------------------------------------------------
# Loading and serialization


def _require(obj: dict, key: str, where: str) -> Any:
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaError(f"missing required field {key!r} in {where}")
    return obj[key]


def _type(value: Any, where: str) -> str:
    if not isinstance(value, str) or not is_valid_type_name(value):
        raise SchemaError(f"invalid type name {value!r} in {where}")
    return value


def _reg(value: Any, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise SchemaError(f"invalid register {value!r} in {where}")
    return value


def _opt_reg(obj: dict, key: str, where: str) -> Optional[int]:
    v = obj.get(key)
    return None if v is None else _reg(v, where)


def instruction_from_json(obj: dict, where: str) -> Instruction:
    op = _require(obj, "op", where)
    where = f"{where} ({op})"
    if op == "const-string":
        value = _require(obj, "value", where)
        if not isinstance(value, str):
            raise SchemaError(f"const-string value must be a string in {where}")
        return ConstString(_reg(_require(obj, "dst", where), where), value)
    if op == "const":
        return ConstOther(_reg(_require(obj, "dst", where), where), _type(obj.get("type", OBJECT), where))
    if op == "move":
        return Move(_reg(_require(obj, "dst", where), where), _reg(_require(obj, "src", where), where))
    if op == "concat":
        return Concat(
            _reg(_require(obj, "dst", where), where),
            _reg(_require(obj, "a", where), where),
            _reg(_require(obj, "b", where), where),
        )
    if op == "invoke":
        try:
            callee = MethodRef.parse(_require(obj, "callee", where))
        except (ValueError, AttributeError) as exc:
            raise SchemaError(f"{exc} in {where}") from None
        receiver = _opt_reg(obj, "receiver", where)
        kind = obj.get("kind", "virtual" if receiver is not None else "static")
        if kind not in ("static", "virtual", "special"):
            raise SchemaError(f"unknown invoke kind {kind!r} in {where}")
        args = tuple(_reg(a, where) for a in obj.get("args", []))
        return Invoke(callee, args, _opt_reg(obj, "dst", where), receiver, kind)
    if op == "field-put":
        return FieldPut(
            _type(_require(obj, "owner", where), where),
            str(_require(obj, "field", where)),
            _reg(_require(obj, "src", where), where),
        )
    if op == "field-get":
        return FieldGet(
            _reg(_require(obj, "dst", where), where),
            _type(_require(obj, "owner", where), where),
            str(_require(obj, "field", where)),
        )
    if op == "find-view":
        return FindView(_reg(_require(obj, "dst", where), where), str(_require(obj, "resource", where)))
    if op == "new-intent":
        return NewIntent(_reg(_require(obj, "dst", where), where))
    if op == "intent-set-class":
        return IntentSetTargetClass(_reg(_require(obj, "intent", where), where), _reg(_require(obj, "src", where), where))
    if op == "intent-set-action":
        return IntentSetAction(_reg(_require(obj, "intent", where), where), _reg(_require(obj, "src", where), where))
    if op == "put-extra":
        return PutExtra(
            _reg(_require(obj, "intent", where), where),
            _reg(_require(obj, "key", where), where),
            _reg(_require(obj, "value", where), where),
        )
    if op == "get-extra":
        return GetExtra(_reg(_require(obj, "dst", where), where), _reg(_require(obj, "key", where), where))
    if op == "start-component":
        return StartComponent(_reg(_require(obj, "intent", where), where))
    if op == "return":
        return Return(_opt_reg(obj, "src", where))
    if op == "goto":
        return Goto(_reg(_require(obj, "target", where), where))
    if op == "branch":
        targets = _require(obj, "targets", where)
        return Branch(tuple(_reg(t, where) for t in targets))
    raise SchemaError(f"unknown instruction op {op!r} in {where}")


def instruction_to_json(ins: Instruction) -> dict:
    out: dict[str, Any] = {"op": ins.op}
    if isinstance(ins, Invoke):
        out["callee"] = str(ins.callee)
        out["args"] = list(ins.args)
        if ins.dst is not None:
            out["dst"] = ins.dst
        if ins.receiver is not None:
            out["receiver"] = ins.receiver
        out["kind"] = ins.kind
        return out
    for name, value in ins.__dict__.items():
        if value is None:
            continue
        out[name] = list(value) if isinstance(value, tuple) else value
    return out


def _method_from_json(obj: dict, where: str) -> MethodDef:
    name = _require(obj, "name", where)
    if not isinstance(name, str) or not name or any(ch.isspace() for ch in name):
        raise SchemaError(f"invalid method name {name!r} in {where}")
    where = f"{where}.{name}"
    params = tuple(_type(p, where) for p in obj.get("params", []))
    ret = _type(obj.get("return", "void"), where)
    body_json = obj.get("body", [])
    if not isinstance(body_json, list):
        raise SchemaError(f"body must be a list in {where}")
    body = tuple(instruction_from_json(ins, f"{where}[{i}]") for i, ins in enumerate(body_json))
    overrides = obj.get("overrides")
    if overrides is not None:
        overrides = _type(overrides, where)
    return MethodDef(name, params, ret, body, overrides, bool(obj.get("static", False)))


def _class_from_json(obj: dict, index: int) -> ClassDef:
    name = _type(_require(obj, "name", f"classes[{index}]"), f"classes[{index}]")
    sup = obj.get("superclass")
    if sup is not None:
        sup = _type(sup, name)
    origin = obj.get("origin", "app")
    if origin not in ORIGINS:
        raise SchemaError(f"unknown origin {origin!r} for class {name}")
    methods = tuple(_method_from_json(m, name) for m in obj.get("methods", []))
    return ClassDef(name, sup, tuple(_type(i, name) for i in obj.get("interfaces", [])), methods, origin)


def _manifest_from_json(obj: dict) -> ManifestModel:
    comps = []
    for i, c in enumerate(obj.get("components", [])):
        where = f"manifest.components[{i}]"
        kind = _require(c, "kind", where)
        if kind not in COMPONENT_KINDS:
            raise SchemaError(f"unknown component kind {kind!r} in {where}")
        actions = c.get("actions", [])
        comps.append(Component(_type(_require(c, "name", where), where), kind, tuple(str(a) for a in actions)))
    min_sdk = obj.get("min_sdk", 1)
    target_sdk = obj.get("target_sdk", min_sdk)
    for key, v in (("min_sdk", min_sdk), ("target_sdk", target_sdk)):
        if isinstance(v, bool) or not isinstance(v, int):
            raise SchemaError(f"manifest.{key} must be an integer")
    return ManifestModel(tuple(comps), tuple(str(p) for p in obj.get("permissions", [])), min_sdk, target_sdk)


def program_from_json(data: Any) -> ProgramModel:
    if not isinstance(data, dict):
        raise SchemaError("top level must be an object")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    raw_classes = _require(data, "classes", "model")
    if not isinstance(raw_classes, list):
        raise SchemaError("classes must be a list")
    classes: dict[str, ClassDef] = {}
    for i, raw in enumerate(raw_classes):
        cls = _class_from_json(raw, i)
        if cls.name in classes:
            raise SchemaError(f"duplicate class name {cls.name}")
        classes[cls.name] = cls
    manifest = _manifest_from_json(data.get("manifest", {}))
    layouts = tuple(
        UiElement(str(_require(el, "id", f"layouts[{i}]")), el.get("widget", ""), el.get("label", ""), el.get("hint", ""))
        for i, el in enumerate(data.get("layouts", []))
    )
    return ProgramModel(classes, manifest, layouts)


def program_to_json(model: ProgramModel) -> dict:
    classes = []
    for cls in model.classes.values():
        c: dict[str, Any] = {"name": cls.name}
        if cls.superclass is not None:
            c["superclass"] = cls.superclass
        c["interfaces"] = list(cls.interfaces)
        c["origin"] = cls.origin
        methods = []
        for m in cls.methods:
            md: dict[str, Any] = {"name": m.name, "params": list(m.params), "return": m.return_type}
            if m.static:
                md["static"] = True
            if m.declared_overrides is not None:
                md["overrides"] = m.declared_overrides
            md["body"] = [instruction_to_json(ins) for ins in m.body]
            methods.append(md)
        c["methods"] = methods
        classes.append(c)
    man = model.manifest
    return {
        "schema_version": SCHEMA_VERSION,
        "classes": classes,
        "manifest": {
            "components": [{"name": c.name, "kind": c.kind, "actions": list(c.actions)} for c in man.components],
            "permissions": list(man.permissions),
            "min_sdk": man.min_sdk,
            "target_sdk": man.target_sdk,
        },
        "layouts": [{"id": e.id, "widget": e.widget, "label": e.label, "hint": e.hint} for e in model.layouts],
    }


def loads_program_model(text: str) -> ProgramModel:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from None
    return program_from_json(data)


def load_program_model(path: str | Path) -> ProgramModel:
    """Load and link a program model file."""
    return loads_program_model(Path(path).read_text(encoding="utf-8"))


def dumps_program_model(model: ProgramModel) -> str:
    return json.dumps(program_to_json(model), indent=2, ensure_ascii=False) + "\n"


def save_program_model(model: ProgramModel, path: str | Path) -> None:
    Path(path).write_text(dumps_program_model(model), encoding="utf-8")


# --------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class Violation:
    kind: str
    where: str
    message: str

    def __str__(self) -> str:
        return f"{self.kind} at {self.where}: {self.message}"


def _hierarchy_cycles(model: ProgramModel) -> list[Violation]:
    out = []
    reported: set[frozenset[str]] = set()
    for start in model.classes:
        path: list[str] = []
        t: Optional[str] = start
        while t is not None and t in model.classes:
            if t in path:
                cycle = frozenset(path[path.index(t):])
                if cycle not in reported:
                    reported.add(cycle)
                    members = " -> ".join(sorted(cycle))
                    out.append(Violation("hierarchy-cycle", min(cycle), f"superclass cycle among {members}"))
                break
            path.append(t)
            t = model.classes[t].superclass
    # interface edges
    color: dict[str, int] = {}

    def visit(n: str, stack: list[str]) -> None:
        color[n] = 1
        stack.append(n)
        for i in model.classes[n].interfaces:
            if i not in model.classes:
                continue
            if color.get(i) == 1:
                cycle = frozenset(stack[stack.index(i):])
                if cycle not in reported:
                    reported.add(cycle)
                    out.append(Violation("hierarchy-cycle", min(cycle),
                                         f"interface cycle among {' -> '.join(sorted(cycle))}"))
            elif i not in color:
                visit(i, stack)
        stack.pop()
        color[n] = 2

    for n in model.classes:
        if n not in color:
            visit(n, [])
    return out


def _check_body(where: str, method: MethodDef) -> list[Violation]:
    out = []
    body = method.body
    n = len(body)
    if n == 0:
        return [Violation("missing-return", where, "empty body has no return")]
    for i, ins in enumerate(body):
        targets = (ins.target,) if isinstance(ins, Goto) else ins.targets if isinstance(ins, Branch) else ()
        for t in targets:
            if not 0 <= t < n:
                out.append(Violation("bad-jump", f"{where}[{i}]", f"jump target {t} outside body"))
        if not isinstance(ins, (Return, Goto)) and i == n - 1:
            out.append(Violation("missing-return", f"{where}[{i}]", "control falls off the end of the body"))
    # must-defined registers, forward intersection over predecessors
    params = frozenset(method.param_registers())
    every = frozenset(r for ins in body for r in (*ins.uses(), ins.defines()) if r is not None) | params
    preds = predecessors(body)
    defined_in: list[frozenset[int]] = [every] * n
    defined_in[0] = params
    changed = True
    while changed:
        changed = False
        for i in range(n):
            if i == 0:
                new_in = params  # back edges into the entry can only add definitions
            else:
                ins_sets = []
                for p in preds[i]:
                    d = body[p].defines()
                    ins_sets.append(defined_in[p] | ({d} if d is not None else set()))
                new_in = frozenset.intersection(*map(frozenset, ins_sets)) if ins_sets else every
            if new_in != defined_in[i]:
                defined_in[i] = new_in
                changed = True
    reachable = _reachable(body)
    for i, ins in enumerate(body):
        if i not in reachable:
            continue
        for r in ins.uses():
            if r not in defined_in[i]:
                out.append(Violation("use-before-def", f"{where}[{i}]", f"register {r} may be used before definition"))
    return out


def _reachable(body: tuple[Instruction, ...]) -> set[int]:
    seen = {0} if body else set()
    stack = list(seen)
    while stack:
        i = stack.pop()
        for s in successors(body, i):
            if s not in seen:
                seen.add(s)
                stack.append(s)
    return seen


def validate(model: ProgramModel) -> list[Violation]:
    """Check model invariants; returns violations (empty when well formed)."""
    out: list[Violation] = []
    for key, cls in model.classes.items():
        if key != cls.name:
            out.append(Violation("class-key", key, f"map key does not match class name {cls.name}"))
    out.extend(_hierarchy_cycles(model))
    for cls in model.classes.values():
        seen: set[tuple[str, tuple[str, ...]]] = set()
        for m in cls.methods:
            where = f"{cls.name}.{m.name}({','.join(m.params)})"
            if m.subsig in seen:
                out.append(Violation("duplicate-method", where, "method declared twice"))
            seen.add(m.subsig)
            out.extend(_check_body(where, m))
    man = model.manifest
    if not (1 <= man.min_sdk <= man.target_sdk):
        out.append(Violation("sdk-range", "manifest", f"need 1 <= min_sdk ({man.min_sdk}) <= target_sdk ({man.target_sdk})"))
    for c in man.components:
        if c.name not in model.classes:
            out.append(Violation("dangling-component", f"manifest:{c.name}", "component class is not defined"))
    return out
