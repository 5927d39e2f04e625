"""Seeded identifier renaming for building obfuscated ground-truth corpora.

Renames every class defined in the model, every method whose name is not
pinned by the platform, and every field owned by a defined class.  Hierarchy,
call targets and instruction bodies are preserved; string constants that
spell a renamed class name are rewritten too, the way shrinkers adapt class
strings, so explicit intents keep their targets.
"""
from __future__ import annotations

import itertools
import random
import string
from dataclasses import dataclass, replace
from typing import Iterator

from .model import (
    ClassDef, Component, ConstOther, ConstString, FieldGet, FieldPut, Instruction, Invoke,
    ManifestModel, MethodDef, MethodRef, ProgramModel, element_type,
)

PINNED_METHOD_NAMES = frozenset({"<init>", "<clinit>"})


@dataclass(frozen=True)
class RenameMap:
    seed: int
    classes: dict[str, str]
    methods: dict[str, str]
    fields: dict[str, str]

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "classes": dict(sorted(self.classes.items())),
            "methods": dict(sorted(self.methods.items())),
            "fields": dict(sorted(self.fields.items())),
        }

    def inverse(self) -> "RenameMap":
        return RenameMap(
            self.seed,
            {v: k for k, v in self.classes.items()},
            {v: k for k, v in self.methods.items()},
            {v: k for k, v in self.fields.items()},
        )

    def type(self, name: str) -> str:
        base = element_type(name)
        return self.classes.get(base, base) + name[len(base):]

    def method_ref(self, ref: MethodRef, rename_name: bool = True) -> MethodRef:
        name = self.methods.get(ref.name, ref.name) if rename_name else ref.name
        return MethodRef(self.type(ref.host), name, tuple(map(self.type, ref.params)), self.type(ref.ret))


def _short_names() -> Iterator[str]:
    for n in itertools.count(1):
        for letters in itertools.product(string.ascii_lowercase, repeat=n):
            yield "".join(letters)


def pinned_method_names(model: ProgramModel) -> frozenset[str]:
    """Method names that must survive renaming.

    Constructors, declared platform overrides, and any name used in a call
    that does not resolve to a method defined in the model.
    """
    pinned = set(PINNED_METHOD_NAMES)
    for _, m in model.methods():
        if m.declared_overrides is not None:
            pinned.add(m.name)
        for ins in m.body:
            if isinstance(ins, Invoke) and model.resolve(ins.callee)[1] is None:
                pinned.add(ins.callee.name)
    return frozenset(pinned)


def make_rename_map(model: ProgramModel, seed: int) -> RenameMap:
    rng = random.Random(seed)
    taken = model.referenced_types() | set(model.classes)

    class_names = sorted(model.classes)
    rng.shuffle(class_names)
    fresh = (f"o.{s}" for s in _short_names())
    classes = {}
    for old in class_names:
        new = next(fresh)
        while new in taken:
            new = next(fresh)
        classes[old] = new

    pinned = pinned_method_names(model)
    method_names = sorted({m.name for _, m in model.methods()} - pinned)
    rng.shuffle(method_names)
    fresh = (s for s in _short_names())
    methods = {}
    for old in method_names:
        new = next(fresh)
        while new in pinned:
            new = next(fresh)
        methods[old] = new

    field_names = set()
    for _, m in model.methods():
        for ins in m.body:
            if isinstance(ins, (FieldGet, FieldPut)) and ins.owner in model.classes:
                field_names.add(ins.field)
    field_list = sorted(field_names)
    rng.shuffle(field_list)
    fields = {old: f"f{new}" for old, new in zip(field_list, _short_names())}
    return RenameMap(seed, classes, methods, fields)


def _rename_instruction(ins: Instruction, model: ProgramModel, rmap: RenameMap) -> Instruction:
    if isinstance(ins, Invoke):
        defined = model.resolve(ins.callee)[1] is not None
        return replace(ins, callee=rmap.method_ref(ins.callee, rename_name=defined))
    if isinstance(ins, (FieldGet, FieldPut)):
        if ins.owner in model.classes:
            return replace(ins, owner=rmap.type(ins.owner), field=rmap.fields.get(ins.field, ins.field))
        return ins
    if isinstance(ins, ConstOther):
        return replace(ins, type=rmap.type(ins.type))
    if isinstance(ins, ConstString) and ins.value in rmap.classes:
        return replace(ins, value=rmap.classes[ins.value])
    return ins


def apply_rename(model: ProgramModel, rmap: RenameMap) -> ProgramModel:
    classes: dict[str, ClassDef] = {}
    for cls in model.classes.values():
        methods = tuple(
            MethodDef(
                rmap.methods.get(m.name, m.name),
                tuple(map(rmap.type, m.params)),
                rmap.type(m.return_type),
                tuple(_rename_instruction(ins, model, rmap) for ins in m.body),
                m.declared_overrides,
                m.static,
            )
            for m in cls.methods
        )
        new = ClassDef(
            rmap.type(cls.name),
            None if cls.superclass is None else rmap.type(cls.superclass),
            tuple(map(rmap.type, cls.interfaces)),
            methods,
            cls.origin,
        )
        classes[new.name] = new
    classes = dict(sorted(classes.items()))
    man = model.manifest
    manifest = ManifestModel(
        tuple(Component(rmap.type(c.name), c.kind, c.actions) for c in man.components),
        man.permissions, man.min_sdk, man.target_sdk,
    )
    return ProgramModel(classes, manifest, model.layouts, model.system_prefixes)


def obfuscate(model: ProgramModel, seed: int) -> tuple[ProgramModel, RenameMap]:
    """Return the renamed model and the map used (old name -> new name)."""
    rmap = make_rename_map(model, seed)
    return apply_rename(model, rmap), rmap
