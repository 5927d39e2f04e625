"""Constant string analysis.

Representation and interpretation are kept apart: :func:`extract_expr`
builds a small expression tree (constants, concatenations, alternatives,
unknown leaves) by walking definitions backwards from a use, and
:func:`evaluate` turns the tree into a bounded set of concrete strings.

Alternatives are collected per backward path, so values that were assigned
together on one branch stay together; on loop-free code the result is exactly
the set of values reachable along some path.  A definition that feeds itself
around a loop evaluates to top.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Optional, Union

from .model import (
    Concat as ConcatIns, ConstString, Instruction, Invoke, MethodDef, Move, predecessors, successors,
)

K_DEFAULT = 64
_WORLD_FACTOR = 4  # alternatives kept per node before collapsing to unknown


@dataclass(frozen=True)
class Const:
    value: str


@dataclass(frozen=True)
class Concat:
    left: "StringExpr"
    right: "StringExpr"


@dataclass(frozen=True)
class Var:
    """A register whose value differs between incoming paths."""

    register: int
    site: int
    alternatives: tuple["StringExpr", ...]


@dataclass(frozen=True)
class Unknown:
    reason: str = "unknown"


StringExpr = Union[Const, Concat, Var, Unknown]


@dataclass(frozen=True)
class StringValue:
    """Either a finite set of strings or top (``values is None``)."""

    values: Optional[frozenset[str]]

    @property
    def is_top(self) -> bool:
        return self.values is None

    def singleton(self) -> Optional[str]:
        if self.values is not None and len(self.values) == 1:
            return next(iter(self.values))
        return None

    def __le__(self, other: "StringValue") -> bool:
        if other.is_top:
            return True
        return not self.is_top and self.values <= other.values

    def to_json(self):
        return None if self.values is None else sorted(self.values)


TOP = StringValue(None)


# --------------------------------------------------------------------------
# Builder registry


@dataclass(frozen=True)
class BuilderSpec:
    kind: str  # "concat" | "identity"
    operands: tuple[str, ...]  # "receiver" or "argN"


def load_builders(path: Optional[str | Path] = None) -> dict[str, BuilderSpec]:
    if path is None:
        text = resources.files("apmlens").joinpath("data/builders.json").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    data = json.loads(text)
    out = {}
    for ref, spec in data["builders"].items():
        kind = spec["kind"]
        operands = tuple(spec["operands"])
        if kind not in ("concat", "identity") or len(operands) != (2 if kind == "concat" else 1):
            raise ValueError(f"bad builder spec for {ref}")
        out[ref] = BuilderSpec(kind, operands)
    return out


@lru_cache(maxsize=1)
def default_builders() -> dict[str, BuilderSpec]:
    return load_builders()


def _operand_reg(ins: Invoke, operand: str) -> Optional[int]:
    if operand == "receiver":
        return ins.receiver
    if operand.startswith("arg"):
        i = int(operand[3:])
        return ins.args[i] if i < len(ins.args) else None
    return None


# --------------------------------------------------------------------------
# Extraction


class _Extractor:
    def __init__(self, method: MethodDef, builders: dict[str, BuilderSpec], k: int):
        self.body = method.body
        self.params = set(method.param_registers())
        self.preds = predecessors(method.body)
        self.builders = builders
        self.limit = k * _WORLD_FACTOR
        self.memo: dict[tuple[int, frozenset], list[dict]] = {}
        self.cuts = 0
        self.live = _reachable(method.body)

    def _builder(self, ins: Instruction) -> Optional[tuple[BuilderSpec, tuple[int, ...]]]:
        if not isinstance(ins, Invoke):
            return None
        spec = self.builders.get(str(ins.callee))
        if spec is None:
            return None
        regs = tuple(_operand_reg(ins, o) for o in spec.operands)
        if any(r is None for r in regs):
            return None
        return spec, regs

    def operands(self, ins: Instruction) -> tuple[int, ...]:
        if isinstance(ins, Move):
            return (ins.src,)
        if isinstance(ins, ConcatIns):
            return (ins.a, ins.b)
        b = self._builder(ins)
        return b[1] if b else ()

    def expr(self, ins: Instruction, env: dict[int, StringExpr]) -> StringExpr:
        if isinstance(ins, ConstString):
            return Const(ins.value)
        if isinstance(ins, Move):
            return env[ins.src]
        if isinstance(ins, ConcatIns):
            return Concat(env[ins.a], env[ins.b])
        b = self._builder(ins)
        if b is not None:
            spec, regs = b
            if spec.kind == "identity":
                return env[regs[0]]
            return Concat(env[regs[0]], env[regs[1]])
        return Unknown(ins.op)

    def _collapse(self, regs: frozenset) -> list[dict]:
        return [{r: Unknown("overflow") for r in regs}]

    def before(self, p: int, regs: frozenset, defs: int, stack: dict) -> list[dict]:
        """Alternative environments for ``regs`` just before instruction ``p``."""
        if p not in self.live:
            return []
        if not regs:
            return [{}]
        key = (p, regs)
        if key in stack:
            self.cuts += 1
            if stack[key] < defs:
                return [{r: Unknown("loop") for r in regs}]
            return []
        if key in self.memo:
            return self.memo[key]
        cuts_before = self.cuts
        stack[key] = defs
        alts: list[dict] = []
        if p == 0:
            alts.append({r: Unknown("parameter" if r in self.params else "undefined") for r in regs})
        for q in self.preds[p]:
            alts.extend(self.after(q, regs, defs, stack))
        del stack[key]
        alts = _dedupe(alts)
        if len(alts) > self.limit:
            alts = self._collapse(regs)
        if self.cuts == cuts_before:
            self.memo[key] = alts
        return alts

    def after(self, q: int, regs: frozenset, defs: int, stack: dict) -> list[dict]:
        ins = self.body[q]
        d = ins.defines()
        if d is None or d not in regs:
            return self.before(q, regs, defs, stack)
        ops = self.operands(ins)
        needed = (regs - {d}) | frozenset(ops)
        out = []
        for env in self.before(q, needed, defs + 1, stack):
            new = {r: env[r] for r in regs if r != d}
            new[d] = self.expr(ins, env)
            out.append(new)
        return out


def _reachable(body) -> set[int]:
    if not body:
        return set()
    seen = {0}
    stack = [0]
    while stack:
        for j in successors(body, stack.pop()):
            if j not in seen:
                seen.add(j)
                stack.append(j)
    return seen


def _dedupe(alts: list[dict]) -> list[dict]:
    seen = set()
    out = []
    for a in alts:
        key = tuple(sorted(a.items(), key=lambda kv: kv[0]))
        if key not in seen:
            seen.add(key)
            out.append(a)
    return out


def extract_expr(method: MethodDef, register: int, site: int,
                 builders: Optional[dict[str, BuilderSpec]] = None, k: int = K_DEFAULT) -> StringExpr:
    """Expression for the value of ``register`` just before instruction ``site``."""
    ex = _Extractor(method, default_builders() if builders is None else builders, k)
    alts = ex.before(site, frozenset({register}), 0, {})
    exprs = []
    for env in alts:
        e = env[register]
        if e not in exprs:
            exprs.append(e)
    if not exprs:
        return Unknown("unreachable")
    if len(exprs) == 1:
        return exprs[0]
    return Var(register, site, tuple(exprs))


# --------------------------------------------------------------------------
# Interpretation


def evaluate(expr: StringExpr, k: int = K_DEFAULT) -> StringValue:
    """Bottom-up evaluation capped at ``k`` values; overflow and unknowns give top."""
    if isinstance(expr, Const):
        return StringValue(frozenset({expr.value}))
    if isinstance(expr, Unknown):
        return TOP
    if isinstance(expr, Concat):
        left = evaluate(expr.left, k)
        right = evaluate(expr.right, k)
        if left.is_top or right.is_top or len(left.values) * len(right.values) > k:
            return TOP
        return StringValue(frozenset(a + b for a in left.values for b in right.values))
    if isinstance(expr, Var):
        acc: set[str] = set()
        for alt in expr.alternatives:
            v = evaluate(alt, k)
            if v.is_top:
                return TOP
            acc |= v.values
            if len(acc) > k:
                return TOP
        return StringValue(frozenset(acc)) if acc else TOP
    raise TypeError(f"not a string expression: {expr!r}")


def has_unknown(expr: StringExpr) -> bool:
    if isinstance(expr, Unknown):
        return True
    if isinstance(expr, Concat):
        return has_unknown(expr.left) or has_unknown(expr.right)
    if isinstance(expr, Var):
        return any(has_unknown(a) for a in expr.alternatives)
    return False


class StringOracle:
    """Cached ``(method, register, site) -> StringValue`` lookups for one program."""

    def __init__(self, builders: Optional[dict[str, BuilderSpec]] = None, k: int = K_DEFAULT):
        self.builders = default_builders() if builders is None else builders
        self.k = k
        self._cache: dict[tuple[int, int, int], StringValue] = {}

    def __call__(self, method: MethodDef, register: int, site: int) -> StringValue:
        key = (id(method), register, site)
        hit = self._cache.get(key)
        if hit is None:
            hit = evaluate(extract_expr(method, register, site, self.builders, self.k), self.k)
            self._cache[key] = hit
        return hit
