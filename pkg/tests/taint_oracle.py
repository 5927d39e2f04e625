"""Brute-force def-use reachability, used as the reference for taint propagation.

Every register definition is a node.  Reaching definitions are found by
walking predecessors from each use until a redefinition, with no dataflow
framework.  Fields, intent extras, parameters and return values are extra
nodes.  A source leaks into a sink when a definition feeding a sensitive sink
argument is reachable from the source node.

Call edges, ICC target resolution, string keys and sink recognition are taken
as inputs; each has its own tests.
"""
from collections import defaultdict, deque

from apmlens.model import (
    Concat, FieldGet, FieldPut, GetExtra, Invoke, Move, NewIntent, PutExtra, Return, StartComponent, predecessors,
)
from apmlens.strings import StringOracle
from apmlens.taint import sensitive_args


def reaching_defs(body, params, p, reg):
    """Definitions of ``reg`` that can be live just before instruction ``p``."""
    preds = predecessors(body)
    out, seen, stack = set(), set(), [p]
    while stack:
        x = stack.pop()
        if x in seen:
            continue
        seen.add(x)
        if x == 0 and reg in params:
            out.add(-1)
        for q in preds[x]:
            if body[q].defines() == reg:
                out.add(q)
            else:
                stack.append(q)
    return out


def operands(ins):
    return ([ins.receiver] if ins.receiver is not None else []) + list(ins.args)


def param_reg(target, op_index, is_receiver):
    base = 0 if target.static else 1
    if is_receiver:
        return None if target.static else 0
    r = base + op_index
    return r if r < len(target.param_registers()) else None


def _key_values(strings, m, reg, site):
    v = strings(m, reg, site)
    return None if v.is_top else set(v.values)


def oracle_leaks(icfg, sources, matcher):
    app = icfg.app
    strings = StringOracle()
    graph = defaultdict(set)
    sink_uses = []  # (node, sink key)

    def d(ref, site, reg):
        return ("def", ref, site, reg)

    resolved = {(e.caller, e.site): e.target for e in icfg.icc_edges if e.target is not None}
    gets = []  # (node, component, keys or None)
    puts = []  # (from-nodes, targets, keys or None)

    for cls, m in app.methods():
        ref = m.ref(cls.name)
        body = m.body
        params = set(m.param_registers())

        def rd(p, reg):
            return [d(ref, q, reg) for q in reaching_defs(body, params, p, reg)]

        if m.param_registers():
            for r in m.param_registers():
                graph[("param", ref, r)].add(d(ref, -1, r))
        for p, ins in enumerate(body):
            if isinstance(ins, Move):
                for n in rd(p, ins.src):
                    graph[n].add(d(ref, p, ins.dst))
            elif isinstance(ins, Concat):
                for u in (ins.a, ins.b):
                    for n in rd(p, u):
                        graph[n].add(d(ref, p, ins.dst))
            elif isinstance(ins, FieldPut):
                for n in rd(p, ins.src):
                    graph[n].add(("field", ins.owner, ins.field))
            elif isinstance(ins, FieldGet):
                graph[("field", ins.owner, ins.field)].add(d(ref, p, ins.dst))
            elif isinstance(ins, Return) and ins.src is not None:
                for n in rd(p, ins.src):
                    graph[n].add(("ret", ref))
            elif isinstance(ins, GetExtra):
                gets.append((d(ref, p, ins.dst), cls.name, _key_values(strings, m, ins.key, p)))
            elif isinstance(ins, PutExtra):
                allocs = _allocations(body, params, p, ins.intent)
                targets = {resolved[(ref, j)] for j, other in enumerate(body)
                           if isinstance(other, StartComponent) and (ref, j) in resolved
                           and _allocations(body, params, j, other.intent) & allocs}
                puts.append((rd(p, ins.value), targets, _key_values(strings, m, ins.key, p)))
            elif isinstance(ins, Invoke):
                edges = icfg.callees(ref, p)
                ops = operands(ins)
                if not edges or any(e.system for e in edges):
                    if ins.dst is not None:
                        for u in ops:
                            for n in rd(p, u):
                                graph[n].add(d(ref, p, ins.dst))
                for e in edges:
                    if e.system:
                        continue
                    target = app.method_def(e.callee)
                    if ins.receiver is not None:
                        r = param_reg(target, 0, True)
                        if r is not None:
                            for n in rd(p, ins.receiver):
                                graph[n].add(("param", e.callee, r))
                    for k, a in enumerate(ins.args):
                        r = param_reg(target, k, False)
                        if r is not None:
                            for n in rd(p, a):
                                graph[n].add(("param", e.callee, r))
                    if ins.dst is not None:
                        graph[("ret", e.callee)].add(d(ref, p, ins.dst))
                match = matcher.match(ref, ins)
                if match is not None:
                    for u in sensitive_args(ins, match.positions):
                        for n in rd(p, u):
                            sink_uses.append((n, (ref, p)))

    for froms, targets, put_keys in puts:
        for node, comp, get_keys in gets:
            if comp not in targets:
                continue
            if put_keys is not None and get_keys is not None and not put_keys & get_keys:
                continue
            for n in froms:
                graph[n].add(("extra", comp, node))
                graph[("extra", comp, node)].add(node)

    leaks = set()
    for s in sources:
        dst = app.method_def(s.method).body[s.site].defines()
        start = d(s.method, s.site, dst)
        seen = {start}
        queue = deque([start])
        while queue:
            n = queue.popleft()
            for nxt in graph.get(n, ()):
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        for node, (ref, p) in sink_uses:
            if node in seen:
                leaks.add((s.method, s.site, ref, p))
    return leaks


def _allocations(body, params, p, reg, seen=None):
    """NewIntent sites whose object can sit in ``reg`` before ``p`` (through moves)."""
    seen = set() if seen is None else seen
    if (p, reg) in seen:
        return set()
    seen.add((p, reg))
    out = set()
    for q in reaching_defs(body, params, p, reg):
        if q == -1:
            continue
        ins = body[q]
        if isinstance(ins, NewIntent):
            out.add(q)
        elif isinstance(ins, Move):
            out |= _allocations(body, params, q, ins.src, seen)
    return out
