"""What strings can reach a call? Path-aware constant propagation on a small method.

Run: python3 demos/04_string_values.py
"""
from apmlens.model import program_from_json
from apmlens.strings import evaluate, extract_expr

APPEND = "java.lang.StringBuilder.append(java.lang.String)java.lang.StringBuilder"
TO_STRING = "java.lang.StringBuilder.toString()java.lang.String"


def method(body):
    app = program_from_json({"classes": [{"name": "t.T", "methods": [
        {"name": "m", "static": True, "return": "java.lang.String", "body": body}]}]})
    return app.classes["t.T"].methods[0]


def show(title, body):
    m = method(body)
    site = len(body) - 1
    expr = extract_expr(m, m.body[site].src, site)
    value = evaluate(expr)
    print(f"{title}:\n  expression {expr}\n  values     {'unknown' if value.is_top else sorted(value.values)}\n")


# A builder's value is the string it holds, so a fresh one is the empty string.
show("builder chain", [
    {"op": "const-string", "dst": 0, "value": ""},
    {"op": "const-string", "dst": 1, "value": "/proc/"},
    {"op": "invoke", "callee": APPEND, "args": [1], "receiver": 0, "dst": 0},
    {"op": "const-string", "dst": 1, "value": "stat"},
    {"op": "invoke", "callee": APPEND, "args": [1], "receiver": 0, "dst": 0},
    {"op": "invoke", "callee": TO_STRING, "receiver": 0, "dst": 2},
    {"op": "return", "src": 2},
])

show("branches keep prefixes and suffixes paired", [
    {"op": "branch", "targets": [1, 4]},
    {"op": "const-string", "dst": 0, "value": "/proc/"},
    {"op": "const-string", "dst": 1, "value": "stat"},
    {"op": "goto", "target": 6},
    {"op": "const-string", "dst": 0, "value": "/sys/"},
    {"op": "const-string", "dst": 1, "value": "power"},
    {"op": "concat", "dst": 2, "a": 0, "b": 1},
    {"op": "return", "src": 2},
])

show("a loop that keeps appending is unbounded", [
    {"op": "const-string", "dst": 0, "value": "a"},
    {"op": "const-string", "dst": 1, "value": "b"},
    {"op": "concat", "dst": 0, "a": 0, "b": 1},
    {"op": "branch", "targets": [2, 4]},
    {"op": "return", "src": 0},
])
