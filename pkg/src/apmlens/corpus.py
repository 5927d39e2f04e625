"""Synthetic programs and labelled corpora for detection experiments.

Two toy APM libraries are bundled (``toyapm`` and ``beacon``).  ``random_app``
builds a valid random program, optionally embedding libraries and planting
initialization calls; ``labelled_corpus`` produces the balanced
with/without x plain/obfuscated benchmark used by the acceptance tests.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional

from .detect import LibraryProfile
from .model import MethodRef, ProgramModel, program_from_json, program_to_json
from .obfuscate import obfuscate

CONTEXT = "android.content.Context"
STRING = "java.lang.String"

# --------------------------------------------------------------------------
# Toy libraries


def _invoke(callee: str, args=(), dst=None, receiver=None, kind=None) -> dict:
    ins = {"op": "invoke", "callee": callee, "args": list(args)}
    if dst is not None:
        ins["dst"] = dst
    if receiver is not None:
        ins["receiver"] = receiver
    if kind is not None:
        ins["kind"] = kind
    return ins


def _toyapm_classes() -> list[dict]:
    return [
        {
            "name": "com.toyapm.Toy", "origin": "embedded-library",
            "methods": [
                {"name": "init", "static": True, "params": [CONTEXT, STRING], "return": "void", "body": [
                    _invoke("com.toyapm.CrashHandler.install()void"),
                    {"op": "const-string", "dst": 2, "value": "toyapm"},
                    _invoke("android.util.Log.i(java.lang.String,java.lang.String)int", [2, 1], dst=3),
                    {"op": "return"},
                ]},
                {"name": "log", "static": True, "params": [STRING], "return": "void", "body": [
                    {"op": "const-string", "dst": 1, "value": "toyapm"},
                    _invoke("android.util.Log.d(java.lang.String,java.lang.String)int", [1, 0], dst=2),
                    {"op": "return"},
                ]},
                {"name": "track", "static": True, "params": [STRING, STRING], "return": "void", "body": [
                    {"op": "concat", "dst": 2, "a": 0, "b": 1},
                    _invoke("com.toyapm.Uploader.send(java.lang.String)void", [2]),
                    {"op": "return"},
                ]},
            ],
        },
        {
            "name": "com.toyapm.CrashHandler", "origin": "embedded-library",
            "interfaces": ["java.lang.Thread$UncaughtExceptionHandler"],
            "methods": [
                {"name": "install", "static": True, "params": [], "return": "void", "body": [
                    {"op": "const", "dst": 0, "type": "com.toyapm.CrashHandler"},
                    _invoke("java.lang.Thread.setDefaultUncaughtExceptionHandler("
                            "java.lang.Thread$UncaughtExceptionHandler)void", [0]),
                    {"op": "return"},
                ]},
                {"name": "uncaughtException", "params": ["java.lang.Thread", "java.lang.Throwable"],
                 "return": "void", "overrides": "java.lang.Thread$UncaughtExceptionHandler",
                 "body": [{"op": "return"}]},
            ],
        },
        {
            "name": "com.toyapm.Uploader", "origin": "embedded-library",
            "methods": [
                {"name": "send", "static": True, "params": [STRING], "return": "void", "body": [
                    _invoke("java.lang.String.getBytes()byte[]", receiver=0, dst=1),
                    _invoke("java.util.Arrays.hashCode(byte[])int", [1], dst=2),
                    {"op": "return"},
                ]},
            ],
        },
    ]


def _beacon_classes() -> list[dict]:
    return [
        {
            "name": "io.beacon.Beacon", "origin": "embedded-library",
            "methods": [
                {"name": "start", "static": True, "params": [CONTEXT], "return": "void", "body": [
                    {"op": "const", "dst": 1, "type": "io.beacon.Guard"},
                    _invoke("java.lang.Thread.setDefaultUncaughtExceptionHandler("
                            "java.lang.Thread$UncaughtExceptionHandler)void", [1]),
                    _invoke("android.os.SystemClock.uptimeMillis()long", dst=2),
                    {"op": "return"},
                ]},
                {"name": "event", "static": True, "params": [STRING, "java.lang.Object"], "return": "void", "body": [
                    _invoke("java.lang.String.valueOf(java.lang.Object)java.lang.String", [1], dst=2),
                    {"op": "concat", "dst": 3, "a": 0, "b": 2},
                    {"op": "const-string", "dst": 4, "value": "beacon"},
                    _invoke("android.util.Log.v(java.lang.String,java.lang.String)int", [4, 3], dst=5),
                    {"op": "return"},
                ]},
            ],
        },
        {
            "name": "io.beacon.Guard", "origin": "embedded-library",
            "interfaces": ["java.lang.Thread$UncaughtExceptionHandler"],
            "methods": [
                {"name": "uncaughtException", "params": ["java.lang.Thread", "java.lang.Throwable"],
                 "return": "void", "overrides": "java.lang.Thread$UncaughtExceptionHandler",
                 "body": [
                     _invoke("android.os.Process.myPid()int", dst=3),
                     _invoke("android.os.Process.killProcess(int)void", [3]),
                     {"op": "return"},
                 ]},
            ],
        },
    ]


@dataclass(frozen=True)
class ToyLibrary:
    name: str
    classes: tuple
    profile: LibraryProfile
    init_call: dict  # template invoke for planting initialization
    log_call: Optional[dict] = None

    def model(self) -> ProgramModel:
        return program_from_json({"classes": [dict(c) for c in self.classes]})


TOYAPM = ToyLibrary(
    "toyapm",
    tuple(_toyapm_classes()),
    LibraryProfile(
        "toyapm",
        init_apis=(MethodRef("com.toyapm.Toy", "init", (CONTEXT, STRING), "void"),),
        logging_apis=(MethodRef("com.toyapm.Toy", "log", (STRING,), "void"),),
        tracking_apis=(MethodRef("com.toyapm.Toy", "track", (STRING, STRING), "void"),),
    ),
    {"callee": "com.toyapm.Toy.init(android.content.Context,java.lang.String)void", "args": [CONTEXT, STRING]},
    {"callee": "com.toyapm.Toy.log(java.lang.String)void", "args": [STRING]},
)

BEACON = ToyLibrary(
    "beacon",
    tuple(_beacon_classes()),
    LibraryProfile(
        "beacon",
        init_apis=(MethodRef("io.beacon.Beacon", "start", (CONTEXT,), "void"),),
        logging_apis=(),
        tracking_apis=(MethodRef("io.beacon.Beacon", "event", (STRING, "java.lang.Object"), "void"),),
    ),
    {"callee": "io.beacon.Beacon.start(android.content.Context)void", "args": [CONTEXT]},
    {"callee": "io.beacon.Beacon.event(java.lang.String,java.lang.Object)void", "args": [STRING, "java.lang.Object"]},
)

LIBRARIES = {lib.name: lib for lib in (TOYAPM, BEACON)}

# --------------------------------------------------------------------------
# Random programs

_SYSTEM_CALLS = [
    ("android.util.Log.d(java.lang.String,java.lang.String)int", None, [STRING, STRING], "int"),
    ("java.lang.String.length()int", STRING, [], "int"),
    ("java.lang.String.trim()java.lang.String", STRING, [], STRING),
    ("java.lang.System.currentTimeMillis()long", None, [], "long"),
    ("java.lang.Thread.sleep(long)void", None, ["long"], "void"),
    ("android.content.Context.getString(int)java.lang.String", CONTEXT, ["int"], STRING),
    ("android.widget.Toast.makeText(android.content.Context,java.lang.CharSequence,int)android.widget.Toast",
     None, [CONTEXT, "java.lang.CharSequence", "int"], "android.widget.Toast"),
    ("java.util.List.size()int", "java.util.List", [], "int"),
    ("android.app.Activity.finish()void", "android.app.Activity", [], "void"),
    ("java.lang.Integer.parseInt(java.lang.String)int", None, [STRING], "int"),
]

_SYSTEM_BASES = [
    ("android.app.Activity", "activity"),
    ("android.app.Service", "service"),
    ("android.content.BroadcastReceiver", "receiver"),
    ("java.lang.Object", None),
    ("android.view.View", None),
    ("android.app.Application", None),
]

_LIFECYCLE = {
    "android.app.Activity": [("onCreate", ["android.os.Bundle"]), ("onResume", []), ("onPause", [])],
    "android.app.Service": [("onCreate", []), ("onStartCommand", ["android.content.Intent", "int", "int"])],
    "android.content.BroadcastReceiver": [("onReceive", [CONTEXT, "android.content.Intent"])],
    "android.app.Application": [("onCreate", [])],
}

_SYSTEM_INTERFACES = ["java.lang.Runnable", "android.view.View$OnClickListener", "java.io.Serializable"]

_WORDS = ["load", "save", "render", "update", "fetch", "parse", "sync", "check", "build", "apply",
          "open", "close", "reset", "query", "notify", "bind", "draw", "read", "write", "scan"]

_PARAM_TYPES = [STRING, "int", "long", CONTEXT, "java.util.List", "boolean"]


@dataclass
class _Method:
    host: str
    name: str
    params: list
    ret: str
    static: bool
    overrides: Optional[str] = None
    body: list = field(default_factory=list)

    @property
    def ref(self) -> str:
        return f"{self.host}.{self.name}({','.join(self.params)}){self.ret}"


@dataclass
class RandomApp:
    model: ProgramModel
    initialized: frozenset  # libraries whose init is called from app code
    embedded: frozenset


class _Builder:
    def __init__(self, rng: random.Random, n_classes: int, package: str):
        self.rng = rng
        self.package = package
        self.classes: list[dict] = []
        self.methods: list[_Method] = []
        self.kinds: dict[str, str] = {}
        self.fields: list[tuple[str, str]] = []
        self._plan(n_classes)

    def _plan(self, n: int) -> None:
        rng = self.rng
        app_types: list[str] = []
        interfaces: list[str] = []
        for k in range(n):
            name = f"{self.package}.{rng.choice(['ui', 'core', 'net', 'util'])}.C{k}"
            is_iface = k > 0 and rng.random() < 0.15
            if is_iface:
                sup = rng.choice([None, *_SYSTEM_INTERFACES, *interfaces])
                cls = {"name": name, "superclass": sup, "interfaces": [], "methods": []}
                interfaces.append(name)
            else:
                if app_types and rng.random() < 0.35:
                    sup = rng.choice(app_types)
                    kind = self.kinds.get(sup)
                else:
                    sup, kind = rng.choice(_SYSTEM_BASES)
                ifaces = rng.sample([*_SYSTEM_INTERFACES, *interfaces], k=rng.randint(0, 2))
                cls = {"name": name, "superclass": sup, "interfaces": ifaces, "methods": []}
                if kind:
                    self.kinds[name] = kind
                app_types.append(name)
                base = self._system_base(name, sup)
                for lname, lparams in _LIFECYCLE.get(base, []):
                    if rng.random() < 0.6:
                        self.methods.append(_Method(name, lname, list(lparams), "void", False, base))
                for _ in range(rng.randint(0, 3)):
                    params = rng.sample(_PARAM_TYPES + app_types[-3:], k=rng.randint(0, 2))
                    ret = rng.choice(["void", "void", STRING, "int", *app_types[-2:]])
                    mname = rng.choice(_WORDS)
                    if any(m.host == name and m.name == mname and m.params == params for m in self.methods):
                        continue
                    self.methods.append(_Method(name, mname, params, ret, rng.random() < 0.3))
                if rng.random() < 0.4:
                    self.fields.append((name, f"fld{k}"))
            self.classes.append(cls)

    def _system_base(self, name: str, sup: Optional[str]) -> Optional[str]:
        by_name = {c["name"]: c for c in self.classes}
        while sup is not None and sup in by_name:
            sup = by_name[sup]["superclass"]
        return sup

    # -- bodies -----------------------------------------------------------
    def fill(self, extra_calls: dict[int, list[dict]]) -> None:
        for idx, m in enumerate(self.methods):
            m.body = self._body(m, extra_calls.get(idx, []))

    def _body(self, m: _Method, planted: list[dict]) -> list[dict]:
        rng = self.rng
        regs: dict[str, list[int]] = {}
        next_reg = 0
        if not m.static:
            regs.setdefault(m.host, []).append(0)
            next_reg = 1
        for p in m.params:
            regs.setdefault(p, []).append(next_reg)
            next_reg += 1
        body: list[dict] = []

        def fresh() -> int:
            nonlocal next_reg
            next_reg += 1
            return next_reg - 1

        def value_of(t: str) -> int:
            if regs.get(t) and rng.random() < 0.7:
                return rng.choice(regs[t])
            r = fresh()
            if t == STRING:
                body.append({"op": "const-string", "dst": r, "value": rng.choice(["a", "b", "key", "v1"])})
            else:
                body.append({"op": "const", "dst": r, "type": t})
            regs.setdefault(t, []).append(r)
            return r

        ret_reg = None if m.ret == "void" else value_of(m.ret)
        start = len(body)
        steps = rng.randint(1, 6)
        calls = list(planted)
        for _ in range(steps):
            roll = rng.random()
            if roll < 0.3:
                callee, recv_t, arg_ts, ret = rng.choice(_SYSTEM_CALLS)
                calls.append({"callee": callee, "receiver": recv_t, "args": arg_ts, "ret": ret})
            elif roll < 0.6 and self.methods:
                target = rng.choice(self.methods)
                calls.append({"callee": target.ref, "receiver": None if target.static else target.host,
                              "args": target.params, "ret": target.ret})
            elif roll < 0.7:
                calls.append({"callee": "com.vendor.sdk.Helper.run()void", "args": [], "ret": "void"})
            elif roll < 0.8:
                a, b = value_of(STRING), value_of(STRING)
                r = fresh()
                body.append({"op": "concat", "dst": r, "a": a, "b": b})
                regs.setdefault(STRING, []).append(r)
            elif roll < 0.9 and self.fields:
                owner, fname = rng.choice(self.fields)
                if rng.random() < 0.5:
                    body.append({"op": "field-put", "owner": owner, "field": fname, "src": value_of(STRING)})
                else:
                    r = fresh()
                    body.append({"op": "field-get", "dst": r, "owner": owner, "field": fname})
            else:
                body.append({"op": "const-string", "dst": fresh(), "value": "tmp"})
        rng.shuffle(calls)
        for call in calls:
            ins = {"op": "invoke", "callee": call["callee"],
                   "args": [value_of(t) for t in call["args"]]}
            if call.get("receiver"):
                ins["receiver"] = value_of(call["receiver"])
                ins["kind"] = "virtual"
            ret = call.get("ret") or MethodRef.parse(call["callee"]).ret
            if ret != "void":
                ins["dst"] = fresh()
                regs.setdefault(ret, []).append(ins["dst"])
            body.append(ins)
        if len(body) > start and rng.random() < 0.3:
            # an early exit skipping part of the body
            body.insert(rng.randint(start, len(body)), {"op": "branch", "targets": []})
        body.append({"op": "return"} if ret_reg is None else {"op": "return", "src": ret_reg})
        for ins in body:
            if ins["op"] == "branch":
                ins["targets"] = [len(body) - 1]
        return body

    def to_json(self, libraries: list[dict]) -> dict:
        by_name = {c["name"]: c for c in self.classes}
        for m in self.methods:
            md = {"name": m.name, "params": m.params, "return": m.ret, "body": m.body}
            if m.static:
                md["static"] = True
            if m.overrides:
                md["overrides"] = m.overrides
            by_name[m.host]["methods"].append(md)
        components = [{"name": n, "kind": k, "actions": []} for n, k in sorted(self.kinds.items())
                      if by_name[n]["superclass"] is not None]
        return {"classes": [*self.classes, *libraries],
                "manifest": {"components": components, "permissions": [], "min_sdk": 21, "target_sdk": 30},
                "layouts": []}


def random_app(rng: random.Random, n_classes: int = 8, embed: tuple[ToyLibrary, ...] = (),
               init: tuple[ToyLibrary, ...] = (), log_only: tuple[ToyLibrary, ...] = (),
               package: str = "com.example") -> RandomApp:
    """Build a random valid program.

    ``embed`` libraries are copied into the program; ``init`` ones also get an
    initialization call planted in a random app method, ``log_only`` ones get
    a logging call but no initialization.
    """
    n_classes = max(1, n_classes)
    b = _Builder(rng, n_classes, package)
    if not b.methods:
        host = b.classes[0]["name"]
        b.methods.append(_Method(host, "main", [], "void", True))
    planted: dict[int, list[dict]] = {}
    for lib in init:
        idx = rng.randrange(len(b.methods))
        planted.setdefault(idx, []).append({**lib.init_call, "ret": "void"})
    for lib in log_only:
        if lib.log_call:
            idx = rng.randrange(len(b.methods))
            planted.setdefault(idx, []).append({**lib.log_call, "ret": "void"})
    b.fill(planted)
    embedded = {lib.name: lib for lib in (*embed, *init, *log_only)}
    lib_classes = [dict(c) for lib in embedded.values() for c in lib.classes]
    model = program_from_json(b.to_json(lib_classes))
    return RandomApp(model, frozenset(l.name for l in init), frozenset(embedded))


@dataclass
class CorpusEntry:
    name: str
    model: ProgramModel
    uses: frozenset
    obfuscated: bool


def labelled_corpus(size: int = 200, seed: int = 0, library: ToyLibrary = TOYAPM) -> list[CorpusEntry]:
    """Half the apps initialize ``library``; half of each group is obfuscated.

    Negative apps alternate between not embedding the library at all and
    embedding it with logging calls but no initialization.
    """
    rng = random.Random(seed)
    out = []
    for i in range(size):
        positive = i % 2 == 0
        obfuscated = (i // 2) % 2 == 1
        n = rng.randint(2, 12)
        if positive:
            app = random_app(rng, n, init=(library,))
        elif (i // 4) % 2 == 0:
            app = random_app(rng, n)
        else:
            app = random_app(rng, n, log_only=(library,))
        model = app.model
        if obfuscated:
            model, _ = obfuscate(model, seed * 100003 + i)
        out.append(CorpusEntry(f"app{i:03d}", model, app.initialized, obfuscated))
    return out


def roundtrip(model: ProgramModel) -> ProgramModel:
    return program_from_json(program_to_json(model))
