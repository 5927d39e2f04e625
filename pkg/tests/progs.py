"""Small builders for hand-written program fixtures."""
from __future__ import annotations

from apmlens.model import ProgramModel, program_from_json

STR = "java.lang.String"
CTX = "android.content.Context"
ACTIVITY = "android.app.Activity"
LOC = "android.location.LocationManager.getLastKnownLocation(java.lang.String)android.location.Location"
TOSTR = "java.lang.Object.toString()java.lang.String"
TOY_LOG = "com.toyapm.Toy.log(java.lang.String)void"
TOY_INIT = "com.toyapm.Toy.init(android.content.Context,java.lang.String)void"
BEACON_START = "io.beacon.Beacon.start(android.content.Context)void"


def cs(dst, value):
    return {"op": "const-string", "dst": dst, "value": value}


def const(dst, type="java.lang.Object"):
    return {"op": "const", "dst": dst, "type": type}


def mv(dst, src):
    return {"op": "move", "dst": dst, "src": src}


def cat(dst, a, b):
    return {"op": "concat", "dst": dst, "a": a, "b": b}


def inv(callee, args=(), dst=None, receiver=None, kind=None):
    ins = {"op": "invoke", "callee": callee, "args": list(args)}
    if dst is not None:
        ins["dst"] = dst
    if receiver is not None:
        ins["receiver"] = receiver
    if kind is not None:
        ins["kind"] = kind
    return ins


def fput(owner, field, src):
    return {"op": "field-put", "owner": owner, "field": field, "src": src}


def fget(dst, owner, field):
    return {"op": "field-get", "dst": dst, "owner": owner, "field": field}


def view(dst, resource):
    return {"op": "find-view", "dst": dst, "resource": resource}


def new_intent(dst):
    return {"op": "new-intent", "dst": dst}


def set_class(intent, src):
    return {"op": "intent-set-class", "intent": intent, "src": src}


def set_action(intent, src):
    return {"op": "intent-set-action", "intent": intent, "src": src}


def put(intent, key, value):
    return {"op": "put-extra", "intent": intent, "key": key, "value": value}


def get(dst, key):
    return {"op": "get-extra", "dst": dst, "key": key}


def start(intent):
    return {"op": "start-component", "intent": intent}


def ret(src=None):
    return {"op": "return"} if src is None else {"op": "return", "src": src}


def goto(target):
    return {"op": "goto", "target": target}


def br(*targets):
    return {"op": "branch", "targets": list(targets)}


def meth(name, body, params=(), ret_type="void", static=False, overrides=None):
    m = {"name": name, "params": list(params), "return": ret_type, "body": list(body)}
    if static:
        m["static"] = True
    if overrides:
        m["overrides"] = overrides
    return m


def klass(name, methods=(), superclass=None, interfaces=(), origin="app"):
    c = {"name": name, "methods": list(methods), "interfaces": list(interfaces), "origin": origin}
    if superclass:
        c["superclass"] = superclass
    return c


def program(classes, components=(), permissions=(), layouts=(), min_sdk=21, target_sdk=30) -> ProgramModel:
    return program_from_json({
        "classes": list(classes),
        "manifest": {"components": list(components), "permissions": list(permissions),
                     "min_sdk": min_sdk, "target_sdk": target_sdk},
        "layouts": list(layouts),
    })


def component(name, kind="activity", actions=()):
    return {"name": name, "kind": kind, "actions": list(actions)}


def activity(name, body, extra_methods=()):
    """An activity whose ``onCreate(Bundle)`` runs ``body`` (receiver r0, bundle r1)."""
    return klass(name, [meth("onCreate", body, ["android.os.Bundle"], overrides=ACTIVITY), *extra_methods],
                 superclass=ACTIVITY)


def single(body, params=(), static=True, ret_type="void", host="t.T"):
    """Program with one method ``t.T.m`` holding ``body``."""
    return program([klass(host, [meth("m", body, params, ret_type, static)])])
