"""Follow a location value from one activity into another and out through a logging call.

Run: python3 demos/02_trace_a_leak.py
"""
from apmlens.corpus import TOYAPM
from apmlens.detect import build_index
from apmlens.model import program_from_json
from apmlens.pipeline import analyze_model

LOC = "android.location.LocationManager.getLastKnownLocation(java.lang.String)android.location.Location"
TO_STRING = "java.lang.Object.toString()java.lang.String"
LOG = "com.toyapm.Toy.log(java.lang.String)void"
BUNDLE = ["android.os.Bundle"]


def activity(name, body):
    return {"name": name, "superclass": "android.app.Activity",
            "methods": [{"name": "onCreate", "params": BUNDLE, "overrides": "android.app.Activity", "body": body}]}


sender = activity("shop.Home", [
    {"op": "const", "dst": 2, "type": "android.location.LocationManager"},
    {"op": "const-string", "dst": 3, "value": "gps"},
    {"op": "invoke", "callee": LOC, "args": [3], "receiver": 2, "dst": 4},
    {"op": "invoke", "callee": TO_STRING, "receiver": 4, "dst": 5},
    {"op": "new-intent", "dst": 6},
    {"op": "const-string", "dst": 7, "value": "shop.Stats"},
    {"op": "intent-set-class", "intent": 6, "src": 7},
    {"op": "const-string", "dst": 8, "value": "where"},
    {"op": "put-extra", "intent": 6, "key": 8, "value": 5},
    {"op": "start-component", "intent": 6},
    {"op": "return"},
])
receiver = activity("shop.Stats", [
    {"op": "const-string", "dst": 2, "value": "where"},
    {"op": "get-extra", "dst": 3, "key": 2},
    {"op": "invoke", "callee": LOG, "args": [3]},
    {"op": "return"},
])
app = program_from_json({
    "classes": [sender, receiver, *TOYAPM.classes],
    "manifest": {"components": [{"name": "shop.Home", "kind": "activity"},
                                {"name": "shop.Stats", "kind": "activity"}],
                 "min_sdk": 21, "target_sdk": 30},
})

report = analyze_model(app, [build_index(TOYAPM.model(), TOYAPM.profile)], name="shop")
(edge,) = report["icc_edges"]
print(f"ICC: {edge['from']} -> {edge['target']} ({edge['resolution']})")
for leak in report["leaks"]:
    print(f"\nleak needs {', '.join(leak['permissions'])}")
    for step in leak["steps"]:
        print(f"  {step['method']} @ {step['site']}")
for f in report["lint"]:
    print(f"\n[{f['severity']}] {f['rule']}: {f['message']}")
