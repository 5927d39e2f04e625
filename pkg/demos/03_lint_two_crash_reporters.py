"""Two crash-capturing libraries in one app: which one keeps the crash handler?

Run: python3 demos/03_lint_two_crash_reporters.py
"""
from apmlens.corpus import BEACON, TOYAPM
from apmlens.detect import build_index
from apmlens.model import program_from_json
from apmlens.pipeline import analyze_model

CTX = "android.content.Context"
TOY_INIT = "com.toyapm.Toy.init(android.content.Context,java.lang.String)void"
BEACON_START = "io.beacon.Beacon.start(android.content.Context)void"
FIS = "java.io.FileInputStream.<init>(java.lang.String)void"


def app_with(body, **manifest):
    return program_from_json({
        "classes": [{"name": "shop.App", "superclass": "android.app.Application",
                     "methods": [{"name": "onCreate", "overrides": "android.app.Application", "body": body}]},
                    *TOYAPM.classes, *BEACON.classes],
        "manifest": {"min_sdk": 21, "target_sdk": 30, **manifest},
    })


inits = [
    {"op": "const", "dst": 1, "type": CTX},
    {"op": "const-string", "dst": 2, "value": "key"},
    {"op": "invoke", "callee": TOY_INIT, "args": [1, 2]},
    {"op": "invoke", "callee": BEACON_START, "args": [1]},
]
cpu = [
    {"op": "const", "dst": 5, "type": "java.io.FileInputStream"},
    {"op": "const-string", "dst": 4, "value": "/proc/stat"},
    {"op": "invoke", "callee": FIS, "args": [4], "receiver": 5, "kind": "special"},
]
indexes = [build_index(lib.model(), lib.profile) for lib in (TOYAPM, BEACON)]

straight = app_with([*inits, {"op": "return"}])
print("straight-line initialization:")
for f in analyze_model(straight, indexes)["lint"]:
    print(f"  [{f['severity']}] {f['rule']}: {f['message']}")

branchy = app_with([{"op": "branch", "targets": [1, 5]}, *inits[:3], {"op": "goto", "target": 6},
                    {"op": "const", "dst": 1, "type": CTX}, {"op": "invoke", "callee": BEACON_START, "args": [1]},
                    {"op": "return"}])
print("\ninitialization on two branches:")
for f in analyze_model(branchy, indexes)["lint"]:
    print(f"  [{f['severity']}] {f['rule']}: {f['message']}")

reading = app_with([*inits, *cpu, {"op": "return"}], min_sdk=26, target_sdk=30,
                   permissions=["android.permission.READ_LOGS"])
print("\nreading /proc/stat on API 26 with READ_LOGS requested:")
for f in analyze_model(reading, indexes)["lint"]:
    print(f"  [{f['severity']}] {f['rule']}: {f['message']}")
