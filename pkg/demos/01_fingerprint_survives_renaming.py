"""Sign a library, obfuscate an app that embeds it, and find the library again.

Run: python3 demos/01_fingerprint_survives_renaming.py
"""
import random

from apmlens.corpus import TOYAPM, random_app
from apmlens.detect import build_index, detect_libraries, library_usage
from apmlens.obfuscate import obfuscate
from apmlens.sig import SignatureEncoder

index = build_index(TOYAPM.model(), TOYAPM.profile)
print(f"signed {TOYAPM.name}: {len(index.entries)} signatures")
init_sig = next(s for s, e in index.entries.items() if e.role == "init")
print(f"  init API signature: {init_sig[:90]}...")

app = random_app(random.Random(11), 6, init=(TOYAPM,), package="com.shop").model
renamed, rmap = obfuscate(app, seed=3)
print(f"\napp classes before: {sorted(app.classes)[:4]}")
print(f"app classes after:  {sorted(renamed.classes)[:4]}")

for label, model in (("original", app), ("obfuscated", renamed)):
    hits = detect_libraries(model, [index])
    print(f"\n{label}: {library_usage(hits)}")
    for h in hits:
        if h.role == "init" and h.matched_via == "callee-entry":
            print(f"  init call in {h.app_method} at sites {list(h.sites)}")

# Signatures of app methods do not change under renaming.
a, b = SignatureEncoder(app), SignatureEncoder(renamed)
same = all(a.signature(m.ref(c.name)) == b.signature(rmap.method_ref(m.ref(c.name))) for c, m in app.methods())
print(f"\nevery method signature preserved: {same}")
