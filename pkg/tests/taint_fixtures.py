"""Small taint fixtures: hand-written cases plus a seeded random generator.

Every fixture stays at or under 50 instructions so the brute-force oracle
remains cheap.
"""
import random

from progs import (
    LOC, TOSTR, TOY_LOG, activity, br, cat, component, const, cs, fget, fput, get, goto, inv, klass, meth,
    mv, new_intent, program, put, ret, set_action, set_class, start, view,
)

LM = "android.location.LocationManager"
DEVICE_ID = "android.telephony.TelephonyManager.getDeviceId()java.lang.String"
TOY_TRACK = "com.toyapm.Toy.track(java.lang.String,java.lang.String)void"
BEACON_EVENT = "io.beacon.Beacon.event(java.lang.String,java.lang.Object)void"
SET_KEY = "com.google.firebase.crashlytics.FirebaseCrashlytics.setCustomKey(java.lang.String,java.lang.String)void"
H0 = "g.H.h0(java.lang.String)java.lang.String"
H1 = "g.H.h1(java.lang.String)java.lang.String"


def loc(dst, tmp=9):
    """Two instructions: get a LocationManager into ``tmp`` and read the location into ``dst``."""
    return [const(tmp, LM), inv(LOC, [tmp], dst=dst, receiver=tmp)]


def two(body_a, body_b, actions_b=(), extra=(), layouts=()):
    return program([activity("x.A", body_a), activity("x.B", body_b), *extra],
                   components=[component("x.A"), component("x.B", actions=actions_b)], layouts=layouts)


def one(body, extra=(), layouts=()):
    return program([activity("x.A", body), *extra], components=[component("x.A")], layouts=layouts)


def helper(name, body, params=("java.lang.String",), ret_type="java.lang.String", static=True):
    return meth(name, body, list(params), ret_type, static=static)


NAMED = {}


def fixture(n_leaks):
    def wrap(fn):
        NAMED[fn.__name__] = (fn, n_leaks)
        return fn
    return wrap


@fixture(1)
def same_method():
    return one([*loc(2), inv(TOY_LOG, [2]), ret()])


@fixture(0)
def killed_by_constant():
    return one([*loc(2), cs(2, "clean"), inv(TOY_LOG, [2]), ret()])


@fixture(1)
def move_chain():
    return one([*loc(2), mv(3, 2), mv(4, 3), inv(TOY_LOG, [4]), ret()])


@fixture(1)
def concat_with_constant():
    return one([*loc(2), cs(3, "loc="), cat(4, 3, 2), inv(TOY_LOG, [4]), ret()])


@fixture(1)
def through_static_helper():
    h = klass("g.H", [helper("h0", [mv(1, 0), ret(1)])])
    return one([*loc(2), inv(H0, [2], dst=3), inv(TOY_LOG, [3]), ret()], extra=[h])


@fixture(0)
def helper_drops_its_argument():
    h = klass("g.H", [helper("h0", [cs(1, "k"), ret(1)])])
    return one([*loc(2), inv(H0, [2], dst=3), inv(TOY_LOG, [3]), ret()], extra=[h])


@fixture(1)
def instance_helper_receiver_shift():
    h = klass("g.I", [helper("pick", [mv(3, 2), ret(3)], params=("java.lang.String", "java.lang.String"),
                             static=False)])
    call = inv("g.I.pick(java.lang.String,java.lang.String)java.lang.String", [5, 2], dst=3, receiver=4)
    return one([*loc(2), const(4, "g.I"), cs(5, "a"), call, inv(TOY_LOG, [3]), ret()], extra=[h])


@fixture(0)
def instance_helper_wrong_argument():
    h = klass("g.I", [helper("pick", [mv(3, 1), ret(3)], params=("java.lang.String", "java.lang.String"),
                             static=False)])
    call = inv("g.I.pick(java.lang.String,java.lang.String)java.lang.String", [5, 2], dst=3, receiver=4)
    return one([*loc(2), const(4, "g.I"), cs(5, "a"), call, inv(TOY_LOG, [3]), ret()], extra=[h])


@fixture(1)
def field_across_methods():
    return program([
        activity("x.A", [*loc(2), fput("x.A", "last", 2), ret()]),
        activity("x.B", [fget(3, "x.A", "last"), inv(TOY_LOG, [3]), ret()]),
    ], components=[component("x.A"), component("x.B")])


@fixture(1)
def field_is_not_killed_by_clean_write():
    return one([*loc(2), fput("x.A", "f", 2), cs(3, "c"), fput("x.A", "f", 3), fget(4, "x.A", "f"),
                inv(TOY_LOG, [4]), ret()])


@fixture(1)
def icc_explicit():
    return two([*loc(2), new_intent(3), cs(4, "x.B"), set_class(3, 4), cs(5, "k"), put(3, 5, 2), start(3), ret()],
               [cs(2, "k"), get(3, 2), inv(TOY_LOG, [3]), ret()])


@fixture(1)
def icc_implicit():
    return two([*loc(2), new_intent(3), cs(4, "x.ACT"), set_action(3, 4), cs(5, "k"), put(3, 5, 2), start(3), ret()],
               [cs(2, "k"), get(3, 2), inv(TOY_LOG, [3]), ret()], actions_b=["x.ACT"])


@fixture(0)
def icc_key_mismatch():
    return two([*loc(2), new_intent(3), cs(4, "x.B"), set_class(3, 4), cs(5, "k"), put(3, 5, 2), start(3), ret()],
               [cs(2, "other"), get(3, 2), inv(TOY_LOG, [3]), ret()])


@fixture(1)
def icc_unknown_put_key_reaches_every_get():
    return two([*loc(2), new_intent(3), cs(4, "x.B"), set_class(3, 4), inv(TOSTR, receiver=4, dst=5),
                put(3, 5, 2), start(3), ret()],
               [cs(2, "k"), get(3, 2), inv(TOY_LOG, [3]), ret()])


@fixture(0)
def icc_ambiguous_action_carries_nothing():
    c = activity("x.C", [cs(2, "k"), get(3, 2), inv(TOY_LOG, [3]), ret()])
    return program([
        activity("x.A", [*loc(2), new_intent(3), cs(4, "x.ACT"), set_action(3, 4), cs(5, "k"), put(3, 5, 2),
                         start(3), ret()]),
        activity("x.B", [cs(2, "k"), get(3, 2), inv(TOY_LOG, [3]), ret()]), c,
    ], components=[component("x.A"), component("x.B", actions=["x.ACT"]), component("x.C", actions=["x.ACT"])])


@fixture(0)
def icc_other_intent():
    return two([*loc(2), new_intent(3), new_intent(6), cs(4, "x.B"), set_class(3, 4), cs(5, "k"), put(6, 5, 2),
                start(3), ret()],
               [cs(2, "k"), get(3, 2), inv(TOY_LOG, [3]), ret()])


@fixture(1)
def kill_on_one_branch_only():
    return one([*loc(2), br(3, 5), cs(2, "clean"), goto(5), inv(TOY_LOG, [2]), ret()])


@fixture(0)
def kill_on_both_branches():
    return one([*loc(2), br(3, 5), cs(2, "a"), goto(6), cs(2, "b"), inv(TOY_LOG, [2]), ret()])


@fixture(1)
def taint_around_a_loop():
    # r3 picks up the tainted r2 on a later iteration only
    return one([*loc(2), cs(3, "x"), br(4, 7), inv(TOY_LOG, [3]), mv(3, 2), goto(3), ret()])


@fixture(1)
def ui_password_field():
    return one([view(2, "pwd"), inv(TOSTR, receiver=2, dst=3), inv(TOY_LOG, [3]), ret()],
               layouts=[{"id": "pwd", "widget": "EditText", "label": "", "hint": "Password"}])


@fixture(0)
def ui_search_field():
    return one([view(2, "q"), inv(TOSTR, receiver=2, dst=3), inv(TOY_LOG, [3]), ret()],
               layouts=[{"id": "q", "widget": "EditText", "label": "Search", "hint": ""}])


@fixture(1)
def system_wrapper():
    return one([*loc(2), inv(TOSTR, receiver=2, dst=3), inv(TOY_LOG, [3]), ret()])


@fixture(1)
def track_any_position():
    return one([*loc(2), cs(3, "evt"), inv(TOY_TRACK, [3, 2]), ret()])


@fixture(0)
def insensitive_sink_position():
    return one([*loc(2), cs(3, "v"), inv(SET_KEY, [2, 3]), ret()])


@fixture(1)
def sensitive_sink_position():
    return one([*loc(2), cs(3, "k"), inv(SET_KEY, [3, 2]), ret()])


@fixture(2)
def two_sources_one_sink():
    return one([*loc(2), const(8, "android.telephony.TelephonyManager"), inv(DEVICE_ID, dst=3, receiver=8),
                cat(4, 2, 3), inv(TOY_LOG, [4]), ret()])


@fixture(4)
def shared_helper_is_context_insensitive():
    h = klass("g.H", [helper("h0", [mv(1, 0), ret(1)])])
    return program([
        activity("x.A", [*loc(2), inv(H0, [2], dst=3), ret()]),
        activity("x.B", [cs(2, "clean"), inv(H0, [2], dst=3), inv(TOY_LOG, [3]), ret()]),
        klass("x.C", [meth("go", [*loc(2), inv(H0, [2], dst=3), inv(TOY_LOG, [3]), ret()], static=True)]),
        h,
    ], components=[component("x.A"), component("x.B")])


@fixture(1)
def source_in_callee_returns():
    h = klass("g.H", [helper("where", [*loc(1), ret(1)], params=())])
    return one([inv("g.H.where()java.lang.String", dst=2), inv(BEACON_EVENT, [2, 2]), ret()], extra=[h])


@fixture(0)
def callee_overwrites_parameter():
    h = klass("g.H", [helper("h0", [cs(0, "clean"), inv(TOY_LOG, [0]), ret(0)])])
    return one([*loc(2), inv(H0, [2], dst=3), ret()], extra=[h])


@fixture(1)
def sink_inside_callee():
    h = klass("g.H", [helper("h0", [inv(TOY_LOG, [0]), ret(0)])])
    return one([*loc(2), inv(H0, [2], dst=3), ret()], extra=[h])


@fixture(0)
def dead_code_after_return():
    return one([*loc(2), ret(), inv(TOY_LOG, [2]), ret()])


@fixture(1)
def moved_intent():
    return two([*loc(2), new_intent(3), mv(7, 3), cs(4, "x.B"), set_class(7, 4), cs(5, "k"), put(3, 5, 2),
                start(7), ret()],
               [cs(2, "k"), get(3, 2), inv(TOY_LOG, [3]), ret()])


@fixture(1)
def get_with_two_possible_keys():
    return two([*loc(2), new_intent(3), cs(4, "x.B"), set_class(3, 4), cs(5, "k"), put(3, 5, 2), start(3), ret()],
               [br(1, 3), cs(2, "k"), goto(4), cs(2, "j"), get(3, 2), inv(TOY_LOG, [3]), ret()])


@fixture(0)
def get_with_two_other_keys():
    return two([*loc(2), new_intent(3), cs(4, "x.B"), set_class(3, 4), cs(5, "k"), put(3, 5, 2), start(3), ret()],
               [br(1, 3), cs(2, "a"), goto(4), cs(2, "b"), get(3, 2), inv(TOY_LOG, [3]), ret()])


def size(app):
    return sum(len(m.body) for _, m in app.methods())


# --------------------------------------------------------------------------
# Random programs


def random_fixture(seed: int, budget: int = 50):
    """Two activities and a static helper class with random bodies."""
    rng = random.Random(seed)
    share = [budget // 3, budget // 3, budget - 2 * (budget // 3)]
    bodies = [_random_body(rng, share[0], regs=range(2, 8), helper=False),
              _random_body(rng, share[1], regs=range(2, 8), helper=False)]
    h0 = _random_body(rng, share[2] // 2, regs=range(0, 5), helper=True)
    h1 = _random_body(rng, share[2] - share[2] // 2, regs=range(0, 5), helper=True)
    return program([
        activity("x.A", bodies[0]),
        activity("x.B", bodies[1]),
        klass("g.H", [helper("h0", h0), helper("h1", h1)]),
    ], components=[component("x.A"), component("x.B", actions=["x.ACT"])],
        layouts=[{"id": "pwd", "widget": "EditText", "label": "", "hint": "Password"},
                 {"id": "q", "widget": "EditText", "label": "Search", "hint": ""}])


def _random_body(rng, n, regs, helper):
    regs = list(regs)
    n = max(n, 2)
    body = []
    r = lambda: rng.choice(regs)  # noqa: E731
    while len(body) < n - 1:
        i = len(body)
        room = n - 1 - i
        kind = rng.choice(["source", "const", "move", "concat", "field-put", "field-get", "helper", "wrapper",
                           "sink", "intent", "get", "branch", "goto", "view", "const", "move"])
        if kind == "source" and room >= 2:
            t = r()
            body += [const(t, LM), inv(LOC, [t], dst=r(), receiver=t)]
        elif kind == "const":
            body.append(cs(r(), rng.choice(["a", "k", "j", "x.B"])))
        elif kind == "move":
            body.append(mv(r(), r()))
        elif kind == "concat":
            body.append(cat(r(), r(), r()))
        elif kind == "field-put":
            body.append(fput("g.H", rng.choice(["f0", "f1"]), r()))
        elif kind == "field-get":
            body.append(fget(r(), "g.H", rng.choice(["f0", "f1"])))
        elif kind == "helper":
            body.append(inv(rng.choice([H0, H1]), [r()], dst=r()))
        elif kind == "wrapper":
            body.append(inv(TOSTR, receiver=r(), dst=r()))
        elif kind == "sink":
            body.append(_sink(rng, r))
        elif kind == "intent" and room >= 5 and not helper:
            it, k, c = rng.sample(regs, 3)
            how = set_class(it, c) if rng.random() < .6 else set_action(it, c)
            body += [new_intent(it), cs(c, "x.B" if how["op"] == "intent-set-class" else "x.ACT"), how,
                     put(it, k, r()), start(it)]
        elif kind == "get" and not helper:
            body.append(get(r(), r()))
        elif kind == "branch" and room >= 2:
            body.append(br(i + 1, rng.randint(i + 1, n - 1)))
        elif kind == "goto" and room >= 2:
            # mostly forward, sometimes back to make a loop
            target = rng.randint(i + 1, n - 1) if rng.random() < .75 else rng.randint(0, i)
            if target <= i:
                body.append(br(i + 1, target))
            else:
                body.append(goto(target))
        elif kind == "view" and not helper:
            body.append(view(r(), rng.choice(["pwd", "q"])))
    body.append(ret(r()) if helper else ret())
    return body


def _sink(rng, r):
    if rng.random() < .75:
        return inv(TOY_LOG, [r()])
    return inv(TOY_TRACK, [r(), r()])


def corpus(n_random: int = 40, seed: int = 0):
    """Named fixtures followed by ``n_random`` generated ones, all within 50 instructions."""
    out = [(name, fn()) for name, (fn, _) in NAMED.items()]
    out += [(f"random-{seed}-{i}", random_fixture(seed * 100_003 + i)) for i in range(n_random)]
    return out

