import json

import pytest

from apmlens.cli import EXIT_FINDINGS, EXIT_OK, EXIT_USAGE, main
from apmlens.corpus import TOYAPM
from apmlens.detect import build_index
from apmlens.model import load_program_model, save_program_model
from progs import CTX, LOC, TOY_INIT, TOY_LOG, activity, const, cs, inv, klass, meth, program, ret
from test_detect import tiny_library, tiny_profile


@pytest.fixture
def work(tmp_path):
    idx = tmp_path / "toyapm.sigidx"
    idx.write_text(build_index(TOYAPM.model(), TOYAPM.profile).dumps())
    return tmp_path, idx


def leaky_app():
    body = [const(1, CTX), cs(2, "key"), inv(TOY_INIT, [1, 2]), const(5, "android.location.LocationManager"),
            inv(LOC, [2], dst=6, receiver=5), inv("java.lang.Object.toString()java.lang.String", receiver=6, dst=7),
            inv(TOY_LOG, [7]), ret()]
    return program([activity("a.Main", body), *TOYAPM.classes])


def clean_app():
    return program([activity("a.Main", [const(1, CTX), cs(2, "key"), inv(TOY_INIT, [1, 2]), ret()]),
                    *TOYAPM.classes])


def save(tmp_path, name, model):
    path = tmp_path / name
    save_program_model(model, path)
    return str(path)


def analyze_json(*argv):
    return ["analyze", *argv, "--format", "json"]


def test_sign_writes_one_line_per_method(tmp_path):
    lib = save(tmp_path, "lib.json", tiny_library())
    prof = tmp_path / "prof.json"
    prof.write_text(json.dumps(tiny_profile().to_json()))
    out = tmp_path / "tiny.sigidx"
    assert main(["sign", lib, str(prof), "-o", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "sigidx v1 tiny" and len(lines) == 4


def test_sign_rejects_profile_naming_a_missing_api(tmp_path, capsys):
    lib = save(tmp_path, "lib.json", tiny_library())
    prof = tmp_path / "prof.json"
    prof.write_text(json.dumps({"library": "tiny", "init": ["t.Lib.nope()void"]}))
    assert main(["sign", lib, str(prof)]) == EXIT_USAGE
    assert "t.Lib.nope()void" in capsys.readouterr().err


def test_sign_rejects_empty_library(tmp_path):
    lib = save(tmp_path, "lib.json", program([klass("t.Lib", origin="embedded-library")]))
    prof = tmp_path / "prof.json"
    prof.write_text(json.dumps({"library": "tiny"}))
    assert main(["sign", lib, str(prof)]) == EXIT_USAGE


def test_analyze_leak_exits_one(work, capsys):
    tmp, idx = work
    app = save(tmp, "leaky.json", leaky_app())
    assert main(analyze_json(app, "--index", str(idx))) == EXIT_FINDINGS
    report = json.loads(capsys.readouterr().out)
    assert len(report["leaks"]) == 1
    assert report["libraries"] == {"toyapm": "used"}


def test_analyze_clean_exits_zero(work):
    tmp, idx = work
    assert main(["analyze", save(tmp, "clean.json", clean_app()), "--index", str(idx)]) == EXIT_OK


def test_obfuscated_app_gives_same_findings(work, capsys):
    tmp, idx = work
    app = save(tmp, "leaky.json", leaky_app())
    obf = tmp / "obf.json"
    assert main(["obfuscate", app, "--seed", "7", "-o", str(obf)]) == EXIT_OK
    main(analyze_json(app, "--index", str(idx)))
    plain = json.loads(capsys.readouterr().out)
    main(analyze_json(str(obf), "--index", str(idx)))
    renamed = json.loads(capsys.readouterr().out)
    assert renamed["libraries"] == plain["libraries"]
    assert len(renamed["detections"]) == len(plain["detections"])
    assert len(renamed["leaks"]) == len(plain["leaks"]) == 1


def test_obfuscate_is_deterministic(tmp_path):
    app = save(tmp_path, "app.json", leaky_app())
    a, b, m = tmp_path / "a.json", tmp_path / "b.json", tmp_path / "map.json"
    main(["obfuscate", app, "--seed", "42", "-o", str(a), "--map", str(m)])
    main(["obfuscate", app, "--seed", "42", "-o", str(b)])
    assert a.read_bytes() == b.read_bytes()
    assert json.loads(m.read_text())
    assert load_program_model(a).classes


def test_validate(tmp_path, capsys):
    assert main(["validate", save(tmp_path, "ok.json", clean_app())]) == EXIT_OK
    assert capsys.readouterr().out == "ok\n"
    bad = program([klass("a.X", [meth("m", [inv("a.X.m()void", receiver=3), ret()], static=True)])])
    assert main(["validate", save(tmp_path, "bad.json", bad)]) == EXIT_FINDINGS
    broken = tmp_path / "broken.json"
    broken.write_text("{")
    assert main(["validate", str(broken)]) == EXIT_USAGE


def test_missing_file_is_a_usage_error(tmp_path):
    assert main(["analyze", str(tmp_path / "none.json")]) == EXIT_USAGE


def test_unknown_rule_is_a_usage_error(work):
    tmp, idx = work
    assert main(["analyze", save(tmp, "c.json", clean_app()), "--rules", "R1,R9"]) == EXIT_USAGE


def test_flag_overrides_config_which_overrides_default(work, capsys):
    tmp, idx = work
    app = save(tmp, "leaky.json", leaky_app())
    cfg = tmp / "cfg.json"
    cfg.write_text(json.dumps({"rules": ["R1"]}))
    # default: every rule, so the leak is reported by R5
    main(analyze_json(app, "--index", str(idx)))
    assert {f["rule"] for f in json.loads(capsys.readouterr().out)["lint"]} == {"R5"}
    # config narrows to R1
    assert main(analyze_json(app, "--index", str(idx), "--config", str(cfg))) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["lint"] == []
    # flag wins over config
    assert main(analyze_json(app, "--index", str(idx), "--config", str(cfg), "--rules", "R5")) == EXIT_FINDINGS


def test_several_apps_with_jobs(work, capsys):
    tmp, idx = work
    apps = [save(tmp, "a.json", clean_app()), save(tmp, "b.json", leaky_app())]
    assert main(analyze_json(*apps, "--index", str(idx), "--jobs", "2")) == EXIT_FINDINGS
    doc = json.loads(capsys.readouterr().out)
    assert [r["app"] for r in doc["reports"]] == ["a.json", "b.json"]
    main(analyze_json(*apps, "--index", str(idx)))
    assert json.loads(capsys.readouterr().out) == doc


def test_analyze_twice_is_byte_identical(work):
    tmp, idx = work
    app = save(tmp, "leaky.json", leaky_app())
    outs = [tmp / "r1.json", tmp / "r2.json"]
    for out in outs:
        main(analyze_json(app, "--index", str(idx), "-o", str(out)))
    assert outs[0].read_bytes() == outs[1].read_bytes()


def test_text_report_and_detect(work, capsys):
    tmp, idx = work
    app = save(tmp, "leaky.json", leaky_app())
    main(["analyze", app, "--index", str(idx)])
    text = capsys.readouterr().out
    assert text.startswith("== leaky.json ==") and "leaks: 1" in text
    assert main(["detect", app, "--index", str(idx)]) == EXIT_OK
    assert capsys.readouterr().out.startswith("toyapm: used")


def test_icfg_dot(tmp_path, capsys):
    assert main(["icfg", save(tmp_path, "a.json", clean_app())]) == EXIT_OK
    assert capsys.readouterr().out.startswith("digraph icfg {")

