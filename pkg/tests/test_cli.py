import json
import subprocess
import sys

import numpy as np
import pytest

from tokenbind.cli import main
from tokenbind.embx import F32, load_embx, save_embx


@pytest.fixture
def instance(tmp_path):
    assert main(["gen", "--seed", "3", "--out", str(tmp_path / "inst")]) == 0
    return tmp_path / "inst"


def test_gen_is_deterministic(tmp_path, capsys):
    for name in ("a", "b"):
        assert main(["gen", "--seed", "7", "--dtype", "f32", "--out", str(tmp_path / name)]) == 0
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
    assert load_embx(tmp_path / "a" / "tokens.embx").dtype == F32


def test_optimize_is_byte_identical(instance, tmp_path, capsys):
    for name in ("x", "y"):
        assert main(["optimize", "--instance", str(instance), "--seed", "1", "--out", str(tmp_path / name)]) == 0
    for f in ("tokens.embx", "latents.embx", "report.json"):
        assert (tmp_path / "x" / f).read_bytes() == (tmp_path / "y" / f).read_bytes()
    report = json.loads((tmp_path / "x" / "report.json").read_text())
    assert report["config"]["seed"] == 1
    assert len(report["loss_trace"]) == 201


def test_optimize_with_config_and_prompt(instance, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"steps": 3, "lambda": 0.05, "capo": False}))
    args = ["optimize", "--instance", str(instance), "--prompt", "a red apple and a blue bowl"]
    assert main(args + ["--config", str(cfg), "--mode", "noncausal", "--out", str(tmp_path / "o")]) == 0
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert report["config"]["lambda"] == 0.05 and report["config"]["causality"] == "noncausal"
    assert len(report["loss_trace"]) == 4


def test_parse(capsys):
    assert main(["parse", "a big red cat and a small blue dog", "--eot", "--pad", "1"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert [np_["object_index"] for np_ in doc["nps"]] == [3, 8]
    assert doc["eot_index"] == 9 and doc["pad_indices"] == [10]


def test_orthogonalize_and_report(instance, tmp_path, capsys):
    out = tmp_path / "capo.embx"
    assert main(["orthogonalize", "--instance", str(instance), "--mode", "noncausal", "--out", str(out)]) == 0
    geo = json.loads(capsys.readouterr().out)
    (angle,) = geo["geometry_after"]["angles"]
    assert angle["value"] == pytest.approx(np.pi / 2, abs=1e-6)
    args = ["report", "--before", str(instance / "tokens.embx"), "--after", str(out)]
    assert main(args + ["--annotation", str(instance / "annotation.json")]) == 0
    assert json.loads(capsys.readouterr().out)["deltas"]["angle"][0]["value"] == pytest.approx(
        geo["deltas"]["angle"][0]["value"]
    )


def test_attention_summary(instance, capsys):
    assert main(["attention", "--instance", str(instance)]) == 0
    s = json.loads(capsys.readouterr().out)
    assert len(s["entropy"]) == 2 and len(s["bhattacharyya"]) == 1


def test_verify_pass_and_fail(tmp_path, capsys):
    assert main(["verify", "kl-growth", "--trials", "5", "--out", str(tmp_path / "v.json")]) == 0
    assert json.loads((tmp_path / "v.json").read_text())["passed"]
    # three seeds can never reach p < 0.05 in a one-sided sign test
    assert main(["verify", "geometry", "--trials", "3"]) == 3


def test_verify_assumptions_on_files(instance, capsys):
    assert main(["verify", "assumptions", "--instance", str(instance)]) == 0
    assert "pairs" in json.loads(capsys.readouterr().out)


@pytest.mark.parametrize(
    "argv",
    [
        ["parse", "red and blue"],
        ["optimize"],
        ["orthogonalize", "--tokens", "/nonexistent.embx", "--prompt", "a cat", "--out", "x"],
    ],
)
def test_input_errors_exit_1(argv, capsys):
    assert main(argv) == 1


def test_argparse_error_exit_code():
    with pytest.raises(SystemExit) as info:
        main(["verify", "nonsense"])
    assert info.value.code == 1


def test_named_errors(instance, tmp_path, capsys):
    bad = tmp_path / "bad.embx"
    bad.write_bytes(b"XBME" + (instance / "tokens.embx").read_bytes()[4:])
    assert main(["optimize", "--instance", str(instance), "--tokens", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert "BadMagic" in capsys.readouterr().err

    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"lamda": 0.1}')
    assert main(["optimize", "--instance", str(instance), "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "ConfigError" in capsys.readouterr().err

    ann = tmp_path / "ann.json"
    ann.write_text('{"token_count": 3, "nps": [{"span": [0, 2], "object_index": 1, "attribute_indices": []},'
                   ' {"span": [1, 3], "object_index": 2, "attribute_indices": []}]}')
    assert main(["attention", "--instance", str(instance), "--annotation", str(ann)]) == 1
    assert "OverlapError" in capsys.readouterr().err


def test_numerical_failure_exit_2(tmp_path, capsys):
    t = np.zeros((7, 4))
    t[2] = [1.0, 2.0, 0.0, 0.0]
    t[6] = [2.0, 4.0, 0.0, 0.0]
    save_embx(tmp_path / "t.embx", t)
    argv = ["orthogonalize", "--tokens", str(tmp_path / "t.embx"), "--prompt", "a red apple and a blue bowl"]
    assert main(argv + ["--mode", "noncausal", "--out", str(tmp_path / "o.embx")]) == 2
    assert "NearSingular" in capsys.readouterr().err


def test_console_script(tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "tokenbind.cli", "parse", "a cat"], capture_output=True, text=True, check=True
    )
    assert json.loads(out.stdout)["token_count"] == 2
    bad = subprocess.run([sys.executable, "-m", "tokenbind.cli", "parse", "cat"], capture_output=True, text=True)
    assert bad.returncode == 1 and "ParseError" in bad.stderr
