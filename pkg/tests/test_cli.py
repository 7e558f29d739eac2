import subprocess
import sys

import numpy as np
import pytest

from bitmark.cli import main
from bitmark.fileformat import read_stream


def run(capsys, *args):
    code = main(list(args))
    out, err = capsys.readouterr()
    fields = dict(line.split("=", 1) for line in out.splitlines() if "=" in line and " " not in line)
    return code, fields, err


def test_gen_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.bmk", tmp_path / "b.bmk"
    code, fields, _ = run(capsys, "gen", "--seed", "3", "--out", str(a))
    assert code == 0 and -4 <= float(fields["z"]) <= 4
    run(capsys, "gen", "--seed", "3", "--out", str(b))
    assert a.read_bytes() == b.read_bytes()


def test_gen_without_seed_prints_it(tmp_path, capsys):
    code, fields, _ = run(capsys, "gen", "--out", str(tmp_path / "x.bmk"))
    assert code == 0 and int(fields["seed"]) >= 0


def test_embed_delta_zero_matches_gen(tmp_path, capsys):
    run(capsys, "gen", "--seed", "9", "--out", str(tmp_path / "g.bmk"))
    code, _, _ = run(capsys, "embed", "--delta", "0", "--green", "01,10", "--seed", "9",
                     "--out", str(tmp_path / "e.bmk"))
    assert code == 0
    assert (tmp_path / "g.bmk").read_bytes() == (tmp_path / "e.bmk").read_bytes()


def test_embed_detect_attack(tmp_path, capsys):
    wm = tmp_path / "wm.bmk"
    code, fields, _ = run(capsys, "embed", "--delta", "2", "--green", "01,10", "--seed", "1",
                          "--out", str(wm))
    assert code == 0 and float(fields["z"]) > 10
    code, fields, _ = run(capsys, "detect", "--in", str(wm), "--green", "01,10")
    assert code == 0 and fields["decision"] == "true"
    assert int(fields["T"]) == 326_151
    code, fields, _ = run(capsys, "attack", "--in", str(wm), "--attack", "bitflipper",
                          "--phi", "2.2", "--green", "01,10", "--seed", "2",
                          "--out", str(tmp_path / "att.bmk"))
    assert code == 0 and float(fields["z"]) < float(fields["input_z"])
    code, fields, _ = run(capsys, "attack", "--in", str(wm), "--attack", "reencode-infinity2b",
                          "--seed", "2", "--out", str(tmp_path / "re.bmk"))
    assert code == 0 and 5 < float(fields["z"]) < float(fields["input_z"])


def test_detect_decision_is_data(tmp_path, capsys):
    clean = tmp_path / "c.bmk"
    run(capsys, "gen", "--seed", "4", "--out", str(clean))
    code, fields, _ = run(capsys, "detect", "--in", str(clean), "--green", "01,10",
                          "--threshold", "100")
    assert code == 0 and fields["decision"] == "false"


def test_detect_fpr_calibration(tmp_path, capsys):
    clean = tmp_path / "c.bmk"
    run(capsys, "gen", "--seed", "4", "--out", str(clean))
    code, fields, _ = run(capsys, "detect", "--in", str(clean), "--green", "01,10",
                          "--fpr-calibration", "0.1", "--calibration-n", "20", "--seed", "1")
    assert code == 0 and 0 < float(fields["threshold"]) < 4


def test_keyed_embed_and_detect(tmp_path, capsys):
    wm = tmp_path / "k.bmk"
    code, _, _ = run(capsys, "embed", "--delta", "2", "--key", "00ff10", "--n", "4",
                     "--seed", "1", "--out", str(wm))
    assert code == 0
    assert read_stream(wm)[1] == 4
    _, good, _ = run(capsys, "detect", "--in", str(wm), "--key", "00ff10", "--n", "4")
    _, bad, _ = run(capsys, "detect", "--in", str(wm), "--key", "77aa", "--n", "4")
    # a wrong key agrees with the right one on about half the prefixes by chance,
    # so some signal leaks through, but much less
    assert float(good["z"]) > 10
    assert abs(float(bad["z"])) < float(good["z"]) / 2


def test_ineffective_green_list_warns(tmp_path, capsys):
    code, _, err = run(capsys, "embed", "--delta", "2", "--green", "00,01", "--seed", "1",
                       "--out", str(tmp_path / "x.bmk"))
    assert code == 0 and "ineffective partition" in err


@pytest.mark.parametrize("args", [
    ["embed", "--delta", "2", "--seed", "1", "--out", "x.bmk"],
    ["embed", "--delta", "2", "--green", "01,10", "--key", "00", "--out", "x.bmk"],
    ["embed", "--delta", "-1", "--green", "01,10", "--out", "x.bmk"],
    ["detect", "--green", "01,10"],
    ["nosuchcommand"],
])
def test_usage_errors(tmp_path, capsys, monkeypatch, args):
    monkeypatch.chdir(tmp_path)
    assert run(capsys, *args)[0] == 1


def test_config_errors(tmp_path, capsys):
    assert run(capsys, "gen", "--profile", str(tmp_path / "missing.txt"), "--seed", "1",
               "--out", str(tmp_path / "x.bmk"))[0] == 2
    run(capsys, "gen", "--seed", "1", "--out", str(tmp_path / "c.bmk"))
    assert run(capsys, "attack", "--in", str(tmp_path / "c.bmk"), "--attack", "nosuch",
               "--out", str(tmp_path / "y.bmk"))[0] == 2
    assert run(capsys, "attack", "--in", str(tmp_path / "c.bmk"), "--attack", "identity",
               "--rates", "0.9", "--out", str(tmp_path / "y.bmk"))[0] == 2


def test_io_errors(tmp_path, capsys):
    run(capsys, "gen", "--seed", "1", "--out", str(tmp_path / "c.bmk"))
    data = (tmp_path / "c.bmk").read_bytes()
    (tmp_path / "t.bmk").write_bytes(data[: len(data) // 2])
    code, _, err = run(capsys, "detect", "--in", str(tmp_path / "t.bmk"), "--green", "01,10")
    assert code == 3 and "payload" in err
    (tmp_path / "bad.bmk").write_bytes(b"JUNK" + data[4:])
    assert run(capsys, "detect", "--in", str(tmp_path / "bad.bmk"), "--green", "01,10")[0] == 3
    assert run(capsys, "detect", "--in", str(tmp_path / "none.bmk"), "--green", "01,10")[0] == 3


def test_attack_help_lists_presets(capsys):
    main(["attack", "--help"])
    out = capsys.readouterr().out
    for name in ("reencode-infinity2b", "noise-weak", "noise-strong", "bitflipper"):
        assert name in out


def test_eval_command(tmp_path, capsys):
    spec = tmp_path / "spec.yaml"
    spec.write_text("schedule: {tokens: [4, 16, 64], m: 32}\nprofile: [0.1, 0.2, 0.23]\n"
                    "deltas: [0, 2]\nattacks: [none]\nn_pos: 6\nn_neg: 6\nfpr: 0.2\nseed: 1\n")
    code, fields, _ = run(capsys, "eval", "--spec", str(spec), "--out-dir", str(tmp_path / "o"))
    assert code == 0
    for key in ("report", "summary", "scores"):
        assert (tmp_path / "o").joinpath(fields[key].rsplit("/", 1)[-1]).exists()
    spec.write_text("deltas: [2]\nbogus: 1\n")
    assert run(capsys, "eval", "--spec", str(spec), "--out-dir", str(tmp_path / "o"))[0] == 2


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "bitmark", "detect", "--in",
                          str(tmp_path / "missing.bmk"), "--green", "01,10"],
                         capture_output=True, text=True)
    assert res.returncode == 3
