import json
import struct
import subprocess
import sys

import numpy as np
import pytest

from oracles import bandlimited_idft
from orpam_eibmv.cli import main
from orpam_eibmv.config import ConfigError, RunConfig, build_run_config, parse_config
from orpam_eibmv.io import HEADER, VolumeFormatError, decode_volume, encode_volume, read_volume, write_volume
from orpam_eibmv.pipeline import ReconstructionConfig, Volume


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def small_volume(tmp_path, capsys):
    path = tmp_path / "in.orpa"
    code, _, _ = run(capsys, "synth", "--out", path, "--nx", 3, "--ny", 2, "--seed", 4)
    assert code == 0
    return path


class TestFormat:
    @pytest.mark.parametrize("dtype", ["float32", "float64"])
    def test_round_trip(self, rng, dtype):
        data = rng.standard_normal((3, 4, 17)).astype(dtype).astype(float)
        v = Volume(data, 1.5e8, 5e-6)
        back = decode_volume(encode_volume(v, dtype))
        assert back.data.tobytes() == v.data.tobytes()
        assert (back.fs, back.pitch) == (v.fs, v.pitch)

    def test_header_and_order(self):
        data = np.arange(2 * 3 * 4, dtype=float).reshape(2, 3, 4)
        buf = encode_volume(Volume(data, 2e8, 0.0), "float32")
        assert HEADER.size == 35
        assert buf[:4] == b"ORPA"
        assert struct.unpack_from("<HIII", buf, 4) == (1, 2, 3, 4)
        assert struct.unpack_from("<dd", buf, 18) == (2e8, 0.0)
        assert buf[34] == 0
        payload = np.frombuffer(buf, "<f4", offset=35)
        # x varies fastest across A-scans, time innermost
        np.testing.assert_array_equal(payload[:4], data[0, 0])
        np.testing.assert_array_equal(payload[4:8], data[1, 0])
        np.testing.assert_array_equal(payload[8:12], data[0, 1])

    @pytest.mark.parametrize("mutate, match", [
        (lambda b: b"XXXX" + b[4:], "magic"),
        (lambda b: b[:4] + struct.pack("<H", 9) + b[6:], "version"),
        (lambda b: b[:-4], "payload"),
        (lambda b: b[:34] + b"\x07" + b[35:], "dtype"),
        (lambda b: b[:10], "short"),
    ])
    def test_rejects_corrupt(self, mutate, match):
        buf = encode_volume(Volume(np.zeros((1, 1, 8)), 2e8), "float32")
        with pytest.raises(VolumeFormatError, match=match):
            decode_volume(mutate(buf))


class TestConfig:
    def test_parse(self):
        values = parse_config("# run\nmethod = fmv\nloading = auto\nforward_backward = yes  # fb\n\n")
        assert values == {"method": "fmv", "loading": None, "forward_backward": True}

    @pytest.mark.parametrize("text", ["bogus = 1", "method fmv", "upsample = x", "method = fmv\nmethod = uniform"])
    def test_rejects(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_invalid_value_rejected(self):
        with pytest.raises(ConfigError):
            build_run_config({"threshold": 2.0}, RunConfig())

    def test_text_round_trip(self):
        cfg = build_run_config({"method": "fmv", "subband_length": 12, "input": "a", "out": "b"}, RunConfig())
        assert build_run_config(parse_config(cfg.to_text()), RunConfig()) == cfg


class TestSynth:
    def test_deterministic_bytes(self, tmp_path, capsys):
        a, b = tmp_path / "a.orpa", tmp_path / "b.orpa"
        for p in (a, b):
            assert run(capsys, "synth", "--out", p, "--nx", 2, "--ny", 2)[0] == 0
        assert a.read_bytes() == b.read_bytes()

    def test_default_header(self, tmp_path, capsys):
        p = tmp_path / "a.orpa"
        code, out, _ = run(capsys, "synth", "--out", p)
        assert code == 0
        raw = p.read_bytes()
        _, _, nx, ny, nt, fs, _, dt = HEADER.unpack_from(raw)
        assert (nx, ny, nt, fs, dt) == (1, 1, 256, 2e8, 0)
        info = json.loads(out)
        assert info["scene"]["reflectors"][0][0] == pytest.approx(750e-6)

    @pytest.mark.parametrize("argv, flag", [(["--nx", "0"], "--nx"), (["--depth-um", "5000"], "--depth-um")])
    def test_bad_args(self, tmp_path, capsys, argv, flag):
        code, _, err = run(capsys, "synth", "--out", tmp_path / "a.orpa", *argv)
        assert code == 2
        assert flag in err

    def test_console_script_entry(self, tmp_path):
        p = tmp_path / "a.orpa"
        r = subprocess.run([sys.executable, "-m", "orpam_eibmv.cli", "synth", "--out", str(p)],
                           capture_output=True, text=True)
        assert r.returncode == 0, r.stderr
        assert p.exists()


class TestReconstruct:
    def test_uniform_matches_oracle(self, tmp_path, capsys, small_volume):
        out = tmp_path / "u.orpa"
        code, _, _ = run(capsys, "reconstruct", "--in", small_volume, "--out", out, "--method", "uniform")
        assert code == 0
        src = read_volume(small_volume)
        rf = read_volume(out)
        env = read_volume(tmp_path / "u.env.orpa")
        cfg = ReconstructionConfig()
        for x in range(3):
            for y in range(2):
                ref_rf, ref_env = bandlimited_idft(src.data[x, y], src.fs, cfg.f_lo, cfg.f_hi)
                assert np.abs(rf.data[x, y] - ref_rf).max() <= 1e-9 * np.abs(ref_rf).max()
                assert np.abs(env.data[x, y] - ref_env).max() <= 1e-9 * ref_env.max()

    def test_workers_bytewise(self, tmp_path, capsys, small_volume):
        a, b = tmp_path / "a.orpa", tmp_path / "b.orpa"
        assert run(capsys, "reconstruct", "--in", small_volume, "--out", a, "--workers", 1)[0] == 0
        assert run(capsys, "reconstruct", "--in", small_volume, "--out", b, "--workers", 8)[0] == 0
        assert a.read_bytes() == b.read_bytes()
        assert (tmp_path / "a.env.orpa").read_bytes() == (tmp_path / "b.env.orpa").read_bytes()

    def test_workers_env(self, tmp_path, capsys, small_volume, monkeypatch):
        monkeypatch.setenv("ORPAM_WORKERS", "3")
        out = tmp_path / "a.orpa"
        assert run(capsys, "reconstruct", "--in", small_volume, "--out", out)[0] == 0
        assert json.loads((tmp_path / "a.orpa.json").read_text())["config"]["workers"] == 3
        monkeypatch.setenv("ORPAM_WORKERS", "zero")
        assert run(capsys, "reconstruct", "--in", small_volume, "--out", out)[0] == 2

    def test_manifest(self, tmp_path, capsys, small_volume):
        out = tmp_path / "f.orpa"
        assert run(capsys, "reconstruct", "--in", small_volume, "--out", out, "--method", "feibmv")[0] == 0
        m = json.loads((tmp_path / "f.orpa.json").read_text())
        assert m["success"] and m["n_failed"] == 0
        assert m["kind"] == "rf"
        assert m["config"]["method"] == "feibmv"
        assert m["resolved"]["subband_length"] == m["resolved"]["passband_size"] // 2
        assert json.loads((tmp_path / "f.env.orpa.json").read_text())["kind"] == "envelope"

    def test_config_file_and_override(self, tmp_path, capsys, small_volume):
        out = tmp_path / "c.orpa"
        conf = tmp_path / "run.conf"
        conf.write_text(f"input = {small_volume}\nout = {out}\nmethod = fmv\noutput = envelope\n")
        assert run(capsys, "reconstruct", "--config", conf, "--method", "uniform")[0] == 0
        m = json.loads((tmp_path / "c.orpa.json").read_text())
        assert m["config"]["method"] == "uniform"
        assert m["kind"] == "envelope"
        # the recorded config reproduces the run
        again = tmp_path / "again.conf"
        again.write_text(m["config_text"].replace(str(out), str(tmp_path / "d.orpa")))
        assert run(capsys, "reconstruct", "--config", again)[0] == 0
        assert (tmp_path / "d.orpa").read_bytes() == out.read_bytes()

    def test_bad_config_key(self, tmp_path, capsys, small_volume):
        conf = tmp_path / "run.conf"
        conf.write_text("colour = blue\n")
        code, _, err = run(capsys, "reconstruct", "--config", conf, "--in", small_volume, "--out", tmp_path / "o")
        assert code == 2
        assert "colour" in err

    def test_missing_input(self, tmp_path, capsys):
        code, _, _ = run(capsys, "reconstruct", "--in", tmp_path / "nope.orpa", "--out", tmp_path / "o.orpa")
        assert code == 1

    def test_too_many_failures(self, tmp_path, capsys):
        src = tmp_path / "clean.orpa"
        assert run(capsys, "synth", "--out", src, "--nx", 2, "--noise-rms", 0)[0] == 0
        out = tmp_path / "o.orpa"
        code, _, err = run(capsys, "reconstruct", "--in", src, "--out", out, "--method", "fmv", "--loading", 0)
        assert code == 3
        m = json.loads((tmp_path / "o.orpa.json").read_text())
        assert not m["success"]
        assert [(f["x"], f["y"]) for f in m["failures"]] == [(0, 0), (1, 0)]


class TestMetrics:
    def test_thin_film_end_to_end(self, tmp_path, capsys, small_volume):
        base, adap = tmp_path / "u.orpa", tmp_path / "f.orpa"
        for path, method in ((base, "uniform"), (adap, "feibmv")):
            argv = ("reconstruct", "--in", small_volume, "--out", path, "--method", method, "--upsample", 4)
            assert run(capsys, *argv)[0] == 0
        code, out, _ = run(capsys, "metrics", "--in", adap, "--compare", base)
        assert code == 0
        reports = json.loads(out)["reports"]
        assert len(reports) == 6
        for r in reports:
            assert r["baseline"]["fwhm_um"] == pytest.approx(69.3, rel=0.10)
            assert r["fwhm_um"] == pytest.approx(16.89, rel=0.25)
            assert r["fwhm_improvement"] >= 3

    def test_compare_identical(self, tmp_path, capsys, small_volume):
        code, out, _ = run(capsys, "metrics", "--in", small_volume, "--compare", small_volume, "--x", 1, "--y", 0)
        assert code == 0
        (r,) = json.loads(out)["reports"]
        assert r["delta_fwhm_um"] == 0
        assert r["delta_noise_floor_db"] == 0
        assert r["fwhm_improvement"] == 1

    def test_raw_file_baseline(self, tmp_path, capsys, small_volume):
        code, out, _ = run(capsys, "metrics", "--in", small_volume, "--x", 0, "--y", 0)
        assert code == 0
        assert json.loads(out)["reports"][0]["fwhm_um"] == pytest.approx(69.3, rel=0.10)

    def test_index_out_of_range(self, capsys, small_volume):
        code, _, err = run(capsys, "metrics", "--in", small_volume, "--x", 3)
        assert code == 2
        assert "--x" in err

    def test_bad_file(self, tmp_path, capsys):
        p = tmp_path / "junk.orpa"
        p.write_bytes(b"not a volume at all, clearly not a volume")
        assert run(capsys, "metrics", "--in", p)[0] == 1


def test_write_read(tmp_path, rng):
    v = Volume(rng.standard_normal((2, 2, 9)), 1e8, 1e-6)
    write_volume(tmp_path / "v.orpa", v, "float64")
    assert read_volume(tmp_path / "v.orpa").data.tobytes() == v.data.tobytes()
