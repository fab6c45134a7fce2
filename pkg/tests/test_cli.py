import json
import subprocess
import sys


from mmotfs.cli import main
from mmotfs.pilots import load_pilots

SMALL = ["--M", "32", "--N", "8", "--M_CP", "8", "--N_t", "4", "--M_p", "11", "--N_p", "8",
         "--paths", "2", "--subpaths", "3", "--max_delay_tap", "3"]


class TestSweep:
    def test_repeat_is_byte_identical(self, tmp_path):
        args = ["sweep", *SMALL, "--trials", "2", "--snr_db", "5", "15", "--seed", "7"]
        assert main([*args, "--out", str(tmp_path / "a.csv")]) == 0
        assert main([*args, "--out", str(tmp_path / "b.csv")]) == 0
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_seed_required(self, capsys):
        assert main(["sweep", *SMALL, "--trials", "1"]) == 2
        assert "--seed" in capsys.readouterr().err

    def test_config_file_and_override(self, tmp_path, capsys):
        cfg = {"M": 32, "N": 8, "M_CP": 8, "N_t": 4, "M_p": 11, "N_p": 8, "paths": 2, "subpaths": 3,
               "max_delay_tap": 3, "trials": 5, "snr_db": [10]}
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        assert main(["sweep", "--config", str(path), "--trials", "1", "--seed", "0"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 2
        assert lines[1].split(",")[5] == "1"

    def test_unknown_config_key(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text("M: 32\nbogus: 1\n")
        assert main(["sweep", "--config", str(path), "--seed", "0"]) == 2

    def test_estimator_sweep(self, capsys):
        assert main(["sweep", *SMALL, "--trials", "1", "--sweep", "estimator", "--snr_db", "10",
                     "--seed", "0"]) == 0
        out = capsys.readouterr().out
        assert "\nmsmce," in out and "\nismce," in out


class TestOtherCommands:
    def test_pilots(self, tmp_path, capsys):
        out = tmp_path / "p.csv"
        assert main(["pilots", "--M", "32", "--N", "16", "--M_CP", "8", "--N_t", "16", "--M_p", "13",
                     "--N_p", "11", "--N_g", "2", "--M_g", "3", "--out", str(out)]) == 0
        text = capsys.readouterr().out
        assert "max coherence 0.000000" in text
        assert load_pilots(out).shape == (143, 16)

    def test_simulate(self, tmp_path, capsys):
        assert main(["simulate", *SMALL, "--snr_db", "15", "--ber", "--save-channel", str(tmp_path / "c.txt"),
                     "--save-path-info", str(tmp_path / "i.txt")]) == 0
        text = capsys.readouterr().out
        assert "zeta" in text and "msmce: NMSE" in text and "perfect CSI: BER" in text
        assert (tmp_path / "c.txt").exists() and (tmp_path / "i.txt").exists()

    def test_verify(self, capsys):
        assert main(["verify"]) == 0
        text = capsys.readouterr().out
        assert "FAIL" not in text and text.count("PASS") == 8

    def test_bad_layout_exit_code(self):
        assert main(["sweep", *SMALL, "--M_p", "30", "--seed", "0"]) == 2

    def test_entry_point(self):
        out = subprocess.run([sys.executable, "-m", "mmotfs.cli", "--help"], capture_output=True, text=True)
        assert out.returncode == 0
        for cmd in ("pilots", "simulate", "sweep", "verify"):
            assert cmd in out.stdout
