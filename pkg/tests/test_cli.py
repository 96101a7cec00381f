import json

import pytest

from atomtrap import build_protocol, chain, sequence_to_csv
from atomtrap.cli import main

LIFETIME_INI = "[experiment]\nkind = lifetime\nrepetitions = 5\n"


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestSimulate:
    def test_deterministic_outputs(self, tmp_path, capsys):
        ini = tmp_path / "lifetime.ini"
        ini.write_text(LIFETIME_INI)
        for sub in ("a", "b"):
            code, out, _ = run_cli(capsys, "simulate", str(ini),
                                   "--seed", "42", "--out", str(tmp_path / sub))
            assert code == 0
        a = (tmp_path / "a" / "lifetime.csv").read_bytes()
        b = (tmp_path / "b" / "lifetime.csv").read_bytes()
        assert a == b
        aj = (tmp_path / "a" / "lifetime.json").read_bytes()
        bj = (tmp_path / "b" / "lifetime.json").read_bytes()
        assert aj == bj

    def test_format_flag(self, tmp_path, capsys):
        ini = tmp_path / "exp.ini"
        ini.write_text(LIFETIME_INI)
        code, out, _ = run_cli(capsys, "simulate", str(ini),
                               "--format", "csv", "--out", str(tmp_path / "o"))
        assert code == 0
        assert (tmp_path / "o" / "lifetime.csv").exists()
        assert not (tmp_path / "o" / "lifetime.json").exists()

    def test_bad_config_is_data_error(self, tmp_path, capsys):
        ini = tmp_path / "bad.ini"
        ini.write_text("[experiment]\nkind = lifetime\nbogus = 1\n")
        code, _, err = run_cli(capsys, "simulate", str(ini))
        assert code == 2
        assert "bogus" in err

    def test_missing_file_is_data_error(self, capsys):
        code, _, _ = run_cli(capsys, "simulate", "/nonexistent/exp.ini")
        assert code == 2


class TestClassify:
    def test_zero_counts_single_atom(self, capsys):
        code, out, _ = run_cli(capsys, "classify", "0", "--atoms", "1")
        assert code == 0
        rec = json.loads(out)
        assert rec["map_state"] == 3
        assert rec["posterior"][0] > 0.95

    def test_bright(self, capsys):
        code, out, _ = run_cli(capsys, "classify", "6", "--atoms", "2")
        rec = json.loads(out)
        assert code == 0
        assert rec["map_bright_atoms"] == 2


class TestAnalyze:
    def test_staircase(self, tmp_path, capsys):
        from atomtrap import (DetectorModel, MotRates, gillespie_mot, run_stream,
                              synthesize_mot_trace)
        rng = run_stream(55, 0)
        traj = gillespie_mot(MotRates(), 2, 60.0, rng)
        trace = synthesize_mot_trace(traj, DetectorModel(), (), rng)
        path = tmp_path / "trace.csv"
        trace.write_csv(path)
        code, out, _ = run_cli(capsys, "analyze", str(path))
        assert code == 0
        rec = json.loads(out)
        assert rec["n_bins"] == 600
        assert all(n >= 0 for n in rec["inferred_n"])

    def test_bad_trace(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("nope\n")
        code, _, _ = run_cli(capsys, "analyze", str(path))
        assert code == 2


class TestFit:
    def test_survival(self, tmp_path, capsys):
        import numpy as np
        rows = ["t_s,survived,total"]
        for t in (1, 5, 10, 20, 40, 60, 80):
            rows.append(f"{t},{int(round(400 * np.exp(-t / 51)))},400")
        path = tmp_path / "surv.csv"
        path.write_text("\n".join(rows) + "\n")
        code, out, _ = run_cli(capsys, "fit", str(path), "--model", "survival")
        assert code == 0
        rec = json.loads(out)
        tau = rec["values"][rec["parameter_names"].index("tau")]
        assert tau == pytest.approx(51, rel=0.05)

    def test_relaxation_needs_arm(self, tmp_path, capsys):
        path = tmp_path / "r.csv"
        path.write_text("t_s,p4,n\n1,0.8,90\n2,0.7,90\n4,0.6,90\n")
        code, _, err = run_cli(capsys, "fit", str(path), "--model", "relaxation")
        assert code == 2
        assert "f-initial" in err

    def test_relaxation_joint(self, tmp_path, capsys):
        import numpy as np
        tau, peq = 3.79, 0.5625
        ts = (1, 2, 3, 4, 6, 8, 10, 12)
        for name, p0 in (("f3.csv", 0.0), ("f4.csv", 1.0)):
            rows = ["t_s,p4,n"]
            for t in ts:
                p = float(peq + (p0 - peq) * np.exp(-t / tau))
                rows.append(f"{t},{p!r},100000")
            (tmp_path / name).write_text("\n".join(rows) + "\n")
        code, out, _ = run_cli(capsys, "fit", str(tmp_path / "f3.csv"),
                               str(tmp_path / "f4.csv"), "--model", "relaxation")
        assert code == 0
        rec = json.loads(out)
        tau_hat = rec["values"][rec["parameter_names"].index("tau")]
        assert tau_hat == pytest.approx(tau, rel=0.01)

    def test_degenerate_is_data_error(self, tmp_path, capsys):
        path = tmp_path / "deg.csv"
        path.write_text("t_s,survived,total\n1,100,100\n10,100,100\n")
        code, _, _ = run_cli(capsys, "fit", str(path), "--model", "survival")
        assert code == 2


class TestValidateSeq:
    def test_valid_sequence(self, tmp_path, capsys):
        seq = chain(build_protocol("prepare_f3"), 1.0, build_protocol("detect"))
        path = tmp_path / "good.csv"
        path.write_text(sequence_to_csv(seq))
        code, out, _ = run_cli(capsys, "validate-seq", str(path))
        assert code == 0
        assert json.loads(out)["valid"] is True

    def test_short_pockels_gap_exits_2(self, tmp_path, capsys):
        seq = chain(build_protocol("transfer"), 0.5,
                    build_protocol("detect", gap_s=10e-6))
        path = tmp_path / "bad.csv"
        path.write_text(sequence_to_csv(seq))
        code, out, _ = run_cli(capsys, "validate-seq", str(path))
        assert code == 2
        rec = json.loads(out)
        assert any(v["code"] == "pockels_gap" for v in rec["violations"])


class TestUsageErrors:
    def test_unknown_subcommand(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 1

    def test_missing_required_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["classify", "3"])
        assert exc.value.code == 1

    def test_console_script_installed(self):
        import shutil
        assert shutil.which("atomtrap")
