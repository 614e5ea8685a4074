import csv
from pathlib import Path

import numpy as np
import pytest

from onebit_bsbl import bsbl
from onebit_bsbl.cli import BINS_COLUMNS, SUMMARY_COLUMNS, TRIALS_COLUMNS, main
from onebit_bsbl.config import ConfigError, load_spec, parse_spec

SPECS = Path(__file__).resolve().parents[1] / "specs"

SMALL = """\
scenario:
  M: 16
  L: {L}
  true_doas: [-30, 15]
  amplitudes_db: [15, 20]
  grid: {{start: -90, stop: 90, step: 3}}
snr_db: [5, 15]
trials: 3
seed: 0
algorithms:
{algs}
"""

SMV_ALGS = """\
  - {name: bsbl, T: 25}
  - {name: bsbl_topk, kind: bsbl, T: 25, top_k: true}
  - {name: biht, kind: biht, iters: 20}
"""


def write_spec(tmp_path, L=1, algs=SMV_ALGS, name="spec.yaml"):
    p = tmp_path / name
    p.write_text(SMALL.format(L=L, algs=algs))
    return p


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.reader(f))


class TestSpecParsing:
    @pytest.mark.parametrize("name", sorted(p.name for p in SPECS.glob("*.yaml")))
    def test_shipped_specs_parse(self, name):
        spec = load_spec(SPECS / name)
        assert spec.algorithms and spec.snr_db

    def test_default_solver_settings(self):
        spec = load_spec(SPECS / "smv_nmse_sweep.yaml")
        assert spec.scenario.M == 256 and spec.scenario.L == 1
        assert spec.scenario.grid.size == 361
        bsbl_cfg = spec.algorithms[0].config
        assert (bsbl_cfg.T, bsbl_cfg.gamma, bsbl_cfg.a, bsbl_cfg.b) == (500, 0.6, 1.0, 0.0)

    @pytest.mark.parametrize("text, line, match", [
        ("scenario:\n  M: 16\n  Q: 3\nalgorithms:\n  - {name: bsbl}\n", 3, "unknown key"),
        ("scenario:\n  M: -4\nalgorithms:\n  - {name: bsbl}\n", 2, "positive"),
        ("scenario:\n  M: 8\nalgorithms: []\n", 3, "non-empty"),
        ("algorithms:\n  - {name: bsbl}\n  - {name: x, gamma: 2}\n", 3, "gamma"),
        ("algorithms:\n  - {name: bsbl}\n  - {name: bsbl}\n", 1, "duplicate"),
        ("scenario:\n  L: 4\nalgorithms:\n  - {name: biht, kind: biht}\n", 4, "single snapshot"),
        ("scenario:\n  true_doas: [1.25]\n  amplitudes_db: [3]\nalgorithms:\n  - {name: b}\n", 2,
         "not on the grid"),
        ("snr_db: [1, x]\nalgorithms:\n  - {name: bsbl}\n", 1, "list of numbers"),
        ("algorithms:\n  - {name: bsbl\n", 3, "YAML"),
        ("seed: -1\nalgorithms:\n  - {name: bsbl}\n", 1, "non-negative"),
    ])
    def test_line_diagnostics(self, text, line, match):
        with pytest.raises(ConfigError, match=match) as info:
            parse_spec(text, "exp.yaml")
        assert info.value.line == line
        assert str(info.value).startswith(f"exp.yaml:{line}:")

    def test_no_algorithms_key(self):
        with pytest.raises(ConfigError, match="algorithms"):
            parse_spec("trials: 3\n")


class TestRun:
    def test_outputs_and_schema(self, tmp_path, capsys):
        spec = write_spec(tmp_path)
        assert main(["run", "--spec", str(spec), "--out", str(tmp_path / "o")]) == 0
        trials = read_csv(tmp_path / "o" / "trials.csv")
        summary = read_csv(tmp_path / "o" / "summary.csv")
        bins = read_csv(tmp_path / "o" / "bins.csv")
        assert trials[0] == TRIALS_COLUMNS
        assert summary[0] == SUMMARY_COLUMNS
        assert bins[0] == BINS_COLUMNS
        assert len(trials) == 1 + 2 * 3 * 3
        assert [(r[0], r[1]) for r in summary[1:]] == [
            (a, s) for s in ("5.000", "15.000") for a in ("bsbl", "bsbl_topk", "biht")]
        # 61 grid angles per algorithm, counts summed over both SNR cells
        assert len(bins) == 1 + 3 * 61
        per_alg = {}
        for name, _, c in bins[1:]:
            per_alg[name] = per_alg.get(name, 0) + int(c)
        assert per_alg == {"bsbl": 2 * 3 * 2, "bsbl_topk": 2 * 3 * 2, "biht": 2 * 3 * 2}
        assert all(float(r[3]) <= 0 for r in trials[1:])
        assert "bsbl_topk" in capsys.readouterr().out
        raw = (tmp_path / "o" / "trials.csv").read_bytes()
        assert raw.count(b"\r\n") == len(trials)

    def test_seed_reproducible_bytes(self, tmp_path):
        spec = write_spec(tmp_path)
        for d in ("a", "b"):
            assert main(["run", "--spec", str(spec), "--seed", "7", "--no-timing",
                         "--out", str(tmp_path / d)]) == 0
        for name in ("trials.csv", "summary.csv", "bins.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_seed_changes_results(self, tmp_path):
        spec = write_spec(tmp_path)
        main(["run", "--spec", str(spec), "--seed", "1", "--no-timing", "--out", str(tmp_path / "a")])
        main(["run", "--spec", str(spec), "--seed", "2", "--no-timing", "--out", str(tmp_path / "b")])
        assert (tmp_path / "a" / "trials.csv").read_bytes() != (tmp_path / "b" / "trials.csv").read_bytes()

    def test_threads_do_not_change_results(self, tmp_path):
        spec = write_spec(tmp_path, L=3, algs="  - {name: bsbl, T: 20}\n")
        main(["run", "--spec", str(spec), "--no-timing", "--out", str(tmp_path / "a")])
        main(["run", "--spec", str(spec), "--no-timing", "--threads", "3", "--out", str(tmp_path / "b")])
        for name in ("trials.csv", "summary.csv", "bins.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_config_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.yaml"
        bad.write_text("scenario:\n  M: 16\nalgorithms: []\n")
        assert main(["run", "--spec", str(bad)]) == 1
        assert "bad.yaml:3" in capsys.readouterr().err

    def test_missing_spec_file(self, tmp_path):
        assert main(["run", "--spec", str(tmp_path / "nope.yaml")]) == 1

    def test_breakdown_exit_code(self, tmp_path, monkeypatch):
        from onebit_bsbl import doa

        def boom(*args, **kwargs):
            raise bsbl.NumericalBreakdown("forced", iteration=1)

        monkeypatch.setattr(doa, "run_smv", boom)
        spec = write_spec(tmp_path, algs="  - {name: bsbl, T: 5}\n")
        assert main(["run", "--spec", str(spec), "--out", str(tmp_path / "o")]) == 2
        summary = read_csv(tmp_path / "o" / "summary.csv")
        assert all(row[-1] == "3" for row in summary[1:])


class TestSingle:
    def test_spectrum(self, tmp_path, capsys):
        spec = write_spec(tmp_path, L=4, algs="  - {name: bsbl, T: 30}\n  - {name: bsbl_k, T: 30, top_k: true}\n")
        assert main(["single", "--spec", str(spec), "--emit-spectrum", "--out", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "spectrum.csv")
        assert rows[0] == ["angle_deg", "true_doa", "bsbl_magnitude", "bsbl_topk",
                           "bsbl_k_magnitude", "bsbl_k_topk"]
        assert len(rows) == 62
        assert sum(int(r[3]) for r in rows[1:]) == 2
        assert [r[0] for r in rows[1:] if r[1] == "1"] == ["-30", "15"]
        # masked copy is nonzero exactly on the flagged rows
        assert all((float(r[4]) > 0) == (r[5] == "1") for r in rows[1:])
        assert "detected" in capsys.readouterr().out

    def test_without_spectrum_writes_nothing(self, tmp_path):
        spec = write_spec(tmp_path, algs="  - {name: bsbl, T: 5}\n")
        assert main(["single", "--spec", str(spec), "--out", str(tmp_path / "o")]) == 0
        assert not (tmp_path / "o").exists()

    def test_empty_algorithm_list(self, tmp_path):
        spec = write_spec(tmp_path, algs="  []\n")
        spec.write_text(spec.read_text().replace("algorithms:\n  []", "algorithms: []"))
        assert main(["single", "--spec", str(spec)]) == 1


class TestSelftest:
    def test_passes(self, capsys):
        assert main(["selftest"]) == 0
        out = capsys.readouterr().out
        assert out.count("PASS") == 5 and "FAIL" not in out

    def test_detects_perturbed_arcsine_constant(self, monkeypatch, capsys):
        monkeypatch.setattr(bsbl, "ARCSINE_GAIN", 0.99 * 2 / np.pi)
        assert main(["selftest"]) != 0
        assert "FAIL  arcsine law" in capsys.readouterr().out

    def test_detects_perturbed_bussgang_gain(self, monkeypatch, capsys):
        monkeypatch.setattr(bsbl, "BUSSGANG_GAIN", 1.01 * np.sqrt(2 / np.pi))
        assert main(["selftest"]) != 0
        assert "FAIL  scalar E-step oracle" in capsys.readouterr().out

    def test_bad_flags(self):
        assert main(["run", "--spec", "x.yaml", "--seed", "-3"]) == 1
        assert main(["run", "--spec", "x.yaml", "--threads", "0"]) == 1
