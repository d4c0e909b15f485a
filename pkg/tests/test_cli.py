import os
import subprocess
import sys

import numpy as np
import pytest

from yinyang.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from yinyang.config import ConfigError, load, parse_text, preset_path, snapshot
from yinyang.evaluation import read_results
from yinyang.graph import load_edge_list, load_features
from yinyang.model import load_checkpoint

TOY = str(preset_path("toy"))


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("toy")
    assert main(["train", TOY, "--out", str(out), "-q", "--diagnostics"]) == EXIT_OK
    return out


def write_cfg(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestTrain:
    def test_files_present(self, trained):
        for name in ("model.yyg", "train_log.tsv", "config.snapshot.cfg", "split.txt", "training.png",
                     "energy.tsv", "energy.png"):
            assert (trained / name).is_file(), name
        log = (trained / "train_log.tsv").read_text().splitlines()
        assert log[0].split("\t") == ["epoch", "loss", "val_hits", "Q_first", "Q_last", "seconds"]
        assert len(log) == 1 + 2
        energy = (trained / "energy.tsv").read_text().splitlines()
        assert len(energy) == 1 + 4

    def test_missing_features_names_path(self, tmp_path, capsys):
        edges = tmp_path / "g.edges"
        edges.write_text("0 1\n1 2\n")
        cfg = write_cfg(tmp_path / "c.cfg", "data.edges=g.edges\ndata.features=nowhere.features\n")
        assert main(["train", cfg, "--out", str(tmp_path / "o")]) == EXIT_DATA
        assert str(tmp_path / "nowhere.features") in capsys.readouterr().err

    def test_unknown_key(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path / "c.cfg", "data.edges=g.edges\nprop.tee=3\n")
        assert main(["train", cfg]) == EXIT_CONFIG
        err = capsys.readouterr().err
        assert "c.cfg:2" in err and "prop.tee" in err

    def test_bad_value_and_set_override(self, tmp_path, capsys):
        assert main(["train", TOY, "--set", "prop.alpha=-1", "--out", str(tmp_path)]) == EXIT_CONFIG
        assert "alpha" in capsys.readouterr().err

    def test_divergence_exit_code(self, tmp_path, capsys):
        with np.errstate(all="ignore"):
            code = main(["train", TOY, "--set", "train.lr=1e300", "--set", "train.epochs=5", "--out", str(tmp_path),
                         "-q", "--no-plots"])
        assert code == 4 and "diverged" in capsys.readouterr().err

    def test_snapshot_rerun_bit_identical(self, trained, tmp_path):
        snap = trained / "config.snapshot.cfg"
        assert main(["train", str(snap), "--out", str(tmp_path), "-q", "--no-plots"]) == EXIT_OK
        a, b = load_checkpoint(trained / "model.yyg"), load_checkpoint(tmp_path / "model.yyg")
        for k, v in a.model.named_params().items():
            assert np.array_equal(v, b.model.named_params()[k])
        assert (tmp_path / "config.snapshot.cfg").read_text() == snap.read_text()

    def test_seed_flag_recorded(self, tmp_path):
        assert main(["train", TOY, "--seed", "7", "--out", str(tmp_path), "-q", "--no-plots"]) == EXIT_OK
        assert "train.seeds=7\n" in (tmp_path / "config.snapshot.cfg").read_text()
        assert load_checkpoint(tmp_path / "model.yyg").meta["train.seed"] == 7


class TestConfig:
    def test_every_key_snapshotted(self):
        cfg = load(TOY)
        again = parse_text(snapshot(cfg), "/")
        assert again.values == cfg.values and again.defaulted == []

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="<string>:2"):
            parse_text("prop.T=2\nprop.T=3\n")

    def test_seed_range(self):
        assert parse_text("train.seeds=0-4\n").train_seeds == (0, 1, 2, 3, 4)

    def test_presets_parse(self):
        for name in ("toy", "cora", "citeseer", "pubmed"):
            cfg = load(preset_path(name))
            assert cfg.prop.T >= 1
        assert load(preset_path("cora")).train_seeds == tuple(range(10))


class TestEval:
    def test_hr_rows(self, trained, tmp_path, capsys):
        out = tmp_path / "r.tsv"
        assert main(["eval", TOY, "--checkpoint", str(trained / "model.yyg"), "-o", str(out)]) == EXIT_OK
        rows = read_results(out)
        assert len(rows) == 1 and rows[0].metric == "HR@5" and 0.0 <= rows[0].value <= 1.0
        assert rows[0].seeds == [0, 1]
        assert (tmp_path / "r.png").is_file()
        assert "±" in capsys.readouterr().out

    def test_baselines_add_three_rows(self, trained, tmp_path):
        out = tmp_path / "r.tsv"
        assert main(["eval", TOY, "--checkpoint", str(trained / "model.yyg"), "--baselines", "cn,aa,ra",
                     "-o", str(out), "--no-plots"]) == EXIT_OK
        assert [r.name for r in read_results(out)][1:] == ["CN", "AA", "RA"]

    def test_fingerprint_mismatch(self, trained, tmp_path):
        assert main(["eval", TOY, "--checkpoint", str(trained / "model.yyg"), "--set", "split.seed=5",
                     "-o", str(tmp_path / "r.tsv"), "--no-plots"]) == EXIT_DATA

    def test_bad_checkpoint(self, tmp_path):
        bad = tmp_path / "bad.yyg"
        bad.write_bytes(b"junk")
        assert main(["eval", TOY, "--checkpoint", str(bad), "-o", str(tmp_path / "r.tsv")]) == EXIT_DATA

    def test_ablate(self, tmp_path):
        out = tmp_path / "a.tsv"
        assert main(["ablate", TOY, "--variants", "full,no_negative,random_features,gcn", "-o", str(out),
                     "--no-plots"]) == EXIT_OK
        assert [r.name for r in read_results(out)] == ["full", "no_negative", "random_features", "gcn"]

    def test_split_command(self, tmp_path):
        assert main(["split", TOY, "-o", str(tmp_path / "s.txt")]) == EXIT_OK
        assert (tmp_path / "s.txt").stat().st_size > 0


class TestPredict:
    def test_k1_one_line_per_source(self, trained, tmp_path):
        out = tmp_path / "p.tsv"
        assert main(["predict", TOY, "--checkpoint", str(trained / "model.yyg"), "--src", "0,3,7", "--k", "1",
                     "-o", str(out)]) == EXIT_OK
        lines = out.read_text().splitlines()
        assert [ln.split("\t")[0] for ln in lines] == ["0", "3", "7"]

    def test_src_file_and_dot(self, trained, tmp_path, capsys):
        src = tmp_path / "src.txt"
        src.write_text("1\n2\n")
        assert main(["predict", TOY, "--checkpoint", str(trained / "model.yyg"), "--src-file", str(src), "--k", "3",
                     "--scorer", "dot"]) == EXIT_OK
        cap = capsys.readouterr()
        assert len(cap.out.splitlines()) <= 6 and "decode nodes/sec" in cap.err

    def test_pruned_matches_brute(self, trained, capsys):
        base = ["predict", TOY, "--checkpoint", str(trained / "model.yyg"), "--src", "0 1 2 3", "--k", "4",
                "--scorer", "dot"]
        main(base)
        a = capsys.readouterr().out
        main(base + ["--no-prune"])
        assert capsys.readouterr().out == a

    def test_empty_source_list(self, trained, capsys):
        assert main(["predict", TOY, "--checkpoint", str(trained / "model.yyg"), "--src", "", "--k", "3"]) == EXIT_OK
        assert capsys.readouterr().out == ""

    def test_unknown_source(self, trained, capsys):
        assert main(["predict", TOY, "--checkpoint", str(trained / "model.yyg"), "--src", "99"]) == EXIT_DATA
        assert "99" in capsys.readouterr().err

    def test_k_too_large(self, trained):
        assert main(["predict", TOY, "--checkpoint", str(trained / "model.yyg"), "--src", "0",
                     "--k", "10"]) == EXIT_CONFIG


class TestCheck:
    @pytest.mark.parametrize("suite", ["isomorphism", "descent"])
    def test_suite_passes(self, suite, capsys):
        assert main(["check", suite]) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines and all(ln.startswith("PASS\t") for ln in lines)

    def test_exit_code_on_failure(self, monkeypatch):
        from yinyang import checks

        def failing(name, seed=0):
            rep = checks.CheckReport(name)
            rep.add("forced", 1.0, "== 0", False)
            return rep
        monkeypatch.setattr(checks, "run_suite", failing)
        assert main(["check", "descent"]) == EXIT_CHECK


class TestGlobalFlags:
    def test_threads_sets_env(self, monkeypatch, tmp_path):
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS"):
            monkeypatch.delenv(var, raising=False)
        assert main(["--threads", "1", "split", TOY, "-o", str(tmp_path / "s.txt")]) == EXIT_OK
        assert os.environ["OMP_NUM_THREADS"] == "1" and os.environ["OPENBLAS_NUM_THREADS"] == "1"

    def test_threads_invalid(self):
        assert main(["--threads", "0", "split", TOY]) == EXIT_CONFIG

    def test_console_entry_point(self):
        res = subprocess.run([sys.executable, "-m", "yinyang.cli", "--help"], capture_output=True, text=True)
        assert res.returncode == 0 and "predict" in res.stdout


class TestPrepare:
    def test_linqs(self, tmp_path, capsys):
        raw = tmp_path / "raw"
        raw.mkdir()
        (raw / "tiny.content").write_text("p10 1 0 A\np20 0 1 B\np30 1 1 A\n")
        (raw / "tiny.cites").write_text("p10 p20\np20 p30\np30 p99\np10 p10\n")
        assert main(["prepare", str(raw), "--out", str(tmp_path / "data")]) == EXIT_OK
        g = load_edge_list(tmp_path / "data" / "tiny.edges")
        assert g.num_edges == 2 and sorted(map(tuple, g.edges().tolist())) == [(0, 1), (1, 2)]
        assert np.array_equal(load_features(tmp_path / "data" / "tiny.features").data, [[1, 0], [0, 1], [1, 1]])

    def test_pubmed_tab(self, tmp_path):
        raw = tmp_path / "raw"
        raw.mkdir()
        (raw / "Pubmed-Diabetes.NODE.paper.tab").write_text(
            "NODE\tpaper\n"
            "cat=1,2,3:label\tnumeric:w-rat:0.0\tnumeric:w-cell:0.0\tstring:summary\n"
            "111\tlabel=1\tw-rat=0.5\tsummary=w-rat\n"
            "222\tlabel=2\tw-cell=0.25\tw-rat=0.1\tsummary=w-cell,w-rat\n"
            "333\tlabel=3\tsummary=\n")
        (raw / "Pubmed-Diabetes.DIRECTED.cites.tab").write_text(
            "DIRECTED\tcites\nNO_FEATURES\n"
            "1\tpaper:111\t|\tpaper:222\n2\tpaper:333\t|\tpaper:222\n")
        assert main(["prepare", str(raw), "--out", str(tmp_path / "d"), "--name", "pubmed"]) == EXIT_OK
        assert load_edge_list(tmp_path / "d" / "pubmed.edges").num_edges == 2
        assert np.array_equal(load_features(tmp_path / "d" / "pubmed.features").data,
                              [[0.5, 0.0], [0.1, 0.25], [0.0, 0.0]])

    def test_missing_raw(self, tmp_path):
        assert main(["prepare", str(tmp_path), "--out", str(tmp_path / "d")]) == EXIT_DATA
