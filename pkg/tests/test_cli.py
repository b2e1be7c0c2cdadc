import json

import numpy as np
import pytest

from subband_cm.audio_io import write_wav
from subband_cm.cli import attack_order, main
from subband_cm.config import run_config_from_mapping
from subband_cm.dsp import AudioSignal
from subband_cm.errors import ConfigurationError
from subband_cm.metrics import ScoreRecord, write_scores
from subband_cm.sweep import enumerate_bands

TOY = ["--set", "corpus.synthetic=highband", "--set", "corpus.num_per_class=6",
       "--set", "corpus.duration=0.5", "--frontend", "lfcc", "--components", "4", "--iters", "10"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


class TestPipeline:
    def test_extract_train_score_eer(self, tmp_path, capsys):
        code, out, _ = run(capsys, "synth", "--kind", "highband", "--num-per-class", 6, "--duration", 0.5,
                           "--out", tmp_path / "corpus")
        assert code == 0 and "12 utterances" in out
        cfg = tmp_path / "corpus" / "corpus.cfg"
        common = ["--config", cfg, "--frontend", "lfcc"]
        assert run(capsys, "extract", *common, "--out", tmp_path / "ftr")[0] == 0
        assert run(capsys, "extract", *common, "--partition", "eval", "--out", tmp_path / "fev")[0] == 0
        assert len(list((tmp_path / "ftr").glob("*.sslf"))) == 6
        assert run(capsys, "train", *common, "--features", tmp_path / "ftr", "--components", 4,
                   "--out", tmp_path / "models")[0] == 0
        assert (tmp_path / "models" / "bonafide.ssgm").exists()
        assert run(capsys, "score", *common, "--features", tmp_path / "fev", "--models", tmp_path / "models",
                   "--out", tmp_path / "scores.tsv")[0] == 0
        code, out, _ = run(capsys, "eer", tmp_path / "scores.tsv", "--out", tmp_path / "eer.txt")
        assert code == 0 and out.splitlines()[0].split() == ["pooled", "S-HI"]
        assert (tmp_path / "eer.txt").read_text().startswith("eer\t")

    def test_on_the_fly_features_match_extracted(self, tmp_path, capsys):
        assert run(capsys, "train", *TOY, "--out", tmp_path / "m1")[0] == 0
        assert run(capsys, "score", *TOY, "--models", tmp_path / "m1", "--out", tmp_path / "a.tsv")[0] == 0
        assert run(capsys, "score", *TOY, "--models", tmp_path / "m1", "--out", tmp_path / "b.tsv",
                   "--cache-dir", tmp_path / "cache")[0] == 0
        assert (tmp_path / "a.tsv").read_bytes() == (tmp_path / "b.tsv").read_bytes()

    def test_band_option(self, tmp_path, capsys):
        assert run(capsys, "extract", *TOY, "--band", "0-4000", "--out", tmp_path / "f")[0] == 0
        code, _, err = run(capsys, "extract", *TOY, "--band", "4000", "--out", tmp_path / "g")
        assert code == 1 and "FMIN-FMAX" in err

    def test_deterministic_outputs(self, tmp_path, capsys):
        for name in ("a", "b"):
            assert run(capsys, "sweep", *TOY, "--step", 4000, "--out", tmp_path / name)[0] == 0
        for rel in ("lfcc/S-HI/0-4000/scores.tsv", "lfcc/S-HI/0-4000/eer.txt", "lfcc/pooled/0-8000/eer.txt"):
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()
        ma = json.loads((tmp_path / "a/lfcc/manifest.json").read_text())
        mb = json.loads((tmp_path / "b/lfcc/manifest.json").read_text())
        for m in (ma, mb):
            for cell in m["cells"].values():
                cell.pop("completed_at")
        assert ma == mb


class TestSweepCommands:
    def test_coarse_sweep_has_three_cells(self, tmp_path, capsys):
        code, out, _ = run(capsys, "sweep", *TOY, "--step", 4000, "--out", tmp_path)
        assert code == 0 and out.startswith("3 cells, 3 done")
        manifest = json.loads((tmp_path / "lfcc" / "manifest.json").read_text())
        assert sorted(manifest["cells"]) == ["0-4000", "0-8000", "4000-8000"]

    def test_heatmap(self, tmp_path, capsys):
        assert run(capsys, "sweep", *TOY, "--step", 4000, "--out", tmp_path)[0] == 0
        code, out, _ = run(capsys, "heatmap", "--results", tmp_path, "--frontend", "lfcc", "--attack", "S-HI")
        assert code == 0
        lines = (tmp_path / "lfcc" / "heatmap-S-HI.csv").read_text().splitlines()
        assert lines[0] == "f_max\\f_min,0,4000" and len(lines) == 3
        assert (tmp_path / "lfcc" / "heatmap-S-HI.png").stat().st_size > 0

    def test_sweep_needs_output(self, capsys):
        code, _, err = run(capsys, "sweep", *TOY)
        assert code == 1 and "output directory" in err


class TestEerTable:
    def test_attack_columns_in_table_order(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        recs = [ScoreRecord(f"b{i}", "bonafide", "bonafide", rng.normal(1)) for i in range(20)]
        for a in ("A19", "A07", "A13", "A10", "A08"):
            recs += [ScoreRecord(f"{a}{i}", a, "spoof", rng.normal()) for i in range(5)]
        write_scores(tmp_path / "s.tsv", recs)
        code, out, _ = run(capsys, "eer", tmp_path / "s.tsv")
        head, row = out.splitlines()
        assert head.split() == ["pooled", "A07", "A08", "A10", "A13", "A19"]
        assert all(len(v.split(".")[1]) == 2 for v in row.split())

    def test_natural_order(self):
        assert attack_order(["A19", "A7", "A10", "A08"]) == ["A7", "A08", "A10", "A19"]


class TestErrors:
    def test_missing_config_names_path(self, tmp_path, capsys):
        code, _, err = run(capsys, "sweep", "--config", tmp_path / "absent.cfg", "--out", tmp_path)
        assert code != 0 and "absent.cfg" in err

    @pytest.mark.parametrize("argv", [["frobnicate"], ["eer", "x.tsv", "--bogus"], []])
    def test_usage_errors(self, capsys, argv):
        with pytest.raises(SystemExit) as info:
            main(argv)
        assert info.value.code != 0 and "usage" in capsys.readouterr().err

    def test_unknown_key(self, tmp_path, capsys):
        code, _, err = run(capsys, "train", "--set", "gmm.colour=red", "--out", tmp_path)
        assert code == 1 and "gmm.colour" in err

    def test_corrupt_score_file(self, tmp_path, capsys):
        (tmp_path / "s.tsv").write_text("only\tthree\tfields\n")
        code, _, err = run(capsys, "eer", tmp_path / "s.tsv")
        assert code == 1 and ":1:" in err

    def test_missing_corpus(self, tmp_path, capsys):
        code, _, err = run(capsys, "train", "--out", tmp_path)
        assert code == 1 and "corpus.train_protocol" in err


class TestRunConfig:
    def test_sections(self):
        run_cfg = run_config_from_mapping({
            "frontend": "cqcc-geometric", "seed": 9, "gmm.num_components": 64, "cqt.bins_per_octave": 48,
            "lfcc.num_filters": 30, "sweep.grid_step": 800, "sweep.attacks": "A07, A13",
            "sweep.train_filtered": False})
        assert run_cfg.train.num_components == 64 and run_cfg.train.seed == 9
        assert run_cfg.lfcc.num_filters == 30
        assert run_cfg.cqt_params(16000).bins_per_octave == 48
        sc = run_cfg.sweep_config(16000)
        assert sc.grid_step == 800 and sc.attacks == ("A07", "A13") and sc.train_filtered is False

    @pytest.mark.parametrize("mapping", [
        {"frontend": "mfcc"}, {"gmm.num_components": 2.5}, {"sweep.requantize": 3}, {"cqt.octaves": "many"},
        {"nope": 1}, {"lfcc.nfft": True},
    ])
    def test_rejects(self, mapping):
        with pytest.raises(ConfigurationError):
            run_config_from_mapping(mapping)

    def test_step_must_divide(self):
        sweep_cfg = run_config_from_mapping({"sweep.grid_step": 300}).sweep_config(16000)
        with pytest.raises(ValueError, match="divide"):
            enumerate_bands(sweep_cfg)

    def test_other_sample_rate_warns(self, tmp_path, caplog):
        for part in ("train", "eval"):
            (tmp_path / part).mkdir()
            lines = []
            for i, key in enumerate(("bonafide", "spoof")):
                write_wav(tmp_path / part / f"{part}{i}.wav", AudioSignal(np.zeros(800), 8000))
                lines.append(f"SPK {part}{i} - {'-' if key == 'bonafide' else 'A07'} {key}\n")
            (tmp_path / f"{part}.txt").write_text("".join(lines))
        run_cfg = run_config_from_mapping({
            "corpus.train_protocol": str(tmp_path / "train.txt"), "corpus.train_audio": str(tmp_path / "train"),
            "corpus.eval_protocol": str(tmp_path / "eval.txt"), "corpus.eval_audio": str(tmp_path / "eval")})
        with caplog.at_level("WARNING"):
            corpus = run_cfg.load_corpus()
        assert corpus.sample_rate == 8000 and "8000 Hz" in caplog.text
        assert run_cfg.cqt_params(corpus.sample_rate).center_frequencies[-1] < 4000

    def test_missing_corpus_path(self, tmp_path):
        run_cfg = run_config_from_mapping({
            "corpus.train_protocol": str(tmp_path / "gone.txt"), "corpus.train_audio": str(tmp_path),
            "corpus.eval_protocol": str(tmp_path), "corpus.eval_audio": str(tmp_path)})
        with pytest.raises(ConfigurationError, match="gone.txt"):
            run_cfg.load_corpus()
