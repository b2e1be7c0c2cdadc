import numpy as np
import pytest

from subband_cm.audio_io import parse_protocol, read_wav
from subband_cm.corpus import (SyntheticSource, _class_gain, load_protocol_corpus, synthesize,
                               synthetic_corpus, write_corpus)


def band_power_db(x, lo, hi, rate=16000):
    spec = np.abs(np.fft.rfft(x)) ** 2
    f = np.fft.rfftfreq(len(x), 1 / rate)
    return 10 * np.log10(spec[(f >= lo) & (f < hi)].mean())


class TestSynthesize:
    def test_deterministic_and_quantized(self):
        a = synthesize("highband", 3, False, seed=5, duration=0.5)
        b = synthesize("highband", 3, False, seed=5, duration=0.5)
        np.testing.assert_array_equal(a.samples, b.samples)
        np.testing.assert_array_equal(a.samples * 32768, np.round(a.samples * 32768))
        assert len(a) == 8000 and np.max(np.abs(a.samples)) <= 1.0

    @pytest.mark.parametrize("kind, lo, hi", [("highband", 0, 7500), ("lowband", 900, 8000)])
    def test_classes_share_the_unaffected_band(self, kind, lo, hi):
        # the same generator index with and without the artefact
        bona = synthesize(kind, 4, False, duration=1.0).samples
        spoof = synthesize(kind, 4, True, duration=1.0).samples
        assert abs(band_power_db(bona, lo, hi) - band_power_db(spoof, lo, hi)) < 0.05

    def test_highband_attenuation(self):
        bona = synthesize("highband", 4, False, duration=1.0).samples
        spoof = synthesize("highband", 4, True, duration=1.0).samples
        assert band_power_db(bona, 7700, 8000) - band_power_db(spoof, 7700, 8000) > 20

    def test_lowband_tilt(self):
        bona = synthesize("lowband", 4, False, duration=1.0).samples
        spoof = synthesize("lowband", 4, True, duration=1.0).samples
        assert band_power_db(bona, 50, 200) - band_power_db(spoof, 50, 200) > 3

    def test_gain_shapes(self):
        f = np.linspace(0, 8000, 801)
        hi = _class_gain("highband", f, 50.0)
        assert np.all(hi[f <= 7550] == 1.0) and np.allclose(hi[f >= 7650], 10 ** (-50 / 20))
        lo = _class_gain("lowband", f, 6.0)
        assert np.all(lo[f >= 800] == 1.0) and lo[0] == pytest.approx(10 ** (-6 / 20))

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            synthesize("midband", 0, False)


class TestSyntheticCorpus:
    def test_layout(self):
        c = synthetic_corpus("lowband", 10, seed=2)
        assert len(c.train) == 10 and len(c.eval) == 10
        assert c.attacks == ["S-LO"]
        assert sum(u.key == "spoof" for u in c.eval) == 5
        ids = [u.utterance_id for u in c.train + c.eval]
        assert len(set(ids)) == 20
        indices = [u.source.index for u in c.train + c.eval]
        assert len(set(indices)) == 20

    def test_partition(self):
        c = synthetic_corpus("highband", 2)
        assert c.partition("eval") == c.eval
        with pytest.raises(ValueError):
            c.partition("dev")

    def test_source_pickles_small(self):
        import pickle
        assert len(pickle.dumps(SyntheticSource("highband", 1, True, 0))) < 300


class TestWriteCorpus:
    def test_round_trip(self, tmp_path):
        c = synthetic_corpus("highband", 4, duration=0.25)
        paths = write_corpus(c, tmp_path)
        back = load_protocol_corpus(paths["train"], tmp_path / "train", paths["eval"], tmp_path / "eval")
        assert [u.utterance_id for u in back.eval] == [u.utterance_id for u in c.eval]
        assert back.attacks == ["S-HI"]
        for u, v in zip(c.train, back.train):
            np.testing.assert_array_equal(u.load().samples, v.load().samples)
        entries = parse_protocol(paths["eval"], "eval")
        assert {e.system_id for e in entries} == {"-", "S-HI"}
        assert read_wav(tmp_path / "eval" / (c.eval[0].utterance_id + ".wav")).sample_rate == 16000
