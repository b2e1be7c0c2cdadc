import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from subband_cm.errors import FormatError
from subband_cm.metrics import (EmptyAttackWarning, EerResult, ScoreRecord, eer_from_scores, empirical_eer,
                                format_score, per_attack_eer, read_eer, read_scores, rocch, rocch_eer,
                                write_eer, write_scores)

from oracles import empirical_eer_oracle, hull_eer_oracle

# exhaustive-hull oracle value for the hand case (see tests/oracles.py); frozen here
HAND_BONA = [0.9, 0.8, 0.4]
HAND_SPOOF = [0.7, 0.3, 0.2]
HAND_ROCCH_EER = 1 / 6
HAND_EMPIRICAL_EER = Fraction(1, 3)

score_sets = st.tuples(
    st.lists(st.integers(-20, 20), min_size=1, max_size=25),
    st.lists(st.integers(-20, 20), min_size=1, max_size=25),
)


def records(bona, spoof, attack="A07"):
    out = [ScoreRecord(f"b{i}", "bonafide", "bonafide", s) for i, s in enumerate(bona)]
    out += [ScoreRecord(f"{attack}-{i}", attack, "spoof", s) for i, s in enumerate(spoof)]
    return out


class TestRocchEer:
    def test_perfect_separation(self):
        res = rocch_eer(records([1, 2, 3], [-3, -2, -1]))
        assert res.eer == 0.0 and -1 < res.threshold <= 1
        assert (res.num_bonafide, res.num_spoof) == (3, 3)

    def test_identical_sets(self):
        assert rocch_eer(records([1, 2, 3], [1, 2, 3])).eer == 0.5

    def test_all_tied(self):
        assert eer_from_scores([0.0] * 4, [0.0] * 7).eer == 0.5

    def test_hand_case_against_frozen_oracle(self):
        assert hull_eer_oracle(HAND_BONA, HAND_SPOOF) == HAND_ROCCH_EER
        assert eer_from_scores(HAND_BONA, HAND_SPOOF).eer == pytest.approx(HAND_ROCCH_EER, abs=1e-15)

    def test_hand_case_empirical(self):
        assert empirical_eer_oracle(HAND_BONA, HAND_SPOOF) == HAND_EMPIRICAL_EER
        assert empirical_eer(HAND_BONA, HAND_SPOOF) == pytest.approx(1 / 3, abs=1e-15)

    def test_hull_vertices_of_hand_case(self):
        pmiss, pfa, _ = rocch(HAND_BONA, HAND_SPOOF)
        np.testing.assert_allclose(pfa, [1, 1 / 3, 0, 0])
        np.testing.assert_allclose(pmiss, [0, 0, 1 / 3, 1])

    def test_random_sets_match_oracle(self):
        r = np.random.default_rng(7)
        for _ in range(300):
            bona = np.round(r.normal(1, 1, r.integers(1, 51)), 1)
            spoof = np.round(r.normal(0, 1, r.integers(1, 51)), 1)
            assert eer_from_scores(bona, spoof).eer == pytest.approx(hull_eer_oracle(bona, spoof), abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(score_sets)
    def test_matches_oracle_with_ties(self, sets):
        bona, spoof = sets
        assert eer_from_scores(bona, spoof).eer == pytest.approx(hull_eer_oracle(bona, spoof), abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(score_sets)
    def test_hull_not_worse_than_empirical(self, sets):
        bona, spoof = sets
        assert eer_from_scores(bona, spoof).eer <= empirical_eer(bona, spoof) + 1e-12

    @settings(max_examples=200, deadline=None)
    @given(score_sets)
    def test_monotone_invariance(self, sets):
        bona, spoof = (np.array(v, float) for v in sets)
        f = lambda v: np.exp(v / 7.0) * 3.0 - 11.0
        assert eer_from_scores(f(bona), f(spoof)).eer == eer_from_scores(bona, spoof).eer

    @settings(max_examples=200, deadline=None)
    @given(score_sets)
    def test_label_swap_duality(self, sets):
        bona, spoof = (np.array(v, float) for v in sets)
        assert eer_from_scores(-spoof, -bona).eer == pytest.approx(eer_from_scores(bona, spoof).eer, abs=1e-15)

    @settings(max_examples=100, deadline=None)
    @given(score_sets)
    def test_range(self, sets):
        assert 0.0 <= eer_from_scores(*sets).eer <= 0.5

    def test_threshold_on_crossing(self):
        r = np.random.default_rng(3)
        bona, spoof = r.normal(1, 1, 400), r.normal(-1, 1, 400)
        res = eer_from_scores(bona, spoof)
        miss = np.mean(bona < res.threshold)
        fa = np.mean(spoof >= res.threshold)
        assert abs(miss - res.eer) < 0.02 and abs(fa - res.eer) < 0.02

    def test_single_class(self):
        with pytest.raises(ValueError):
            rocch_eer(records([1.0, 2.0], []))
        with pytest.raises(ValueError):
            rocch_eer(records([], [1.0]))


class TestPerAttack:
    def test_single_attack(self):
        out = per_attack_eer(records([1, 2, 3], [0, 1.5]))
        assert list(out) == ["A07"]

    def test_identical_attacks(self):
        recs = records([1, 2, 3, 4], [0.5, 2.5, 3.5])
        recs += [ScoreRecord(f"x{i}", "A08", "spoof", s) for i, s in enumerate([0.5, 2.5, 3.5])]
        out = per_attack_eer(recs)
        assert abs(out["A07"].eer - out["A08"].eer) <= 1e-12

    def test_matches_single_attack_recomputation(self, rng):
        bona = rng.normal(1, 1, 60)
        recs = records(bona, [])
        by_attack = {}
        for a, shift in (("A07", 0.0), ("A13", 1.0), ("A19", -1.0)):
            spoof = rng.normal(shift, 1, 25)
            by_attack[a] = spoof
            recs += [ScoreRecord(f"{a}-{i}", a, "spoof", s) for i, s in enumerate(spoof)]
        out = per_attack_eer(recs)
        for a, spoof in by_attack.items():
            assert out[a] == rocch_eer(records(bona, spoof, a))

    def test_empty_attack_omitted_with_warning(self):
        with pytest.warns(EmptyAttackWarning, match="A10"):
            out = per_attack_eer(records([1, 2], [0]), attacks=["A07", "A10"])
        assert list(out) == ["A07"]

    def test_needs_bona_fide(self):
        with pytest.raises(ValueError):
            per_attack_eer([ScoreRecord("s", "A07", "spoof", 1.0)])

    def test_needs_an_attack(self):
        with pytest.raises(ValueError):
            per_attack_eer(records([1.0], []))


class TestRecords:
    @pytest.mark.parametrize("attack, key", [("A07", "bonafide"), ("bonafide", "spoof"), ("A07", "fake")])
    def test_key_consistency(self, attack, key):
        with pytest.raises(ValueError):
            ScoreRecord("u", attack, key, 0.0)

    def test_finite(self):
        with pytest.raises(ValueError):
            ScoreRecord("u", "bonafide", "bonafide", float("nan"))

    def test_percent(self):
        assert EerResult(0.1234, 0.0, 1, 1).percent == pytest.approx(12.34)


class TestFiles:
    def test_scores_round_trip_bit_exact(self, tmp_path, rng):
        recs = records(rng.normal(size=20), rng.normal(size=20) * 1e-300) + records([np.pi], [-1e300], "A19")
        write_scores(tmp_path / "s.tsv", recs)
        assert read_scores(tmp_path / "s.tsv") == recs

    def test_score_format(self, tmp_path):
        write_scores(tmp_path / "s.tsv", [ScoreRecord("LA_E_1", "A07", "spoof", 0.1)])
        assert (tmp_path / "s.tsv").read_text() == "LA_E_1\tA07\tspoof\t0.10000000000000001\n"
        assert format_score(1.0) == "1"

    @pytest.mark.parametrize("line", ["a\tA07\tspoof\n", "a\tA07\tspoof\tx\n", "a\tA07\tbonafide\t1\n"])
    def test_malformed(self, tmp_path, line):
        (tmp_path / "s.tsv").write_text(line)
        with pytest.raises(FormatError, match=":1:"):
            read_scores(tmp_path / "s.tsv")

    def test_eer_round_trip(self, tmp_path):
        res = EerResult(1 / 3, -0.123456789, 7, 11)
        write_eer(tmp_path / "eer.txt", res)
        assert read_eer(tmp_path / "eer.txt") == res

    def test_eer_missing_field(self, tmp_path):
        (tmp_path / "eer.txt").write_text("eer\t0.1\n")
        with pytest.raises(FormatError, match="threshold"):
            read_eer(tmp_path / "eer.txt")
