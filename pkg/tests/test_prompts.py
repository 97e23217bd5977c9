import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from petsynth.cohort import SubjectRecord
from petsynth.prompts import (CachedEncoder, EncoderError, FallbackEncoder, PromptVariant,
                              build_prompt, encode_text, fallback_encode,
                              write_embedding_cache)


def full_record():
    r = SubjectRecord(id="s1", age=71.0, gender="female", education=12.0,
                      abeta40=196.0, abeta42=9.8, t_tau=210.0, p_tau181=18.5,
                      nfl=22.0, mmse=27.0, moca_b=24.0, avlt_ldr=6.0, avlt_r=8.0,
                      aft=15.0, bnt=24.0, stt_a=62.3, stt_b=140.8,
                      abeta_positive=True)
    r.fill_derived_ratios()
    return r


class TestBuildPrompt:
    def test_summary_first_prefix(self):
        p = build_prompt(full_record(), "positive", PromptVariant.SUMMARY_FIRST)
        assert p.rendered.startswith("The Aβ-PET is positive.")

    def test_summary_last_suffix(self):
        p = build_prompt(full_record(), "negative", PromptVariant.SUMMARY_LAST)
        assert p.rendered.endswith("The Aβ-PET is negative.")

    def test_summary_only(self):
        p = build_prompt(full_record(), "positive", PromptVariant.SUMMARY_ONLY)
        assert p.rendered == "The Aβ-PET is positive."
        assert p.clauses is None

    def test_summary_excluded(self):
        p = build_prompt(full_record(), None, PromptVariant.SUMMARY_EXCLUDED)
        assert "Aβ-PET is" not in p.rendered
        assert p.summary is None

    def test_missing_renders_none(self):
        r = full_record()
        r.aft = None
        p = build_prompt(r, "positive", PromptVariant.SUMMARY_FIRST)
        assert "AFT: None" in p.rendered

    def test_exactly_18_clauses_in_order(self):
        p = build_prompt(full_record(), "positive", PromptVariant.SUMMARY_FIRST)
        assert len(p.clauses) == 18
        names = [n for n, _ in p.clauses]
        assert names[:3] == ["Age", "Gender", "Education"]
        assert names[-2:] == ["STT-A", "STT-B"]
        assert "AVLT-N5" in names and "AVLT-N7" in names

    def test_formatting(self):
        p = build_prompt(full_record(), "positive", PromptVariant.SUMMARY_FIRST)
        assert "Aβ40: 196.00 pg/mL" in p.rendered
        assert "Aβ42/40: 0.0500" in p.rendered
        assert "MMSE: 27" in p.rendered
        assert "STT-A: 62.3 s" in p.rendered
        assert "Age: 71 years" in p.rendered

    def test_missing_summary_errors(self):
        with pytest.raises(ValueError):
            build_prompt(full_record(), None, PromptVariant.SUMMARY_FIRST)

    def test_four_variants_pairwise_distinct(self):
        r = full_record()
        rendered = set()
        for v in PromptVariant:
            summary = None if v is PromptVariant.SUMMARY_EXCLUDED else "positive"
            rendered.add(build_prompt(r, summary, v).rendered)
        assert len(rendered) == 4

    def test_distinct_values_distinct_renderings(self):
        r1, r2 = full_record(), full_record()
        r2.mmse = 20.0
        p1 = build_prompt(r1, "positive", PromptVariant.SUMMARY_FIRST)
        p2 = build_prompt(r2, "positive", PromptVariant.SUMMARY_FIRST)
        assert p1.rendered != p2.rendered
        assert p1.prompt_hash != p2.prompt_hash


class TestFallbackEncode:
    def test_empty_string_zero_vector(self):
        v = fallback_encode("", 16)
        assert np.all(v == 0.0)

    def test_unit_norm(self):
        v = fallback_encode("The Aβ-PET is positive.", 64)
        assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-5)

    def test_deterministic(self):
        np.testing.assert_array_equal(fallback_encode("abc def", 32),
                                      fallback_encode("abc def", 32))

    def test_position_sensitivity(self):
        a = fallback_encode("alpha beta", 32)
        b = fallback_encode("beta alpha", 32)
        assert np.linalg.norm(a - b) > 1e-6

    def test_min_dim(self):
        with pytest.raises(ValueError):
            fallback_encode("x", 4)

    @given(st.integers(8, 128))
    @settings(max_examples=10, deadline=None)
    def test_output_length(self, d):
        assert fallback_encode("some tokens here", d).shape == (d,)


class TestEncodeText:
    def test_deterministic_feature(self):
        enc = FallbackEncoder(dim=64)
        p = build_prompt(full_record(), "positive", PromptVariant.SUMMARY_FIRST)
        f1 = encode_text(p, enc)
        f2 = encode_text(p, enc)
        np.testing.assert_array_equal(f1.values, f2.values)
        assert f1.prompt_hash == p.prompt_hash

    def test_polarity_changes_vector(self):
        enc = FallbackEncoder(dim=64)
        pos = encode_text(build_prompt(full_record(), "positive", PromptVariant.SUMMARY_FIRST), enc)
        neg = encode_text(build_prompt(full_record(), "negative", PromptVariant.SUMMARY_FIRST), enc)
        assert np.linalg.norm(pos.values - neg.values) > 0

    def test_default_768(self):
        enc = FallbackEncoder()
        f = encode_text(build_prompt(full_record(), "positive", PromptVariant.SUMMARY_ONLY), enc)
        assert f.dim == 768

    def test_depends_only_on_rendered_string(self):
        enc = FallbackEncoder(dim=32)
        p = build_prompt(full_record(), "positive", PromptVariant.SUMMARY_ONLY)
        direct = fallback_encode(p.rendered, 32)
        np.testing.assert_array_equal(encode_text(p, enc).values, direct)


class TestCachedEncoder:
    def test_round_trip_and_miss(self, tmp_path):
        cache = tmp_path / "cache.jsonl"
        enc = FallbackEncoder(dim=16)
        p1 = build_prompt(full_record(), "positive", PromptVariant.SUMMARY_FIRST)
        p2 = build_prompt(full_record(), "negative", PromptVariant.SUMMARY_FIRST)
        write_embedding_cache([p1], enc, cache)
        cached = CachedEncoder(cache, enc.encoder_id, 16)
        f = encode_text(p1, cached)
        np.testing.assert_allclose(f.values, enc.encode(p1.rendered), atol=1e-6)
        with pytest.raises(EncoderError, match=p2.prompt_hash):
            encode_text(p2, cached)
