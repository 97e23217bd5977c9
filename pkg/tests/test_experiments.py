import math

import numpy as np
import pytest

from petsynth.cohort import PhantomConfig, write_phantom_cohort
from petsynth.diagnosis import fit_clinical_stats
from petsynth.experiments import (CONDITIONING_MODES, DESK_TEXT_DIM, build_samples,
                                  load_cohort_dir, run_conditioning_comparison,
                                  run_prompt_ablation, split_train_test,
                                  synthesize, text_feature_for, train_generator)
from petsynth.prompts import FallbackEncoder, PromptVariant
from petsynth.training import TrainConfig

# batch size 3 divides the 9-subject training fold: at 16-cube desk scale a
# singleton batch would break batch norm in the discriminator's last block
FAST_CFG = TrainConfig(epochs=1, cosine_period=2, batch_size=3, seed=0)


@pytest.fixture(scope="module")
def cohort(tmp_path_factory):
    out = tmp_path_factory.mktemp("cohort")
    write_phantom_cohort(PhantomConfig(n_subjects=12, dims=(16, 16, 16), seed=0,
                                       missing_rate=0.0), out)
    return load_cohort_dir(out)


class TestCohortData:
    def test_loaded_volumes_normalized(self, cohort):
        assert len(cohort.records) == 12
        for rec in cohort.records:
            pet = cohort.pet[rec.id]
            assert pet.data.min() >= 0.0 and pet.data.max() <= 1.0
            assert cohort.t1[rec.id].dims == (16, 16, 16)
        assert len(cohort.atlas.region_ids()) == 13


class TestTextFeatureFor:
    def test_t1_only_is_zero(self, cohort):
        vec = text_feature_for(cohort.records[0], "t1_only", 32)
        np.testing.assert_array_equal(vec, np.zeros(32, dtype=np.float32))

    def test_numeric_mode_zero_padded(self, cohort):
        stats = fit_clinical_stats(cohort.records)
        vec = text_feature_for(cohort.records[0], "t1_bbm_num", 64, clinical_stats=stats)
        assert vec.shape == (64,)
        assert np.any(vec[:11] != 0)
        np.testing.assert_array_equal(vec[11:], 0.0)

    def test_numeric_mode_requires_stats(self, cohort):
        with pytest.raises(ValueError):
            text_feature_for(cohort.records[0], "t1_bbm_num", 64)

    def test_llm_mode_uses_label_summary_by_default(self, cohort):
        rec = cohort.records[0]
        enc = FallbackEncoder(dim=32)
        default = text_feature_for(rec, "t1_bbm_llm", 32, encoder=enc)
        explicit = text_feature_for(
            rec, "t1_bbm_llm", 32, encoder=enc,
            summary="positive" if rec.abeta_positive else "negative")
        np.testing.assert_array_equal(default, explicit)
        flipped = text_feature_for(
            rec, "t1_bbm_llm", 32, encoder=enc,
            summary="negative" if rec.abeta_positive else "positive")
        assert np.any(default != flipped)

    def test_unknown_mode(self, cohort):
        with pytest.raises(ValueError):
            text_feature_for(cohort.records[0], "pet_only", 32)

    def test_mode_names(self):
        assert CONDITIONING_MODES == ("t1_only", "t1_bbm_num", "t1_bbm_llm")


class TestSamplesAndSplit:
    def test_build_samples(self, cohort):
        samples = build_samples(cohort, cohort.records, "t1_bbm_llm", text_dim=32)
        assert len(samples) == 12
        for s in samples:
            assert s.t1.shape == (16, 16, 16)
            assert s.text.shape == (32,)

    def test_split_is_stratified_partition(self, cohort):
        train, test = split_train_test(cohort, seed=1)
        assert len(train) + len(test) == 12
        assert {r.id for r in train}.isdisjoint({r.id for r in test})
        assert any(r.abeta_positive for r in test)
        assert any(not r.abeta_positive for r in test)

    def test_split_deterministic(self, cohort):
        a = split_train_test(cohort, seed=2)
        b = split_train_test(cohort, seed=2)
        assert [r.id for r in a[0]] == [r.id for r in b[0]]


class TestDrivers:
    def test_train_and_synthesize(self, cohort):
        samples = build_samples(cohort, cohort.records[:6], "t1_only",
                                text_dim=DESK_TEXT_DIM)
        g, history = train_generator(samples, FAST_CFG)
        assert len(history) == 1
        syn = synthesize(g, cohort, samples)
        assert set(syn) == {s.subject_id for s in samples}
        for v in syn.values():
            assert v.dims == (16, 16, 16)

    def test_conditioning_comparison_smoke(self, cohort):
        res = run_conditioning_comparison(cohort, seed=0, train_cfg=FAST_CFG,
                                          judge_epochs=1)
        assert set(res["modes"]) == {"t1_only", "t1_bbm_llm"}
        for mode_stats in res["modes"].values():
            assert math.isfinite(mode_stats["mean_regional_pearson"])
            assert 0.0 <= mode_stats["mean_ssim"] <= 1.0
        assert 0.0 <= res["auc_synthetic_pet"] <= 1.0
        assert 0.0 <= res["auc_t1_only"] <= 1.0

    def test_prompt_ablation_smoke(self, cohort):
        res = run_prompt_ablation(cohort, seed=0, train_cfg=FAST_CFG, judge_epochs=1)
        assert set(res["variants"]) == {v.value for v in PromptVariant}
        for stats in res["variants"].values():
            assert math.isfinite(stats["mean_regional_pearson"])
            assert -1.0 <= stats["consistency_kappa"] <= 1.0
            assert 0.0 <= stats["consistency_accuracy"] <= 1.0
