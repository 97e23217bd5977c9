import math

import numpy as np
import pytest
import torch

from petsynth.cohort import SubjectRecord
from petsynth.diagnosis import (CLINICAL_VARIABLES, ClinicalMLP, JudgeConfig, JudgeModel,
                                clinical_vector, consistency_eval, fit_clinical_stats,
                                full_pipeline, fuse_logits, predict_clinical,
                                predict_judge, predict_summary, train_clinical_mlp,
                                train_judge)
from petsynth.metrics import AgreementMatrix, cohen_kappa
from petsynth.models import GeneratorModel
from petsynth.prompts import FallbackEncoder
from petsynth.training import init_weights
from petsynth.volume import Volume

from tests.test_models import MINI_GEN

TINY_JUDGE = JudgeConfig(widths=(2, 3, 4), epochs=5, batch_size=4, lr=1e-2)


def sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


def make_record(i=0, positive=True, **overrides):
    base = dict(id=f"s{i}", age=70.0 + i, education=12.0, abeta40=196.0,
                abeta42=9.8 if positive else 14.0, t_tau=210.0,
                p_tau181=25.0 if positive else 12.0, nfl=22.0,
                mmse=20.0 if positive else 28.0, moca_b=24.0,
                abeta_positive=positive)
    base.update(overrides)
    r = SubjectRecord(**base)
    r.fill_derived_ratios()
    return r


def make_training_records(n=20, seed=0):
    rng = np.random.default_rng(seed)
    recs, labels = [], []
    for i in range(n):
        positive = i % 2 == 0
        r = make_record(i, positive,
                        age=float(rng.uniform(60, 85)),
                        education=float(rng.uniform(6, 18)),
                        abeta40=float(rng.uniform(150, 250)),
                        abeta42=float(rng.uniform(7, 12) if positive else rng.uniform(11, 16)),
                        t_tau=float(rng.uniform(150, 300)),
                        nfl=float(rng.uniform(10, 40)),
                        moca_b=float(rng.uniform(15, 30)),
                        mmse=float(rng.uniform(16, 24) if positive else rng.uniform(25, 30)),
                        p_tau181=float(rng.uniform(20, 35) if positive else rng.uniform(8, 15)))
        recs.append(r)
        labels.append(positive)
    return recs, labels


class TestFuseLogits:
    def test_anchor_zero(self):
        assert fuse_logits(0.0, 0.0) == pytest.approx(0.5, abs=1e-12)

    def test_anchor_two(self):
        assert fuse_logits(2.0, 2.0) == pytest.approx(sigmoid(2.0), abs=1e-9)
        assert fuse_logits(2.0, 2.0) == pytest.approx(0.880797, abs=1e-6)

    def test_opposing_logits_cancel(self):
        for z in (0.5, 1.7, 10.0):
            assert fuse_logits(z, -z) == pytest.approx(0.5, abs=1e-12)

    def test_monotone_in_each_argument(self):
        assert fuse_logits(1.0, 0.0) > fuse_logits(0.0, 0.0)
        assert fuse_logits(0.0, 1.0) > fuse_logits(0.0, 0.0)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            fuse_logits(float("nan"), 0.0)
        with pytest.raises(ValueError):
            fuse_logits(0.0, float("inf"))


class TestClinicalFeatures:
    def test_eleven_variables_no_gender(self):
        assert len(CLINICAL_VARIABLES) == 11
        assert "gender" not in CLINICAL_VARIABLES
        assert "abeta42_40_ratio" in CLINICAL_VARIABLES

    def test_standardization(self):
        recs, _ = make_training_records()
        stats = fit_clinical_stats(recs)
        vecs = np.stack([clinical_vector(r, stats) for r in recs])
        # no missing values here, so columns are exactly standardized
        np.testing.assert_allclose(vecs.mean(axis=0), 0.0, atol=1e-5)
        np.testing.assert_allclose(vecs.std(axis=0), 1.0, atol=1e-4)

    def test_median_imputation(self):
        recs, _ = make_training_records()
        stats = fit_clinical_stats(recs)
        r = make_record(99, True)
        r.mmse = None
        vec = clinical_vector(r, stats)
        i = CLINICAL_VARIABLES.index("mmse")
        expected = (stats.medians["mmse"] - stats.means["mmse"]) / stats.stds["mmse"]
        assert vec[i] == pytest.approx(expected, abs=1e-6)

    def test_all_missing_variable_rejected(self):
        recs, _ = make_training_records(4)
        for r in recs:
            r.nfl = None
        with pytest.raises(ValueError, match="nfl"):
            fit_clinical_stats(recs)


class TestClinicalMLP:
    def test_prob_is_sigmoid_of_logit(self):
        recs, labels = make_training_records()
        mlp = train_clinical_mlp(recs, labels, epochs=10)
        prob, logit = predict_clinical(mlp, recs[0])
        assert prob == pytest.approx(sigmoid(logit), abs=1e-9)

    def test_untrained_stats_guard(self):
        with pytest.raises(RuntimeError):
            predict_clinical(ClinicalMLP(), make_record())

    def test_learns_separable_cohort(self):
        recs, labels = make_training_records(40, seed=1)
        mlp = train_clinical_mlp(recs, labels, epochs=300)
        correct = sum((predict_clinical(mlp, r)[0] >= 0.5) == y
                      for r, y in zip(recs, labels))
        assert correct >= 36  # >=90% training accuracy on a separable cohort

    def test_summary_threshold(self):
        recs, labels = make_training_records(40, seed=2)
        mlp = train_clinical_mlp(recs, labels, epochs=300)
        for r in recs:
            prob, _ = predict_clinical(mlp, r)
            expected = "positive" if prob >= 0.5 else "negative"
            assert predict_summary(mlp, r) == expected

    def test_deterministic(self):
        recs, labels = make_training_records()
        m1 = train_clinical_mlp(recs, labels, epochs=20, seed=5)
        m2 = train_clinical_mlp(recs, labels, epochs=20, seed=5)
        assert predict_clinical(m1, recs[3]) == predict_clinical(m2, recs[3])


class TestJudge:
    def bright_dark_volumes(self, n=8, dims=(16, 16, 16), seed=0):
        rng = np.random.default_rng(seed)
        vols, labels = [], []
        for i in range(n):
            positive = i % 2 == 0
            base = 0.8 if positive else 0.2
            vols.append((base + 0.05 * rng.standard_normal(dims)).astype(np.float32))
            labels.append(positive)
        return vols, labels

    def test_prob_is_sigmoid_of_logit(self):
        model = init_weights(JudgeModel(TINY_JUDGE), seed=0)
        prob, logit = predict_judge(model, np.random.default_rng(0)
                                    .random((16, 16, 16), dtype=np.float32))
        assert prob == pytest.approx(sigmoid(logit), abs=1e-9)

    def test_single_class_rejected(self):
        vols, _ = self.bright_dark_volumes(4)
        with pytest.raises(ValueError):
            train_judge(vols, [True] * 4, TINY_JUDGE)

    def test_dims_divisible_by_16(self):
        model = JudgeModel(TINY_JUDGE)
        with pytest.raises(ValueError, match="divisible by 16"):
            model(torch.randn(1, 1, 8, 8, 8))

    def test_learns_brightness(self):
        vols, labels = self.bright_dark_volumes(16, seed=3)
        judge = train_judge(vols, labels, JudgeConfig(widths=(2, 3, 4), epochs=40,
                                                      batch_size=8, lr=1e-2, seed=1))
        correct = sum((predict_judge(judge, v)[0] >= 0.5) == y
                      for v, y in zip(vols, labels))
        assert correct >= 14

    def test_deterministic(self):
        vols, labels = self.bright_dark_volumes(8, seed=4)
        j1 = train_judge(vols, labels, TINY_JUDGE)
        j2 = train_judge(vols, labels, TINY_JUDGE)
        assert predict_judge(j1, vols[0]) == predict_judge(j2, vols[0])


class TestConsistencyEval:
    def test_identical_pairs_perfect_kappa(self):
        vols, labels = TestJudge().bright_dark_volumes(10, seed=5)
        judge = train_judge(vols, labels, JudgeConfig(widths=(2, 3, 4), epochs=40,
                                                      batch_size=8, lr=1e-2, seed=2))
        paired = [(f"s{i}", Volume(v), Volume(v)) for i, v in enumerate(vols)]
        out = consistency_eval(judge, paired)
        assert out["kappa"] == pytest.approx(1.0, abs=1e-12)
        assert out["p_real"] == out["p_syn"]

    def test_independent_calls_near_zero_kappa(self):
        rng = np.random.default_rng(7)
        a = rng.random(500) >= 0.5
        b = rng.random(500) >= 0.5
        kappa = cohen_kappa(AgreementMatrix.from_calls(list(a), list(b)))
        assert abs(kappa) < 0.15

    def test_empty_rejected(self):
        model = JudgeModel(TINY_JUDGE)
        with pytest.raises(ValueError):
            consistency_eval(model, [])


class TestFullPipeline:
    def build(self, seed=0):
        torch.manual_seed(seed)
        generator = init_weights(GeneratorModel(MINI_GEN), seed=seed)
        encoder = FallbackEncoder(dim=16)
        recs, labels = make_training_records(20, seed=seed)
        mlp = train_clinical_mlp(recs, labels, epochs=50, seed=seed)
        classifier = init_weights(JudgeModel(TINY_JUDGE), seed=seed)
        return generator, encoder, mlp, classifier

    def test_output_contract(self):
        generator, encoder, mlp, classifier = self.build()
        t1 = Volume(np.random.default_rng(0).random((16, 16, 16), dtype=np.float32))
        record = make_record(0, True, pet_path="/nonexistent/deleted_pet.nii")
        out = full_pipeline(t1, record, generator=generator, encoder=encoder,
                            clinical_mlp=mlp, classifier=classifier)
        assert out["id"] == record.id
        assert 0.0 < out["probability"] < 1.0
        assert out["positive"] == (out["probability"] >= 0.5)
        assert out["summary"] in ("positive", "negative")
        assert out["synthetic_pet"].dims == (16, 16, 16)
        assert set(out["stage_timings"]) == {"prompt_encode", "synthesis", "classification"}

    def test_runs_without_real_pet(self):
        # The record points at a PET path that does not exist; the pipeline
        # must not attempt to read it.
        generator, encoder, mlp, classifier = self.build(1)
        t1 = Volume(np.random.default_rng(1).random((16, 16, 16), dtype=np.float32))
        record = make_record(1, False, pet_path="/nonexistent/missing.nii")
        out = full_pipeline(t1, record, generator=generator, encoder=encoder,
                            clinical_mlp=mlp, classifier=classifier)
        assert math.isfinite(out["probability"])

    def test_deterministic(self):
        generator, encoder, mlp, classifier = self.build(2)
        t1 = Volume(np.random.default_rng(2).random((16, 16, 16), dtype=np.float32))
        record = make_record(2, True)
        kwargs = dict(generator=generator, encoder=encoder, clinical_mlp=mlp,
                      classifier=classifier)
        o1 = full_pipeline(t1, record, **kwargs)
        o2 = full_pipeline(t1, record, **kwargs)
        assert o1["probability"] == o2["probability"]
        np.testing.assert_array_equal(o1["synthetic_pet"].data, o2["synthetic_pet"].data)

    def test_fuse_clinical_changes_probability(self):
        generator, encoder, mlp, classifier = self.build(3)
        t1 = Volume(np.random.default_rng(3).random((16, 16, 16), dtype=np.float32))
        record = make_record(3, True)
        kwargs = dict(generator=generator, encoder=encoder, clinical_mlp=mlp,
                      classifier=classifier)
        plain = full_pipeline(t1, record, **kwargs)
        fused = full_pipeline(t1, record, fuse_clinical=True, **kwargs)
        _, pet_logit = predict_judge(classifier, plain["synthetic_pet"])
        _, clin_logit = predict_clinical(mlp, record)
        assert fused["probability"] == pytest.approx(fuse_logits(pet_logit, clin_logit),
                                                     abs=1e-9)
