import numpy as np
import pytest

from fdan.data import FeatureDomain, SynthSpec, stratified_split, synth_domains
from fdan.errors import ConfigError, DivergenceError, ShapeError
from fdan.metrics import metrics
from fdan.model import Architecture, ModelParams, forward_stream
from fdan.trainer import TrainConfig, _batch_plan, evaluate, sgd_momentum_step, train


def small_task(seed=0, samples=20):
    v, a = synth_domains(SynthSpec(samples_per_class=samples, d_in=6, seed=seed))
    a_train, a_test = stratified_split(a, 0.8, seed)
    return v, a_train, a_test


def snapshot(params):
    return {k: t.data.copy() for k, t in params.named_parameters()}


class TestSgdStep:
    def test_vanilla(self):
        p, g = np.array([[1.0, -2.0]]), np.array([[0.5, 0.25]])
        new, _ = sgd_momentum_step(p, g, np.zeros_like(p), 0.1, 0.0, 0.0)
        np.testing.assert_array_equal(new, p - 0.1 * g)

    def test_pure_inertia(self):
        p, v = np.array([[1.0]]), np.array([[3.0]])
        new, vel = sgd_momentum_step(p, np.zeros_like(p), v, 0.5, 0.9, 0.0)
        assert new[0, 0] == pytest.approx(1.0 - 0.5 * 0.9 * 3.0)
        assert vel[0, 0] == pytest.approx(2.7)

    def test_two_step_displacement(self):
        g = np.array([[0.3, -1.2]])
        p0 = np.zeros_like(g)
        p, v = sgd_momentum_step(p0, g, np.zeros_like(g), 1.0, 0.99, 0.0)
        p, v = sgd_momentum_step(p, g, v, 1.0, 0.99, 0.0)
        np.testing.assert_allclose(p0 - p, 2.99 * g, rtol=1e-15)

    def test_decay_enters_gradient(self):
        p = np.array([[2.0]])
        new, _ = sgd_momentum_step(p, np.zeros_like(p), np.zeros_like(p), 0.1, 0.0, 0.5)
        assert new[0, 0] == pytest.approx(2.0 - 0.1 * 1.0)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            sgd_momentum_step(np.zeros((1, 2)), np.zeros((2, 1)), np.zeros((1, 2)), 1, 0, 0)


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(alpha=-1), dict(momentum=1.0), dict(batch_size=1),
                                    dict(epochs=0), dict(ablation="none"),
                                    dict(weight_decay=-1e-4)])
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            TrainConfig(**kw)

    def test_no_lmmd_forces_alpha(self):
        assert TrainConfig(alpha=0.5, ablation="no-lmmd").effective_alpha == 0.0
        assert TrainConfig(alpha=0.5).effective_alpha == 0.5


def test_batch_plan_covers_every_sample_each_pass():
    plan = _batch_plan(np.random.default_rng(0), 10, 5, 4)
    assert plan.shape == (5, 4)
    flat = plan.ravel()
    assert sorted(flat[:10]) == list(range(10)) and sorted(flat[10:20]) == list(range(10))


class TestTrain:
    def test_zero_lr_is_a_no_op(self):
        v, a_train, a_test = small_task()
        init = ModelParams.init(Architecture(6, 6, 3, dim=8, hidden=16, layers=2), 0)
        before = snapshot(init)
        params, history = train(TrainConfig(lr=0.0, epochs=1), v, a_train, a_test,
                                params=init)
        after = snapshot(params)
        assert all(np.array_equal(before[k], after[k]) for k in before)
        assert len(history) == 1

    def test_deterministic(self):
        v, a_train, a_test = small_task(1)
        cfg = TrainConfig(epochs=3, seed=9)
        p1, h1 = train(cfg, v, a_train, a_test, dim=8, hidden=16)
        p2, h2 = train(cfg, v, a_train, a_test, dim=8, hidden=16)
        assert [r.to_dict() for r in h1] == [r.to_dict() for r in h2]
        s1, s2 = snapshot(p1), snapshot(p2)
        assert all(np.array_equal(s1[k], s2[k]) for k in s1)

    def test_history_records(self):
        v, a_train, a_test = small_task(2)
        _, hist = train(TrainConfig(epochs=2, alpha=0.1), v, a_train, a_test, dim=8, hidden=16)
        assert [r.epoch for r in hist] == [1, 2]
        for r in hist:
            assert r.total == pytest.approx(r.ce_v + r.ce_a + 0.1 * r.lmmd_sum, rel=1e-12)
            assert 0 <= r.war <= 1 and 0 <= r.uar <= 1 and 0 <= r.w_f1 <= 1

    def test_no_lmmd_history_keeps_component(self):
        v, a_train, a_test = small_task(3)
        _, hist = train(TrainConfig(epochs=2, alpha=0.5, ablation="no-lmmd"), v, a_train,
                        a_test, dim=8, hidden=16)
        for r in hist:
            assert r.lmmd_sum > 0
            assert r.total == pytest.approx(r.ce_v + r.ce_a, rel=1e-12)

    def test_class_count_mismatch(self):
        v, a_train, _ = small_task()
        other = FeatureDomain.from_indices(a_train.features, a_train.label_indices, 4,
                                           "acoustic")
        with pytest.raises(ConfigError):
            train(TrainConfig(epochs=1), v, other)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_reports_position(self):
        v, a_train, _ = small_task()
        v.features[0, 0] = np.inf
        with pytest.raises(DivergenceError) as info:
            train(TrainConfig(epochs=2), v, a_train, dim=8, hidden=16)
        assert info.value.epoch == 1

    def test_separate_heads_are_independent(self):
        """Without attention and alignment, the visual path ignores acoustic data."""
        v, a_train, _ = small_task(4)
        arch = Architecture(6, 6, 3, dim=8, hidden=16, layers=2, shared_classifier=False)
        cfg = TrainConfig(epochs=3, alpha=0.0, ablation="no-attention", seed=2)
        noisy = FeatureDomain(a_train.features + np.random.default_rng(0).normal(
            size=a_train.features.shape), a_train.labels, a_train.class_names, "acoustic")
        runs = [snapshot(train(cfg, v, dom, params=ModelParams.init(arch, 2))[0])
                for dom in (a_train, noisy)]
        visual = [k for k in runs[0] if k.startswith("proj_v") or ".v." in k
                  or k in ("cls_w", "cls_b")]
        assert all(np.array_equal(runs[0][k], runs[1][k]) for k in visual)
        assert not np.array_equal(runs[0]["proj_a_w"], runs[1]["proj_a_w"])

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", [1, 2, 3, 4, 5])
    def test_loss_decreases_on_synthetic_task(self, seed):
        v, a = synth_domains(SynthSpec(seed=seed))
        a_train, a_test = stratified_split(a, 0.8, seed)
        _, hist = train(TrainConfig(epochs=50, seed=seed), v, a_train, a_test)
        assert hist[49].total < hist[0].total


class TestEvaluate:
    def _model(self):
        arch = Architecture(2, 2, 3, dim=2, hidden=4, layers=1)
        return ModelParams.init(arch, 0)

    def test_constant_predictor(self):
        params = self._model()
        params.cls_w.data[:] = 0.0
        params.cls_b.data = np.array([[0.0, 0.0, 5.0]])
        truth = np.repeat(np.arange(3), 4)
        dom = FeatureDomain.from_indices(np.random.default_rng(0).normal(size=(12, 2)),
                                         truth, 3, "acoustic")
        rep = evaluate(params, dom, "a")
        assert rep.war == pytest.approx(1 / 3) and rep.uar == pytest.approx(1 / 3)
        assert [row[2] for row in rep.confusion] == [4, 4, 4]

    def test_matches_metrics_on_own_predictions(self):
        params = self._model()
        X = np.random.default_rng(1).normal(size=(9, 2))
        truth = np.random.default_rng(2).integers(0, 3, 9)
        dom = FeatureDomain.from_indices(X, truth, 3)
        pred = forward_stream(params, X, "v")[1].data.argmax(axis=1)
        assert evaluate(params, dom, "v").to_dict() == metrics(pred, truth, 3).to_dict()

    def test_perfect_when_predictions_match(self):
        params = self._model()
        X = np.random.default_rng(3).normal(size=(10, 2))
        pred = forward_stream(params, X, "v")[1].data.argmax(axis=1)
        rep = evaluate(params, FeatureDomain.from_indices(X, pred, 3), "v")
        assert rep.war == rep.uar == rep.w_f1 == 1.0

    def test_width_mismatch(self):
        dom = FeatureDomain.from_indices(np.zeros((2, 5)), [0, 1], 3)
        with pytest.raises(ShapeError):
            evaluate(self._model(), dom, "a")
