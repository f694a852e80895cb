import io

import numpy as np
import pytest

from moco_greedy import pareto
from moco_greedy.acquisition import (
    AcquisitionContext,
    EnsembleConfig,
    EnsembleSurrogate,
    fit_ensemble,
    kmer_features,
    make_context,
    sum_dispersion,
    ucb_vector,
)
from moco_greedy.tasks import ContractError, SequenceSpace, enumerate_space, make_bigram_task


def constant_member(value, d=20, h=3):
    value = np.asarray(value, dtype=float)
    return [np.ones((d, h)), np.zeros(h), np.zeros((h, value.size)), value]


def constant_ensemble(values, n_tokens=4, max_len=2):
    return EnsembleSurrogate([constant_member(v) for v in values], n_tokens, max_len, EnsembleConfig())


XS = [(0, 1), (2, 3)]


class TestUcb:
    def test_beta_zero_is_mean(self):
        ens = constant_ensemble([(0, 1), (2, 5)])
        np.testing.assert_array_equal(ucb_vector(ens, XS, 0.0), [[1, 3], [1, 3]])

    def test_identical_members(self):
        ens = constant_ensemble([(1, 2), (1, 2), (1, 2)])
        np.testing.assert_array_equal(ucb_vector(ens, XS, 7.0), [[1, 2], [1, 2]])

    def test_population_std(self):
        ens = constant_ensemble([(0, 0), (2, 2)])
        np.testing.assert_array_equal(ucb_vector(ens, XS[:1], 1.0), [[2, 2]])

    def test_negative_beta(self):
        with pytest.raises(ContractError):
            ucb_vector(constant_ensemble([(0,), (1,)]), XS, -1.0)


class TestDispersion:
    def test_singleton(self):
        assert sum_dispersion([(0, 0)]) == 0

    def test_pair(self):
        assert sum_dispersion([(0, 0), (0, 1)]) == 1

    def test_triple(self):
        assert sum_dispersion([(0, 0), (0, 1), (1, 1)]) == 4


@pytest.fixture
def tiny():
    task = make_bigram_task("ABC", 3, 3, ["AB", "BC"])
    return task, list(enumerate_space(task.space))


class TestAcquisitionValue:
    @pytest.mark.parametrize("mode", ["plain", "objective", "guide"])
    def test_empty_batch(self, tiny, mode):
        task, _ = tiny
        acq = make_context(task, task.space, lam=0.5, mode=mode, prev=[(0, 0, 0)])
        assert acq.value([]) == 0.0

    def test_lambda_zero_collapses(self, tiny):
        task, xs = tiny
        rng = np.random.default_rng(0)
        batch = [xs[i] for i in rng.choice(len(xs), 5, replace=False)]
        plain = make_context(task, task.space).value(batch)
        assert make_context(task, task.space, mode="objective").value(batch) == plain
        assert make_context(task, task.space, mode="guide").value(batch) == plain / 2

    def test_plain_is_hvi_of_images(self, tiny):
        task, xs = tiny
        archive = task.evaluate_many(xs[:3])
        acq = make_context(task, task.space, archive=archive)
        batch = xs[5:12]
        expect = pareto.hvi(task.evaluate_many(batch), archive, np.zeros(2))
        assert acq.value(batch) == pytest.approx(expect, abs=1e-12)

    def test_guide_identity(self, tiny):
        task, xs = tiny
        rng = np.random.default_rng(1)
        prev = [xs[i] for i in rng.choice(len(xs), 3, replace=False)]
        for _ in range(20):
            batch = [xs[i] for i in rng.choice(len(xs), rng.integers(1, 6), replace=False)]
            plain = make_context(task, task.space).value(batch)
            div = sum_dispersion(batch) + sum(
                sum(sum(u != v for u, v in zip(x, p)) for p in prev) for x in batch)
            guide = make_context(task, task.space, lam=0.3, prev=prev, mode="guide").value(batch)
            obj = make_context(task, task.space, lam=0.3, prev=prev, mode="objective").value(batch)
            assert guide == pytest.approx(plain / 2 + 0.3 * div)
            assert obj == pytest.approx(plain + 0.3 * div)

    @pytest.mark.parametrize("mode", ["plain", "objective", "guide"])
    def test_gains_match_value_differences(self, tiny, mode):
        task, xs = tiny
        rng = np.random.default_rng(2)
        acq = make_context(task, task.space, lam=0.2, mode=mode, prev=xs[:2])
        for _ in range(10):
            batch = [xs[i] for i in rng.choice(len(xs), rng.integers(0, 5), replace=False)]
            g = acq.gains(xs, batch)
            base = acq.value(batch)
            for x, gx in zip(xs, g):
                expect = 0.0 if x in batch else acq.value(batch + [x]) - base
                assert gx == pytest.approx(expect, abs=1e-12)

    def test_plain_is_monotone(self, tiny):
        task, xs = tiny
        acq = make_context(task, task.space)
        rng = np.random.default_rng(3)
        for _ in range(50):
            batch = [xs[i] for i in rng.choice(len(xs), rng.integers(0, 6), replace=False)]
            assert np.all(acq.gains(xs, batch) >= 0.0)

    def test_equal_images_give_equal_gains(self, tiny):
        """Batches with identical image multisets induce identical marginal gains."""
        task, xs = tiny
        imgs = task.evaluate_many(xs)
        acq = make_context(task, task.space)
        rng = np.random.default_rng(4)
        for _ in range(50):
            batch = [xs[i] for i in rng.choice(len(xs), rng.integers(1, 5), replace=False)]
            swapped = []
            for x in batch:
                same = [y for y, iy in zip(xs, imgs) if np.array_equal(iy, imgs[xs.index(x)])
                        and y not in swapped]
                swapped.append(same[rng.integers(len(same))])
            others = [x for x in xs if x not in batch and x not in swapped]
            np.testing.assert_array_equal(acq.gains(others, batch), acq.gains(others, swapped))

    def test_bad_mode(self, tiny):
        task, _ = tiny
        with pytest.raises(ContractError):
            make_context(task, task.space, mode="other")


class TestEnsemble:
    space = SequenceSpace("ABCD", 4, 6)

    def test_kmer_features(self):
        f = kmer_features([(0, 1, 0)], 2, 4)
        # unigram counts A=2, B=1; bigrams AA=0, AB=1, BA=1, BB=0
        np.testing.assert_array_equal(f[0] * 4, [2, 1, 0, 1, 1, 0])

    def test_constant_targets(self):
        xs = self.space.sample_uniform(np.random.default_rng(0), 60)
        ys = np.tile([0.3, 0.7], (60, 1))
        ens = fit_ensemble(xs, ys, 4, 6, EnsembleConfig(n_members=3, epochs=200))
        mean, std = ens.mean_std(xs)
        assert np.all(np.abs(mean - ys) < 1e-2)
        assert std.max() < 1e-2

    def test_refit_bit_identical(self):
        rng = np.random.default_rng(1)
        xs = self.space.sample_uniform(rng, 40)
        ys = rng.random((40, 2))
        cfg = EnsembleConfig(n_members=2, epochs=50, seed=9)
        a, b = fit_ensemble(xs, ys, 4, 6, cfg), fit_ensemble(xs, ys, 4, 6, cfg)
        for ma, mb in zip(a.members, b.members):
            for pa, pb in zip(ma, mb):
                assert np.array_equal(pa, pb)

    def test_members_differ(self):
        rng = np.random.default_rng(2)
        xs = self.space.sample_uniform(rng, 40)
        ens = fit_ensemble(xs, rng.random((40, 2)), 4, 6, EnsembleConfig(n_members=2, epochs=10))
        assert not np.array_equal(ens.members[0][0], ens.members[1][0])

    def test_loss_decreases(self):
        rng = np.random.default_rng(3)
        xs = self.space.sample_uniform(rng, 50)
        ens = fit_ensemble(xs, rng.random((50, 2)), 4, 6, EnsembleConfig(n_members=2, epochs=100))
        for hist in ens.losses:
            assert hist[-1] < hist[0]

    def test_learns_linear_kmer_function(self):
        rng = np.random.default_rng(4)
        xs = self.space.sample_uniform(rng, 260)
        w = rng.normal(size=(20, 2))
        ys = kmer_features(xs, 4, 6) @ w
        ens = fit_ensemble(xs[:200], ys[:200], 4, 6, EnsembleConfig(n_members=5, epochs=400))
        rmse = np.sqrt(np.mean((ens.predict(xs[200:]) - ys[200:]) ** 2, axis=0))
        assert np.all(rmse < ys[200:].std(axis=0))

    def test_rejects_tiny_data(self):
        with pytest.raises(ContractError):
            fit_ensemble([], np.zeros((0, 2)), 4, 6)

    def test_checkpoint_roundtrip(self):
        rng = np.random.default_rng(5)
        xs = self.space.sample_uniform(rng, 30)
        ens = fit_ensemble(xs, rng.random((30, 2)), 4, 6, EnsembleConfig(n_members=2, epochs=5))
        buf = io.BytesIO()
        ens.save(buf)
        buf.seek(0)
        back = EnsembleSurrogate.load(buf)
        np.testing.assert_array_equal(back.ucb(xs, 0.1), ens.ucb(xs, 0.1))

    def test_context_features_use_feature_beta(self):
        ens = constant_ensemble([(0, 0), (2, 2)])
        acq = AcquisitionContext(ens, np.zeros(2), 2, beta=1.0)
        np.testing.assert_allclose(acq.features(XS[:1]), [[1.1, 1.1]])
        np.testing.assert_allclose(acq.images(XS[:1]), [[2.0, 2.0]])
