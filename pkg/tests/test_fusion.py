import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trimodal.errors import ConfigError, DataError
from trimodal.fusion import (
    FeatureRecord,
    FusedVector,
    SvmModel,
    decision_values,
    fuse,
    hinge_objective,
    predict,
    train_svm,
)


def record(t=(1.0, 2.0), a=(3.0,), v=(4.0, 5.0), label=0, uid="u0", spk="s0"):
    return FeatureRecord(uid, spk, label, {"T": np.array(t), "A": np.array(a), "V": np.array(v)})


class TestFuse:
    def test_full_concat(self):
        out = fuse(record(), ("T", "A", "V"))
        assert out.values.tolist() == [1.0, 2.0, 3.0, 4.0, 5.0]
        assert out.layout == [("T", 0, 2), ("A", 2, 1), ("V", 3, 2)]

    def test_unimodal_passthrough(self):
        assert fuse(record(), ("A",)).values.tolist() == [3.0]

    def test_request_order_ignored(self):
        out = fuse(record(), ("A", "T"))
        assert out.values.tolist() == [1.0, 2.0, 3.0]
        assert [m for m, _, _ in out.layout] == ["T", "A"]

    def test_missing_modality_named(self):
        r = FeatureRecord("u1", "s", 0, {"T": np.array([1.0])})
        with pytest.raises(DataError, match="'A'"):
            fuse(r, ("T", "A"))

    def test_empty_subset_rejected(self):
        with pytest.raises(ConfigError):
            fuse(record(), ())

    @given(
        st.lists(st.floats(-10, 10), min_size=1, max_size=6),
        st.lists(st.floats(-10, 10), min_size=1, max_size=6),
        st.lists(st.floats(-10, 10), min_size=1, max_size=6),
        st.sets(st.sampled_from(["T", "A", "V"]), min_size=1),
    )
    @settings(max_examples=60, deadline=None)
    def test_layout_recovers_each_input_exactly(self, t, a, v, subset):
        r = record(t, a, v)
        out = fuse(r, tuple(subset))
        for m, off, length in out.layout:
            assert np.array_equal(out.values[off : off + length], r.features[m])
        assert sum(l for _, _, l in out.layout) == out.values.size
        offs = [off for _, off, _ in out.layout]
        assert offs == sorted(offs)


def points(xs, labels):
    return [
        FeatureRecord(f"u{i}", f"s{i}", int(y), {"T": np.atleast_1d(np.asarray(x, float))})
        for i, (x, y) in enumerate(zip(xs, labels))
    ]


class TestTrainSvm:
    def test_two_point_separable(self):
        recs = points([[-1.0], [1.0]], [0, 1])
        model = train_svm(recs, ("T",), c=1.0, seed=0, epochs=100)
        preds = [predict(model, fuse(r, ("T",)))[0] for r in recs]
        assert preds == [0, 1]

    def test_xor_capped_at_three_quarters(self):
        xs = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]
        ys = [0, 1, 1, 0]
        # no linear labeling of these 4 points gets more than 3 right
        best = 0
        for w1, w2, b in itertools.product((-1, 0, 1), repeat=3):
            acc = sum(
                int((w1 * x[0] + w2 * x[1] + b > 0) == y) for x, y in zip(xs, ys)
            )
            best = max(best, acc)
        assert best <= 3
        model = train_svm(points(xs, ys), ("T",), c=1.0, seed=3, epochs=200)
        acc = np.mean([predict(model, fuse(r, ("T",)))[0] == r.label
                       for r in points(xs, ys)])
        assert acc <= 0.75

    def test_same_seed_identical_weights(self):
        recs = points([[-1.0, 0.5], [1.0, 2.0], [-2.0, 1.0], [2.0, -1.0]], [0, 1, 0, 1])
        a = train_svm(recs, ("T",), seed=7, epochs=50)
        b = train_svm(recs, ("T",), seed=7, epochs=50)
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.bias, b.bias)

    def test_hinge_objective_non_increasing_across_epochs(self):
        rng = np.random.Generator(np.random.PCG64(1))
        xs = [[x + (2.0 if y else -2.0)] for x, y in
              zip(rng.normal(size=20), [i % 2 for i in range(20)])]
        recs = points(xs, [i % 2 for i in range(20)])
        fused = np.stack([fuse(r, ("T",)).values for r in recs])
        labels = np.array([r.label for r in recs])
        losses = []
        for epochs in (1, 2, 4, 8, 16, 32):
            model = train_svm(recs, ("T",), c=1.0, seed=5, epochs=epochs)
            losses.append(hinge_objective(model, fused, labels))
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))

    def test_inconsistent_dims_rejected(self):
        recs = [
            FeatureRecord("u0", "s", 0, {"T": np.array([1.0])}),
            FeatureRecord("u1", "s", 1, {"T": np.array([1.0, 2.0])}),
        ]
        with pytest.raises(DataError, match="dimensions"):
            train_svm(recs, ("T",))

    def test_single_class_rejected(self):
        with pytest.raises(DataError, match="single class"):
            train_svm(points([[1.0], [2.0]], [1, 1]), ("T",))

    def test_one_vs_rest_matches_binary_exactly(self):
        rng = np.random.Generator(np.random.PCG64(2))
        xs = rng.normal(size=(30, 3)).tolist()
        ys = [i % 2 for i in range(30)]
        recs = points(xs, ys)
        single = train_svm(recs, ("T",), seed=9, epochs=40)
        ovr = train_svm(recs, ("T",), seed=9, epochs=40, one_vs_rest=True)
        assert single.binary and not ovr.binary
        probes = points(rng.normal(size=(50, 3)).tolist(), [0] * 50)
        for r in probes:
            f = fuse(r, ("T",))
            assert predict(single, f)[0] == predict(ovr, f)[0]

    def test_four_class_one_vs_rest(self):
        centers = {0: (4, 0), 1: (-4, 0), 2: (0, 4), 3: (0, -4)}
        rng = np.random.Generator(np.random.PCG64(4))
        xs, ys = [], []
        for i in range(40):
            y = i % 4
            cx, cy = centers[y]
            xs.append([cx + rng.normal(0, 0.3), cy + rng.normal(0, 0.3)])
            ys.append(y)
        recs = points(xs, ys)
        model = train_svm(recs, ("T",), seed=1, epochs=150)
        acc = np.mean([predict(model, fuse(r, ("T",)))[0] == r.label for r in recs])
        assert acc >= 0.95


class TestPredict:
    def test_positive_decision(self):
        model = SvmModel(np.array([[1.0]]), np.array([0.0]), 2, 1.0, 0)
        cls, scores = predict(model, FusedVector(np.array([2.0]), [("T", 0, 1)]))
        assert cls == 1
        assert scores.tolist() == [-2.0, 2.0]

    def test_tie_breaks_to_lower_class(self):
        model = SvmModel(np.array([[1.0]]), np.array([0.0]), 2, 1.0, 0)
        cls, _ = predict(model, FusedVector(np.array([0.0]), [("T", 0, 1)]))
        assert cls == 0

    def test_positive_scaling_keeps_argmax(self):
        rng = np.random.Generator(np.random.PCG64(6))
        w = rng.normal(size=(3, 4))
        model = SvmModel(w, rng.normal(size=3), 3, 1.0, 0)
        scaled = SvmModel(w * 3.5, model.bias * 3.5, 3, 1.0, 0)
        for _ in range(20):
            f = FusedVector(rng.normal(size=4), [("T", 0, 4)])
            assert predict(model, f)[0] == predict(scaled, f)[0]

    def test_dimension_mismatch_rejected(self):
        model = SvmModel(np.array([[1.0, 2.0]]), np.array([0.0]), 2, 1.0, 0)
        with pytest.raises(DataError, match="length"):
            decision_values(model, FusedVector(np.array([1.0]), [("T", 0, 1)]))


class TestSerialization:
    def test_round_trip_bit_exact(self, tmp_path):
        recs = points([[-1.0, 0.2], [1.0, -0.4], [-1.5, 0.1], [0.9, 0.0]], [0, 1, 0, 1])
        model = train_svm(recs, ("T",), c=2.0, seed=13, epochs=30)
        path = tmp_path / "svm.json"
        model.save(path)
        back = SvmModel.load(path)
        assert np.array_equal(back.weights, model.weights)
        assert np.array_equal(back.bias, model.bias)
        assert back.layout == model.layout
        assert back.c == model.c and back.seed == model.seed
