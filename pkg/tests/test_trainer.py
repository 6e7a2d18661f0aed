import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from danarm.network import DangerNet, forward
from danarm.trainer import (InitialTrainConfig, ReplayBuffer, StoreResult,
                            generate_initial_dataset, limit_labels,
                            online_update, run_initial_training)


class TestInitialDataset:
    def test_exactly_at_limit_is_safe(self, default_arm):
        assert limit_labels(default_arm.joint_upper, default_arm)[0] == 0.0
        assert limit_labels(default_arm.joint_lower, default_arm)[0] == 0.0

    def test_five_degrees_beyond_is_dangerous(self, default_arm):
        for j in range(default_arm.n_joints):
            theta = 0.5 * (default_arm.joint_lower + default_arm.joint_upper)
            theta[j] = default_arm.joint_upper[j] + math.radians(5.0)
            assert limit_labels(theta, default_arm)[0] == 1.0

    def test_sample_count_and_reproducibility(self, default_arm):
        cfg = InitialTrainConfig(n_samples=500, seed=7)
        a = generate_initial_dataset(cfg, default_arm)
        b = generate_initial_dataset(cfg, default_arm)
        assert len(a) == 500
        np.testing.assert_array_equal(a.inputs, b.inputs)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_prevalence_matches_uniform_box_probability(self, default_arm):
        cfg = InitialTrainConfig(n_samples=12000, seed=3)
        data = generate_initial_dataset(cfg, default_arm)
        margin = 2 * math.radians(cfg.margin_deg)
        ranges = default_arm.joint_upper - default_arm.joint_lower
        expected = 1.0 - np.prod(ranges / (ranges + margin))
        assert abs(data.labels.mean() - expected) <= 0.03

    def test_config_validation(self):
        with pytest.raises(ValueError):
            InitialTrainConfig(margin_deg=0.0)
        with pytest.raises(ValueError):
            InitialTrainConfig(n_samples=10, batch_size=100)


def far_cmd(rng, m, base=None, distance=50.0):
    direction = rng.normal(0.0, 1.0, m)
    direction *= distance / np.linalg.norm(direction)
    return (np.zeros(m) if base is None else base) + direction


class TestAccumulationGate:
    def test_confident_agreement_is_skipped(self):
        buf = ReplayBuffer()
        out = buf.maybe_accumulate(np.zeros(3), 1.0, 0.95)
        assert out is StoreResult.CONFIDENT_AGREEMENT
        assert len(buf) == 0
        assert buf.maybe_accumulate(np.zeros(3), 0.0, 0.05) \
            is StoreResult.CONFIDENT_AGREEMENT

    def test_ambiguous_prediction_is_stored_when_far(self):
        buf = ReplayBuffer()
        rng = np.random.default_rng(0)
        first = far_cmd(rng, 3)
        assert buf.maybe_accumulate(first, 0.0, 0.5) is StoreResult.STORED
        second = far_cmd(rng, 3, base=first, distance=25.0)
        assert buf.maybe_accumulate(second, 0.0, 0.5) is StoreResult.STORED

    def test_close_command_is_skipped(self):
        buf = ReplayBuffer()
        rng = np.random.default_rng(1)
        first = far_cmd(rng, 3)
        buf.maybe_accumulate(first, 0.0, 0.5)
        near = first + 5.0 / math.sqrt(3)
        assert buf.maybe_accumulate(near, 0.0, 0.5) is StoreResult.TOO_CLOSE
        assert len(buf) == 1
        # l_ref_pre unchanged by skips: the same command is still too close
        assert buf.maybe_accumulate(near, 0.0, 0.5) is StoreResult.TOO_CLOSE

    def test_first_candidate_passes_distance_gate_vacuously(self):
        buf = ReplayBuffer()
        assert buf.maybe_accumulate(np.zeros(4), 1.0, 0.2) is StoreResult.STORED

    def test_disagreement_checked_before_distance(self):
        buf = ReplayBuffer()
        buf.maybe_accumulate(np.zeros(3), 0.0, 0.5)
        # close AND confidently agreeing: the reason is the agreement
        out = buf.maybe_accumulate(np.zeros(3), 0.0, 0.05)
        assert out is StoreResult.CONFIDENT_AGREEMENT

    def test_invalid_label_rejected(self):
        with pytest.raises(ValueError):
            ReplayBuffer().maybe_accumulate(np.zeros(2), 0.5, 0.5)

    def test_fifo_eviction_drops_oldest(self):
        buf = ReplayBuffer(capacity=5, activation_threshold=2)
        rng = np.random.default_rng(2)
        cmds = []
        cmd = None
        for i in range(7):
            cmd = far_cmd(rng, 3, base=cmd, distance=30.0)
            cmds.append(cmd)
            assert buf.maybe_accumulate(cmd, float(i % 2), 0.5) \
                is StoreResult.STORED
        assert len(buf) == 5
        batch = buf.as_batch()
        np.testing.assert_array_equal(batch.inputs[0], cmds[2])
        np.testing.assert_array_equal(batch.inputs[-1], cmds[6])

    @given(st.lists(st.tuples(st.integers(0, 1),
                              st.floats(0.001, 0.999),
                              st.floats(0.0, 60.0)),
                    min_size=1, max_size=300))
    @settings(max_examples=60, deadline=None)
    def test_buffer_invariants_under_random_streams(self, stream):
        buf = ReplayBuffer(capacity=20, activation_threshold=5,
                           min_command_distance=20.0)
        rng = np.random.default_rng(4)
        cmd = np.zeros(3)
        stored = []
        for label, prob, dist in stream:
            direction = rng.normal(0.0, 1.0, 3)
            cmd = cmd + direction / np.linalg.norm(direction) * dist
            out = buf.maybe_accumulate(cmd, float(label), prob)
            disagree = ((label == 1 and prob < 0.9)
                        or (label == 0 and prob > 0.1))
            if out is StoreResult.STORED:
                stored.append(cmd.copy())
                assert disagree
            elif out is StoreResult.TOO_CLOSE:
                assert disagree
            assert len(buf) <= 20
        for a, b in zip(stored, stored[1:]):
            assert np.linalg.norm(b - a) > 20.0
        if stored:
            np.testing.assert_array_equal(buf.l_ref_pre, stored[-1])

    def test_dump_writes_one_record_per_entry(self, tmp_path):
        import json
        buf = ReplayBuffer()
        rng = np.random.default_rng(5)
        cmd = None
        for i in range(3):
            cmd = far_cmd(rng, 2, base=cmd, distance=40.0)
            buf.maybe_accumulate(cmd, float(i % 2), 0.5)
        path = tmp_path / "buffer.jsonl"
        buf.dump(path)
        rows = [json.loads(line) for line in path.read_text().splitlines()]
        assert len(rows) == 3
        assert rows[-1]["command"] == list(buf.l_ref_pre)
        assert rows[1]["label"] == 1.0


class TestOnlineUpdate:
    def _filled_buffer(self, n, m=4):
        buf = ReplayBuffer(capacity=100, activation_threshold=30)
        rng = np.random.default_rng(6)
        cmd = None
        for i in range(n):
            cmd = far_cmd(rng, m, base=cmd, distance=30.0)
            buf.maybe_accumulate(cmd, float(rng.integers(0, 2)), 0.5)
        return buf

    def test_below_threshold_refuses(self):
        buf = self._filled_buffer(29)
        with pytest.raises(ValueError):
            online_update(DangerNet(4, seed=0), buf)

    def test_at_threshold_runs_and_preserves_bn_stats(self):
        buf = self._filled_buffer(30)
        net = DangerNet(4, seed=0)
        stats = [(bn.run_mean.copy(), bn.run_var.copy()) for bn in net.bn]
        before = [p.copy() for p in net.parameters()]
        online_update(net, buf)
        assert any(np.any(p != b) for p, b in zip(net.parameters(), before))
        for bn, (mean, var) in zip(net.bn, stats):
            np.testing.assert_array_equal(bn.run_mean, mean)
            np.testing.assert_array_equal(bn.run_var, var)

    def test_oldest_entry_leaves_training_set(self):
        buf = self._filled_buffer(101)
        batch = buf.as_batch()
        assert len(batch) == 100


class TestInitialTraining:
    def test_smoke_on_small_budget(self, default_arm):
        cfg = InitialTrainConfig(n_samples=2000, batch_size=100, epochs=10,
                                 seed=2)
        net = DangerNet.for_arm(default_arm, seed=2)
        data = generate_initial_dataset(cfg, default_arm)
        run_initial_training(net, data, cfg)
        acc = np.mean((forward(net, data.inputs) > 0.5) == (data.labels == 1))
        assert acc > 0.8
