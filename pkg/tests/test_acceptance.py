"""End-to-end acceptance suite.

Each test prints one [PASS] line (visible with `pytest -s`); expensive
artifacts (trained nets, 300 s online sessions) are session fixtures
shared across criteria.  Runs the full pipeline at desk scale, so the
module takes several minutes.
"""

import dataclasses
import math
import time

import numpy as np
import pytest

from danarm.config import load_config
from danarm.experiments import (evaluate_agreement, fixed_end_pull,
                                run_ik_experiment,
                                run_modification_experiment,
                                run_online_experiment)
from danarm.network import (DangerNet, TrainBatch, forward, input_gradient,
                            load_weights, probability_loss, save_weights,
                            train_epochs, _sigmoid, bce_with_logits)
from danarm.plant import init_state, muscle_length_of, step
from danarm.safety import SafetyState, initial_safety_state, safety_step
from danarm.trainer import (InitialTrainConfig, ReplayBuffer, StoreResult,
                            generate_initial_dataset, run_initial_training)


def _pass(msg: str) -> None:
    print(f"\n[PASS] {msg}")


@pytest.fixture(scope="session")
def initial_net(lab_config):
    net = DangerNet.for_arm(lab_config.arm, seed=lab_config.initial_train.seed)
    data = generate_initial_dataset(lab_config.initial_train, lab_config.arm)
    run_initial_training(net, data, lab_config.initial_train)
    return net


@pytest.fixture(scope="session")
def online_sessions(lab_config, initial_net):
    """300 s online runs for seeds 0..2 plus per-checkpoint agreement."""
    sessions = {}
    for seed in (0, 1, 2):
        cfg = dataclasses.replace(lab_config.experiment, motion_seed=seed)
        net = load_weights(save_weights(initial_net))
        result = run_online_experiment(lab_config.arm, lab_config.safety,
                                       net, cfg)
        accuracies = {
            t_s: evaluate_agreement(load_weights(blob), lab_config.arm,
                                    lab_config.safety, cfg)
            for t_s, blob in sorted(result.checkpoints.items())
        }
        sessions[seed] = (result, accuracies)
    return sessions


@pytest.fixture(scope="session")
def zone_trained_net(lab_config):
    """Net taught the joint limits plus the first danger-zone box,
    by direct supervision; drives the IK acceptance experiment."""
    arm = lab_config.arm
    zone = arm.danger_zones[0]
    rng = np.random.default_rng(123)
    margin = math.radians(10.0)
    n = 14000
    poses = rng.uniform(arm.joint_lower - margin, arm.joint_upper + margin,
                        (n, arm.n_joints))
    # concentrate a third of the samples around the zone shell
    focus = rng.normal(0.0, 0.25, (n // 3, arm.n_joints)) + np.where(
        zone.half_width > 10.0, 0.0, zone.center)
    free = zone.half_width > 10.0
    focus[:, free] = rng.uniform((arm.joint_lower - margin)[free],
                                 (arm.joint_upper + margin)[free],
                                 (n // 3, int(free.sum())))
    poses[: n // 3] = focus
    out = ((np.any(poses < arm.joint_lower, axis=1))
           | (np.any(poses > arm.joint_upper, axis=1)))
    in_zone = np.all(np.abs(poses - zone.center) < zone.half_width, axis=1)
    labels = (out | in_zone).astype(float)
    cmds = muscle_length_of(poses, arm) + rng.normal(0.0, 3.0, (n, arm.n_muscles))
    net = DangerNet.for_arm(arm, seed=3)
    from danarm.network import Adam
    train_epochs(net, TrainBatch(cmds, labels), Adam(lr=0.01),
                 epochs=80, batch_size=100)
    return net


class TestCriterion1Gradients:
    def test_gradients_match_finite_differences(self):
        start = time.perf_counter()
        rng = np.random.default_rng(2024)
        m = 10
        checked_inputs = 0
        attempts = 0
        while checked_inputs < 50 and attempts < 400:
            attempts += 1
            net = DangerNet(m, seed=attempts)
            for p in net.parameters():
                p += rng.normal(0.0, 0.25, p.shape)
            for bn in net.bn:
                bn.run_mean = rng.normal(0.0, 0.4, bn.run_mean.shape)
                bn.run_var = np.abs(rng.normal(1.0, 0.2, bn.run_var.shape)) + 0.2
            x = rng.normal(0.0, 1.5, m)
            p = forward(net, x)
            if not 1e-6 < p < 1 - 1e-6:
                continue  # saturated head: numerically constant
            grad = input_gradient(net, x, probability_loss)
            h = 1e-4
            fd = np.empty(m)
            for i in range(m):
                xp, xm = x.copy(), x.copy()
                xp[i] += h
                xm[i] -= h
                fd[i] = (forward(net, xp) - forward(net, xm)) / (2 * h)
            rel = (np.linalg.norm(grad - fd)
                   / max(np.linalg.norm(fd), np.linalg.norm(grad), 1e-12))
            assert rel <= 1e-4, f"input gradient off by {rel}"
            checked_inputs += 1
        assert checked_inputs == 50

        for trial in range(50):
            net = DangerNet(6, seed=trial + 1000)
            for p in net.parameters():
                p += rng.normal(0.0, 0.15, p.shape)
            xb = rng.normal(0.0, 1.5, (8, 6))
            yb = rng.integers(0, 2, 8).astype(float)
            net.mode = "train"
            z3, cache = net._forward(xb, use_batch_stats=True)
            dz3 = ((_sigmoid(z3[:, 0]) - yb) / len(yb))[:, None]
            grads, _ = net._backward(dz3, cache)
            params = net.parameters()
            direction = [rng.normal(0.0, 1.0, p.shape) for p in params]
            analytic = sum(float(np.sum(g * d))
                           for g, d in zip(grads, direction))
            h = 1e-6
            saved = [p.copy() for p in params]
            for p, d in zip(params, direction):
                p += h * d
            zp, _ = net._forward(xb, use_batch_stats=True)
            for p, s, d in zip(params, saved, direction):
                p[...] = s - h * d
            zm, _ = net._forward(xb, use_batch_stats=True)
            for p, s in zip(params, saved):
                p[...] = s
            fd = (bce_with_logits(zp[:, 0], yb)
                  - bce_with_logits(zm[:, 0], yb)) / (2 * h)
            rel = abs(analytic - fd) / max(abs(fd), abs(analytic), 1e-10)
            assert rel <= 1e-4, f"weight gradient off by {rel}"
        elapsed = time.perf_counter() - start
        assert elapsed < 5.0
        _pass(f"criterion 1: 100 gradient checks vs central differences "
              f"<= 1e-4 relative ({elapsed:.2f} s)")


class TestCriterion2Safety:
    def test_worked_examples_and_fixed_end_pull(self):
        from danarm.safety import SafetyParams
        params = SafetyParams()
        s = safety_step(initial_safety_state(1), np.array([200.0]), params)
        assert s.delta_l[0] == 0.0 and s.label == 0.0
        s = safety_step(initial_safety_state(1), np.array([300.0]), params)
        assert s.delta_l[0] == pytest.approx(0.3, abs=1e-15)
        assert s.label == 1.0
        s = safety_step(SafetyState(np.array([0.3])), np.array([100.0]), params)
        assert s.delta_l[0] == pytest.approx(0.2, abs=1e-15)

        start = time.perf_counter()
        log = fixed_end_pull(contraction_mm=40.0, ramp_s=0.5,
                             duration_s=3.0, f_thre=100.0)
        elapsed = time.perf_counter() - start
        f = log.f[:, 0]
        peak = f.max()
        settle = f[int(2.0 / log.tick_s):]
        assert peak >= 150.0
        assert np.all((settle >= 90.0) & (settle <= 110.0))
        assert f.argmax() < int(2.0 / log.tick_s)
        assert elapsed < 1.0
        _pass(f"criterion 2: relaxation examples exact; fixed-end pull "
              f"peak {peak:.0f} N -> settle {settle[-1]:.0f} N "
              f"({elapsed:.2f} s)")


class TestCriterion3InitialTraining:
    def test_holdout_accuracy_and_confidence(self, lab_config, initial_net):
        start = time.perf_counter()
        holdout_cfg = InitialTrainConfig(
            **{**lab_config.initial_train.__dict__,
               "n_samples": 4000, "seed": 77})
        holdout = generate_initial_dataset(holdout_cfg, lab_config.arm)
        acc = np.mean((forward(initial_net, holdout.inputs) > 0.5)
                      == (holdout.labels == 1))
        assert acc >= 0.90

        arm = lab_config.arm
        rng = np.random.default_rng(7)
        span = arm.joint_upper - arm.joint_lower
        deep, out = [], []
        for _ in range(50):
            theta = rng.uniform(arm.joint_lower + 0.25 * span,
                                arm.joint_upper - 0.25 * span)
            deep.append(forward(initial_net, muscle_length_of(theta, arm)))
            theta = rng.uniform(arm.joint_lower, arm.joint_upper)
            j = rng.integers(0, arm.n_joints)
            off = math.radians(15.0)
            theta[j] = (arm.joint_upper[j] + off if rng.random() < 0.5
                        else arm.joint_lower[j] - off)
            out.append(forward(initial_net, muscle_length_of(theta, arm)))
        assert max(deep) < 0.1
        assert min(out) > 0.9
        elapsed = time.perf_counter() - start
        assert elapsed < 120.0
        _pass(f"criterion 3: held-out accuracy {acc:.3f} >= 0.90; "
              f"deep-in-range p<{max(deep):.3f}, limit+15deg p>{min(out):.3f}")


class TestCriterion4OnlineLearning:
    def test_agreement_curves_increase(self, online_sessions):
        for seed, (_, accuracies) in sorted(online_sessions.items()):
            times = sorted(accuracies)
            values = [accuracies[t] for t in times]
            violations = sum(1 for a, b in zip(values, values[1:]) if b < a)
            assert violations <= 1, (seed, values)
            assert values[-1] >= 0.65, (seed, values)
        curves = {s: [round(a, 4) for _, a in sorted(acc.items())]
                  for s, (_, acc) in online_sessions.items()}
        _pass(f"criterion 4: agreement curves increasing "
              f"(<=1 violation) and >=0.65 at 300 s: {curves}")


class TestCriterion5Modification:
    @pytest.mark.slow
    def test_danger_fraction_ratio(self, lab_config, online_sessions):
        net300 = load_weights(online_sessions[0][0].checkpoints[300.0])
        offs, ons = [], []
        for seed in range(5):
            cfg = dataclasses.replace(lab_config.experiment,
                                      motion_seed=100 + seed)
            log_off, log_on = run_modification_experiment(
                lab_config.arm, lab_config.safety, net300, cfg,
                lab_config.modifier)
            offs.append(log_off.danger_fraction())
            ons.append(log_on.danger_fraction())
            assert log_on.danger_fraction() < log_off.danger_fraction(), \
                (seed, ons[-1], offs[-1])
        pooled_ratio = sum(ons) / max(sum(offs), 1e-12)
        assert pooled_ratio <= 1.0 / 3.0, (ons, offs)
        _pass(f"criterion 5: danger fraction with modifier "
              f"{np.mean(ons):.3f} vs without {np.mean(offs):.3f} "
              f"(ratio {pooled_ratio:.2f} <= 1/3; 5/5 seeds ordered)")


class TestCriterion6PrioritizedIk:
    def test_engineered_target_near_zone(self, lab_config, zone_trained_net):
        start = time.perf_counter()
        arm = lab_config.arm.with_noise(0.0)
        safety = dataclasses.replace(lab_config.safety, f_thre=150.0)
        result = run_ik_experiment(arm, safety, zone_trained_net,
                                   d_avoid=lab_config.ik.d_avoid,
                                   p_trigger=lab_config.ik.p_trigger,
                                   max_outer=lab_config.ik.max_outer)
        probs = [r.p_predicted for r in result.ik.records]
        assert probs[0] > 0.9, probs
        assert result.ik.safe
        assert result.ik.p_predicted < 0.1, probs
        assert result.danger_ticks == 0
        elapsed = time.perf_counter() - start
        assert elapsed < 60.0
        _pass(f"criterion 6: first solve p={probs[0]:.2f} > 0.9, final "
              f"p={result.ik.p_predicted:.2f} < 0.1, execution danger "
              f"ticks 0 ({elapsed:.1f} s)")


class TestCriterion7Properties:
    def test_property_suites(self, pair_arm):
        start = time.perf_counter()
        # buffer FIFO and gating predicate
        buf = ReplayBuffer(capacity=10, activation_threshold=3)
        rng = np.random.default_rng(0)
        cmd = np.zeros(4)
        stored = []
        for i in range(200):
            cmd = cmd + rng.normal(0.0, 12.0, 4)
            label = float(rng.integers(0, 2))
            prob = float(rng.uniform(0.001, 0.999))
            out = buf.maybe_accumulate(cmd, label, prob)
            disagree = ((label == 1 and prob < 0.9)
                        or (label == 0 and prob > 0.1))
            assert (out is StoreResult.CONFIDENT_AGREEMENT) == (not disagree)
            if out is StoreResult.STORED:
                stored.append(cmd.copy())
            assert len(buf) <= 10
        assert all(np.linalg.norm(b - a) > 20.0
                   for a, b in zip(stored, stored[1:]))
        np.testing.assert_array_equal(buf.as_batch().inputs[-1], stored[-1])

        # modifier loss monotonicity via the zero-step guard
        from danarm.modifier import ModifierConfig, modify
        from danarm.network import forward as fwd
        net = DangerNet(4, seed=9)
        for p in net.parameters():
            p += rng.normal(0.0, 0.4, p.shape)
        mcfg = ModifierConfig(n_iters=8)
        for _ in range(30):
            goal = rng.normal(0.0, 3.0, 4)
            current = rng.normal(0.0, 3.0, 4)
            res = modify(net, goal, current, mcfg)
            if res.iterations:
                start_loss = (fwd(net, current)
                              + mcfg.distance_weight
                              * np.linalg.norm(goal - current))
                assert res.loss_final <= start_loss + 1e-12

        # safety rate limits and recovery to exactly zero
        from danarm.safety import SafetyParams
        params = SafetyParams()
        state = initial_safety_state(2)
        for _ in range(300):
            f = np.abs(rng.normal(150.0, 120.0, 2))
            nxt = safety_step(state, f, params)
            d = np.abs(f - params.f_thre)
            assert np.all(np.abs(nxt.delta_l - state.delta_l)
                          <= np.maximum(params.c_minus, params.c_plus) * d + 1e-12)
            state = nxt
        while state.label == 1.0:
            state = safety_step(state, np.zeros(2), params)
        assert np.all(state.delta_l == 0.0)

        # plant determinism and co-contraction monotonicity
        s1 = init_state(pair_arm, theta0=np.zeros(1))
        s2 = init_state(pair_arm, theta0=np.zeros(1))
        base = s1.l_measured.copy()
        prev_f = s1.f
        for delta in (2.0, 5.0, 9.0):
            a, b = s1, s2
            for _ in range(120):
                a = step(a, base - delta, pair_arm)
                b = step(b, base - delta, pair_arm)
            np.testing.assert_array_equal(a.f, b.f)
            np.testing.assert_array_equal(a.theta, b.theta)
            assert np.all(a.f >= prev_f - 1e-9)
            prev_f = a.f
        elapsed = time.perf_counter() - start
        assert elapsed < 60.0
        _pass(f"criterion 7: buffer/modifier/safety/plant property suites "
              f"({elapsed:.1f} s)")


class TestCriterion8RoundTrip:
    def test_save_load_preserves_forward_bitwise(self):
        rng = np.random.default_rng(31)
        net = DangerNet(10, seed=31)
        for p in net.parameters():
            p += rng.normal(0.0, 0.5, p.shape)
        for bn in net.bn:
            bn.run_mean = rng.normal(0.0, 0.5, bn.run_mean.shape)
            bn.run_var = np.abs(rng.normal(1.0, 0.3, bn.run_var.shape)) + 0.1
        clone = load_weights(save_weights(net))
        xs = rng.normal(0.0, 5.0, (100, 10))
        np.testing.assert_array_equal(forward(net, xs), forward(clone, xs))
        _pass("criterion 8: weight round trip preserves forward outputs "
              "bitwise on 100 random inputs")
