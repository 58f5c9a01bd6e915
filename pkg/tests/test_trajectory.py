"""Rewards, RTG algebra, policy simulation, balancing, window sampling."""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nidseq import trajectory as traj
from nidseq._validation import InvalidDecision, MissingClass, UnlabeledFlow
from nidseq.trajectory import (
    RewardConfig,
    WindowSampler,
    balance_oversample,
    build_dataset,
    build_observation,
    compute_rtg,
    encode_flow,
    read_dataset_jsonl,
    reward,
    sample_window,
    simulate_policy,
    split_dataset,
    write_dataset_jsonl,
)

from conftest import make_encoded_flow, make_record, make_trajectory, steps_equal, trajs_equal


class TestReward:
    def test_wait_ignores_label(self):
        cfg = RewardConfig(c_wait=-0.05)
        assert reward(2, 1, cfg) == -0.05
        assert reward(2, 0, cfg) == -0.05

    def test_correct_malicious_call(self):
        assert reward(1, 1, RewardConfig(c_tn=1.0)) == 1.0

    def test_missed_malicious_call(self):
        assert reward(0, 1, RewardConfig(c_fn=-1.0)) == -1.0

    def test_five_case_table_random_constants(self, rng):
        for _ in range(100):
            vals = rng.uniform(-3, 3, size=5)
            cfg = RewardConfig(
                c_tp=max(vals[0], vals[1]) + 0.1,
                c_fn=min(vals[0], vals[1]),
                c_tn=max(vals[2], vals[3]) + 0.1,
                c_fp=min(vals[2], vals[3]),
                c_wait=vals[4],
            )
            assert reward(0, 0, cfg) == cfg.c_tp
            assert reward(1, 1, cfg) == cfg.c_tn
            assert reward(1, 0, cfg) == cfg.c_fp
            assert reward(0, 1, cfg) == cfg.c_fn
            assert reward(2, 0, cfg) == cfg.c_wait
            assert reward(2, 1, cfg) == cfg.c_wait

    def test_invalid_decision(self):
        with pytest.raises(InvalidDecision):
            reward(3, 0, RewardConfig())

    def test_config_requires_correct_over_incorrect(self):
        with pytest.raises(ValueError):
            RewardConfig(c_tp=-1.0, c_fn=1.0)
        with pytest.raises(ValueError):
            RewardConfig(c_tn=0.0, c_fp=0.0)

    def test_config_requires_finite(self):
        with pytest.raises(ValueError):
            RewardConfig(c_wait=float("nan"))


class TestComputeRtg:
    def test_worked_example(self):
        assert compute_rtg([-0.1, -0.1, 1.0]) == [0.8, 0.9, 1.0]

    def test_single_element(self):
        assert compute_rtg([5.0]) == [5.0]

    def test_matches_quadratic_suffix_fold(self, rng):
        for _ in range(50):
            rewards = list(rng.normal(size=int(rng.integers(1, 21))))
            out = compute_rtg(rewards)
            for i in range(len(rewards)):
                acc = 0.0
                for k in range(len(rewards) - 1, i - 1, -1):
                    acc = rewards[k] + acc
                assert out[i] == acc

    def test_telescoping_bitwise(self, rng):
        rewards = list(rng.normal(size=30))
        out = compute_rtg(rewards)
        for i in range(29):
            assert out[i] == rewards[i] + out[i + 1]
        assert out[-1] == rewards[-1]

    @given(st.lists(st.integers(min_value=-2**20, max_value=2**20), min_size=1, max_size=40))
    @settings(max_examples=100, deadline=None)
    def test_dyadic_rewards_exact_any_order(self, ints):
        # Rewards that are multiples of 2^-6 make every summation order
        # exact, so the suffix sums must equal the Fraction oracle.
        rewards = [v * 2.0**-6 for v in ints]
        out = compute_rtg(rewards)
        for i in range(len(rewards)):
            exact = sum(Fraction(v) * Fraction(1, 64) for v in ints[i:])
            assert out[i] == float(exact)


class TestBuildObservation:
    def test_layout_and_scaling(self):
        rec = make_record(
            src_ip="255.0.128.1", dst_ip="0.255.64.2", src_port=65535, dst_port=0, proto="UDP"
        )
        z = np.asarray([0.5, -1.5])
        obs = build_observation(z, rec)
        assert obs.shape == (2 + 13,)
        np.testing.assert_array_equal(obs[:2], z)
        np.testing.assert_allclose(obs[2:6], [1.0, 0.0, 128 / 255, 1 / 255])
        np.testing.assert_allclose(obs[6:10], [0.0, 1.0, 64 / 255, 2 / 255])
        np.testing.assert_allclose(obs[10:12], [1.0, 0.0])
        np.testing.assert_array_equal(obs[12:15], [0.0, 1.0, 0.0])

    def test_proto_one_hot(self):
        z = np.zeros(1)
        for proto, idx in (("TCP", 0), ("UDP", 1), ("OTHER", 2)):
            obs = build_observation(z, make_record(proto=proto))
            one_hot = obs[-3:]
            assert one_hot[idx] == 1.0 and one_hot.sum() == 1.0

    def test_encode_flow_checks_embedding_count(self, rng):
        from nidseq.flows import group_flows

        recs = [make_record(ts=float(i), label=0) for i in range(3)]
        flow = group_flows(recs, gap_timeout=60.0)[0]
        with pytest.raises(ValueError):
            encode_flow(flow, [np.zeros(2)] * 2)
        enc = encode_flow(flow, [np.zeros(2)] * 3)
        assert enc.obs.shape == (3, 15)
        np.testing.assert_array_equal(enc.times, [0.0, 1.0, 2.0])


class TestSimulatePolicy:
    def test_unlabeled_flow_rejected(self, rng):
        flow = make_encoded_flow(rng, 4, label=None)
        with pytest.raises(UnlabeledFlow):
            simulate_policy(flow, "expert", RewardConfig(), seed=0)

    def test_unknown_policy_rejected(self, rng):
        with pytest.raises(ValueError):
            simulate_policy(make_encoded_flow(rng, 3), "oracle", RewardConfig(), seed=0)

    def test_deterministic_given_seed(self, rng):
        flow = make_encoded_flow(rng, 8, label=1)
        a = simulate_policy(flow, "random", RewardConfig(), seed=42)
        b = simulate_policy(flow, "random", RewardConfig(), seed=42)
        assert trajs_equal([a], [b])

    def test_expert_structure(self, rng):
        for n in (1, 2, 7, 10):
            flow = make_encoded_flow(rng, n, label=1)
            for seed in range(40):
                t = simulate_policy(flow, "expert", RewardConfig(), seed=seed)
                assert len(t.steps) <= math.ceil(n / 2)
                assert all(s.d == 2 for s in t.steps[:-1])
                assert t.steps[-1].d in (0, 1)

    def test_medium_can_use_whole_flow(self, rng):
        flow = make_encoded_flow(rng, 6, label=0)
        lengths = {
            len(simulate_policy(flow, "medium", RewardConfig(), seed=s).steps) for s in range(300)
        }
        assert max(lengths) == 6
        assert min(lengths) == 1

    def test_random_terminates_with_decision(self, rng):
        for seed in range(100):
            flow = make_encoded_flow(rng, int(rng.integers(1, 7)), label=int(seed % 2))
            t = simulate_policy(flow, "random", RewardConfig(), seed=seed)
            assert t.steps[-1].d in (0, 1)
            assert all(s.d == 2 for s in t.steps[:-1])

    def test_waits_are_trace_gaps_with_terminal_zero(self, rng):
        flow = make_encoded_flow(rng, 5, label=1)
        t = simulate_policy(flow, "medium", RewardConfig(), seed=11)
        n = len(t.steps)
        for i, step in enumerate(t.steps):
            # Steps run on the episode clock: seconds since the first packet.
            assert step.t == float(flow.times[i]) - float(flow.times[0])
            if i < n - 1:
                assert step.w == float(flow.times[i + 1] - flow.times[i])
        assert t.steps[-1].w == 0.0

    def test_rtg_telescoping_and_return_fold(self, rng):
        cfg = RewardConfig(c_tp=1.0, c_tn=1.0, c_fp=-1.0, c_fn=-1.0, c_wait=-0.0625)
        for seed in range(50):
            flow = make_encoded_flow(rng, 9, label=seed % 2)
            t = simulate_policy(flow, "random", cfg, seed=seed)
            for i in range(len(t.steps) - 1):
                assert t.steps[i].rtg == t.steps[i].r + t.steps[i + 1].rtg
            assert t.steps[-1].rtg == t.steps[-1].r
            # Dyadic constants make the independent fold exact.
            assert t.total_return == sum(s.r for s in t.steps)

    def test_expert_accuracy_monte_carlo(self, rng):
        hits = 0
        for i in range(2000):
            flow = make_encoded_flow(rng, 6, label=i % 2)
            t = simulate_policy(flow, "expert", RewardConfig(), seed=1000 + i)
            hits += t.steps[-1].d == t.label
        assert 0.85 <= hits / 2000 <= 0.95

    def test_medium_accuracy_monte_carlo(self, rng):
        hits = 0
        for i in range(2000):
            flow = make_encoded_flow(rng, 6, label=i % 2)
            t = simulate_policy(flow, "medium", RewardConfig(), seed=5000 + i)
            hits += t.steps[-1].d == t.label
        assert 0.44 <= hits / 2000 <= 0.56

    def test_random_first_step_decision_rate(self, rng):
        decided = 0
        for i in range(2000):
            flow = make_encoded_flow(rng, 4, label=0)
            t = simulate_policy(flow, "random", RewardConfig(), seed=9000 + i)
            decided += len(t.steps) == 1
        assert 0.61 <= decided / 2000 <= 0.72

    def test_build_dataset_derives_per_flow_seeds(self, rng):
        flows = [make_encoded_flow(rng, 5, label=i % 2, flow_id=f"f{i}") for i in range(20)]
        ds = build_dataset(flows, "expert", RewardConfig(), base_seed=7)
        assert ds.policy_tag == "expert"
        assert len(ds.trajectories) == 20
        again = build_dataset(flows, "expert", RewardConfig(), base_seed=7)
        assert trajs_equal(ds.trajectories, again.trajectories)
        shifted = build_dataset(flows, "expert", RewardConfig(), base_seed=8)
        assert not trajs_equal(ds.trajectories, shifted.trajectories)


class TestBalanceOversample:
    def test_small_example_reaches_ratio(self, rng):
        flows = [make_encoded_flow(rng, 2, label=0, flow_id=f"b{i}") for i in range(10)]
        flows += [make_encoded_flow(rng, 2, label=1, flow_id=f"m{i}") for i in range(2)]
        out = balance_oversample(flows, seed=0)
        n_mal = sum(1 for f in out if f.label == 1)
        assert n_mal >= 9
        assert sum(1 for f in out if f.label == 0) == 10

    def test_balanced_input_only_shuffled(self, rng):
        flows = [make_encoded_flow(rng, 2, label=i % 2, flow_id=f"f{i}") for i in range(10)]
        out = balance_oversample(flows, seed=1)
        assert sorted(f.flow_id for f in out) == sorted(f.flow_id for f in flows)

    def test_single_class_rejected(self, rng):
        flows = [make_encoded_flow(rng, 2, label=0) for _ in range(3)]
        with pytest.raises(MissingClass):
            balance_oversample(flows, seed=0)

    def test_ratio_property_random_sizes(self, rng):
        for _ in range(20):
            nb, nm = int(rng.integers(1, 40)), int(rng.integers(1, 40))
            flows = [make_encoded_flow(rng, 2, label=0, flow_id=f"b{i}") for i in range(nb)]
            flows += [make_encoded_flow(rng, 2, label=1, flow_id=f"m{i}") for i in range(nm)]
            out = balance_oversample(flows, seed=int(rng.integers(0, 1000)))
            n_mal = sum(1 for f in out if f.label == 1)
            assert n_mal >= math.ceil(0.9 * nb)
            # Originals all survive; only malicious flows are duplicated.
            assert sorted(
                f.flow_id for f in out if f.label == 0
            ) == sorted(f"b{i}" for i in range(nb))
            assert {f.flow_id for f in out if f.label == 1} == {f"m{i}" for i in range(nm)}


class TestSplitDataset:
    def test_80_20(self, rng):
        flows = [make_encoded_flow(rng, 2, label=i % 2, flow_id=f"f{i}") for i in range(100)]
        train, test = split_dataset(flows, 0.2, seed=0)
        assert (len(train), len(test)) == (80, 20)

    def test_same_seed_identical(self, rng):
        flows = [make_encoded_flow(rng, 2, label=i % 2, flow_id=f"f{i}") for i in range(30)]
        a = split_dataset(flows, 0.25, seed=3)
        b = split_dataset(flows, 0.25, seed=3)
        assert [f.flow_id for f in a[0]] == [f.flow_id for f in b[0]]
        assert [f.flow_id for f in a[1]] == [f.flow_id for f in b[1]]

    def test_fraction_zero_all_train(self, rng):
        flows = [make_encoded_flow(rng, 2, label=i % 2, flow_id=f"f{i}") for i in range(10)]
        train, test = split_dataset(flows, 0.0, seed=0)
        assert len(train) == 10 and test == []

    def test_partition_no_overlap(self, rng):
        flows = [make_encoded_flow(rng, 2, label=i % 3 == 0, flow_id=f"f{i}") for i in range(41)]
        train, test = split_dataset(flows, 0.3, seed=5)
        train_ids = {f.flow_id for f in train}
        test_ids = {f.flow_id for f in test}
        assert train_ids.isdisjoint(test_ids)
        assert train_ids | test_ids == {f.flow_id for f in flows}

    def test_stratified_within_one(self, rng):
        for seed in range(10):
            flows = [make_encoded_flow(rng, 2, label=0, flow_id=f"b{i}") for i in range(37)]
            flows += [make_encoded_flow(rng, 2, label=1, flow_id=f"m{i}") for i in range(23)]
            _, test = split_dataset(flows, 0.2, seed=seed)
            n_test_benign = sum(1 for f in test if f.label == 0)
            n_test_mal = sum(1 for f in test if f.label == 1)
            assert abs(n_test_benign - 37 * 0.2) <= 1
            assert abs(n_test_mal - 23 * 0.2) <= 1


class TestWindowSampling:
    def test_short_trajectory_has_no_truncated_start(self, rng):
        # K exceeds the length, so every draw is a full prefix of the episode.
        t = make_trajectory(rng, [2, 2, 1])
        for seed in range(20):
            window = sample_window([t], k=5, rng=seed)
            assert 1 <= len(window) <= 3
            assert steps_equal(window, t.steps[: len(window)])

    def test_k_one_gives_single_step(self, rng):
        t = make_trajectory(rng, [2, 2, 2, 0])
        for seed in range(10):
            assert len(sample_window([t], k=1, rng=seed)) == 1

    def test_windows_are_contiguous_prefix_truncations(self, rng):
        t = make_trajectory(rng, [2] * 7 + [1])
        gen = np.random.default_rng(0)
        sampler = WindowSampler([t], k=3)
        for _ in range(50):
            window = sampler.draw(gen)
            assert 1 <= len(window) <= 3
            end = next(i for i, s in enumerate(t.steps) if s is window[-1]) + 1
            assert steps_equal(window, t.steps[max(0, end - 3) : end])

    def test_draw_proportional_to_length(self, rng):
        long = make_trajectory(rng, [2] * 8 + [1], flow_id="long")
        short = make_trajectory(rng, [0], flow_id="short")
        sampler = WindowSampler([long, short], k=4)
        gen = np.random.default_rng(1)
        hits = sum(sampler.draw(gen)[-1] is not short.steps[0] for _ in range(20000))
        assert 0.88 <= hits / 20000 <= 0.92

    def test_weights_rescale_draws(self, rng):
        a = make_trajectory(rng, [2, 0], flow_id="a")
        b = make_trajectory(rng, [2, 1], flow_id="b")
        sampler = WindowSampler([a, b], k=2, weights=[0.0, 1.0])
        gen = np.random.default_rng(2)
        for _ in range(50):
            window = sampler.draw(gen)
            assert any(window[-1] is s for s in b.steps)

    def test_bad_weights_rejected(self, rng):
        t = make_trajectory(rng, [0])
        with pytest.raises(ValueError):
            WindowSampler([t], k=2, weights=[1.0, 2.0])
        with pytest.raises(ValueError):
            WindowSampler([t], k=2, weights=[-1.0])
        with pytest.raises(ValueError):
            WindowSampler([t], k=2, weights=[0.0])

    def test_empty_or_bad_k_rejected(self, rng):
        with pytest.raises(ValueError):
            WindowSampler([], k=2)
        with pytest.raises(ValueError):
            WindowSampler([make_trajectory(rng, [0])], k=0)


class TestDatasetJsonl:
    def test_round_trip_exact_and_byte_stable(self, tmp_path, rng):
        flows = [make_encoded_flow(rng, 4, label=i % 2, flow_id=f"f{i}") for i in range(6)]
        ds = build_dataset(flows, "medium", RewardConfig(), base_seed=3)
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_dataset_jsonl(str(p1), ds)
        loaded = read_dataset_jsonl(str(p1), reward_config=RewardConfig())
        assert loaded.policy_tag == "medium"
        assert trajs_equal(loaded.trajectories, ds.trajectories)
        write_dataset_jsonl(str(p2), loaded)
        assert p1.read_bytes() == p2.read_bytes()

    def test_mixed_policies_rejected(self, tmp_path, rng):
        flows = [make_encoded_flow(rng, 3, label=i % 2, flow_id=f"f{i}") for i in range(2)]
        a = build_dataset(flows[:1], "expert", RewardConfig(), base_seed=0)
        b = build_dataset(flows[1:], "random", RewardConfig(), base_seed=0)
        pa, pb = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_dataset_jsonl(str(pa), a)
        write_dataset_jsonl(str(pb), b)
        mixed = tmp_path / "mixed.jsonl"
        mixed.write_text(pa.read_text() + pb.read_text())
        with pytest.raises(ValueError):
            read_dataset_jsonl(str(mixed))
