"""Offline trajectory construction from labeled flows.

A behavior policy walks each flow packet by packet, choosing benign (0),
malicious (1) or wait (2); rewards follow the five-case table and
return-to-go values are exact suffix sums. The resulting step sequences
are what the sequence model and baselines train on.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from nidseq._validation import InvalidDecision, MissingClass, UnlabeledFlow
from nidseq.capture import PacketRecord
from nidseq.flows import Flow

DECISION_BENIGN = 0
DECISION_MALICIOUS = 1
DECISION_WAIT = 2

POLICIES = ("expert", "medium", "random")

# Observation layout: embedding, then 8 IP octets, 2 ports, 3 protocol flags.
OBS_EXTRA = 13
_PROTO_INDEX = {"TCP": 0, "UDP": 1, "OTHER": 2}


@dataclass(frozen=True)
class RewardConfig:
    """Per-decision reward constants.

    The c_tp/c_tn names follow the source convention where a correct
    benign call is the "true positive"; metric positives are defined
    separately at evaluation time and are unaffected by this naming.
    """

    c_tp: float = 1.0
    c_tn: float = 1.0
    c_fp: float = -1.0
    c_fn: float = -1.0
    c_wait: float = -0.05

    def __post_init__(self) -> None:
        for name in ("c_tp", "c_tn", "c_fp", "c_fn", "c_wait"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not (self.c_tp > self.c_fn and self.c_tn > self.c_fp):
            raise ValueError("correct decisions must outscore incorrect ones")


@dataclass(frozen=True)
class Step:
    """One inspection: time, return-to-go, observation, decision, wait, reward.

    t is the episode clock — seconds since the flow's first packet — so the
    model never sees where in the capture a flow happened, only how its own
    packets are spaced.
    """

    t: float
    rtg: float
    obs: np.ndarray
    d: int
    w: float
    r: float


@dataclass(frozen=True)
class Trajectory:
    flow_id: str
    label: int
    steps: tuple[Step, ...]

    @property
    def total_return(self) -> float:
        return self.steps[0].rtg


@dataclass
class OfflineDataset:
    trajectories: list[Trajectory]
    policy_tag: str
    reward_config: RewardConfig
    split: str = "train"


@dataclass(frozen=True)
class EncodedFlow:
    """A flow reduced to what the decision process sees: times and observations."""

    flow_id: str
    label: int | None
    times: np.ndarray
    obs: np.ndarray

    @property
    def n_packets(self) -> int:
        return len(self.times)

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])


def reward(d: int, label: int, cfg: RewardConfig) -> float:
    """Five-case reward: correct call +, wrong call -, wait flat."""
    if d == DECISION_WAIT:
        return cfg.c_wait
    if d == DECISION_BENIGN:
        return cfg.c_tp if label == 0 else cfg.c_fn
    if d == DECISION_MALICIOUS:
        return cfg.c_tn if label == 1 else cfg.c_fp
    raise InvalidDecision(f"decision must be 0, 1 or 2, got {d}")


def compute_rtg(rewards: list[float]) -> list[float]:
    """Suffix sums, right-folded so rtg[i] == rewards[i] + rtg[i+1] bitwise."""
    out = [0.0] * len(rewards)
    acc = 0.0
    for i in range(len(rewards) - 1, -1, -1):
        acc = rewards[i] + acc
        out[i] = acc
    return out


def build_observation(z: np.ndarray, rec: PacketRecord) -> np.ndarray:
    """Concatenate the payload embedding with normalized header features."""
    octets = [int(v) / 255.0 for v in rec.src_ip.split(".")] + [
        int(v) / 255.0 for v in rec.dst_ip.split(".")
    ]
    proto = [0.0, 0.0, 0.0]
    proto[_PROTO_INDEX[rec.proto]] = 1.0
    return np.concatenate(
        [
            np.asarray(z, dtype=np.float64),
            np.asarray(octets, dtype=np.float64),
            np.asarray([rec.src_port / 65535.0, rec.dst_port / 65535.0], dtype=np.float64),
            np.asarray(proto, dtype=np.float64),
        ]
    )


def encode_flow(flow: Flow, embeddings: list[np.ndarray]) -> EncodedFlow:
    """Pair a flow's packets with their embeddings into observation rows."""
    if len(embeddings) != flow.n_packets:
        raise ValueError(
            f"flow {flow.flow_id}: {flow.n_packets} packets but {len(embeddings)} embeddings"
        )
    obs = np.stack([build_observation(z, p) for z, p in zip(embeddings, flow.packets)])
    times = np.asarray([p.ts for p in flow.packets], dtype=np.float64)
    return EncodedFlow(flow_id=flow.flow_id, label=flow.label, times=times, obs=obs)


def _trace_waits(times: np.ndarray, terminal_index: int) -> list[float]:
    """Inter-arrival gaps for wait steps; the deciding step waits 0."""
    waits = [float(times[i + 1] - times[i]) for i in range(terminal_index - 1)]
    waits.append(0.0)
    return waits


def _assemble(flow: EncodedFlow, decisions: list[int], cfg: RewardConfig) -> Trajectory:
    terminal = len(decisions)
    rewards = [reward(d, flow.label, cfg) for d in decisions]
    rtgs = compute_rtg(rewards)
    waits = _trace_waits(flow.times, terminal)
    t_first = float(flow.times[0])
    steps = tuple(
        Step(
            t=float(flow.times[i]) - t_first,
            rtg=rtgs[i],
            obs=flow.obs[i],
            d=decisions[i],
            w=waits[i],
            r=rewards[i],
        )
        for i in range(terminal)
    )
    return Trajectory(flow_id=flow.flow_id, label=flow.label, steps=steps)


def simulate_policy(flow: EncodedFlow, policy: str, cfg: RewardConfig, seed: int) -> Trajectory:
    """Roll one behavior policy over a flow.

    expert: decides within the first half of the flow, correct 90% of the
    time. medium: decides anywhere in the flow, correct 50%. random: picks
    uniformly among all three actions each step, with wait masked at the
    final packet so every episode terminates.
    """
    if flow.label not in (0, 1):
        raise UnlabeledFlow(f"flow {flow.flow_id} has no ground-truth label")
    if policy not in POLICIES:
        raise ValueError(f"policy must be one of {POLICIES}, got {policy!r}")
    rng = np.random.default_rng(seed)
    n = flow.n_packets
    if policy == "random":
        decisions: list[int] = []
        for i in range(n):
            d = int(rng.integers(0, 3)) if i < n - 1 else int(rng.integers(0, 2))
            decisions.append(d)
            if d != DECISION_WAIT:
                break
        return _assemble(flow, decisions, cfg)
    if policy == "expert":
        horizon = math.ceil(n / 2)
        p_correct = 0.9
    else:
        horizon = n
        p_correct = 0.5
    terminal = int(rng.integers(1, horizon + 1))
    correct = bool(rng.random() < p_correct)
    call = flow.label if correct else 1 - flow.label
    decisions = [DECISION_WAIT] * (terminal - 1) + [call]
    return _assemble(flow, decisions, cfg)


def build_dataset(
    flows: list[EncodedFlow],
    policy: str,
    cfg: RewardConfig,
    base_seed: int,
    split: str = "train",
) -> OfflineDataset:
    """Simulate one policy over many flows with per-flow derived seeds."""
    trajectories = [
        simulate_policy(flow, policy, cfg, seed=base_seed ^ i) for i, flow in enumerate(flows)
    ]
    return OfflineDataset(
        trajectories=trajectories, policy_tag=policy, reward_config=cfg, split=split
    )


def balance_oversample(flows: list, seed: int, ratio: float = 0.9):
    """Duplicate malicious flows until their count reaches ratio x benign.

    Works on anything with a .label attribute; returns a seeded shuffle of
    the augmented list.
    """
    benign = [f for f in flows if f.label == 0]
    malicious = [f for f in flows if f.label == 1]
    if not benign or not malicious:
        raise MissingClass("oversampling needs at least one flow of each label")
    rng = np.random.default_rng(seed)
    out = list(flows)
    need = math.ceil(ratio * len(benign)) - len(malicious)
    if need > 0:
        picks = rng.integers(0, len(malicious), size=need)
        out.extend(malicious[int(i)] for i in picks)
    perm = rng.permutation(len(out))
    return [out[int(i)] for i in perm]


def split_dataset(flows: list, test_fraction: float, seed: int):
    """Stratified flow-level split; same seed gives the identical split."""
    if not 0.0 <= test_fraction <= 1.0:
        raise ValueError(f"test_fraction must be in [0, 1], got {test_fraction}")
    rng = np.random.default_rng(seed)
    by_label: dict[int, list] = {}
    for f in flows:
        by_label.setdefault(f.label, []).append(f)
    train: list = []
    test: list = []
    for label in sorted(by_label, key=lambda v: (v is None, v)):
        group = by_label[label]
        perm = rng.permutation(len(group))
        n_test = int(math.floor(test_fraction * len(group) + 0.5))
        for pos, idx in enumerate(perm):
            (test if pos < n_test else train).append(group[int(idx)])
    rng.shuffle(train)
    rng.shuffle(test)
    return train, test


class WindowSampler:
    """Draws length-<=K step windows, trajectories weighted by step count.

    An optional per-trajectory weight rescales the draw probability
    (weight x step count); end positions are uniform within the chosen
    trajectory, and windows are truncated at the episode start rather
    than padded.
    """

    def __init__(self, trajectories: list[Trajectory], k: int, weights=None):
        if k < 1:
            raise ValueError(f"K must be >= 1, got {k}")
        if not trajectories:
            raise ValueError("no trajectories to sample from")
        self.trajectories = trajectories
        self.k = k
        lengths = np.asarray([len(t.steps) for t in trajectories], dtype=np.float64)
        w = np.ones(len(trajectories)) if weights is None else np.asarray(weights, dtype=np.float64)
        if w.shape != lengths.shape or np.any(w < 0) or not np.any(w > 0):
            raise ValueError("weights must be non-negative, one per trajectory, not all zero")
        mass = w * lengths
        self._cum = np.cumsum(mass / mass.sum())

    def draw(self, rng: np.random.Generator) -> list[Step]:
        j = int(np.searchsorted(self._cum, rng.random(), side="right"))
        j = min(j, len(self.trajectories) - 1)
        steps = self.trajectories[j].steps
        end = int(rng.integers(1, len(steps) + 1))
        return list(steps[max(0, end - self.k) : end])


def sample_window(
    trajectories: list[Trajectory],
    k: int,
    rng: np.random.Generator | int,
    weights=None,
) -> list[Step]:
    """One window draw; see WindowSampler for the distribution."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    return WindowSampler(trajectories, k, weights).draw(rng)


def _step_to_obj(step: Step) -> dict:
    return {
        "t": step.t,
        "rtg": step.rtg,
        "obs": [float(v) for v in step.obs],
        "d": step.d,
        "w": step.w,
        "r": step.r,
    }


def write_dataset_jsonl(path: str, dataset: OfflineDataset) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for traj in dataset.trajectories:
            obj = {
                "flow_id": traj.flow_id,
                "label": traj.label,
                "policy": dataset.policy_tag,
                "steps": [_step_to_obj(s) for s in traj.steps],
            }
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def read_dataset_jsonl(
    path: str, reward_config: RewardConfig | None = None, split: str = "train"
) -> OfflineDataset:
    trajectories: list[Trajectory] = []
    policies: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                policies.add(obj["policy"])
                steps = tuple(
                    Step(
                        t=float(s["t"]),
                        rtg=float(s["rtg"]),
                        obs=np.asarray(s["obs"], dtype=np.float64),
                        d=int(s["d"]),
                        w=float(s["w"]),
                        r=float(s["r"]),
                    )
                    for s in obj["steps"]
                )
                if not steps:
                    raise ValueError("trajectory has no steps")
                trajectories.append(
                    Trajectory(flow_id=str(obj["flow_id"]), label=int(obj["label"]), steps=steps)
                )
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{line_no}: bad trajectory ({exc})") from exc
    if not trajectories:
        raise ValueError(f"{path}: empty dataset")
    if len(policies) != 1:
        raise ValueError(f"{path}: mixed policy tags {sorted(policies)}")
    return OfflineDataset(
        trajectories=trajectories,
        policy_tag=policies.pop(),
        reward_config=reward_config or RewardConfig(),
        split=split,
    )
