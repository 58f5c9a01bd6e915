"""Replay of held-out flows against a policy and scoring of the outcomes.

Replay is return-conditioned: the policy is primed with a target
return-to-go which is decremented by each realized reward. Time advances
along the recorded trace; the model's wait estimates are logged but never
move the clock, since packet arrivals are fixed by the capture.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from nidseq._validation import DegenerateNormalization, UnlabeledFlow
from nidseq.baselines import bc_predict
from nidseq.trajectory import (
    DECISION_WAIT,
    EncodedFlow,
    RewardConfig,
    Step,
    Trajectory,
    reward,
    simulate_policy,
)
from nidseq.transformer import ModelConfig, predict_action


class DecisionPolicy(Protocol):
    """Anything that can decide at a pending step given completed history."""

    def predict_action(
        self, history: list[Step], t: float, rtg: float, obs: np.ndarray, mask_wait: bool
    ) -> tuple[int, float]: ...


class SequencePolicy:
    """Adapter exposing a trained sequence model as a DecisionPolicy."""

    def __init__(self, params: dict, cfg: ModelConfig):
        self.params = params
        self.cfg = cfg

    def predict_action(self, history, t, rtg, obs, mask_wait):
        return predict_action(self.params, self.cfg, history, t, rtg, obs, mask_wait)


class BCPolicy:
    """Behavior-cloning adapter: context-free, fixed wait estimate."""

    def __init__(self, params: dict, wait_estimate: float = 0.0):
        self.params = params
        self.wait_estimate = wait_estimate

    def predict_action(self, history, t, rtg, obs, mask_wait):
        return bc_predict(self.params, rtg, obs, mask_wait), self.wait_estimate


@dataclass(frozen=True)
class EpisodeResult:
    """Outcome of one replayed flow; wait_preds are diagnostics only.

    decision_time is on the episode clock (seconds since the flow's first
    packet), matching Step.t.
    """

    flow_id: str
    label: int
    decision: int
    decision_step: int
    decision_time: float
    episode_return: float
    ttr: float
    wait_preds: tuple[float, ...] = ()


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    mean_return: float
    normalized_reward: float
    mean_ttr: float
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def n_episodes(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def ttr_of(decision_time: float, t_first: float, duration: float) -> float:
    """Fraction of the flow's span elapsed at decision time; 0 for instant flows."""
    if duration <= 0.0:
        return 0.0
    return (decision_time - t_first) / duration


def replay_episode(
    policy: DecisionPolicy, flow: EncodedFlow, target_rtg: float, cfg: RewardConfig
) -> EpisodeResult:
    """Roll the policy over one flow until it commits to benign/malicious.

    The running return-to-go starts at target_rtg and drops by each
    realized reward; wait is masked at the final packet so the episode
    always terminates.
    """
    if flow.label not in (0, 1):
        raise UnlabeledFlow(f"flow {flow.flow_id} has no ground-truth label")
    n = flow.n_packets
    t_first = float(flow.times[0])
    history: list[Step] = []
    rtg = float(target_rtg)
    total = 0.0
    wait_preds: list[float] = []
    for i in range(n):
        t_i = float(flow.times[i]) - t_first  # episode clock, matching Step.t
        obs_i = flow.obs[i]
        mask_wait = i == n - 1
        d, w_hat = policy.predict_action(history, t_i, rtg, obs_i, mask_wait)
        if mask_wait and d == DECISION_WAIT:
            raise RuntimeError("policy ignored the wait mask at the final packet")
        wait_preds.append(float(w_hat))
        r = reward(d, flow.label, cfg)
        total += r
        if d != DECISION_WAIT:
            return EpisodeResult(
                flow_id=flow.flow_id,
                label=flow.label,
                decision=d,
                decision_step=i + 1,
                decision_time=t_i,
                episode_return=total,
                ttr=ttr_of(t_i, 0.0, flow.duration),
                wait_preds=tuple(wait_preds),
            )
        w_real = float(flow.times[i + 1] - flow.times[i])
        history.append(Step(t=t_i, rtg=rtg, obs=obs_i, d=d, w=w_real, r=r))
        rtg = rtg - r
    raise AssertionError("unreachable: wait is masked at the final packet")


def episode_from_trajectory(traj: Trajectory, flow: EncodedFlow) -> EpisodeResult:
    """View a simulated trajectory as an episode outcome (no model involved)."""
    last = traj.steps[-1]
    return EpisodeResult(
        flow_id=traj.flow_id,
        label=traj.label,
        decision=last.d,
        decision_step=len(traj.steps),
        decision_time=last.t,
        episode_return=traj.total_return,
        ttr=ttr_of(last.t, 0.0, flow.duration),
    )


def confusion(pairs: list[tuple[int, int]]) -> tuple[int, int, int, int]:
    """(tp, fp, fn, tn) with malicious (1) as the positive class."""
    tp = sum(1 for y, p in pairs if y == 1 and p == 1)
    fp = sum(1 for y, p in pairs if y == 0 and p == 1)
    fn = sum(1 for y, p in pairs if y == 1 and p == 0)
    tn = sum(1 for y, p in pairs if y == 0 and p == 0)
    return tp, fp, fn, tn


def _prf(tp: int, fp: int, fn: int, tn: int) -> tuple[float, float, float, float]:
    total = tp + fp + fn + tn
    accuracy = (tp + tn) / total if total else 0.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return accuracy, precision, recall, f1


def compute_metrics(
    results: list[EpisodeResult], expert_return: float, random_return: float
) -> MetricsReport:
    """Flow-level confusion metrics plus normalized mean return and TTR."""
    if not results:
        raise ValueError("no episodes to score")
    if expert_return == random_return:
        raise DegenerateNormalization(
            f"expert and random reference returns coincide at {expert_return}"
        )
    tp, fp, fn, tn = confusion([(r.label, r.decision) for r in results])
    accuracy, precision, recall, f1 = _prf(tp, fp, fn, tn)
    mean_return = float(np.mean([r.episode_return for r in results]))
    normalized = 100.0 * (mean_return - random_return) / (expert_return - random_return)
    mean_ttr = float(np.mean([r.ttr for r in results]))
    return MetricsReport(
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        mean_return=mean_return,
        normalized_reward=normalized,
        mean_ttr=mean_ttr,
        tp=tp,
        fp=fp,
        fn=fn,
        tn=tn,
    )


def packet_metrics(y_true, y_pred) -> dict:
    """Classification metrics for the per-packet baseline (no reward/TTR)."""
    y_true = [int(v) for v in y_true]
    y_pred = [int(v) for v in y_pred]
    if len(y_true) != len(y_pred) or not y_true:
        raise ValueError("label/prediction lists must be equal-length and non-empty")
    tp, fp, fn, tn = confusion(list(zip(y_true, y_pred)))
    accuracy, precision, recall, f1 = _prf(tp, fp, fn, tn)
    return {
        "accuracy": accuracy,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "mean_return": None,
        "normalized_reward": None,
        "mean_ttr": None,
        "counts": {"tp": tp, "fp": fp, "fn": fn, "tn": tn},
    }


def reference_returns(
    train_trajectories: list[Trajectory],
    test_flows: list[EncodedFlow],
    cfg: RewardConfig,
    seed: int,
    n_replicates: int = 8,
) -> dict[str, float]:
    """Expert/random mean returns on the test flows, and the training max.

    The max training return is the replay conditioning target; expert and
    random references anchor the normalized reward scale. Replicates use
    derived seeds so the estimate is stable and reproducible.
    """
    if not train_trajectories:
        raise ValueError("empty training set")
    if not test_flows:
        raise ValueError("empty test set")
    max_return = max(t.total_return for t in train_trajectories)
    sums = {"expert": 0.0, "random": 0.0}
    for rep in range(n_replicates):
        base = seed + 1_000_003 * (rep + 1)
        for i, flow in enumerate(test_flows):
            for tag in ("expert", "random"):
                traj = simulate_policy(flow, tag, cfg, seed=(base + (0 if tag == "expert" else 1)) ^ (2 * i))
                sums[tag] += traj.total_return
    n = n_replicates * len(test_flows)
    return {
        "expert_return": sums["expert"] / n,
        "random_return": sums["random"] / n,
        "max_return": max_return,
    }


def metrics_to_obj(report: MetricsReport | dict, dataset: str, model: str) -> dict:
    """Uniform JSON shape for both flow-level and packet-level reports."""
    if isinstance(report, MetricsReport):
        body = {
            "accuracy": report.accuracy,
            "precision": report.precision,
            "recall": report.recall,
            "f1": report.f1,
            "mean_return": report.mean_return,
            "normalized_reward": report.normalized_reward,
            "mean_ttr": report.mean_ttr,
            "counts": {"tp": report.tp, "fp": report.fp, "fn": report.fn, "tn": report.tn},
        }
    else:
        body = dict(report)
    body["dataset"] = dataset
    body["model"] = model
    return body


_MODEL_ORDER = {"dt": 0, "bc": 1, "dnn": 2}
_COLUMNS = ("Dataset", "Model", "Accuracy(%)", "Precision", "F1-Score", "Recall", "Reward", "TTR")


def _fmt(value, scale: float = 1.0, digits: int = 2) -> str:
    if value is None:
        return "-"
    return f"{value * scale:.{digits}f}"


def render_table(rows: list[dict]) -> str:
    """Aligned plain-text table over metric objects; deterministic output."""
    ordered = sorted(rows, key=lambda r: (r["dataset"], _MODEL_ORDER.get(r["model"], 99), r["model"]))
    body = []
    for r in ordered:
        body.append(
            (
                r["dataset"],
                r["model"],
                _fmt(r["accuracy"], 100.0),
                _fmt(r["precision"]),
                _fmt(r["f1"]),
                _fmt(r["recall"]),
                _fmt(r["normalized_reward"]),
                _fmt(r["mean_ttr"]),
            )
        )
    widths = [
        max(len(_COLUMNS[c]), *(len(row[c]) for row in body)) if body else len(_COLUMNS[c])
        for c in range(len(_COLUMNS))
    ]
    def line(cells):
        return "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(cells)).rstrip()
    out = [line(_COLUMNS), line(tuple("-" * w for w in widths))]
    out.extend(line(row) for row in body)
    return "\n".join(out) + "\n"


def render_svg(rows: list[dict]) -> str:
    """Minimal grouped bar chart (accuracy / normalized reward / TTR)."""
    ordered = sorted(rows, key=lambda r: (r["dataset"], _MODEL_ORDER.get(r["model"], 99), r["model"]))
    panels = (
        ("Accuracy (%)", lambda r: None if r["accuracy"] is None else r["accuracy"] * 100.0),
        ("Normalized reward", lambda r: r["normalized_reward"]),
        ("TTR", lambda r: None if r["mean_ttr"] is None else r["mean_ttr"] * 100.0),
    )
    bar_w, gap, panel_pad, label_h = 28, 8, 40, 34
    panel_w = panel_pad + len(ordered) * (bar_w + gap) + panel_pad
    width = panel_w * len(panels)
    height = 240
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="monospace" font-size="10">'
    ]
    colors = {"dt": "#4878cf", "bc": "#ee854a", "dnn": "#6acc65"}
    for pi, (title, getter) in enumerate(panels):
        x0 = pi * panel_w
        values = [getter(r) for r in ordered]
        finite = [v for v in values if v is not None]
        vmax = max(100.0, *(abs(v) for v in finite)) if finite else 100.0
        parts.append(f'<text x="{x0 + panel_pad}" y="16">{title}</text>')
        base_y = height - label_h
        parts.append(
            f'<line x1="{x0 + panel_pad}" y1="{base_y}" x2="{x0 + panel_w - panel_pad}" '
            f'y2="{base_y}" stroke="#888"/>'
        )
        for bi, (r, v) in enumerate(zip(ordered, values)):
            bx = x0 + panel_pad + bi * (bar_w + gap)
            tag = f'{r["dataset"]}/{r["model"]}'
            if v is None:
                parts.append(f'<text x="{bx}" y="{base_y - 4}">n/a</text>')
            else:
                h = abs(v) / vmax * (height - label_h - 30)
                by = base_y - h if v >= 0 else base_y
                parts.append(
                    f'<rect x="{bx}" y="{by:.2f}" width="{bar_w}" height="{h:.2f}" '
                    f'fill="{colors.get(r["model"], "#999")}"/>'
                )
                parts.append(f'<text x="{bx}" y="{by - 3:.2f}">{v:.1f}</text>')
            parts.append(
                f'<text x="{bx}" y="{base_y + 12}" transform="rotate(35 {bx} {base_y + 12})">'
                f"{tag}</text>"
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_episodes_jsonl(path: str, results: list[EpisodeResult]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in results:
            obj = {
                "flow_id": r.flow_id,
                "label": r.label,
                "decision": r.decision,
                "decision_step": r.decision_step,
                "decision_time": r.decision_time,
                "episode_return": r.episode_return,
                "ttr": r.ttr,
                "wait_preds": list(r.wait_preds),
            }
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def write_metrics_json(path: str, obj: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_metrics_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    for key in ("dataset", "model", "accuracy"):
        if key not in obj:
            raise ValueError(f"{path}: metrics object missing key {key!r}")
    return obj
