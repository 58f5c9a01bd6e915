"""Shared helpers: finite-difference oracles, frame builders, tiny fixtures."""

from __future__ import annotations

import struct

import numpy as np
import pytest

from nidseq.capture import PacketRecord
from nidseq.trajectory import EncodedFlow, RewardConfig, Step, Trajectory, compute_rtg, reward


def rel_grad_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Per-tensor relative error between gradient estimates (norm-wise)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(n), 1e-12)
    return float(np.linalg.norm(a - n) / denom)


def fd_grad(fn, arr: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function w.r.t. one array.

    Mutates arr entry-wise and restores it, so fn may close over arr.
    """
    grad = np.zeros_like(arr, dtype=np.float64)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.shape[0]):
        orig = flat[i]
        flat[i] = orig + eps
        hi = fn()
        flat[i] = orig - eps
        lo = fn()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * eps)
    return grad


def step_equal(a: Step, b: Step) -> bool:
    """Field-exact Step comparison (dataclass == chokes on array fields)."""
    return (
        a.t == b.t
        and a.rtg == b.rtg
        and a.d == b.d
        and a.w == b.w
        and a.r == b.r
        and np.array_equal(a.obs, b.obs)
    )


def steps_equal(xs, ys) -> bool:
    return len(xs) == len(ys) and all(step_equal(a, b) for a, b in zip(xs, ys))


def traj_equal(a: Trajectory, b: Trajectory) -> bool:
    return a.flow_id == b.flow_id and a.label == b.label and steps_equal(a.steps, b.steps)


def trajs_equal(xs, ys) -> bool:
    return len(xs) == len(ys) and all(traj_equal(a, b) for a, b in zip(xs, ys))


def make_record(
    ts: float = 0.0,
    src_ip: str = "10.0.0.1",
    dst_ip: str = "10.0.0.2",
    src_port: int = 1000,
    dst_port: int = 2000,
    proto: str = "TCP",
    payload: bytes = b"\x00\x01",
    flow_id: str = "",
    label=None,
) -> PacketRecord:
    return PacketRecord(ts, src_ip, dst_ip, src_port, dst_port, proto, payload, flow_id, label)


def make_encoded_flow(
    rng: np.random.Generator,
    n_packets: int,
    obs_dim: int = 3,
    label: int = 0,
    flow_id: str = "f",
    t0: float = 0.0,
) -> EncodedFlow:
    times = t0 + np.concatenate([[0.0], np.cumsum(rng.uniform(0.1, 1.0, size=n_packets - 1))])
    obs = rng.normal(size=(n_packets, obs_dim))
    return EncodedFlow(flow_id=flow_id, label=label, times=times, obs=obs)


def make_trajectory(
    rng: np.random.Generator,
    decisions: list[int],
    label: int = 0,
    obs_dim: int = 3,
    cfg: RewardConfig | None = None,
    flow_id: str = "f",
) -> Trajectory:
    cfg = cfg or RewardConfig()
    rewards = [reward(d, label, cfg) for d in decisions]
    rtgs = compute_rtg(rewards)
    times = np.concatenate([[0.0], np.cumsum(rng.uniform(0.1, 1.0, size=len(decisions) - 1))])
    steps = tuple(
        Step(
            t=float(times[i]),
            rtg=rtgs[i],
            obs=rng.normal(size=obs_dim),
            d=decisions[i],
            w=float(times[i + 1] - times[i]) if i + 1 < len(decisions) else 0.0,
            r=rewards[i],
        )
        for i in range(len(decisions))
    )
    return Trajectory(flow_id=flow_id, label=label, steps=steps)


# ---------------------------------------------------------------------------
# Hand-built capture frames (Ethernet / IPv4 / transport).

def ethernet_ipv4_frame(
    proto_num: int,
    transport: bytes,
    src_ip: bytes = b"\xc0\xa8\x00\x01",
    dst_ip: bytes = b"\x0a\x00\x00\x02",
    total_len: int | None = None,
    version_ihl: int = 0x45,
) -> bytes:
    eth = b"\xaa" * 6 + b"\xbb" * 6 + b"\x08\x00"
    if total_len is None:
        total_len = 20 + len(transport)
    ip = (
        bytes([version_ihl, 0])
        + struct.pack("!H", total_len)
        + b"\x00\x00\x00\x00"
        + bytes([64, proto_num])
        + b"\x00\x00"
        + src_ip
        + dst_ip
    )
    return eth + ip + transport


def udp_segment(src_port: int, dst_port: int, payload: bytes) -> bytes:
    return struct.pack("!HHHH", src_port, dst_port, 8 + len(payload), 0) + payload


def tcp_segment(src_port: int, dst_port: int, payload: bytes, data_offset: int = 5) -> bytes:
    header = struct.pack("!HHIIBBHHH", src_port, dst_port, 0, 0, data_offset << 4, 0, 0, 0, 0)
    return header + b"\x00" * (data_offset * 4 - 20) + payload


def pcap_bytes(frames: list[tuple[float, bytes]], endian: str = "<", network: int = 1) -> bytes:
    magic = 0xA1B2C3D4
    out = struct.pack(endian + "IHHiIII", magic, 2, 4, 0, 0, 65535, network)
    for ts, data in frames:
        sec = int(ts)
        usec = int(round((ts - sec) * 1e6))
        out += struct.pack(endian + "IIII", sec, usec, len(data), len(data)) + data
    return out


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
