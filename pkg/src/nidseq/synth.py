"""Deterministic synthetic flow generator for desk-scale experiments.

Benign payloads are low-range random bytes that can never contain the
planted marker; malicious flows carry at least one packet whose payload
has a contiguous run of the pattern byte covering half the payload. The
label is therefore decidable from payload content alone, with per-packet
ambiguity controlled by plant_density.
"""

from __future__ import annotations

import numpy as np

from nidseq.capture import PacketRecord
from nidseq.flows import Flow, canonical_key, flow_id_for


def run_length(n_p: int) -> int:
    """Length of the planted run: half the payload, at least one byte."""
    return max(1, n_p // 2)


def contains_pattern(payload: bytes, pattern_byte: int, n_p: int) -> bool:
    """The labeling rule: a contiguous pattern_byte run of run_length(n_p)."""
    return bytes([pattern_byte]) * run_length(n_p) in payload


def _background(rng: np.random.Generator, n_p: int, pattern_byte: int) -> np.ndarray:
    """Random bytes in [0, 64) that never equal pattern_byte."""
    draw = rng.integers(0, 63, size=n_p)
    if pattern_byte < 63:
        draw = np.where(draw >= pattern_byte, draw + 1, draw)
    return draw.astype(np.uint8)


def generate_flows(
    n_flows: int,
    max_len: int = 16,
    pattern_byte: int = 170,
    seed: int = 0,
    n_p: int = 64,
    plant_density: float = 1.0,
    mean_gap: float = 0.5,
) -> list[Flow]:
    """Generate labeled flows; identical seeds give identical flows.

    plant_density is the per-packet probability that a malicious flow's
    packet carries the marker (at least one always does); 1.0 makes every
    malicious packet self-evident, small values force models to wait for
    evidence.
    """
    if n_flows < 1:
        raise ValueError(f"n_flows must be positive, got {n_flows}")
    if not 0 <= pattern_byte <= 255:
        raise ValueError(f"pattern_byte must be a byte value, got {pattern_byte}")
    if not 0.0 <= plant_density <= 1.0:
        raise ValueError(f"plant_density must be in [0, 1], got {plant_density}")
    rng = np.random.default_rng(seed)
    rlen = run_length(n_p)
    flows: list[Flow] = []
    for _ in range(n_flows):
        label = int(rng.random() < 0.5)
        length = int(rng.integers(2, max_len + 1)) if max_len >= 2 else 1
        src_ip = "10." + ".".join(str(int(v)) for v in rng.integers(0, 256, size=3))
        dst_ip = "10." + ".".join(str(int(v)) for v in rng.integers(0, 256, size=3))
        src_port = int(rng.integers(1024, 65536))
        dst_port = int(rng.integers(1024, 65536))
        proto = "TCP" if rng.random() < 0.5 else "UDP"
        t0 = float(rng.uniform(0.0, 86400.0))
        gaps = rng.exponential(mean_gap, size=length - 1)
        times = t0 + np.concatenate([[0.0], np.cumsum(gaps)])

        payloads = [_background(rng, n_p, pattern_byte) for _ in range(length)]
        if label == 1:
            planted = rng.random(length) < plant_density
            if not planted.any():
                planted[int(rng.integers(0, length))] = True
            for idx in np.flatnonzero(planted):
                start = int(rng.integers(0, n_p - rlen + 1))
                payloads[idx][start : start + rlen] = pattern_byte

        first = PacketRecord(
            ts=float(times[0]),
            src_ip=src_ip,
            dst_ip=dst_ip,
            src_port=src_port,
            dst_port=dst_port,
            proto=proto,
            payload=payloads[0].tobytes(),
        )
        fid = flow_id_for(canonical_key(first), first.ts)
        packets = tuple(
            PacketRecord(
                ts=float(times[i]),
                src_ip=src_ip,
                dst_ip=dst_ip,
                src_port=src_port,
                dst_port=dst_port,
                proto=proto,
                payload=payloads[i].tobytes(),
                flow_id=fid,
                label=label,
            )
            for i in range(length)
        )
        flows.append(Flow(flow_id=fid, packets=packets, label=label))
    return flows
