"""Grouping packet records into bidirectional flows and attaching ground truth."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, replace

from nidseq.capture import PacketRecord, record_from_obj, record_to_obj


@dataclass(frozen=True, slots=True)
class Flow:
    """An ordered run of packets sharing one canonical connection identity."""

    flow_id: str
    packets: tuple[PacketRecord, ...]
    label: int | None

    @property
    def n_packets(self) -> int:
        return len(self.packets)

    @property
    def duration(self) -> float:
        """Last arrival minus first arrival, in seconds."""
        return self.packets[-1].ts - self.packets[0].ts


def canonical_key(rec: PacketRecord) -> tuple:
    """Direction-free connection key: endpoints sorted, protocol appended."""
    a = (rec.src_ip, rec.src_port)
    b = (rec.dst_ip, rec.dst_port)
    lo, hi = (a, b) if a <= b else (b, a)
    return (lo, hi, rec.proto)


def flow_id_for(key: tuple, first_ts: float) -> str:
    """Deterministic 64-bit id from the canonical key and first arrival."""
    (lo, hi, proto) = key
    text = f"{lo[0]}:{lo[1]}|{hi[0]}:{hi[1]}|{proto}|{first_ts!r}"
    return hashlib.blake2s(text.encode("utf-8"), digest_size=8).hexdigest()


def group_flows(records: list[PacketRecord], gap_timeout: float = 60.0) -> list[Flow]:
    """Partition records into bidirectional flows split on idle gaps.

    A gap strictly greater than gap_timeout between consecutive packets of
    the same key closes the flow and opens a new one. The result is
    independent of input order: records are first sorted on a total key
    (timestamp, then every field) so ties break identically every run.
    """
    ordered = sorted(
        records,
        key=lambda r: (r.ts, r.src_ip, r.dst_ip, r.src_port, r.dst_port, r.proto, r.payload),
    )
    open_runs: dict[tuple, list[PacketRecord]] = {}
    closed: list[list[PacketRecord]] = []
    for rec in ordered:
        key = canonical_key(rec)
        run = open_runs.get(key)
        if run is not None and rec.ts - run[-1].ts > gap_timeout:
            closed.append(run)
            run = None
        if run is None:
            run = []
            open_runs[key] = run
        run.append(rec)
    closed.extend(open_runs.values())

    flows = []
    for run in closed:
        key = canonical_key(run[0])
        fid = flow_id_for(key, run[0].ts)
        labels = {p.label for p in run}
        label = labels.pop() if len(labels) == 1 else None
        flows.append(
            Flow(
                flow_id=fid,
                packets=tuple(replace(p, flow_id=fid) for p in run),
                label=label,
            )
        )
    flows.sort(key=lambda f: (f.packets[0].ts, f.flow_id))
    return flows


def label_flows(flows: list[Flow], truth: dict[str, int]) -> tuple[list[Flow], int]:
    """Attach ground-truth labels; flows absent from the table are dropped.

    Returns (labeled flows, dropped count). The label is propagated onto
    every packet so records stay self-describing when re-serialized.
    """
    kept: list[Flow] = []
    dropped = 0
    for flow in flows:
        label = truth.get(flow.flow_id)
        if label is None:
            dropped += 1
            continue
        kept.append(
            Flow(
                flow_id=flow.flow_id,
                packets=tuple(replace(p, label=label) for p in flow.packets),
                label=label,
            )
        )
    return kept, dropped


def read_label_table(path: str) -> dict[str, int]:
    """Read the ground-truth CSV (header exactly "flow_id,label", labels 0/1)."""
    table: dict[str, int] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty label table") from None
        if header != ["flow_id", "label"]:
            raise ValueError(f"{path}: header must be 'flow_id,label', got {','.join(header)!r}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ValueError(f"{path}:{line_no}: expected 2 columns, got {len(row)}")
            fid, raw = row[0], row[1].strip()
            if raw not in ("0", "1"):
                raise ValueError(f"{path}:{line_no}: label must be 0 or 1, got {raw!r}")
            if fid in table:
                raise ValueError(f"{path}:{line_no}: duplicate flow_id {fid!r}")
            table[fid] = int(raw)
    return table


def flow_to_obj(flow: Flow) -> dict:
    return {
        "flow_id": flow.flow_id,
        "label": flow.label,
        "packets": [record_to_obj(p) for p in flow.packets],
    }


def flow_from_obj(obj: dict) -> Flow:
    label = obj.get("label")
    if label is not None:
        label = int(label)
    packets = tuple(record_from_obj(p) for p in obj["packets"])
    if not packets:
        raise ValueError("flow must contain at least one packet")
    return Flow(flow_id=str(obj["flow_id"]), packets=packets, label=label)


def write_flows_jsonl(path: str, flows: list[Flow]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for flow in flows:
            fh.write(json.dumps(flow_to_obj(flow), separators=(",", ":")) + "\n")


def read_flows_jsonl(path: str) -> list[Flow]:
    flows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                flows.append(flow_from_obj(json.loads(line)))
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{line_no}: bad flow ({exc})") from exc
    return flows
