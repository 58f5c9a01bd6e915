"""Classic libpcap parsing and per-packet feature extraction.

Scope is deliberately narrow: classic pcap files (both endiannesses),
Ethernet link layer, IPv4 with TCP/UDP decoded and everything else folded
into an OTHER bucket. pcapng, IPv6, VLAN tags and fragment reassembly are
rejected rather than half-supported.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Iterator

from nidseq._validation import (
    MalformedHeader,
    TruncatedRecord,
    UnknownMagic,
    UnsupportedLinkType,
)

# Label value meaning "no ground truth attached yet".
UNLABELED = None

_MAGIC_LE = b"\xd4\xc3\xb2\xa1"
_MAGIC_BE = b"\xa1\xb2\xc3\xd4"
_ETHERTYPE_IPV4 = 0x0800
_LINKTYPE_ETHERNET = 1


@dataclass(frozen=True, slots=True)
class RawPacket:
    """One capture record: arrival time plus the captured frame bytes."""

    ts: float
    caplen: int
    data: bytes


@dataclass(frozen=True, slots=True)
class PacketRecord:
    """A decoded packet with a fixed-length payload vector.

    payload is exactly n_p bytes (zero-padded or truncated); label is
    0, 1, or None while unlabeled; flow_id is empty until grouping.
    """

    ts: float
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    proto: str
    payload: bytes
    flow_id: str = ""
    label: int | None = UNLABELED


@dataclass(slots=True)
class IngestStats:
    """Counters accumulated while reading one capture."""

    packets_parsed: int = 0
    malformed_skipped: int = 0
    truncated_payloads: int = 0


def parse_capture(path: str) -> Iterator[RawPacket]:
    """Yield raw records from a classic pcap file in file order.

    Timestamps combine the seconds and microseconds fields using the
    endianness announced by the magic number.
    """
    with open(path, "rb") as fh:
        head = fh.read(24)
        if len(head) < 24:
            raise UnknownMagic(f"{path}: shorter than a capture global header")
        if head[:4] == _MAGIC_LE:
            endian = "<"
        elif head[:4] == _MAGIC_BE:
            endian = ">"
        else:
            raise UnknownMagic(f"{path}: magic {head[:4].hex()} is not classic pcap")
        network = struct.unpack(endian + "I", head[20:24])[0]
        if network != _LINKTYPE_ETHERNET:
            raise UnsupportedLinkType(f"{path}: link type {network}, only Ethernet (1) handled")
        rec_hdr = struct.Struct(endian + "IIII")
        offset = 24
        while True:
            hdr = fh.read(16)
            if not hdr:
                return
            if len(hdr) < 16:
                raise TruncatedRecord(f"{path}: record header cut short at offset {offset}")
            ts_sec, ts_usec, caplen, _orig_len = rec_hdr.unpack(hdr)
            data = fh.read(caplen)
            if len(data) < caplen:
                raise TruncatedRecord(
                    f"{path}: record at offset {offset} declares caplen {caplen}, "
                    f"only {len(data)} bytes remain"
                )
            yield RawPacket(ts=ts_sec + ts_usec * 1e-6, caplen=caplen, data=data)
            offset += 16 + caplen


def _decode_frame(pkt: RawPacket) -> tuple[str, str, int, int, str, bytes]:
    """Decode Ethernet/IPv4/transport headers, returning the 5-tuple and payload.

    Raises MalformedHeader whenever a length field disagrees with the bytes
    actually captured; callers skip and count such packets.
    """
    data = pkt.data
    if len(data) < 34:
        raise MalformedHeader("frame too short for Ethernet + IPv4 headers")
    ethertype = struct.unpack("!H", data[12:14])[0]
    if ethertype != _ETHERTYPE_IPV4:
        raise MalformedHeader(f"ethertype 0x{ethertype:04x} not IPv4 (VLAN/IPv6 unsupported)")
    ip = data[14:]
    version = ip[0] >> 4
    ihl = (ip[0] & 0x0F) * 4
    if version != 4 or ihl < 20:
        raise MalformedHeader(f"IPv4 version/IHL byte 0x{ip[0]:02x} invalid")
    total_len = struct.unpack("!H", ip[2:4])[0]
    if total_len < ihl or 14 + total_len > len(data):
        raise MalformedHeader(
            f"IP total length {total_len} inconsistent with captured {len(data)} bytes"
        )
    proto_num = ip[9]
    src_ip = ".".join(str(b) for b in ip[12:16])
    dst_ip = ".".join(str(b) for b in ip[16:20])
    body = ip[ihl:total_len]
    if proto_num == 6:
        if len(body) < 20:
            raise MalformedHeader("TCP header cut short")
        src_port, dst_port = struct.unpack("!HH", body[:4])
        thl = (body[12] >> 4) * 4
        if thl < 20 or thl > len(body):
            raise MalformedHeader(f"TCP data offset {thl} exceeds segment of {len(body)} bytes")
        return src_ip, dst_ip, src_port, dst_port, "TCP", body[thl:]
    if proto_num == 17:
        if len(body) < 8:
            raise MalformedHeader("UDP header cut short")
        src_port, dst_port = struct.unpack("!HH", body[:4])
        return src_ip, dst_ip, src_port, dst_port, "UDP", body[8:]
    return src_ip, dst_ip, 0, 0, "OTHER", body


def extract_features(pkt: RawPacket, n_p: int, stats: IngestStats | None = None) -> PacketRecord:
    """Turn a raw frame into a PacketRecord with an exactly-n_p-byte payload.

    Short payloads are right-padded with zeros; long ones are truncated and
    counted on `stats`. The record comes back unlabeled and ungrouped.
    """
    if n_p < 1:
        raise ValueError(f"n_p must be positive, got {n_p}")
    src_ip, dst_ip, src_port, dst_port, proto, payload = _decode_frame(pkt)
    if len(payload) > n_p:
        payload = payload[:n_p]
        if stats is not None:
            stats.truncated_payloads += 1
    elif len(payload) < n_p:
        payload = payload + b"\x00" * (n_p - len(payload))
    return PacketRecord(
        ts=pkt.ts,
        src_ip=src_ip,
        dst_ip=dst_ip,
        src_port=src_port,
        dst_port=dst_port,
        proto=proto,
        payload=payload,
    )


def ingest_capture(path: str, n_p: int) -> tuple[list[PacketRecord], IngestStats]:
    """Parse a capture file into records, skipping malformed packets."""
    stats = IngestStats()
    records: list[PacketRecord] = []
    for raw in parse_capture(path):
        stats.packets_parsed += 1
        try:
            records.append(extract_features(raw, n_p, stats))
        except MalformedHeader:
            stats.malformed_skipped += 1
    return records, stats


def record_to_obj(rec: PacketRecord) -> dict:
    """Canonical JSON object for one record; key order is fixed."""
    return {
        "ts": rec.ts,
        "src_ip": rec.src_ip,
        "dst_ip": rec.dst_ip,
        "src_port": rec.src_port,
        "dst_port": rec.dst_port,
        "proto": rec.proto,
        "payload": list(rec.payload),
        "flow_id": rec.flow_id,
        "label": rec.label,
    }


def record_from_obj(obj: dict) -> PacketRecord:
    label = obj.get("label", None)
    if label is not None:
        label = int(label)
        if label not in (0, 1):
            raise ValueError(f"label must be 0, 1 or null, got {label}")
    payload = bytes(obj["payload"])
    proto = obj["proto"]
    if proto not in ("TCP", "UDP", "OTHER"):
        raise ValueError(f"proto must be TCP/UDP/OTHER, got {proto!r}")
    return PacketRecord(
        ts=float(obj["ts"]),
        src_ip=str(obj["src_ip"]),
        dst_ip=str(obj["dst_ip"]),
        src_port=int(obj["src_port"]),
        dst_port=int(obj["dst_port"]),
        proto=proto,
        payload=payload,
        flow_id=str(obj.get("flow_id", "")),
        label=label,
    )


def write_records_jsonl(path: str, records: list[PacketRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(record_to_obj(rec), separators=(",", ":")) + "\n")


def read_records_jsonl(path: str) -> list[PacketRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(record_from_obj(json.loads(line)))
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{line_no}: bad record ({exc})") from exc
    return records
