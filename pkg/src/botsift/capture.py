"""Packet-capture ingestion and bidirectional TCP flow assembly.

Only classic libpcap files are read (both byte orders, micro- and
nanosecond magic). Non-TCP traffic is skipped at ingestion.
"""

from __future__ import annotations

import ipaddress
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

SYN, ACK, FIN, RST, PSH, URG = "SYN", "ACK", "FIN", "RST", "PSH", "URG"

_FLAG_BITS = {FIN: 0x01, SYN: 0x02, RST: 0x04, PSH: 0x08, ACK: 0x10, URG: 0x20}

MAGIC_US = 0xA1B2C3D4
MAGIC_NS = 0xA1B23C4D

LINKTYPE_NULL = 0
LINKTYPE_ETHERNET = 1
LINKTYPE_RAW = 101
LINKTYPE_LINUX_SLL = 113
_LINKTYPE_RAW_ALIASES = (12, 14, LINKTYPE_RAW)

_ETH_IPV4 = 0x0800
_ETH_IPV6 = 0x86DD
_ETH_VLAN = (0x8100, 0x88A8, 0x9100)
_IPV6_EXT_HEADERS = (0, 43, 60)
_PROTO_TCP = 6
_PROTO_UDP = 17


class CaptureError(Exception):
    """Malformed or unsupported capture file."""


class ConfigError(ValueError):
    """Invalid labelling rule or assembly configuration."""


@dataclass(frozen=True)
class PacketRecord:
    """One TCP packet. Time is kept as integer nanoseconds so that
    differences between timestamps are exact."""

    time_ns: int
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    tcp_flags: frozenset[str] = frozenset()
    payload_len: int = 0

    def __post_init__(self) -> None:
        if self.time_ns < 0:
            raise ValueError(f"negative timestamp: {self.time_ns}")
        for port in (self.src_port, self.dst_port):
            if not 0 <= port <= 65535:
                raise ValueError(f"port out of range: {port}")
        if self.payload_len < 0:
            raise ValueError(f"negative payload length: {self.payload_len}")

    @classmethod
    def at(cls, seconds: float, src: tuple[str, int], dst: tuple[str, int],
           flags: Iterable[str] = (), payload_len: int = 0) -> PacketRecord:
        """Convenience constructor taking seconds and (ip, port) endpoints."""
        return cls(round(seconds * 1_000_000_000), src[0], dst[0], src[1], dst[1],
                   frozenset(flags), payload_len)

    @property
    def timestamp(self) -> float:
        return self.time_ns / 1e9

    @property
    def src(self) -> tuple[str, int]:
        return (self.src_ip, self.src_port)

    @property
    def dst(self) -> tuple[str, int]:
        return (self.dst_ip, self.dst_port)

    def has(self, flag: str) -> bool:
        return flag in self.tcp_flags

    def swapped(self) -> PacketRecord:
        return PacketRecord(self.time_ns, self.dst_ip, self.src_ip, self.dst_port,
                            self.src_port, self.tcp_flags, self.payload_len)


def _endpoint_order(ep: tuple[str, int]) -> tuple[int, bytes, int]:
    addr = ipaddress.ip_address(ep[0])
    return (addr.version, addr.packed, ep[1])


@dataclass(frozen=True)
class FlowKey:
    """Unordered endpoint pair; ``a`` sorts before ``b`` on (ip, port)."""

    a: tuple[str, int]
    b: tuple[str, int]

    @classmethod
    def of(cls, pkt: PacketRecord) -> FlowKey:
        x, y = pkt.src, pkt.dst
        if _endpoint_order(y) < _endpoint_order(x):
            x, y = y, x
        return cls(x, y)


@dataclass(frozen=True)
class TcpFlow:
    key: FlowKey
    packets: tuple[PacketRecord, ...]
    initiator: tuple[str, int]

    def __post_init__(self) -> None:
        if not self.packets:
            raise ValueError("a flow needs at least one packet")

    @property
    def responder(self) -> tuple[str, int]:
        return self.key.b if self.initiator == self.key.a else self.key.a

    @property
    def start_time(self) -> float:
        return self.packets[0].timestamp

    @property
    def end_time(self) -> float:
        return self.packets[-1].timestamp

    def __len__(self) -> int:
        return len(self.packets)


# ---------------------------------------------------------------------------
# pcap reading
# ---------------------------------------------------------------------------

def _decode_flags(bits: int) -> frozenset[str]:
    return frozenset(name for name, bit in _FLAG_BITS.items() if bits & bit)


def _parse_tcp(seg: bytes, payload_total: int, src_ip: str, dst_ip: str,
               time_ns: int) -> PacketRecord | None:
    if len(seg) < 14:
        return None
    sport, dport = struct.unpack_from("!HH", seg, 0)
    data_offset = (seg[12] >> 4) * 4
    if data_offset < 20:
        return None
    return PacketRecord(time_ns, src_ip, dst_ip, sport, dport,
                        _decode_flags(seg[13]), max(payload_total - data_offset, 0))


def _parse_ipv4(pkt: bytes, time_ns: int) -> PacketRecord | None:
    if len(pkt) < 20 or pkt[0] >> 4 != 4:
        return None
    ihl = (pkt[0] & 0x0F) * 4
    total_len = struct.unpack_from("!H", pkt, 2)[0]
    frag = struct.unpack_from("!H", pkt, 6)[0]
    if pkt[9] != _PROTO_TCP or frag & 0x1FFF or ihl < 20:
        return None
    src = str(ipaddress.IPv4Address(pkt[12:16]))
    dst = str(ipaddress.IPv4Address(pkt[16:20]))
    return _parse_tcp(pkt[ihl:], total_len - ihl, src, dst, time_ns)


def _parse_ipv6(pkt: bytes, time_ns: int) -> PacketRecord | None:
    if len(pkt) < 40 or pkt[0] >> 4 != 6:
        return None
    remaining = struct.unpack_from("!H", pkt, 4)[0]
    nxt = pkt[6]
    off = 40
    while nxt in _IPV6_EXT_HEADERS:
        if len(pkt) < off + 8:
            return None
        ext_len = (pkt[off + 1] + 1) * 8
        nxt = pkt[off]
        off += ext_len
        remaining -= ext_len
    if nxt != _PROTO_TCP:
        return None
    src = str(ipaddress.IPv6Address(pkt[8:24]))
    dst = str(ipaddress.IPv6Address(pkt[24:40]))
    return _parse_tcp(pkt[off:], remaining, src, dst, time_ns)


def _parse_ip(pkt: bytes, time_ns: int) -> PacketRecord | None:
    if not pkt:
        return None
    version = pkt[0] >> 4
    if version == 4:
        return _parse_ipv4(pkt, time_ns)
    if version == 6:
        return _parse_ipv6(pkt, time_ns)
    return None


def _parse_frame(frame: bytes, linktype: int, time_ns: int) -> PacketRecord | None:
    if linktype == LINKTYPE_ETHERNET:
        if len(frame) < 14:
            return None
        ethertype = struct.unpack_from("!H", frame, 12)[0]
        off = 14
        while ethertype in _ETH_VLAN and len(frame) >= off + 4:
            ethertype = struct.unpack_from("!H", frame, off + 2)[0]
            off += 4
        if ethertype not in (_ETH_IPV4, _ETH_IPV6):
            return None
        return _parse_ip(frame[off:], time_ns)
    if linktype in _LINKTYPE_RAW_ALIASES:
        return _parse_ip(frame, time_ns)
    if linktype == LINKTYPE_NULL:
        return _parse_ip(frame[4:], time_ns)
    if linktype == LINKTYPE_LINUX_SLL:
        return _parse_ip(frame[16:], time_ns)
    raise CaptureError(f"unsupported link type {linktype}")


def iter_capture(path: str | Path) -> Iterator[PacketRecord]:
    """Yield the TCP packets of a classic pcap file in file order."""
    data = Path(path).read_bytes()
    if len(data) < 24:
        raise CaptureError(f"{path}: file shorter than the 24-byte pcap header")
    magic_le = struct.unpack_from("<I", data, 0)[0]
    if magic_le in (MAGIC_US, MAGIC_NS):
        endian = "<"
    elif struct.unpack_from(">I", data, 0)[0] in (MAGIC_US, MAGIC_NS):
        endian = ">"
    else:
        raise CaptureError(f"{path}: unknown magic number 0x{magic_le:08x}")
    magic = struct.unpack_from(endian + "I", data, 0)[0]
    frac_ns = 1 if magic == MAGIC_NS else 1000
    linktype = struct.unpack_from(endian + "I", data, 20)[0] & 0x0FFFFFFF
    rec_hdr = struct.Struct(endian + "IIII")

    off = 24
    while off < len(data):
        if off + 16 > len(data):
            raise CaptureError(f"{path}: truncated record header at byte offset {off}")
        sec, frac, caplen, _ = rec_hdr.unpack_from(data, off)
        start = off + 16
        if start + caplen > len(data):
            raise CaptureError(f"{path}: truncated packet record at byte offset {off}")
        pkt = _parse_frame(data[start:start + caplen], linktype,
                           sec * 1_000_000_000 + frac * frac_ns)
        if pkt is not None:
            yield pkt
        off = start + caplen


def read_capture(path: str | Path) -> list[PacketRecord]:
    return list(iter_capture(path))


# ---------------------------------------------------------------------------
# pcap writing (synthetic captures for tests and experiments)
# ---------------------------------------------------------------------------

def _ip_header(src: str, dst: str, proto: int, l4: bytes) -> bytes:
    s, d = ipaddress.ip_address(src), ipaddress.ip_address(dst)
    if s.version == 4:
        return struct.pack("!BBHHHBBH4s4s", 0x45, 0, 20 + len(l4), 0, 0x4000, 64,
                           proto, 0, s.packed, d.packed)
    return struct.pack("!IHBB16s16s", 6 << 28, len(l4), proto, 64, s.packed, d.packed)


def _ethernet(ip: bytes, version: int) -> bytes:
    ethertype = _ETH_IPV4 if version == 4 else _ETH_IPV6
    return b"\x02\x00\x00\x00\x00\x02" + b"\x02\x00\x00\x00\x00\x01" + struct.pack("!H", ethertype) + ip


def tcp_frame(pkt: PacketRecord, options: bytes = b"") -> bytes:
    """Ethernet frame carrying ``pkt`` (payload filled with zeros)."""
    if len(options) % 4:
        raise ValueError("TCP options must be padded to a multiple of 4 bytes")
    bits = sum(_FLAG_BITS[f] for f in pkt.tcp_flags)
    hdr = struct.pack("!HHIIBBHHH", pkt.src_port, pkt.dst_port, 0, 0,
                      ((20 + len(options)) // 4) << 4, bits, 65535, 0, 0) + options
    l4 = hdr + bytes(pkt.payload_len)
    return _ethernet(_ip_header(pkt.src_ip, pkt.dst_ip, _PROTO_TCP, l4) + l4,
                     ipaddress.ip_address(pkt.src_ip).version)


def udp_frame(src: tuple[str, int], dst: tuple[str, int], payload_len: int = 0) -> bytes:
    l4 = struct.pack("!HHHH", src[1], dst[1], 8 + payload_len, 0) + bytes(payload_len)
    return _ethernet(_ip_header(src[0], dst[0], _PROTO_UDP, l4) + l4,
                     ipaddress.ip_address(src[0]).version)


def write_pcap(path: str | Path, records: Iterable[tuple[int, bytes]], *,
               nanosecond: bool = False, big_endian: bool = False,
               linktype: int = LINKTYPE_ETHERNET) -> None:
    """Write (time_ns, frame) records to a classic pcap file."""
    e = ">" if big_endian else "<"
    out = bytearray(struct.pack(e + "IHHiIII", MAGIC_NS if nanosecond else MAGIC_US,
                                2, 4, 0, 0, 262144, linktype))
    for time_ns, frame in records:
        sec, rem = divmod(time_ns, 1_000_000_000)
        frac = rem if nanosecond else rem // 1000
        out += struct.pack(e + "IIII", sec, frac, len(frame), len(frame)) + frame
    Path(path).write_bytes(bytes(out))


# ---------------------------------------------------------------------------
# flow assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AssemblyConfig:
    idle_timeout: float = 300.0
    terminate_on_rst: bool = True

    def __post_init__(self) -> None:
        if not self.idle_timeout > 0:
            raise ConfigError(f"idle_timeout must be positive, got {self.idle_timeout}")


@dataclass
class _OpenFlow:
    key: FlowKey
    first_index: int
    packets: list[PacketRecord] = field(default_factory=list)
    fin_from: set = field(default_factory=set)
    fin_acked: set = field(default_factory=set)

    def add(self, pkt: PacketRecord) -> bool:
        """Append ``pkt``; True once both FINs have been acknowledged."""
        self.packets.append(pkt)
        if pkt.has(ACK):
            # an ACK acknowledges any FIN the other side sent earlier
            peer = pkt.dst
            if peer in self.fin_from:
                self.fin_acked.add(peer)
        if pkt.has(FIN):
            self.fin_from.add(pkt.src)
        return len(self.fin_acked) == 2

    def close(self) -> TcpFlow:
        initiator = self.packets[0].src
        for p in self.packets:
            if p.has(SYN) and not p.has(ACK):
                initiator = p.src
                break
        return TcpFlow(self.key, tuple(self.packets), initiator)


def assemble_flows(packets: Sequence[PacketRecord],
                   config: AssemblyConfig | None = None) -> list[TcpFlow]:
    """Group packets into bidirectional TCP flows, ordered by first packet."""
    config = config or AssemblyConfig()
    timeout_ns = round(config.idle_timeout * 1_000_000_000)
    if any(packets[i].time_ns > packets[i + 1].time_ns for i in range(len(packets) - 1)):
        packets = sorted(packets, key=lambda p: p.time_ns)

    active: dict[FlowKey, _OpenFlow] = {}
    done: list[_OpenFlow] = []
    for i, pkt in enumerate(packets):
        key = FlowKey.of(pkt)
        flow = active.get(key)
        if flow is not None and pkt.time_ns - flow.packets[-1].time_ns > timeout_ns:
            done.append(active.pop(key))
            flow = None
        if flow is None:
            flow = active[key] = _OpenFlow(key, i)
        closed = flow.add(pkt)
        if closed or (config.terminate_on_rst and pkt.has(RST)):
            done.append(active.pop(key))
    done.extend(active.values())
    done.sort(key=lambda f: f.first_index)
    return [f.close() for f in done]


# ---------------------------------------------------------------------------
# labelling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LabelRule:
    network: ipaddress.IPv4Network | ipaddress.IPv6Network
    label: str

    def matches(self, ip: str) -> bool:
        addr = ipaddress.ip_address(ip)
        return addr.version == self.network.version and addr in self.network


def parse_rule(text: str, label: str) -> LabelRule:
    try:
        net = ipaddress.ip_network(text, strict=False)
    except ValueError as exc:
        raise ConfigError(f"bad address in label rule {text!r} -> {label!r}: {exc}") from None
    return LabelRule(net, label)


def read_label_rules(path: str | Path) -> list[LabelRule]:
    """Parse a rules file: one ``<ip-or-CIDR> <label>`` per line, ``#`` comments."""
    rules = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ConfigError(f"{path}:{lineno}: expected '<ip-or-CIDR> <label>', got {raw!r}")
        rules.append(parse_rule(*parts))
    if not rules:
        raise ConfigError(f"{path}: no label rules")
    return rules


def label_flows(flows: Iterable[TcpFlow], rules: Sequence[LabelRule | tuple[str, str]],
                default_label: str | None = None) -> list[tuple[TcpFlow, str]]:
    """Label flows by the first rule matching the initiator, else the responder.

    Flows matching no rule get ``default_label``, or are dropped when it is None.
    """
    if not rules:
        raise ConfigError("at least one label rule is required")
    parsed = [r if isinstance(r, LabelRule) else parse_rule(*r) for r in rules]
    out = []
    for flow in flows:
        label = None
        for ip in (flow.initiator[0], flow.responder[0]):
            label = next((r.label for r in parsed if r.matches(ip)), None)
            if label is not None:
                break
        if label is None:
            label = default_label
        if label is not None:
            out.append((flow, label))
    return out
