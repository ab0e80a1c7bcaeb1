from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
import pytest

from botsift.capture import PacketRecord
from botsift.dataset import Dataset

DATA = Path(__file__).parent / "data"


def pkt(t: float, src, dst, flags=(), size: int = 0) -> PacketRecord:
    return PacketRecord.at(t, src, dst, flags, size)


def raw_ipv4_tcp_frame(src: bytes, dst: bytes, sport: int, dport: int, flags: int,
                       payload: int, tcp_hdr_len: int = 20) -> bytes:
    """Ethernet/IPv4/TCP frame packed by hand, independent of the package writer."""
    tcp = struct.pack("!HHIIBBHHH", sport, dport, 1, 0, (tcp_hdr_len // 4) << 4, flags,
                      1024, 0, 0) + b"\x01" * (tcp_hdr_len - 20) + b"p" * payload
    ip = struct.pack("!BBHHHBBH4s4s", 0x45, 0, 20 + len(tcp), 7, 0, 64, 6, 0, src, dst)
    return b"\xaa" * 6 + b"\xbb" * 6 + b"\x08\x00" + ip + tcp


def raw_ipv4_udp_frame(src: bytes, dst: bytes, payload: int) -> bytes:
    udp = struct.pack("!HHHH", 1000, 53, 8 + payload, 0) + b"u" * payload
    ip = struct.pack("!BBHHHBBH4s4s", 0x45, 0, 20 + len(udp), 7, 0, 64, 17, 0, src, dst)
    return b"\xaa" * 6 + b"\xbb" * 6 + b"\x08\x00" + ip + udp


def raw_pcap(records, *, magic=0xA1B2C3D4, endian="<", linktype=1) -> bytes:
    """records: (sec, frac, frame)"""
    out = struct.pack(endian + "IHHiIII", magic, 2, 4, 0, 0, 65535, linktype)
    for sec, frac, frame in records:
        out += struct.pack(endian + "IIII", sec, frac, len(frame), len(frame)) + frame
    return out


def make_dataset(X, labels, schema=None) -> Dataset:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    schema = schema or tuple(f"f{i}" for i in range(X.shape[1]))
    return Dataset(tuple(schema), X, tuple(labels))


def random_dataset(rng: np.random.Generator, n: int, d: int, n_classes: int,
                   levels: int | None = None) -> Dataset:
    """Random features; ``levels`` restricts values to a small integer grid
    so that ties and duplicate values occur."""
    if levels:
        X = rng.integers(0, levels, size=(n, d)).astype(float)
    else:
        X = rng.normal(size=(n, d))
    y = rng.integers(0, n_classes, size=n)
    return make_dataset(X, [f"c{v}" for v in y])


@pytest.fixture
def synthetic_pcap() -> Path:
    return DATA / "synthetic.pcap"
