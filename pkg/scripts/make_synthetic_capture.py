#!/usr/bin/env python3
"""Regenerate tests/data/synthetic.pcap, a hand-built capture of eight TCP
flows plus two UDP packets.

Times are offsets from BASE (seconds). Flows, in start order:
  A   handshake only, no teardown
  B   handshake, request/response, FIN/FIN-ACK/ACK close
  C   fresh SYN on B's 4-tuple after the close
  D1  handshake + data, then an idle gap longer than 300 s ...
  E1  SMTP-like exchange ended by RST, two receipts answered by one send
  E2  lone ACK on E's 4-tuple after the RST
  F   IPv6 SYN / SYN-ACK
  D2  ... the same 4-tuple resuming, first packet from the server
"""

from __future__ import annotations

import argparse
from pathlib import Path

from botsift.capture import ACK, FIN, PSH, RST, SYN, PacketRecord, tcp_frame, udp_frame, write_pcap

BASE = 1_600_000_000
BASE_NS = BASE * 1_000_000_000

A_C, A_S = ("10.0.0.1", 40000), ("192.168.1.10", 80)
B_C, B_S = ("10.0.0.2", 40001), ("192.168.1.20", 443)
D_C, D_S = ("10.0.0.3", 40002), ("192.168.1.30", 8080)
E_C, E_S = ("10.0.0.4", 40003), ("192.168.1.40", 25)
F_C, F_S = ("fd00::1", 40004), ("fd00::2", 22)
DNS_C, DNS_S = ("10.0.0.9", 5353), ("192.168.1.53", 53)

# (offset seconds, src, dst, flags, payload bytes)
TCP_PACKETS = [
    (0.0, A_C, A_S, {SYN}, 0),
    (0.1, A_S, A_C, {SYN, ACK}, 0),
    (0.3, A_C, A_S, {ACK}, 0),

    (10.0, B_C, B_S, {SYN}, 0),
    (10.05, B_S, B_C, {SYN, ACK}, 0),
    (10.1, B_C, B_S, {ACK}, 0),
    (10.2, B_C, B_S, {PSH, ACK}, 100),
    (10.5, B_S, B_C, {PSH, ACK}, 300),
    (10.6, B_C, B_S, {ACK}, 0),
    (11.0, B_C, B_S, {FIN, ACK}, 0),
    (11.2, B_S, B_C, {FIN, ACK}, 0),
    (11.25, B_C, B_S, {ACK}, 0),

    (12.0, B_C, B_S, {SYN}, 0),

    (20.0, D_C, D_S, {SYN}, 0),
    (20.5, D_S, D_C, {SYN, ACK}, 0),
    (21.0, D_C, D_S, {ACK}, 0),
    (21.5, D_C, D_S, {PSH, ACK}, 50),

    (30.0, E_C, E_S, {SYN}, 0),
    (30.2, E_S, E_C, {SYN, ACK}, 0),
    (30.3, E_C, E_S, {ACK}, 0),
    (30.4, E_S, E_C, {PSH, ACK}, 120),
    (30.6, E_S, E_C, {PSH, ACK}, 80),
    (31.0, E_C, E_S, {PSH, ACK}, 40),
    (31.5, E_C, E_S, {RST}, 0),
    (31.6, E_S, E_C, {ACK}, 0),

    (50.0, F_C, F_S, {SYN}, 0),
    (50.5, F_S, F_C, {SYN, ACK}, 0),

    (400.0, D_S, D_C, {PSH, ACK}, 20),
    (400.25, D_C, D_S, {ACK}, 0),
    (401.0, D_S, D_C, {PSH, ACK}, 30),
    (401.5, D_C, D_S, {ACK}, 0),
    (402.0, D_C, D_S, {PSH, ACK}, 10),
]

UDP_PACKETS = [(5.0, DNS_C, DNS_S, 40), (5.01, DNS_S, DNS_C, 120)]

# SYN segments carry an MSS option so the TCP header is 24 bytes long
MSS_OPTION = b"\x02\x04\x05\xb4"


def build_records() -> list[tuple[int, bytes]]:
    records = []
    for t, src, dst, flags, size in TCP_PACKETS:
        pkt = PacketRecord(BASE_NS + round(t * 1e9), src[0], dst[0], src[1], dst[1],
                           frozenset(flags), size)
        records.append((pkt.time_ns, tcp_frame(pkt, MSS_OPTION if SYN in flags else b"")))
    for t, src, dst, size in UDP_PACKETS:
        records.append((BASE_NS + round(t * 1e9), udp_frame(src, dst, size)))
    records.sort(key=lambda r: r[0])
    return records


def main() -> None:
    here = Path(__file__).resolve().parent.parent
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--output", default=str(here / "tests" / "data" / "synthetic.pcap"))
    args = ap.parse_args()
    write_pcap(args.output, build_records())
    print(f"wrote {len(TCP_PACKETS)} TCP + {len(UDP_PACKETS)} UDP packets to {args.output}")


if __name__ == "__main__":
    main()
