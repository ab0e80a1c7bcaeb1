"""Per-flow traffic features.

Eleven metadata-only features are computed for every TCP flow. Packet
velocity statistics are deliberately absent: they are reciprocals of the
inter-packet interval statistics and add no information.
"""

from __future__ import annotations

from dataclasses import astuple, dataclass, fields

import numpy as np

from .capture import SYN, TcpFlow

FEATURE_NAMES: tuple[str, ...] = (
    "sPort", "dPort", "mLen", "vLen", "mTime", "vTime",
    "mResp", "vResp", "nBytes", "nSYN", "nPackets",
)


def feature_schema() -> list[str]:
    """Canonical column order used by datasets, models and reports."""
    return list(FEATURE_NAMES)


@dataclass(frozen=True)
class FeatureVector:
    sPort: int
    dPort: int
    mLen: float
    vLen: float
    mTime: float
    vTime: float
    mResp: float
    vResp: float
    nBytes: int
    nSYN: int
    nPackets: int

    def as_tuple(self) -> tuple[float, ...]:
        return astuple(self)

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _mean_var(values: np.ndarray) -> tuple[float, float]:
    # population variance; empty sample sets map to zero
    if values.size == 0:
        return 0.0, 0.0
    mean = float(values.mean())
    var = float(np.mean((values - mean) ** 2))
    return mean, var


def response_latencies(flow: TcpFlow) -> list[int]:
    """Nanosecond delays between each packet the initiator receives and the
    next packet the initiator sends. Unanswered receipts are discarded."""
    out: list[int] = []
    pending: list[int] = []
    for pkt in flow.packets:
        if pkt.src == flow.initiator:
            out.extend(pkt.time_ns - t for t in pending)
            pending.clear()
        else:
            pending.append(pkt.time_ns)
    return out


def extract_features(flow: TcpFlow) -> FeatureVector:
    if not flow.packets:
        raise ValueError("cannot extract features from an empty flow")
    pkts = flow.packets
    lengths = np.array([p.payload_len for p in pkts], dtype=np.float64)
    times = np.array([p.time_ns for p in pkts], dtype=np.int64)
    gaps = np.diff(times).astype(np.float64) / 1e9
    resp = np.array(response_latencies(flow), dtype=np.float64) / 1e9

    m_len, v_len = _mean_var(lengths)
    m_time, v_time = _mean_var(gaps)
    m_resp, v_resp = _mean_var(resp)
    n_bytes = sum(p.payload_len for p in pkts)
    return FeatureVector(
        sPort=flow.initiator[1],
        dPort=flow.responder[1],
        mLen=m_len,
        vLen=v_len,
        mTime=m_time,
        vTime=v_time,
        mResp=m_resp,
        vResp=v_resp,
        nBytes=n_bytes,
        nSYN=sum(1 for p in pkts if p.has(SYN)),
        nPackets=len(pkts),
    )
