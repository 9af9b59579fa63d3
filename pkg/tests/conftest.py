"""Shared fixtures: hand-built packet bytes, pcap builders, stub models."""

import struct

import numpy as np
import pytest

from advpkt.packet import (TCP_FLAG_ACK, TCP_FLAG_PSH, TCP_FLAG_SYN,
                           build_tcp_packet, mss_option, parse_frame,
                           wscale_option)

# One 60-byte TCP SYN frame assembled by hand from the field layouts:
#   eth   dst 00:11:22:33:44:55, src 66:77:88:99:aa:bb, type 0x0800
#   ip    ihl 5, len 40, id 0x1234, no frag, ttl 64, proto 6,
#         checksum 0x548f (ones'-complement sum of the 9 remaining words
#         is 0xab70), 10.0.0.5 -> 10.0.0.9
#   tcp   4444 -> 80, seq 1, doff 5, SYN, window 8192,
#         checksum 0x6a28 (pseudo-header sum 0x95d7), urgent 0
#   pad   6 zero bytes of Ethernet padding up to the 60-byte minimum
SYN_FIXTURE_HEX = (
    "001122334455" "66778899aabb" "0800"
    "4500" "0028" "1234" "0000" "40" "06" "548f" "0a000005" "0a000009"
    "115c" "0050" "00000001" "00000000" "50" "02" "2000" "6a28" "0000"
    "000000000000"
)
SYN_FIXTURE = bytes.fromhex(SYN_FIXTURE_HEX)


@pytest.fixture
def syn_frame() -> bytes:
    return SYN_FIXTURE


@pytest.fixture
def syn_packet():
    return parse_frame(SYN_FIXTURE, ts_sec=100, ts_usec=0,
                       orig_len=len(SYN_FIXTURE))


PCAP_GLOBAL = struct.pack(">IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 65535, 1)


def pcap_bytes(frames, *, endian=">", magic=0xA1B2C3D4, network=1,
               ts=(100, 0)) -> bytes:
    """Classic pcap blob built by hand, independent of the writer."""
    out = struct.pack(endian + "IHHiIII", magic, 2, 4, 0, 0, 65535, network)
    for i, frame in enumerate(frames):
        out += struct.pack(endian + "IIII", ts[0] + i, ts[1], len(frame),
                           len(frame))
        out += frame
    return out


def udp_frame() -> bytes:
    """Minimal Ethernet/IPv4/UDP frame (protocol 17)."""
    eth = bytes.fromhex("001122334455" "66778899aabb" "0800")
    ip = bytearray(bytes.fromhex(
        "4500" "001c" "0001" "0000" "40" "11" "0000" "0a000005" "0a000009"))
    from advpkt.inet import checksum16
    struct.pack_into("!H", ip, 10, checksum16(bytes(ip)))
    udp = bytes.fromhex("115c" "0050" "0008" "0000")
    return eth + bytes(ip) + udp


_FLAG_CHOICES = (TCP_FLAG_SYN, TCP_FLAG_SYN | TCP_FLAG_ACK, TCP_FLAG_ACK,
                 TCP_FLAG_PSH | TCP_FLAG_ACK, TCP_FLAG_ACK | 0x01)

_OPTION_CHOICES = (
    b"",
    mss_option(1460),
    mss_option(1400) + wscale_option(7),
    wscale_option(3),
    mss_option(536) + b"\x01\x01\x01\x00",  # NOPs + EOL padding
)


def random_packet(rng: np.random.Generator):
    """Valid TCP/IPv4 packet with randomized fields for property tests."""
    flags = _FLAG_CHOICES[rng.integers(len(_FLAG_CHOICES))]
    options = _OPTION_CHOICES[rng.integers(len(_OPTION_CHOICES))]
    payload = bytes(rng.integers(0, 256, size=int(rng.integers(0, 400)),
                                 dtype=np.uint8))
    return build_tcp_packet(
        f"10.{rng.integers(256)}.{rng.integers(256)}.{rng.integers(1, 255)}",
        f"192.168.{rng.integers(256)}.{rng.integers(1, 255)}",
        int(rng.integers(1024, 65536)), int(rng.integers(1, 1024)),
        seq=int(rng.integers(0, 2 ** 32)), ack=int(rng.integers(0, 2 ** 32)),
        flags=int(flags), window=int(rng.integers(1, 65536)),
        ttl=int(rng.integers(1, 256)), ident=int(rng.integers(0, 65536)),
        frag=int(rng.choice([0, 0x4000, 0x2000])), options=options,
        payload=payload, ts=float(rng.integers(1, 10 ** 6)))


class ThresholdModel:
    """Stub classifier: malicious iff feature value exceeds a cutoff."""

    kind = "STUB"

    def __init__(self, feature: int, cutoff: float, above_is_malicious=True):
        self.feature = feature
        self.cutoff = cutoff
        self.above = above_is_malicious

    def predict_proba(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        above = x[:, self.feature] > self.cutoff
        return np.where(above == self.above, 1.0, 0.0)

    def predict(self, x):
        return (self.predict_proba(x) >= 0.5).astype(np.int64)


class ConstantModel:
    """Stub classifier with a fixed output label."""

    kind = "STUB"

    def __init__(self, label: int):
        self.label = label

    def predict_proba(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return np.full(len(x), float(self.label))

    def predict(self, x):
        return (self.predict_proba(x) >= 0.5).astype(np.int64)
