"""RFC-1071 checksum against an independently written reference."""

import struct

import numpy as np

from advpkt.inet import checksum16, tcp_checksum, verify_checksum16


def reference_checksum(data: bytes) -> int:
    """Straight-line reference: 32-bit accumulate, fold once at the end."""
    total = 0
    for i in range(0, len(data) - 1, 2):
        total += (data[i] << 8) | data[i + 1]
    if len(data) % 2:
        total += data[-1] << 8
    while total > 0xFFFF:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def test_all_zero_header_is_ffff():
    assert checksum16(b"\x00" * 20) == 0xFFFF


def test_known_words():
    # 0x0001 + 0xF203 + 0xF4F5 + 0xF6F7 folds to 0xDDF2; complement 0x220D
    assert checksum16(bytes.fromhex("0001f203f4f5f6f7")) == 0x220D


def test_odd_length_pads_with_zero():
    assert checksum16(b"\xff") == checksum16(b"\xff\x00")


def test_self_verification_identity():
    rng = np.random.default_rng(1)
    for _ in range(200):
        data = bytearray(rng.integers(0, 256, size=int(rng.integers(4, 64)),
                                      dtype=np.uint8))
        if len(data) % 2:
            data.append(0)
        data[2:4] = b"\x00\x00"
        struct.pack_into("!H", data, 2, checksum16(bytes(data)))
        assert verify_checksum16(bytes(data))


def test_matches_reference_on_random_buffers():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        data = bytes(rng.integers(0, 256, size=int(rng.integers(0, 120)),
                                  dtype=np.uint8))
        assert checksum16(data) == reference_checksum(data)


def test_tcp_checksum_includes_pseudo_header():
    seg = bytes.fromhex("115c00500000000100000000500220000000" + "0000")
    src, dst = bytes([10, 0, 0, 5]), bytes([10, 0, 0, 9])
    got = tcp_checksum(src, dst, seg)
    pseudo = src + dst + struct.pack("!BBH", 0, 6, len(seg))
    assert got == reference_checksum(pseudo + seg)
    # swapping addresses changes the sum through the pseudo-header only
    assert tcp_checksum(dst, src, seg) == got  # addition commutes
    assert tcp_checksum(src, bytes([10, 0, 0, 8]), seg) != got
