"""Internet checksum (RFC 1071) and the TCP pseudo-header sum.

Everything that mutates a packet funnels through these two functions, so
they are kept tiny and free of packet-object dependencies.
"""

import struct


def checksum16(data: bytes) -> int:
    """Ones' complement of the ones'-complement 16-bit word sum of ``data``.

    Odd-length input is padded with a trailing zero byte. The checksum
    field itself must be zeroed (or excluded) by the caller before
    computing; verifying a stored checksum is done by summing over the
    buffer *with* the stored value and comparing the result to 0.
    """
    if len(data) % 2:
        data = data + b"\x00"
    total = 0
    for (word,) in struct.iter_unpack("!H", data):
        total += word
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def tcp_checksum(src_ip: bytes, dst_ip: bytes, tcp_bytes: bytes) -> int:
    """Checksum of a TCP segment under the IPv4 pseudo-header.

    ``tcp_bytes`` is header+payload with the checksum field zeroed;
    ``src_ip``/``dst_ip`` are the 4-byte addresses from the IP header.
    """
    pseudo = src_ip + dst_ip + struct.pack("!BBH", 0, 6, len(tcp_bytes))
    return checksum16(pseudo + tcp_bytes)


def verify_checksum16(data: bytes) -> bool:
    """True iff ``data`` (including its stored checksum field) sums to 0xFFFF."""
    return checksum16(data) == 0
