"""Structured view of a captured Ethernet/IPv4/TCP packet.

A ``RawPacket`` keeps the original bytes split at layer boundaries so that
byte-level feature extraction and mutation can address fields by offset.
Re-serializing an unmodified packet reproduces the captured bytes exactly,
trailing Ethernet padding included.

All header offsets below are 0-based within their layer.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

from .inet import checksum16, tcp_checksum

ETH_HEADER_LEN = 14
ETHERTYPE_IPV4 = 0x0800

# IPv4 header field offsets
IP_VER_IHL = 0
IP_TOS = 1
IP_TOTAL_LEN = 2  # 2 bytes
IP_ID = 4  # 2 bytes
IP_FLAGS = 6  # flags + fragment offset high bits
IP_FRAG = 7
IP_TTL = 8
IP_PROTO = 9
IP_CHECKSUM = 10  # 2 bytes
IP_SRC = 12  # 4 bytes
IP_DST = 16  # 4 bytes

# TCP header field offsets
TCP_SPORT = 0  # 2 bytes
TCP_DPORT = 2  # 2 bytes
TCP_SEQ = 4  # 4 bytes
TCP_ACK = 8  # 4 bytes
TCP_DOFF = 12  # upper nibble = data offset in 32-bit words
TCP_FLAGS = 13
TCP_WINDOW = 14  # 2 bytes
TCP_CHECKSUM = 16  # 2 bytes
TCP_URGENT = 18  # 2 bytes
TCP_OPTIONS = 20

TCP_FLAG_FIN = 0x01
TCP_FLAG_SYN = 0x02
TCP_FLAG_RST = 0x04
TCP_FLAG_PSH = 0x08
TCP_FLAG_ACK = 0x10

TCPOPT_EOL = 0
TCPOPT_NOP = 1
TCPOPT_MSS = 2
TCPOPT_WSCALE = 3

PROTO_TCP = 6


class PacketSkip(Exception):
    """Raised while parsing a frame that the pipeline does not ingest."""

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


@dataclass(frozen=True)
class RawPacket:
    """Parsed Ethernet/IPv4/TCP packet; immutable, mutations build new objects."""

    link_bytes: bytes  # 14-byte Ethernet header
    ip_header: bytes  # 20-60 bytes (4 x IHL)
    tcp_header: bytes  # 20-60 bytes (4 x data offset)
    tcp_payload: bytes
    ts_sec: int  # capture timestamp, epoch seconds
    ts_usec: int  # microseconds part
    orig_len: int  # original length on the wire
    trailer: bytes = b""  # Ethernet padding after the IP datagram
    ip_checksum_ok: bool = True  # flags only; bad checksums are ingested
    tcp_checksum_ok: bool = True

    # -- field accessors -------------------------------------------------

    @property
    def ihl(self) -> int:
        return self.ip_header[IP_VER_IHL] & 0x0F

    @property
    def data_offset(self) -> int:
        return self.tcp_header[TCP_DOFF] >> 4

    @property
    def src_ip(self) -> str:
        return ".".join(str(b) for b in self.ip_header[IP_SRC:IP_SRC + 4])

    @property
    def dst_ip(self) -> str:
        return ".".join(str(b) for b in self.ip_header[IP_DST:IP_DST + 4])

    @property
    def src_port(self) -> int:
        return struct.unpack_from("!H", self.tcp_header, TCP_SPORT)[0]

    @property
    def dst_port(self) -> int:
        return struct.unpack_from("!H", self.tcp_header, TCP_DPORT)[0]

    @property
    def ttl(self) -> int:
        return self.ip_header[IP_TTL]

    @property
    def window(self) -> int:
        return struct.unpack_from("!H", self.tcp_header, TCP_WINDOW)[0]

    @property
    def tcp_flags(self) -> int:
        return self.tcp_header[TCP_FLAGS]

    @property
    def is_syn(self) -> bool:
        return bool(self.tcp_flags & TCP_FLAG_SYN)

    @property
    def ip_total_length(self) -> int:
        return struct.unpack_from("!H", self.ip_header, IP_TOTAL_LEN)[0]

    @property
    def timestamp(self) -> float:
        return self.ts_sec + self.ts_usec / 1e6

    @property
    def six_tuple(self) -> tuple:
        """(src_ip, dst_ip, src_port, dst_port, protocol); time is separate."""
        return (self.src_ip, self.dst_ip, self.src_port, self.dst_port, PROTO_TCP)

    def tcp_options(self) -> bytes:
        return self.tcp_header[TCP_OPTIONS:]

    def serialize(self) -> bytes:
        """Captured bytes, bit-exact for packets parsed from a capture."""
        return (self.link_bytes + self.ip_header + self.tcp_header
                + self.tcp_payload + self.trailer)

    def content_hash_input(self) -> bytes:
        return struct.pack("!II", self.ts_sec, self.ts_usec) + self.serialize()


def parse_options(option_bytes: bytes) -> list[tuple[int, bytes]]:
    """Walk a TCP option list into (kind, option-data) pairs.

    Raises PacketSkip on a malformed list (bad length byte, overrun).
    EOL terminates the walk; NOP carries no data.
    """
    out = []
    i = 0
    n = len(option_bytes)
    while i < n:
        kind = option_bytes[i]
        if kind == TCPOPT_EOL:
            out.append((kind, b""))
            break
        if kind == TCPOPT_NOP:
            out.append((kind, b""))
            i += 1
            continue
        if i + 1 >= n:
            raise PacketSkip("tcp option missing length byte")
        length = option_bytes[i + 1]
        if length < 2 or i + length > n:
            raise PacketSkip("tcp option bad length")
        out.append((kind, option_bytes[i + 2:i + length]))
        i += length
    return out


def options_well_formed(option_bytes: bytes) -> bool:
    try:
        parse_options(option_bytes)
        return True
    except PacketSkip:
        return False


def find_option(p: RawPacket, kind: int) -> int | None:
    """Offset of option ``kind``'s kind byte within tcp_header, or None."""
    opts = p.tcp_options()
    i = 0
    n = len(opts)
    while i < n:
        k = opts[i]
        if k == TCPOPT_EOL:
            return None
        if k == TCPOPT_NOP:
            i += 1
            continue
        if i + 1 >= n:
            return None
        length = opts[i + 1]
        if length < 2 or i + length > n:
            return None
        if k == kind:
            return TCP_OPTIONS + i
        i += length
    return None


def parse_frame(data: bytes, ts_sec: int, ts_usec: int, orig_len: int) -> RawPacket:
    """Split one captured Ethernet frame into a RawPacket.

    Raises PacketSkip for anything other than a complete Ethernet/IPv4/TCP
    packet. Stored checksums are verified but mismatches only set flags;
    offload artifacts are common in real captures.
    """
    if len(data) < orig_len:
        raise PacketSkip("truncated record")
    if len(data) < ETH_HEADER_LEN + 20:
        raise PacketSkip("frame too short")
    ethertype = struct.unpack_from("!H", data, 12)[0]
    if ethertype != ETHERTYPE_IPV4:
        raise PacketSkip("not ipv4")
    link = data[:ETH_HEADER_LEN]
    ip_start = ETH_HEADER_LEN

    ver_ihl = data[ip_start]
    if ver_ihl >> 4 != 4:
        raise PacketSkip("not ipv4")
    ihl = ver_ihl & 0x0F
    if ihl < 5:
        raise PacketSkip("bad ihl")
    ip_len = 4 * ihl
    if len(data) < ip_start + ip_len:
        raise PacketSkip("truncated ip header")
    total_len = struct.unpack_from("!H", data, ip_start + IP_TOTAL_LEN)[0]
    if total_len < ip_len or len(data) < ip_start + total_len:
        raise PacketSkip("truncated ip datagram")
    if data[ip_start + IP_PROTO] != PROTO_TCP:
        raise PacketSkip("not tcp")
    frag_field = struct.unpack_from("!H", data, ip_start + IP_FLAGS)[0]
    if frag_field & 0x1FFF:
        raise PacketSkip("ip fragment")

    ip_header = data[ip_start:ip_start + ip_len]
    tcp_start = ip_start + ip_len
    if total_len - ip_len < 20:
        raise PacketSkip("truncated tcp header")
    doff = data[tcp_start + TCP_DOFF] >> 4
    if doff < 5:
        raise PacketSkip("bad tcp data offset")
    tcp_len = 4 * doff
    if total_len - ip_len < tcp_len:
        raise PacketSkip("truncated tcp header")
    tcp_header = data[tcp_start:tcp_start + tcp_len]
    if not options_well_formed(tcp_header[TCP_OPTIONS:]):
        raise PacketSkip("malformed tcp options")
    payload = data[tcp_start + tcp_len:ip_start + total_len]
    trailer = data[ip_start + total_len:]

    ip_ok = checksum16(ip_header) == 0
    tcp_ok = tcp_checksum(
        ip_header[IP_SRC:IP_SRC + 4],
        ip_header[IP_DST:IP_DST + 4],
        _zero_tcp_checksum(tcp_header) + payload,
    ) == struct.unpack_from("!H", tcp_header, TCP_CHECKSUM)[0]

    return RawPacket(
        link_bytes=link,
        ip_header=ip_header,
        tcp_header=tcp_header,
        tcp_payload=payload,
        ts_sec=ts_sec,
        ts_usec=ts_usec,
        orig_len=orig_len,
        trailer=trailer,
        ip_checksum_ok=ip_ok,
        tcp_checksum_ok=tcp_ok,
    )


def _zero_tcp_checksum(tcp_header: bytes) -> bytes:
    return (tcp_header[:TCP_CHECKSUM] + b"\x00\x00"
            + tcp_header[TCP_CHECKSUM + 2:])


def finalize(p: RawPacket, ip_header: bytes, tcp_header: bytes,
             tcp_payload: bytes) -> RawPacket:
    """Rebuild a packet after mutation, propagating every side effect.

    Fixes the IP total-length field, then recomputes both checksums in
    full (no incremental updates). The Ethernet trailer is dropped when
    the datagram grew past it.
    """
    total_len = len(ip_header) + len(tcp_header) + len(tcp_payload)
    ip = bytearray(ip_header)
    struct.pack_into("!H", ip, IP_TOTAL_LEN, total_len)
    struct.pack_into("!H", ip, IP_CHECKSUM, 0)
    struct.pack_into("!H", ip, IP_CHECKSUM, checksum16(bytes(ip)))

    tcp = bytearray(tcp_header)
    struct.pack_into("!H", tcp, TCP_CHECKSUM, 0)
    csum = tcp_checksum(bytes(ip[IP_SRC:IP_SRC + 4]),
                        bytes(ip[IP_DST:IP_DST + 4]),
                        bytes(tcp) + tcp_payload)
    struct.pack_into("!H", tcp, TCP_CHECKSUM, csum)

    trailer = p.trailer if total_len == p.ip_total_length else b""
    return replace(
        p,
        ip_header=bytes(ip),
        tcp_header=bytes(tcp),
        tcp_payload=tcp_payload,
        trailer=trailer,
        orig_len=max(p.orig_len, ETH_HEADER_LEN + total_len + len(trailer)),
        ip_checksum_ok=True,
        tcp_checksum_ok=True,
    )


def build_tcp_packet(src_ip: str, dst_ip: str, src_port: int, dst_port: int,
                     *, seq: int = 0, ack: int = 0, flags: int = TCP_FLAG_SYN,
                     window: int = 8192, ttl: int = 64, tos: int = 0,
                     ident: int = 0, frag: int = 0, options: bytes = b"",
                     payload: bytes = b"", ts: float = 0.0,
                     pad_to_min_frame: bool = True) -> RawPacket:
    """Construct a valid packet from field values (checksums computed).

    ``options`` must already be padded to a 4-byte multiple. Frames
    shorter than 60 bytes get Ethernet padding like real captures do,
    unless ``pad_to_min_frame`` is off.
    """
    if len(options) % 4:
        raise ValueError("tcp options must be padded to a 4-byte boundary")
    link = bytes.fromhex("001122334455") + bytes.fromhex("66778899aabb") + b"\x08\x00"
    src = bytes(int(x) for x in src_ip.split("."))
    dst = bytes(int(x) for x in dst_ip.split("."))
    tcp_len = 20 + len(options)
    total_len = 20 + tcp_len + len(payload)
    ip = bytearray(20)
    ip[IP_VER_IHL] = 0x45
    ip[IP_TOS] = tos
    struct.pack_into("!H", ip, IP_TOTAL_LEN, total_len)
    struct.pack_into("!H", ip, IP_ID, ident)
    struct.pack_into("!H", ip, IP_FLAGS, frag)
    ip[IP_TTL] = ttl
    ip[IP_PROTO] = PROTO_TCP
    ip[IP_SRC:IP_SRC + 4] = src
    ip[IP_DST:IP_DST + 4] = dst
    struct.pack_into("!H", ip, IP_CHECKSUM, checksum16(bytes(ip)))

    tcp = bytearray(tcp_len)
    struct.pack_into("!HHII", tcp, 0, src_port, dst_port, seq, ack)
    tcp[TCP_DOFF] = (tcp_len // 4) << 4
    tcp[TCP_FLAGS] = flags
    struct.pack_into("!H", tcp, TCP_WINDOW, window)
    tcp[TCP_OPTIONS:] = options
    csum = tcp_checksum(src, dst, bytes(tcp) + payload)
    struct.pack_into("!H", tcp, TCP_CHECKSUM, csum)

    frame_len = ETH_HEADER_LEN + total_len
    trailer = b"\x00" * max(0, 60 - frame_len) if pad_to_min_frame else b""
    ts_sec = int(ts)
    ts_usec = int(round((ts - ts_sec) * 1e6))
    return RawPacket(
        link_bytes=link,
        ip_header=bytes(ip),
        tcp_header=bytes(tcp),
        tcp_payload=payload,
        ts_sec=ts_sec,
        ts_usec=ts_usec,
        orig_len=frame_len + len(trailer),
        trailer=trailer,
    )


def mss_option(value: int) -> bytes:
    """MSS option (kind 2, length 4)."""
    return struct.pack("!BBH", TCPOPT_MSS, 4, value)


def wscale_option(value: int) -> bytes:
    """Window-scale option (kind 3, length 3) plus one NOP for alignment."""
    return struct.pack("!BBB", TCPOPT_WSCALE, 3, value) + bytes([TCPOPT_NOP])
