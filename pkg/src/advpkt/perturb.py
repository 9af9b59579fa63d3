"""Functionality-preserving packet perturbations with exact side effects.

Thirteen discrete actions mutate header fields, TCP options, or append
benign payload bytes. Every effective mutation goes through
``packet.finalize`` so lengths, offsets, and both checksums are
recomputed in full. Inapplicable actions are no-ops by contract — the
action space stays state-independent and the environment penalizes
persistent no-ops through the reward instead.

Immutable by design: addresses, ports, sequence/ack numbers, and all TCP
flags. IP fragmentation bits are set to the fixed values 0x40 / 0x20
(with a zero fragment offset); no TTL adjustment accompanies them — only
the checksum side effect follows.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from . import packet as pk
from .features import N_FEATURES, stripped_bytes, stripped_length
from .inet import checksum16, tcp_checksum
from .packet import RawPacket, find_option

DEFAULT_MSS = 1460
DEFAULT_WSCALE = 7
PAYLOAD_CHUNK = 32

TTL_MIN, TTL_MAX = 1, 255
WINDOW_MIN, WINDOW_MAX = 1, 65535
MSS_MIN, MSS_MAX = 0, 65535
WSCALE_MIN, WSCALE_MAX = 0, 14

FRAG_DF = 0x4000  # flags/offset field value, flags byte 0x40
FRAG_MF = 0x2000  # flags byte 0x20


class Action(IntEnum):
    """Discrete perturbations; ids are dense and serialized with agents."""

    SET_FRAG_DF = 0
    SET_FRAG_MF = 1
    TTL_INC = 2
    TTL_DEC = 3
    WIN_INC = 4
    WIN_DEC = 5
    MSS_ADD = 6
    MSS_INC = 7
    MSS_DEC = 8
    WSCALE_ADD = 9
    WSCALE_INC = 10
    WSCALE_DEC = 11
    PAYLOAD_APPEND = 12


N_ACTIONS = len(Action)


@dataclass(frozen=True)
class ApplyResult:
    packet: RawPacket
    changed: bool
    touched_features: frozenset
    payload_cursor: int = 0


def _noop(p: RawPacket, cursor: int) -> ApplyResult:
    return ApplyResult(p, False, frozenset(), cursor)


def _features_as_bytes(p: RawPacket) -> np.ndarray:
    raw = stripped_bytes(p)[:N_FEATURES]
    arr = np.zeros(N_FEATURES, dtype=np.uint8)
    arr[:len(raw)] = np.frombuffer(raw, dtype=np.uint8)
    return arr


def _diff(old: RawPacket, new: RawPacket) -> frozenset:
    changed = np.nonzero(_features_as_bytes(old) != _features_as_bytes(new))[0]
    return frozenset(int(i) for i in changed)


def _finish(old: RawPacket, ip: bytes, tcp: bytes, payload: bytes,
            cursor: int) -> ApplyResult:
    new = pk.finalize(old, ip, tcp, payload)
    return ApplyResult(new, True, _diff(old, new), cursor)


def apply(p: RawPacket, action: Action, corpus: bytes = b"",
          payload_cursor: int = 0, chunk: int = PAYLOAD_CHUNK) -> ApplyResult:
    """Apply one action, returning the (possibly unchanged) packet.

    ``corpus``/``payload_cursor`` only matter for PAYLOAD_APPEND; the
    cursor in the result advances by the bytes consumed so sequential
    calls walk the corpus.
    """
    action = Action(action)
    if action is Action.SET_FRAG_DF:
        return _set_frag(p, FRAG_DF, payload_cursor)
    if action is Action.SET_FRAG_MF:
        return _set_frag(p, FRAG_MF, payload_cursor)
    if action is Action.TTL_INC:
        return _adjust_ttl(p, +1, payload_cursor)
    if action is Action.TTL_DEC:
        return _adjust_ttl(p, -1, payload_cursor)
    if action is Action.WIN_INC:
        return _adjust_window(p, +1, payload_cursor)
    if action is Action.WIN_DEC:
        return _adjust_window(p, -1, payload_cursor)
    if action is Action.MSS_ADD:
        return _add_option(p, pk.mss_option(DEFAULT_MSS), pk.TCPOPT_MSS,
                           payload_cursor)
    if action is Action.MSS_INC:
        return _adjust_mss(p, +1, payload_cursor)
    if action is Action.MSS_DEC:
        return _adjust_mss(p, -1, payload_cursor)
    if action is Action.WSCALE_ADD:
        return _add_option(p, pk.wscale_option(DEFAULT_WSCALE),
                           pk.TCPOPT_WSCALE, payload_cursor)
    if action is Action.WSCALE_INC:
        return _adjust_wscale(p, +1, payload_cursor)
    if action is Action.WSCALE_DEC:
        return _adjust_wscale(p, -1, payload_cursor)
    return append_payload(p, corpus, payload_cursor, chunk)


def _set_frag(p: RawPacket, value: int, cursor: int) -> ApplyResult:
    current = struct.unpack_from("!H", p.ip_header, pk.IP_FLAGS)[0]
    if current == value:
        return _noop(p, cursor)
    ip = bytearray(p.ip_header)
    struct.pack_into("!H", ip, pk.IP_FLAGS, value)
    return _finish(p, bytes(ip), p.tcp_header, p.tcp_payload, cursor)


def _adjust_ttl(p: RawPacket, delta: int, cursor: int) -> ApplyResult:
    new = p.ttl + delta
    if not TTL_MIN <= new <= TTL_MAX:
        return _noop(p, cursor)
    ip = bytearray(p.ip_header)
    ip[pk.IP_TTL] = new
    return _finish(p, bytes(ip), p.tcp_header, p.tcp_payload, cursor)


def _adjust_window(p: RawPacket, delta: int, cursor: int) -> ApplyResult:
    new = p.window + delta
    if not WINDOW_MIN <= new <= WINDOW_MAX:
        return _noop(p, cursor)
    tcp = bytearray(p.tcp_header)
    struct.pack_into("!H", tcp, pk.TCP_WINDOW, new)
    return _finish(p, p.ip_header, bytes(tcp), p.tcp_payload, cursor)


def _options_insert_at(p: RawPacket) -> int:
    """Header offset where a new option goes: after the last real option,
    before any end-of-list padding."""
    opts = p.tcp_options()
    i = 0
    while i < len(opts):
        kind = opts[i]
        if kind == pk.TCPOPT_EOL:
            break
        if kind == pk.TCPOPT_NOP:
            i += 1
            continue
        i += opts[i + 1]
    return pk.TCP_OPTIONS + i


def _add_option(p: RawPacket, option: bytes, kind: int,
                cursor: int) -> ApplyResult:
    # negotiable only on SYN / SYN-ACK; one instance per packet
    if not p.is_syn or find_option(p, kind) is not None:
        return _noop(p, cursor)
    new_len = len(p.tcp_header) + len(option)
    if new_len > 60:
        return _noop(p, cursor)
    at = _options_insert_at(p)
    tcp = bytearray(p.tcp_header[:at] + option + p.tcp_header[at:])
    tcp[pk.TCP_DOFF] = (new_len // 4) << 4 | (tcp[pk.TCP_DOFF] & 0x0F)
    return _finish(p, p.ip_header, bytes(tcp), p.tcp_payload, cursor)


def _adjust_mss(p: RawPacket, delta: int, cursor: int) -> ApplyResult:
    if not p.is_syn:
        return _noop(p, cursor)
    at = find_option(p, pk.TCPOPT_MSS)
    if at is None or p.tcp_header[at + 1] != 4:
        return _noop(p, cursor)
    value = struct.unpack_from("!H", p.tcp_header, at + 2)[0] + delta
    if not MSS_MIN <= value <= MSS_MAX:
        return _noop(p, cursor)
    tcp = bytearray(p.tcp_header)
    struct.pack_into("!H", tcp, at + 2, value)
    return _finish(p, p.ip_header, bytes(tcp), p.tcp_payload, cursor)


def _adjust_wscale(p: RawPacket, delta: int, cursor: int) -> ApplyResult:
    if not p.is_syn:
        return _noop(p, cursor)
    at = find_option(p, pk.TCPOPT_WSCALE)
    if at is None or p.tcp_header[at + 1] != 3:
        return _noop(p, cursor)
    value = p.tcp_header[at + 2] + delta
    if not WSCALE_MIN <= value <= WSCALE_MAX:
        return _noop(p, cursor)
    tcp = bytearray(p.tcp_header)
    tcp[at + 2] = value
    return _finish(p, p.ip_header, bytes(tcp), p.tcp_payload, cursor)


def _corpus_slice(corpus: bytes, cursor: int, n: int) -> bytes:
    """Next n corpus bytes starting at cursor, wrapping cyclically."""
    out = bytearray()
    pos = cursor % len(corpus)
    while len(out) < n:
        take = corpus[pos:pos + (n - len(out))]
        out.extend(take)
        pos = (pos + len(take)) % len(corpus)
    return bytes(out)


def append_payload(p: RawPacket, corpus: bytes, payload_cursor: int = 0,
                   chunk: int = PAYLOAD_CHUNK) -> ApplyResult:
    """Append the next corpus chunk as dead bytes after the TCP payload.

    No-op when the corpus is empty, the stripped byte count has reached
    the feature length, or the datagram would overflow the IP
    total-length field.
    """
    if not corpus or chunk <= 0:
        return _noop(p, payload_cursor)
    if stripped_length(p) >= N_FEATURES:
        return _noop(p, payload_cursor)
    if p.ip_total_length + chunk > 0xFFFF:
        return _noop(p, payload_cursor)
    extra = _corpus_slice(corpus, payload_cursor, chunk)
    result = _finish(p, p.ip_header, p.tcp_header, p.tcp_payload + extra,
                     payload_cursor + chunk)
    return result


def validate(p: RawPacket) -> bool:
    """Self-consistent lengths, verifying checksums, well-formed options."""
    ip, tcp = p.ip_header, p.tcp_header
    if len(ip) != 4 * p.ihl or not 20 <= len(ip) <= 60:
        return False
    if ip[0] >> 4 != 4 or ip[pk.IP_PROTO] != pk.PROTO_TCP:
        return False
    if len(tcp) != 4 * p.data_offset or not 20 <= len(tcp) <= 60:
        return False
    if p.ip_total_length != len(ip) + len(tcp) + len(p.tcp_payload):
        return False
    if checksum16(ip) != 0:
        return False
    stored = struct.unpack_from("!H", tcp, pk.TCP_CHECKSUM)[0]
    zeroed = tcp[:pk.TCP_CHECKSUM] + b"\x00\x00" + tcp[pk.TCP_CHECKSUM + 2:]
    if tcp_checksum(ip[pk.IP_SRC:pk.IP_SRC + 4], ip[pk.IP_DST:pk.IP_DST + 4],
                    zeroed + p.tcp_payload) != stored:
        return False
    return pk.options_well_formed(tcp[pk.TCP_OPTIONS:])
