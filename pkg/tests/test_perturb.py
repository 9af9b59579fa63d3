"""Perturbation actions: values, clamps, side effects, validity."""

import struct

import numpy as np
import pytest

from advpkt.features import featurize_raw
from advpkt.packet import (TCP_FLAG_ACK, TCP_FLAG_SYN, build_tcp_packet,
                           find_option, mss_option, parse_frame,
                           wscale_option, TCPOPT_MSS, TCPOPT_WSCALE)
from advpkt.perturb import (Action, N_ACTIONS, append_payload, apply,
                            validate)

from conftest import random_packet
from test_checksum import reference_checksum


def syn(ttl=64, window=8192, options=b"", payload=b"", frag=0):
    return build_tcp_packet("10.0.0.5", "10.0.0.9", 4444, 80, seq=1,
                            flags=TCP_FLAG_SYN, ttl=ttl, window=window,
                            options=options, payload=payload, frag=frag)


def ack(payload=b"", ttl=64):
    return build_tcp_packet("10.0.0.5", "10.0.0.9", 4444, 80, seq=1,
                            flags=TCP_FLAG_ACK, ttl=ttl, payload=payload)


def test_action_space_is_thirteen_dense_ids():
    assert N_ACTIONS == 13
    assert sorted(int(a) for a in Action) == list(range(13))


class TestTtl:
    def test_increment_with_full_checksum_recompute(self):
        p = syn(ttl=64)
        r = apply(p, Action.TTL_INC)
        assert r.changed and r.packet.ttl == 65
        header = bytearray(r.packet.ip_header)
        header[10:12] = b"\x00\x00"
        assert struct.unpack_from("!H", r.packet.ip_header, 10)[0] == \
            reference_checksum(bytes(header))

    def test_clamp_at_255(self):
        r = apply(syn(ttl=255), Action.TTL_INC)
        assert not r.changed and r.packet.ttl == 255

    def test_clamp_at_1(self):
        r = apply(syn(ttl=1), Action.TTL_DEC)
        assert not r.changed and r.packet.ttl == 1

    def test_decrement(self):
        assert apply(syn(ttl=64), Action.TTL_DEC).packet.ttl == 63


class TestFragmentFlags:
    def test_more_fragment_sets_0x20(self):
        r = apply(syn(), Action.SET_FRAG_MF)
        assert r.packet.ip_header[6] == 0x20
        assert r.packet.ip_header[7] == 0x00

    def test_dont_fragment_sets_0x40(self):
        r = apply(syn(), Action.SET_FRAG_DF)
        assert r.packet.ip_header[6] == 0x40

    def test_already_set_is_noop(self):
        r = apply(syn(frag=0x4000), Action.SET_FRAG_DF)
        assert not r.changed

    def test_ttl_not_adjusted_by_fragment_flags(self):
        # checksum is the only indirect effect we propagate
        r = apply(syn(ttl=64), Action.SET_FRAG_MF)
        assert r.packet.ttl == 64


class TestWindow:
    def test_inc_dec(self):
        assert apply(syn(window=8192), Action.WIN_INC).packet.window == 8193
        assert apply(syn(window=8192), Action.WIN_DEC).packet.window == 8191

    def test_clamps(self):
        assert not apply(syn(window=65535), Action.WIN_INC).changed
        assert not apply(syn(window=1), Action.WIN_DEC).changed

    def test_tcp_checksum_updated(self):
        p = syn(window=100)
        r = apply(p, Action.WIN_INC)
        reparsed = parse_frame(r.packet.serialize(), 0, 0,
                               len(r.packet.serialize()))
        assert reparsed.tcp_checksum_ok


class TestMss:
    def test_add_on_syn(self):
        p = syn()
        r = apply(p, Action.MSS_ADD)
        assert r.changed
        at = find_option(r.packet, TCPOPT_MSS)
        assert at is not None
        assert struct.unpack_from("!H", r.packet.tcp_header, at + 2)[0] == 1460
        assert r.packet.data_offset == 6
        assert r.packet.ip_total_length == p.ip_total_length + 4

    def test_add_is_noop_when_present_or_not_syn(self):
        assert not apply(syn(options=mss_option(1400)), Action.MSS_ADD).changed
        assert not apply(ack(), Action.MSS_ADD).changed

    def test_inc_dec_and_clamps(self):
        p = syn(options=mss_option(1400))
        assert struct.unpack_from(
            "!H", apply(p, Action.MSS_INC).packet.tcp_header, 22)[0] == 1401
        assert struct.unpack_from(
            "!H", apply(p, Action.MSS_DEC).packet.tcp_header, 22)[0] == 1399
        assert not apply(syn(options=mss_option(65535)),
                         Action.MSS_INC).changed
        assert not apply(syn(options=mss_option(0)), Action.MSS_DEC).changed

    def test_inc_without_option_is_noop(self):
        assert not apply(syn(), Action.MSS_INC).changed


class TestWscale:
    def test_add_on_syn(self):
        r = apply(syn(), Action.WSCALE_ADD)
        at = find_option(r.packet, TCPOPT_WSCALE)
        assert at is not None
        assert r.packet.tcp_header[at + 2] == 7

    def test_clamps_zero_to_fourteen(self):
        assert not apply(syn(options=wscale_option(14)),
                         Action.WSCALE_INC).changed
        assert not apply(syn(options=wscale_option(0)),
                         Action.WSCALE_DEC).changed
        r = apply(syn(options=wscale_option(7)), Action.WSCALE_INC)
        at = find_option(r.packet, TCPOPT_WSCALE)
        assert r.packet.tcp_header[at + 2] == 8

    def test_non_syn_is_noop(self):
        assert not apply(ack(), Action.WSCALE_ADD).changed
        assert not apply(ack(), Action.WSCALE_INC).changed


class TestOptionInsertion:
    def test_alignment_and_offset_bounds(self):
        p = syn()
        for action in (Action.MSS_ADD, Action.WSCALE_ADD):
            r = apply(p, action)
            assert len(r.packet.tcp_header) % 4 == 0
            assert r.packet.data_offset <= 15
            p = r.packet
        assert find_option(p, TCPOPT_MSS) is not None
        assert find_option(p, TCPOPT_WSCALE) is not None

    def test_insert_before_eol_padding(self):
        p = syn(options=mss_option(536) + b"\x01\x01\x01\x00")
        r = apply(p, Action.WSCALE_ADD)
        assert r.changed
        at = find_option(r.packet, TCPOPT_WSCALE)
        assert at is not None  # a post-EOL insert would be unreachable
        assert validate(r.packet)

    def test_full_header_is_noop(self):
        p = syn(options=b"\x01" * 36)  # doff already 14 words... 56 bytes
        r = apply(p, Action.MSS_ADD)
        assert r.changed  # 56 + 4 = 60 still legal
        r2 = apply(r.packet, Action.WSCALE_ADD)
        assert not r2.changed  # would need doff 16


class TestPayloadAppend:
    def test_basic_append_updates_lengths(self):
        p = ack()
        r = append_payload(p, corpus=b"ABCDEFGH", chunk=4)
        assert r.packet.tcp_payload == b"ABCD"
        assert r.packet.ip_total_length == p.ip_total_length + 4
        assert r.payload_cursor == 4

    def test_sequential_calls_walk_the_corpus(self):
        p = ack()
        r1 = append_payload(p, corpus=b"ABCDEFGH", payload_cursor=0, chunk=4)
        r2 = append_payload(r1.packet, corpus=b"ABCDEFGH",
                            payload_cursor=r1.payload_cursor, chunk=4)
        assert r2.packet.tcp_payload == b"ABCDEFGH"

    def test_corpus_wraps(self):
        r = append_payload(ack(), corpus=b"XY", chunk=5)
        assert r.packet.tcp_payload == b"XYXYX"

    def test_cap_at_feature_length(self):
        p = ack(payload=b"Q" * 1497)  # stripped length 12+16+1497 = 1525
        assert not append_payload(p, corpus=b"AB", chunk=2).changed

    def test_below_cap_appends(self):
        p = ack(payload=b"Q" * 1490)
        r = append_payload(p, corpus=b"AB" * 32, chunk=32)
        assert r.changed
        assert len(r.packet.tcp_payload) == 1522

    def test_empty_corpus_is_noop(self):
        assert not append_payload(ack(), corpus=b"", chunk=4).changed


class TestValidate:
    def test_fixture_is_valid(self, syn_packet):
        assert validate(syn_packet)

    def test_corrupted_checksum_fails(self, syn_packet):
        import dataclasses
        ip = bytearray(syn_packet.ip_header)
        ip[10] ^= 0x01
        assert not validate(dataclasses.replace(syn_packet,
                                                ip_header=bytes(ip)))
        tcp = bytearray(syn_packet.tcp_header)
        tcp[16] ^= 0x01
        assert not validate(dataclasses.replace(syn_packet,
                                                tcp_header=bytes(tcp)))

    def test_length_mismatch_fails(self, syn_packet):
        import dataclasses
        assert not validate(dataclasses.replace(syn_packet,
                                                tcp_payload=b"zz"))


IMMUTABLE = ("src_ip", "dst_ip", "src_port", "dst_port", "tcp_flags")


def test_random_mutations_stay_valid_and_preserve_immutables():
    rng = np.random.default_rng(11)
    corpus = b"The quick brown fox jumps over the lazy dog. " * 4
    for _ in range(1000):
        p = random_packet(rng)
        action = Action(int(rng.integers(N_ACTIONS)))
        r = apply(p, action, corpus=corpus,
                  payload_cursor=int(rng.integers(0, 64)))
        q = r.packet
        assert validate(q) or not r.changed
        if r.changed:
            reparsed = parse_frame(q.serialize(), q.ts_sec, q.ts_usec,
                                   q.orig_len)
            assert reparsed.ip_checksum_ok and reparsed.tcp_checksum_ok
        for field in IMMUTABLE:
            assert getattr(q, field) == getattr(p, field)
        assert q.tcp_header[4:12] == p.tcp_header[4:12]  # seq + ack


def test_touched_features_equal_featurize_diff():
    rng = np.random.default_rng(12)
    corpus = b"benign payload body " * 8
    for _ in range(400):
        p = random_packet(rng)
        action = Action(int(rng.integers(N_ACTIONS)))
        r = apply(p, action, corpus=corpus)
        before = featurize_raw(p, 1).values
        after = featurize_raw(r.packet, 1).values
        diff = set(int(i) for i in np.nonzero(before != after)[0])
        assert diff == set(r.touched_features)
        if not r.changed:
            assert diff == set()
