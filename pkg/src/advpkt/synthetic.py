"""Synthetic TCP traffic for desk-scale runs.

Generates benign client/server flows plus per-class attack packets with
a controllable separation margin: benign traffic carries the
don't-fragment flag, a higher TTL band, TCP options on its SYNs, and
longer HTTP-style payloads. Attack traffic lacks all four, so classifiers
separate the classes cleanly while every separating byte stays reachable
for the perturbation actions (flag set, TTL steps, option insertion,
payload append). Every generated packet passes the validity checks, and
the rules file emitted alongside the capture labels the attack flows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .labeling import FlowKey, LabelRule
from .packet import (TCP_FLAG_ACK, TCP_FLAG_PSH, TCP_FLAG_SYN, RawPacket,
                     build_tcp_packet, mss_option, wscale_option)
from .pcap import write_pcap

# Fixed benign payload master; benign packets carry prefixes of it.
_LINES = (
    "GET /catalog/items?page=1&sort=name HTTP/1.1\r\n"
    "Host: shop.internal.example\r\n"
    "User-Agent: Mozilla/5.0 (X11; Linux x86_64) Gecko/20100101\r\n"
    "Accept: text/html,application/xhtml+xml,application/xml;q=0.9\r\n"
    "Accept-Language: en-US,en;q=0.5\r\n"
    "Accept-Encoding: gzip, deflate\r\n"
    "Connection: keep-alive\r\n"
    "Cookie: session=0123456789abcdef0123456789abcdef; theme=light\r\n"
    "Cache-Control: max-age=0\r\n\r\n"
)
MASTER_PAYLOAD = _LINES.encode()


@dataclass(frozen=True)
class SyntheticTrafficSpec:
    """Generator knobs; defaults give a margin the agents can close."""

    server_ip: str = "10.0.0.9"
    server_port: int = 80
    benign_flows: int = 150
    benign_data_packets: tuple = (1, 3)  # inclusive range per flow
    attack_counts: dict = field(
        default_factory=lambda: {"PortScan": 600, "DoS": 600})
    ttl_benign: tuple = (62, 66)
    ttl_attack: tuple = (58, 63)  # overlaps benign: the frag flag carries
    # the class margin, so every classifier keys on a reachable byte
    window: tuple = (4032, 4160)
    payload_benign: tuple = (180, 420)
    payload_attack: tuple = (24, 40)
    benign_mf_fraction: float = 0.0  # share of benign data packets whose
    # frag field carries the more-fragments value instead of don't-fragment
    base_time: float = 1_700_000_000.0

    KNOWN_CLASSES = ("PortScan", "DoS")

    def __post_init__(self):
        for cls in self.attack_counts:
            if cls not in self.KNOWN_CLASSES:
                raise ConfigError(f"no synthetic generator for class {cls!r}")

    @classmethod
    def from_config(cls, cfg: dict) -> "SyntheticTrafficSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(cfg) - known
        if unknown:
            raise ConfigError(f"unknown synthetic keys: {sorted(unknown)}")
        kwargs = dict(cfg)
        for key in ("benign_data_packets", "ttl_benign", "ttl_attack",
                    "window", "payload_benign", "payload_attack"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


class _Clock:
    """Strictly increasing microsecond-quantized timestamps; quantization
    keeps rule windows exact through the 6-decimal rules file."""

    def __init__(self, start: float, rng: np.random.Generator):
        self.t = round(start, 6)
        self.rng = rng

    def next(self) -> float:
        self.t = round(self.t + 0.001 + float(self.rng.random()) * 0.004, 6)
        return self.t


def _randint(rng: np.random.Generator, lo_hi: tuple) -> int:
    return int(rng.integers(lo_hi[0], lo_hi[1] + 1))


def _benign_flow(spec, rng, clock, client_idx: int) -> list[RawPacket]:
    client_ip = f"192.168.1.{2 + client_idx % 200}"
    sport = 20000 + client_idx
    ttl = _randint(rng, spec.ttl_benign)
    window = _randint(rng, spec.window)
    common = dict(src_port=sport, dst_port=spec.server_port, ttl=ttl,
                  window=window, frag=0x4000)
    packets = [build_tcp_packet(
        client_ip, spec.server_ip, flags=TCP_FLAG_SYN, seq=1,
        options=mss_option(1460) + wscale_option(7), ts=clock.next(),
        **common)]
    packets.append(build_tcp_packet(  # server reply; filtered as backward
        spec.server_ip, client_ip, src_port=spec.server_port, dst_port=sport,
        flags=TCP_FLAG_SYN | TCP_FLAG_ACK, seq=1, ack=2,
        ttl=64, window=window, frag=0x4000, ts=clock.next()))
    seq = 2
    for _ in range(_randint(rng, spec.benign_data_packets)):
        length = _randint(rng, spec.payload_benign)
        frag = 0x2000 if rng.random() < spec.benign_mf_fraction else 0x4000
        data_fields = dict(common, frag=frag)
        packets.append(build_tcp_packet(
            client_ip, spec.server_ip, flags=TCP_FLAG_PSH | TCP_FLAG_ACK,
            seq=seq, ack=2, payload=MASTER_PAYLOAD[:length],
            ts=clock.next(), **data_fields))
        seq += length
        packets.append(build_tcp_packet(
            spec.server_ip, client_ip, src_port=spec.server_port,
            dst_port=sport, flags=TCP_FLAG_ACK, seq=2, ack=seq,
            ttl=64, window=window, frag=0x4000, ts=clock.next()))
    return packets


def _attack_packet(spec, rng, clock, cls: str,
                   idx: int) -> tuple[RawPacket, tuple]:
    ttl = _randint(rng, spec.ttl_attack)
    window = _randint(rng, spec.window)
    if cls == "PortScan":
        src_ip = "172.16.0.66"
        sport = 40000 + idx % 20000
        dport = 1 + idx % 1024
        # probes carry the usual SYN options so the classes separate on
        # reachable fields (frag flag, TTL) rather than header length
        pkt = build_tcp_packet(src_ip, spec.server_ip, sport, dport,
                               flags=TCP_FLAG_SYN, seq=1, ttl=ttl,
                               window=window,
                               options=mss_option(1460) + wscale_option(7),
                               ts=clock.next())
    else:  # DoS: truncated slow-request floods, shaped like benign data
        src_ip = f"172.16.1.{10 + idx % 40}"
        sport = 30000 + idx % 30000
        dport = spec.server_port
        length = _randint(rng, spec.payload_attack)
        pkt = build_tcp_packet(src_ip, spec.server_ip, sport, dport,
                               flags=TCP_FLAG_PSH | TCP_FLAG_ACK, seq=2,
                               ack=2, ttl=ttl, window=window,
                               payload=MASTER_PAYLOAD[:length],
                               ts=clock.next())
    return pkt, (src_ip, spec.server_ip, sport, dport)


def generate(spec: SyntheticTrafficSpec, rng: np.random.Generator
             ) -> tuple[list[RawPacket], list[LabelRule]]:
    """All packets in capture order plus the labeling rules."""
    clock = _Clock(spec.base_time, rng)
    packets: list[RawPacket] = []
    for i in range(spec.benign_flows):
        packets.extend(_benign_flow(spec, rng, clock, i))

    rules: list[LabelRule] = []
    seen: set[tuple] = set()
    for cls, count in sorted(spec.attack_counts.items()):
        window_start = clock.t
        tuples = []
        for i in range(count):
            pkt, tup = _attack_packet(spec, rng, clock, cls, i)
            packets.append(pkt)
            if tup in seen:
                raise ConfigError(
                    f"synthetic 6-tuple collision for {cls}: {tup}")
            seen.add(tup)
            tuples.append(tup)
        window_end = clock.t + 1.0
        rules.extend(
            LabelRule(FlowKey(*tup, protocol=6, window_start=window_start,
                              window_end=window_end), cls)
            for tup in tuples)
    return packets, rules


def write_rules(path: str | Path, rules: list[LabelRule]) -> None:
    lines = ["# src_ip,dst_ip,src_port,dst_port,protocol,start,end,class"]
    for r in rules:
        k = r.key
        lines.append(f"{k.src_ip},{k.dst_ip},{k.src_port},{k.dst_port},"
                     f"{k.protocol},{k.window_start:.6f},{k.window_end:.6f},"
                     f"{r.attack_class}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_synthetic(spec: SyntheticTrafficSpec, rng: np.random.Generator,
                    pcap_path: str | Path, rules_path: str | Path) -> int:
    packets, rules = generate(spec, rng)
    write_pcap(pcap_path, packets)
    write_rules(rules_path, rules)
    return len(packets)
