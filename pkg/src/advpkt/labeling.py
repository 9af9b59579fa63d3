"""Label parsed packets by 6-tuple + time window and keep forward traffic.

Attack labels come from a rules file; the benign direction heuristic
(first sender of a flow is its source) is applied to everything the rules
do not cover. Real datasets with known source addresses can override the
heuristic by listing benign flows in the rules file with an empty class.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .errors import ConfigError
from .packet import PROTO_TCP, RawPacket

ATTACK_CLASSES = ("DoS", "DDoS", "PortScan", "Infiltration", "WebAttack", "other")

FORWARD = "forward"
BACKWARD = "backward"


@dataclass(frozen=True)
class FlowKey:
    """6-tuple plus the time window a labeling rule applies to."""

    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    protocol: int
    window_start: float
    window_end: float

    def __post_init__(self):
        if self.window_start > self.window_end:
            raise ConfigError("rule window start after end")
        if self.protocol != PROTO_TCP:
            raise ConfigError(f"unsupported protocol {self.protocol} (TCP only)")

    @property
    def tuple5(self) -> tuple:
        return (self.src_ip, self.dst_ip, self.src_port, self.dst_port,
                self.protocol)


@dataclass(frozen=True)
class LabelRule:
    key: FlowKey
    attack_class: str


@dataclass(frozen=True)
class LabeledPacket:
    packet: RawPacket
    label: str  # "benign" | "attack"
    attack_class: str | None  # present iff label == "attack"
    direction: str  # FORWARD | BACKWARD

    def __post_init__(self):
        if (self.label == "attack") != (self.attack_class is not None):
            raise ValueError("attack_class present iff label is attack")


def load_rules(path: str | Path) -> list[LabelRule]:
    """Read rules: src_ip,dst_ip,src_port,dst_port,protocol,start,end,class.

    Lines starting with '#' are comments. Overlapping windows on one
    6-tuple with different classes are contradictory and rejected.
    """
    rules = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].lstrip().startswith("#"):
                continue
            if len(row) != 8:
                raise ConfigError(f"rules line {lineno}: expected 8 fields")
            src, dst, sport, dport, proto, start, end, cls = [f.strip() for f in row]
            if not cls:
                raise ConfigError(f"rules line {lineno}: empty attack class")
            key = FlowKey(src, dst, int(sport), int(dport), int(proto),
                          float(start), float(end))
            rules.append(LabelRule(key, cls))
    _check_overlaps(rules)
    return rules


def _check_overlaps(rules: list[LabelRule]) -> None:
    by_tuple: dict[tuple, list[LabelRule]] = {}
    for r in rules:
        by_tuple.setdefault(r.key.tuple5, []).append(r)
    for group in by_tuple.values():
        for i, a in enumerate(group):
            for b in group[i + 1:]:
                overlap = (a.key.window_start <= b.key.window_end
                           and b.key.window_start <= a.key.window_end)
                if overlap and a.attack_class != b.attack_class:
                    raise ConfigError(
                        f"contradictory rules for {a.key.tuple5}: "
                        f"{a.attack_class} vs {b.attack_class} in "
                        f"overlapping windows"
                    )


class _RuleIndex:
    def __init__(self, rules: list[LabelRule]):
        self._by_tuple: dict[tuple, list[LabelRule]] = {}
        for r in rules:
            self._by_tuple.setdefault(r.key.tuple5, []).append(r)

    def match(self, pkt: RawPacket) -> tuple[LabelRule, str] | None:
        """Match the packet or its reply direction against the rules."""
        fwd = (pkt.src_ip, pkt.dst_ip, pkt.src_port, pkt.dst_port, PROTO_TCP)
        rev = (pkt.dst_ip, pkt.src_ip, pkt.dst_port, pkt.src_port, PROTO_TCP)
        ts = pkt.timestamp
        for key, direction in ((fwd, FORWARD), (rev, BACKWARD)):
            for rule in self._by_tuple.get(key, ()):
                if rule.key.window_start <= ts <= rule.key.window_end:
                    return rule, direction
        return None


def label_packets(packets: Iterable[RawPacket],
                  rules: list[LabelRule]) -> Iterator[LabeledPacket]:
    """Assign label/class/direction to each packet, preserving order.

    A packet is an attack iff some rule matches its 6-tuple (either
    direction) with the capture time inside the rule window; direction is
    forward iff the packet's source equals the rule's source. Everything
    else is benign, with direction decided by the first-sender heuristic.
    """
    index = _RuleIndex(rules)
    first_sender: dict[frozenset, tuple] = {}
    for pkt in packets:
        hit = index.match(pkt)
        if hit is not None:
            rule, direction = hit
            yield LabeledPacket(pkt, "attack", rule.attack_class, direction)
            continue
        endpoints = frozenset([(pkt.src_ip, pkt.src_port),
                               (pkt.dst_ip, pkt.dst_port)])
        origin = first_sender.setdefault(endpoints, (pkt.src_ip, pkt.src_port))
        direction = FORWARD if origin == (pkt.src_ip, pkt.src_port) else BACKWARD
        yield LabeledPacket(pkt, "benign", None, direction)


def filter_forward(packets: Iterable[LabeledPacket]) -> Iterator[LabeledPacket]:
    """Keep exactly the forward-direction subset, order preserved."""
    return (p for p in packets if p.direction == FORWARD)
