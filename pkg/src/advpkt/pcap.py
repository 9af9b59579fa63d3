"""Classic PCAP container reader and writer.

Only the classic (libpcap) format is supported, both endiannesses, with
the nanosecond-timestamp magic normalized to microseconds. pcapng files
are rejected with a clear error; one container format keeps the reader
bit-exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from .errors import FormatError
from .packet import ETH_HEADER_LEN, PacketSkip, RawPacket, parse_frame

MAGIC_USEC = 0xA1B2C3D4
MAGIC_NSEC = 0xA1B23C4D
MAGIC_PCAPNG = 0x0A0D0D0A
LINKTYPE_ETHERNET = 1

GLOBAL_HEADER_LEN = 24
RECORD_HEADER_LEN = 16


@dataclass
class ParseStats:
    """Per-file ingest accounting; skips never abort the stream."""

    records: int = 0
    yielded: int = 0
    skipped: int = 0
    skip_reasons: dict = field(default_factory=dict)
    checksum_flagged: int = 0

    def note_skip(self, reason: str) -> None:
        self.skipped += 1
        self.skip_reasons[reason] = self.skip_reasons.get(reason, 0) + 1


class PcapReader:
    """Iterates Ethernet/IPv4/TCP packets out of a classic PCAP file.

    Non-TCP, non-IPv4, fragmented, and truncated records are counted in
    ``stats`` and skipped. Capture order is preserved.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.stats = ParseStats()
        header = self.path.read_bytes()[:GLOBAL_HEADER_LEN]
        if len(header) < GLOBAL_HEADER_LEN:
            raise FormatError(f"{self.path}: too short for a pcap global header")
        magic_be = struct.unpack(">I", header[:4])[0]
        magic_le = struct.unpack("<I", header[:4])[0]
        if magic_be == MAGIC_PCAPNG:
            raise FormatError(
                f"{self.path}: pcapng is not supported; convert to classic pcap"
            )
        if magic_be in (MAGIC_USEC, MAGIC_NSEC):
            self._endian = ">"
            magic = magic_be
        elif magic_le in (MAGIC_USEC, MAGIC_NSEC):
            self._endian = "<"
            magic = magic_le
        else:
            raise FormatError(f"{self.path}: bad pcap magic 0x{magic_be:08x}")
        self._nanosecond = magic == MAGIC_NSEC
        network = struct.unpack(self._endian + "I", header[20:24])[0]
        if network != LINKTYPE_ETHERNET:
            raise FormatError(f"{self.path}: unsupported link type {network}")

    def __iter__(self) -> Iterator[RawPacket]:
        rec_fmt = self._endian + "IIII"
        with open(self.path, "rb") as fh:
            fh.seek(GLOBAL_HEADER_LEN)
            while True:
                rec = fh.read(RECORD_HEADER_LEN)
                if not rec:
                    break
                if len(rec) < RECORD_HEADER_LEN:
                    self.stats.records += 1
                    self.stats.note_skip("truncated record header")
                    break
                ts_sec, ts_frac, incl_len, orig_len = struct.unpack(rec_fmt, rec)
                data = fh.read(incl_len)
                self.stats.records += 1
                if len(data) < incl_len:
                    self.stats.note_skip("truncated record body")
                    break
                ts_usec = ts_frac // 1000 if self._nanosecond else ts_frac
                try:
                    pkt = parse_frame(data, ts_sec, ts_usec, orig_len)
                except PacketSkip as skip:
                    self.stats.note_skip(skip.reason)
                    continue
                if not (pkt.ip_checksum_ok and pkt.tcp_checksum_ok):
                    self.stats.checksum_flagged += 1
                self.stats.yielded += 1
                yield pkt


def read_pcap(path: str | Path) -> tuple[list[RawPacket], ParseStats]:
    """Read a whole capture; convenience wrapper around PcapReader."""
    reader = PcapReader(path)
    packets = list(reader)
    return packets, reader.stats


def write_pcap(path: str | Path, packets: list[RawPacket]) -> None:
    """Write packets as a classic microsecond-timestamp PCAP (Ethernet)."""
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IHHiIII", MAGIC_USEC, 2, 4, 0, 0, 65535,
                             LINKTYPE_ETHERNET))
        for p in packets:
            data = p.serialize()
            fh.write(struct.pack(">IIII", p.ts_sec, p.ts_usec, len(data),
                                 max(p.orig_len, len(data))))
            fh.write(data)
