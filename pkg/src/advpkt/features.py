"""Byte-level feature vectors and the feature-index <-> byte-offset map.

A packet maps to a fixed 1525-value vector: IP header bytes minus the two
addresses, TCP header bytes minus the two ports, then the payload, each
byte divided by 255, truncated at 1525 and zero-padded. The Ethernet
header is dropped entirely. The byte map is the single source of truth
for which feature a header byte lands on and is serialized next to every
dataset.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .labeling import LabeledPacket
from .packet import RawPacket

N_FEATURES = 1525

# Excluded byte ranges, as (start, stop) offsets within each layer.
IP_SKIP = (12, 20)  # source + destination address
TCP_SKIP = (0, 4)  # source + destination port

LAYOUT = {
    "version": 1,
    "length": N_FEATURES,
    "normalization": "byte/255",
    "segments": [
        {"layer": "ip_header", "skip": list(range(*IP_SKIP))},
        {"layer": "tcp_header", "skip": list(range(*TCP_SKIP))},
        {"layer": "payload", "skip": []},
    ],
}

PAD = ("pad", -1)


@dataclass(frozen=True)
class FeatureVector:
    """Normalized byte features plus the label channel kept alongside."""

    values: np.ndarray  # shape (1525,), each value k/255
    label: int  # 0 benign, 1 malicious
    attack_class: str | None
    provenance: str  # packet id

    def __post_init__(self):
        if self.values.shape != (N_FEATURES,):
            raise ValueError(f"feature vector must have length {N_FEATURES}")


def stripped_bytes(p: RawPacket) -> bytes:
    """Packet bytes in feature order, before truncation and padding."""
    return (p.ip_header[:IP_SKIP[0]] + p.ip_header[IP_SKIP[1]:]
            + p.tcp_header[TCP_SKIP[1]:] + p.tcp_payload)


def stripped_length(p: RawPacket) -> int:
    return (len(p.ip_header) - (IP_SKIP[1] - IP_SKIP[0])
            + len(p.tcp_header) - (TCP_SKIP[1] - TCP_SKIP[0])
            + len(p.tcp_payload))


def byte_map(p: RawPacket) -> list[tuple[str, int]]:
    """Per-feature origin: (layer, byte offset) or ('pad', -1)."""
    origins: list[tuple[str, int]] = []
    for off in range(len(p.ip_header)):
        if not IP_SKIP[0] <= off < IP_SKIP[1]:
            origins.append(("ip_header", off))
    for off in range(TCP_SKIP[1], len(p.tcp_header)):
        origins.append(("tcp_header", off))
    for off in range(len(p.tcp_payload)):
        origins.append(("payload", off))
    origins = origins[:N_FEATURES]
    origins.extend([PAD] * (N_FEATURES - len(origins)))
    return origins


def feature_index(p: RawPacket, layer: str, offset: int) -> int | None:
    """Feature index a byte maps to, or None if excluded or truncated."""
    ip_kept = len(p.ip_header) - (IP_SKIP[1] - IP_SKIP[0])
    tcp_kept = len(p.tcp_header) - (TCP_SKIP[1] - TCP_SKIP[0])
    if layer == "ip_header":
        if IP_SKIP[0] <= offset < IP_SKIP[1]:
            return None
        idx = offset if offset < IP_SKIP[0] else offset - (IP_SKIP[1] - IP_SKIP[0])
    elif layer == "tcp_header":
        if offset < TCP_SKIP[1]:
            return None
        idx = ip_kept + (offset - TCP_SKIP[1])
    elif layer == "payload":
        idx = ip_kept + tcp_kept + offset
    else:
        raise ValueError(f"unknown layer {layer!r}")
    return idx if idx < N_FEATURES else None


def _normalize(raw: bytes) -> np.ndarray:
    values = np.zeros(N_FEATURES, dtype=np.float64)
    raw = raw[:N_FEATURES]
    values[:len(raw)] = np.frombuffer(raw, dtype=np.uint8) / 255.0
    return values


def featurize(lp: LabeledPacket, provenance: str = "") -> FeatureVector:
    """Pure function from a labeled packet to its feature vector."""
    return FeatureVector(
        values=_normalize(stripped_bytes(lp.packet)),
        label=1 if lp.label == "attack" else 0,
        attack_class=lp.attack_class,
        provenance=provenance or packet_id(lp.packet),
    )


def featurize_raw(p: RawPacket, label: int, attack_class: str | None = None,
                  provenance: str = "") -> FeatureVector:
    return FeatureVector(
        values=_normalize(stripped_bytes(p)),
        label=label,
        attack_class=attack_class,
        provenance=provenance or packet_id(p),
    )


def defeaturize_sync(p: RawPacket, template: FeatureVector) -> FeatureVector:
    """Recompute features after a raw-packet mutation.

    Identical to featurizing the mutated packet relabeled with the
    template's label channel; keeps environment state consistent.
    """
    return FeatureVector(
        values=_normalize(stripped_bytes(p)),
        label=template.label,
        attack_class=template.attack_class,
        provenance=template.provenance,
    )


def packet_id(p: RawPacket, index: int | None = None) -> str:
    """Content hash identifying a dataset sample.

    The capture index (when given) keeps ids unique for byte-identical
    retransmissions, so split-disjointness checks do not false-positive.
    """
    h = hashlib.sha256(p.content_hash_input())
    if index is not None:
        h.update(str(index).encode())
    return h.hexdigest()[:16]


# -- dataset container -------------------------------------------------

FEATURE_COLUMNS = [f"f{i:04d}" for i in range(N_FEATURES)]


def write_dataset(path: str | Path, vectors: list[FeatureVector]) -> None:
    """CSV with header f0000..f1524,label,attack_class,packet_id."""
    data = np.stack([v.values for v in vectors]) if vectors else \
        np.empty((0, N_FEATURES))
    df = pd.DataFrame(data, columns=FEATURE_COLUMNS)
    df["label"] = [v.label for v in vectors]
    df["attack_class"] = [v.attack_class or "" for v in vectors]
    df["packet_id"] = [v.provenance for v in vectors]
    df.to_csv(path, index=False)


def read_dataset(path: str | Path) -> list[FeatureVector]:
    df = pd.read_csv(path, keep_default_na=False,
                     float_precision="round_trip")
    values = df[FEATURE_COLUMNS].to_numpy(dtype=np.float64)
    out = []
    for i in range(len(df)):
        cls = df["attack_class"].iat[i]
        out.append(FeatureVector(
            values=values[i],
            label=int(df["label"].iat[i]),
            attack_class=cls if cls else None,
            provenance=str(df["packet_id"].iat[i]),
        ))
    return out


def dataset_matrix(vectors: list[FeatureVector]) -> tuple[np.ndarray, np.ndarray]:
    """(X, y) arrays for model training."""
    X = np.stack([v.values for v in vectors])
    y = np.array([v.label for v in vectors], dtype=np.int64)
    return X, y


def save_byte_map(path: str | Path) -> None:
    Path(path).write_text(json.dumps(LAYOUT, indent=2, sort_keys=True) + "\n")


def load_byte_map(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
