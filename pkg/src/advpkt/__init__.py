"""Adversarial TCP/IPv4 packet generation against byte-level classifiers.

Pipeline: parse captures into labeled per-packet byte features, train
packet classifiers (a surrogate ensemble plus held-out test models),
train one double-Q-learning perturbation agent per attack class, and
score evasion (ASR) and distribution shift (two-sample K-S).
"""

__version__ = "0.1.0"
