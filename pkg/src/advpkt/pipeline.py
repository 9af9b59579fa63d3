"""End-to-end orchestration: config, dataset builds, training, evaluation.

A run owns an output directory (lock file) and executes stages in order:
ingest -> classify -> train -> evaluate. Every stage writes a stamp with
the config hash; rerunning with an unchanged config is a no-op and a
changed config refuses to overwrite without force. All randomness flows
from one root seed through named substreams, so each stage reproduces
independently and two runs with the same config are byte-identical.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import os
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from . import agent as agent_mod
from . import models as models_mod
from .env import PerturbEnv, RewardSpec
from .errors import ConfigError, MissingArtifactError
from .evaluation import evaluate_agent, permutation_importance
from .features import (FeatureVector, featurize, packet_id, save_byte_map,
                       write_dataset, read_dataset, dataset_matrix)
from .labeling import (FORWARD, LabeledPacket, filter_forward, label_packets,
                       load_rules)
from .pcap import read_pcap, write_pcap
from .perturb import Action
from .seeds import substream
from .synthetic import SyntheticTrafficSpec, generate, write_rules

log = logging.getLogger(__name__)

ENV_OUT_DIR = "ADVPKT_OUT"
ENV_PARALLEL = "ADVPKT_PARALLEL"

STAGES = ("ingest", "classify", "train", "evaluate")

DEFAULTS: dict = {
    "seed": 0,
    "dataset": {
        "min_class_count": 1000,
        "split_a": [0.6, 0.3, 0.1],
        "split_b": [0.7, 0.3],
        "train_eval_split": [0.8, 0.2],
    },
    "sources": {"a": None, "b": None},
    "synthetic": None,
    "classifiers": {
        "surrogate_kinds": ["LR", "DT", "MLP"],
        "test_kinds": ["DT", "RF", "MLP", "DNN"],
        "hyperparams": {},
    },
    "agent": {
        "episodes": 5000,
        "max_steps": 30,
        "batch_size": 256,
        "gamma": 0.8,
        "epsilon_start": 1.0,
        "epsilon_end": 0.01,
        "epsilon_decay": 0.00002,
        "buffer_capacity": 20000,
        "learning_rate": 0.001,
        "target_update": 10,
        "hidden_layers": [256, 128, 64],
        "learn_every": 4,
    },
    "rewards": {"evade_bonus": 200, "fail_penalty": -2},
    "actions": {
        "enabled": [a.name for a in Action],
        "payload_chunk": 32,
    },
    "evaluation": {
        "ks_alpha": 0.05,
        "ks_mode": "per_packet",
        "importance_samples": 300,
        "importance_top_k": 20,
    },
}

# Subtrees whose keys are free-form (validated elsewhere or open-ended).
_FREE_SUBTREES = {("classifiers", "hyperparams"), ("synthetic",),
                  ("sources", "a"), ("sources", "b")}

_SOURCE_KEYS = {"pcaps", "rules"}


def _validate_keys(cfg: dict, defaults: dict, path: tuple = ()) -> None:
    for key, value in cfg.items():
        here = path + (key,)
        if here in _FREE_SUBTREES:
            continue
        if key not in defaults:
            raise ConfigError(f"unknown config key: {'.'.join(here)}")
        if isinstance(value, dict) and isinstance(defaults[key], dict):
            _validate_keys(value, defaults[key], here)


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


@dataclass(frozen=True)
class RunConfig:
    raw: dict

    @classmethod
    def load(cls, source: str | Path | dict | None = None,
             seed: int | None = None) -> "RunConfig":
        override: dict = {}
        if isinstance(source, dict):
            override = source
        elif source is not None:
            text = Path(source).read_text()
            override = yaml.safe_load(text) or {}
            if not isinstance(override, dict):
                raise ConfigError(f"{source}: config must be a mapping")
        _validate_keys(override, DEFAULTS)
        merged = _merge(DEFAULTS, override)
        if seed is not None:
            merged["seed"] = int(seed)
        cfg = cls(merged)
        cfg.validate()
        return cfg

    def __getitem__(self, key: str):
        return self.raw[key]

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    def validate(self) -> None:
        for name in ("split_a", "split_b", "train_eval_split"):
            fracs = self.raw["dataset"][name]
            if abs(sum(fracs) - 1.0) > 1e-9:
                raise ConfigError(f"dataset.{name} fractions must sum to 1")
            if any(f < 0 for f in fracs):
                raise ConfigError(f"dataset.{name} fractions must be >= 0")
        for side in ("a", "b"):
            src = self.raw["sources"][side]
            if src is not None:
                unknown = set(src) - _SOURCE_KEYS
                if unknown:
                    raise ConfigError(
                        f"sources.{side}: unknown keys {sorted(unknown)}")
        if self.raw["sources"]["a"] is None and self.raw["synthetic"] is None:
            raise ConfigError("need sources.a (pcaps+rules) or a synthetic block")
        for name in self.raw["actions"]["enabled"]:
            if name not in Action.__members__:
                raise ConfigError(f"unknown action {name!r}")
        if self.raw["synthetic"] is not None:
            SyntheticTrafficSpec.from_config(self.raw["synthetic"])

    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def rng(self, name: str) -> np.random.Generator:
        return substream(self.seed, name)

    def model_seed(self, name: str) -> int:
        return int(self.rng(name).integers(2 ** 31))

    def actions(self) -> tuple:
        return tuple(Action[n] for n in self.raw["actions"]["enabled"])

    def agent_config(self) -> agent_mod.AgentConfig:
        a = self.raw["agent"]
        return agent_mod.AgentConfig(
            episodes=a["episodes"], batch_size=a["batch_size"],
            gamma=a["gamma"], epsilon_start=a["epsilon_start"],
            epsilon_end=a["epsilon_end"], epsilon_decay=a["epsilon_decay"],
            buffer_capacity=a["buffer_capacity"],
            learning_rate=a["learning_rate"],
            target_update=a["target_update"],
            hidden_layers=tuple(a["hidden_layers"]),
            learn_every=a["learn_every"])

    def reward_spec(self) -> RewardSpec:
        r = self.raw["rewards"]
        return RewardSpec(r["evade_bonus"], r["fail_penalty"])


# -- split helpers ----------------------------------------------------------

def largest_remainder(n: int, fractions: list[float]) -> list[int]:
    """Integer allocation of n by fractions; remainders favor earlier parts."""
    exact = [n * f for f in fractions]
    base = [int(x) for x in exact]
    leftover = n - sum(base)
    order = sorted(range(len(fractions)),
                   key=lambda i: (-(exact[i] - base[i]), i))
    for i in order[:leftover]:
        base[i] += 1
    return base


def split_indices(n: int, fractions: list[float],
                  rng: np.random.Generator) -> list[np.ndarray]:
    """Uniform shuffle then largest-remainder slicing."""
    order = rng.permutation(n)
    counts = largest_remainder(n, fractions)
    out = []
    at = 0
    for c in counts:
        out.append(order[at:at + c])
        at += c
    return out


def stratified_split(labels: np.ndarray, fractions: list[float],
                     rng: np.random.Generator) -> list[np.ndarray]:
    """Per-label split, keeping class balance in every part."""
    parts = [[] for _ in fractions]
    for value in np.unique(labels):
        members = np.nonzero(labels == value)[0]
        for part, chunk in zip(parts, split_indices(len(members), fractions,
                                                    rng)):
            part.append(members[chunk])
    return [np.sort(np.concatenate(p)) for p in parts]


def most_common_payload(packets: list[LabeledPacket]) -> bytes:
    """Most frequent benign TCP payload; ties break lexicographically."""
    counts = Counter(p.packet.tcp_payload for p in packets
                     if p.label == "benign" and p.packet.tcp_payload)
    if not counts:
        return b""
    best = max(counts.items(), key=lambda kv: (kv[1], _neg_bytes(kv[0])))
    return best[0]


def _neg_bytes(b: bytes) -> bytes:
    # invert so that max() picks the lexicographically smallest on ties
    return bytes(255 - x for x in b)


def split_hash(ids: list[str]) -> str:
    h = hashlib.sha256()
    for i in sorted(ids):
        h.update(i.encode())
    return h.hexdigest()[:16]


# -- stage stamps and locking -------------------------------------------------

def _stamp_path(stage_dir: Path) -> Path:
    return stage_dir / "stage.json"


def _check_stamp(stage_dir: Path, config_hash: str, force: bool,
                 stage: str) -> bool:
    """True when the stage can be skipped (hash match and not forced)."""
    stamp = _stamp_path(stage_dir)
    if not stamp.exists():
        return False
    recorded = json.loads(stamp.read_text()).get("config_hash")
    if recorded == config_hash and not force:
        log.info("stage %s: unchanged config, skipping", stage)
        return True
    if recorded != config_hash and not force:
        raise ConfigError(
            f"stage {stage}: output exists for config {recorded}, current "
            f"is {config_hash}; pass --force to overwrite")
    return False


def _write_stamp(stage_dir: Path, config_hash: str, extra: dict | None = None
                 ) -> None:
    payload = {"config_hash": config_hash}
    payload.update(extra or {})
    _stamp_path(stage_dir).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n")


class RunLock:
    """Exclusive ownership of the output directory for one pipeline run."""

    def __init__(self, out_dir: Path):
        self.path = out_dir / "run.lock"

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConfigError(
                f"{self.path} exists: another run owns this directory "
                f"(remove the lock if that run is dead)") from None
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)


# -- the pipeline -------------------------------------------------------------

SPLIT_NAMES_A = ("train", "model_test", "agent_test")
SPLIT_NAMES_B = ("model_test_2", "agent_test_2")


class Pipeline:
    def __init__(self, config: RunConfig, out_dir: str | Path,
                 force: bool = False):
        self.config = config
        self.out = Path(os.environ.get(ENV_OUT_DIR) or out_dir)
        self.force = force
        self.hash = config.config_hash()
        self.parallel = int(os.environ.get(ENV_PARALLEL, "1"))
        self.out.mkdir(parents=True, exist_ok=True)

    def _display_path(self, path) -> str:
        """Manifest paths relative to the run dir stay byte-stable across
        runs into different directories."""
        try:
            return str(Path(path).resolve().relative_to(self.out.resolve()))
        except ValueError:
            return str(path)

    # paths
    @property
    def dataset_dir(self) -> Path:
        return self.out / "dataset"

    @property
    def models_dir(self) -> Path:
        return self.out / "models"

    @property
    def agents_dir(self) -> Path:
        return self.out / "agents"

    @property
    def reports_dir(self) -> Path:
        return self.out / "reports"

    @property
    def manifest_path(self) -> Path:
        return self.dataset_dir / "manifest.json"

    def run(self, stage: str) -> None:
        if stage not in STAGES + ("all",):
            raise ConfigError(f"unknown stage {stage!r}")
        with RunLock(self.out):
            stages = STAGES if stage == "all" else (stage,)
            for s in stages:
                getattr(self, f"stage_{s}")()

    # -- ingest ---------------------------------------------------------

    def _collect_source(self, side: str) -> tuple[list[LabeledPacket], list]:
        """Forward labeled packets for one source, plus ingest stats."""
        src = self.config["sources"][side]
        stats = []
        if side == "a" and src is None:
            spec = SyntheticTrafficSpec.from_config(self.config["synthetic"])
            packets, rules = generate(spec, self.config.rng("synthetic"))
            pcap_path = self.dataset_dir / "synthetic.pcap"
            rules_path = self.dataset_dir / "synthetic_rules.csv"
            write_pcap(pcap_path, packets)
            write_rules(rules_path, rules)
            src = {"pcaps": [str(pcap_path)], "rules": str(rules_path)}
        if src is None:
            return [], stats
        rules = load_rules(src["rules"])
        labeled: list[LabeledPacket] = []
        for path in src["pcaps"]:
            packets, st = read_pcap(path)
            stats.append({"path": self._display_path(path),
                          "records": st.records,
                          "yielded": st.yielded, "skipped": st.skipped,
                          "reasons": dict(sorted(st.skip_reasons.items())),
                          "checksum_flagged": st.checksum_flagged})
            labeled.extend(label_packets(packets, rules))
        forward = list(filter_forward(labeled))
        return _dedupe(forward), stats

    def stage_ingest(self) -> dict:
        self.dataset_dir.mkdir(parents=True, exist_ok=True)
        if _check_stamp(self.dataset_dir, self.hash, self.force, "ingest"):
            return json.loads(self.manifest_path.read_text())

        manifest: dict = {"config_hash": self.hash,
                          "seed": self.config.seed, "classes": {},
                          "excluded_classes": {}, "ingest": {}}
        save_byte_map(self.dataset_dir / "bytemap.json")

        forward_a, stats_a = self._collect_source("a")
        manifest["ingest"]["a"] = stats_a
        corpus = most_common_payload(forward_a)
        (self.dataset_dir / "corpus.bin").write_bytes(corpus)
        manifest["corpus"] = {
            "length": len(corpus),
            "sha256": hashlib.sha256(corpus).hexdigest()[:16],
        }

        self._build_splits(manifest, forward_a, "a", SPLIT_NAMES_A,
                           self.config["dataset"]["split_a"])
        forward_b, stats_b = self._collect_source("b")
        if forward_b:
            manifest["ingest"]["b"] = stats_b
            self._build_splits(manifest, forward_b, "b", SPLIT_NAMES_B,
                               self.config["dataset"]["split_b"])

        self.manifest_path.write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        _write_stamp(self.dataset_dir, self.hash)
        return manifest

    def _build_splits(self, manifest: dict, forward: list[LabeledPacket],
                      side: str, split_names: tuple,
                      fractions: list[float]) -> None:
        benign = [p for p in forward if p.label == "benign"]
        by_class: dict[str, list[LabeledPacket]] = {}
        for p in forward:
            if p.label == "attack":
                if p.attack_class is None:
                    raise ConfigError("attack packet without a class label")
                by_class.setdefault(p.attack_class, []).append(p)

        min_count = int(self.config["dataset"]["min_class_count"])
        for cls in sorted(by_class):
            malicious = by_class[cls]
            if len(malicious) < min_count:
                log.warning("class %s: %d forward packets < minimum %d; "
                            "excluded", cls, len(malicious), min_count)
                manifest["excluded_classes"][cls] = len(malicious)
                continue
            rng = self.config.rng(f"dataset/{side}/{cls}")
            pool = _balance(malicious, benign, rng)
            labels = np.array([1 if p.label == "attack" else 0 for p in pool])
            parts = stratified_split(labels, fractions, rng)
            cls_dir = self.dataset_dir / cls
            cls_dir.mkdir(parents=True, exist_ok=True)
            entry = manifest["classes"].setdefault(cls, {"splits": {}})
            for name, idx in zip(split_names, parts):
                split = [pool[i] for i in idx]
                vectors = [featurize(p) for p in split]
                write_dataset(cls_dir / f"{name}.csv", vectors)
                write_pcap(cls_dir / f"{name}_malicious.pcap",
                           [p.packet for p in split if p.label == "attack"])
                ids = [v.provenance for v in vectors]
                entry["splits"][name] = {
                    "count": len(split),
                    "malicious": int(labels[idx].sum()),
                    "sha256": split_hash(ids),
                }

    # -- classify ---------------------------------------------------------

    def _classes(self) -> list[str]:
        if not self.manifest_path.exists():
            raise MissingArtifactError(str(self.manifest_path), "ingest")
        manifest = json.loads(self.manifest_path.read_text())
        return sorted(manifest["classes"])

    def _train_models(self, cls: str, split: str, kinds: list[str],
                      tag: str) -> list[tuple[models_mod.ClassifierModel, float]]:
        csv_path = self.dataset_dir / cls / f"{split}.csv"
        if not csv_path.exists():
            raise MissingArtifactError(str(csv_path), "ingest")
        vectors = read_dataset(csv_path)
        X, y = dataset_matrix(vectors)
        rng = self.config.rng(f"classify/{tag}/{cls}")
        tr, ev = stratified_split(
            y, self.config["dataset"]["train_eval_split"], rng)
        overrides = self.config["classifiers"]["hyperparams"]
        out = []
        for kind in kinds:
            seed = self.config.model_seed(f"classify/{tag}/{cls}/{kind}")
            model = models_mod.train(
                kind, (X[tr], y[tr]), hyperparams=overrides.get(kind),
                seed=seed, eval_split=(X[ev], y[ev]))
            log.info("%s %s %s: eval accuracy %.4f", tag, cls, kind,
                     model.eval_accuracy)
            out.append((model, model.eval_accuracy))
        return out

    def stage_classify(self) -> None:
        self.models_dir.mkdir(parents=True, exist_ok=True)
        if _check_stamp(self.models_dir, self.hash, self.force, "classify"):
            return
        surrogate_kinds = self.config["classifiers"]["surrogate_kinds"]
        test_kinds = self.config["classifiers"]["test_kinds"]
        accuracies: dict = {}
        for cls in self._classes():
            candidates = self._train_models(cls, "train", surrogate_kinds,
                                            "surrogate")
            ensemble = models_mod.select_ensemble(
                candidates, kinds=tuple(surrogate_kinds))
            sdir = self.models_dir / "surrogate" / cls
            sdir.mkdir(parents=True, exist_ok=True)
            for member in ensemble.members:
                models_mod.save_model(sdir / f"{member.kind}.npz", member)
            accuracies[f"surrogate/{cls}"] = {
                m.kind: m.eval_accuracy for m in ensemble.members}

            for tag, split in (("test1", "model_test"),
                               ("test2", "model_test_2")):
                if not (self.dataset_dir / cls / f"{split}.csv").exists():
                    continue
                tdir = self.models_dir / tag / cls
                tdir.mkdir(parents=True, exist_ok=True)
                for model, _ in self._train_models(cls, split, test_kinds,
                                                   tag):
                    models_mod.save_model(tdir / f"{model.kind}.npz", model)
                    accuracies.setdefault(f"{tag}/{cls}", {})[model.kind] = \
                        model.eval_accuracy
        _write_stamp(self.models_dir, self.hash, {"accuracies": accuracies})

    def _load_ensemble(self, cls: str) -> models_mod.Ensemble:
        sdir = self.models_dir / "surrogate" / cls
        members = []
        for kind in self.config["classifiers"]["surrogate_kinds"]:
            path = sdir / f"{kind}.npz"
            if not path.exists():
                raise MissingArtifactError(str(path), "classify")
            members.append(models_mod.load_model(path))
        return models_mod.Ensemble(tuple(members))

    def _load_pool(self, cls: str, split: str) -> list[LabeledPacket]:
        path = self.dataset_dir / cls / f"{split}_malicious.pcap"
        if not path.exists():
            raise MissingArtifactError(str(path), "ingest")
        packets, _ = read_pcap(path)
        return [LabeledPacket(p, "attack", cls, FORWARD) for p in packets]

    def _corpus(self) -> bytes:
        path = self.dataset_dir / "corpus.bin"
        if not path.exists():
            raise MissingArtifactError(str(path), "ingest")
        return path.read_bytes()

    def _make_env(self, cls: str, pool: list[LabeledPacket],
                  ensemble: models_mod.Ensemble) -> PerturbEnv:
        return PerturbEnv(
            pool=pool, ensemble=ensemble, corpus=self._corpus(),
            rng=self.config.rng(f"env/{cls}"),
            reward_spec=self.config.reward_spec(),
            max_steps=int(self.config["agent"]["max_steps"]),
            payload_chunk=int(self.config["actions"]["payload_chunk"]),
            actions=self.config.actions())

    def stage_train(self, attack: str | None = None) -> None:
        self.agents_dir.mkdir(parents=True, exist_ok=True)
        if attack and attack not in self._classes():
            raise ConfigError(f"no dataset for attack class {attack!r}")
        classes = [attack] if attack else self._classes()
        for cls in classes:
            stamp_dir = self.agents_dir / cls
            stamp_dir.mkdir(parents=True, exist_ok=True)
            if _check_stamp(stamp_dir, self.hash, self.force, f"train/{cls}"):
                continue
            ensemble = self._load_ensemble(cls)
            pool = self._load_pool(cls, "train")
            env = self._make_env(cls, pool, ensemble)
            policy, curve, trainer = agent_mod.train_agent(
                env, self.config.agent_config(),
                init_rng=self.config.rng(f"agent-init/{cls}"),
                explore_rng=self.config.rng(f"explore/{cls}"),
                sample_rng=self.config.rng(f"replay/{cls}"))
            agent_mod.save_checkpoint(stamp_dir / "checkpoint.npz",
                                      trainer, cls, self.config.seed)
            agent_mod.write_reward_curve(stamp_dir / "reward_curve.csv",
                                         curve)
            log.info("trained agent for %s: %d episodes, %d env steps",
                     cls, len(curve), trainer.env_steps)
            _write_stamp(stamp_dir, self.hash)

    # -- evaluate ---------------------------------------------------------

    def _load_test_models(self, tag: str, cls: str) -> list[tuple[str, object]]:
        tdir = self.models_dir / tag / cls
        out = []
        if tdir.exists():
            for kind in self.config["classifiers"]["test_kinds"]:
                path = tdir / f"{kind}.npz"
                if path.exists():
                    out.append((f"{tag}_{kind}", models_mod.load_model(path)))
        return out

    def stage_evaluate(self) -> None:
        self.reports_dir.mkdir(parents=True, exist_ok=True)
        if _check_stamp(self.reports_dir, self.hash, self.force, "evaluate"):
            return
        eval_cfg = self.config["evaluation"]
        asr_frames = []
        ood_frames = []
        for cls in self._classes():
            ckpt_path = self.agents_dir / cls / "checkpoint.npz"
            if not ckpt_path.exists():
                raise MissingArtifactError(str(ckpt_path), "train")
            ckpt = agent_mod.load_checkpoint(ckpt_path)
            ensemble = self._load_ensemble(cls)
            models: list[tuple[str, object]] = [
                (f"surrogate_{m.kind}", m) for m in ensemble.members]
            models += self._load_test_models("test1", cls)

            pools = [("agent_test", "test1")]
            if (self.dataset_dir / cls / "agent_test_2_malicious.pcap").exists():
                pools.append(("agent_test_2", "test2"))
            train_ids = {packet_id(p.packet)
                         for p in self._load_pool(cls, "train")}
            for split, test_tag in pools:
                pool = self._load_pool(cls, split)
                env = self._make_env(cls, pool, ensemble)
                use_models = models if test_tag == "test1" else \
                    self._load_test_models("test2", cls)
                report, ood, adversarial = evaluate_agent(
                    ckpt.policy, cls, use_models, env,
                    alpha=float(eval_cfg["ks_alpha"]),
                    ks_mode=eval_cfg["ks_mode"], train_ids=train_ids)
                suffix = "" if split == "agent_test" else "_2"
                write_pcap(self.reports_dir / f"adversarial_{cls}{suffix}.pcap",
                           adversarial)
                asr_frames.append(report.to_frame())
                ood_frames.append(ood.to_frame())

            self._write_importance(cls, ensemble)

        pd.concat(asr_frames, ignore_index=True).to_csv(
            self.reports_dir / "asr.csv", index=False)
        pd.concat(ood_frames, ignore_index=True).to_csv(
            self.reports_dir / "ood.csv", index=False)
        _write_stamp(self.reports_dir, self.hash)

    def _write_importance(self, cls: str,
                          ensemble: models_mod.Ensemble) -> None:
        eval_cfg = self.config["evaluation"]
        vectors = read_dataset(self.dataset_dir / cls / "agent_test.csv")
        limit = int(eval_cfg["importance_samples"])
        X, y = dataset_matrix(vectors[:limit])
        targets = [(f"surrogate_{m.kind}", m) for m in ensemble.members
                   if m.kind == "DT"]
        targets += [t for t in self._load_test_models("test1", cls)
                    if t[0].endswith("_DT")]
        rng = self.config.rng(f"importance/{cls}")
        top_k = int(eval_cfg["importance_top_k"])
        for name, model in targets:
            ranked = permutation_importance(model, (X, y), rng, top_k=top_k)
            lines = ["feature,importance"]
            lines += [f"f{j:04d},{imp:.6f}" for j, imp in ranked]
            (self.reports_dir / f"importance_{cls}_{name}.csv").write_text(
                "\n".join(lines) + "\n")


def _dedupe(packets: list[LabeledPacket]) -> list[LabeledPacket]:
    """Drop byte-identical packets with identical timestamps.

    Content hashes are the sample ids; indistinguishable duplicates would
    otherwise trip the split-disjointness checks.
    """
    seen: set[str] = set()
    out = []
    for p in packets:
        pid = packet_id(p.packet)
        if pid in seen:
            continue
        seen.add(pid)
        out.append(p)
    return out


def _balance(malicious: list[LabeledPacket], benign: list[LabeledPacket],
             rng: np.random.Generator) -> list[LabeledPacket]:
    """1:1 class balance by downsampling the majority side."""
    if len(benign) > len(malicious):
        pick = rng.permutation(len(benign))[:len(malicious)]
        benign = [benign[i] for i in np.sort(pick)]
    elif len(malicious) > len(benign) and benign:
        pick = rng.permutation(len(malicious))[:len(benign)]
        malicious = [malicious[i] for i in np.sort(pick)]
    return malicious + benign
