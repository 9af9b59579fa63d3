"""Scoring: adversarial success rate, K-S distribution shift, importance.

ASR = (FN_p - FN_original) / TP per (agent, model) pair: the fraction of
correctly-detected malicious packets that evade after perturbation.
Distribution shift of each successful sample is measured with a
two-sample Kolmogorov-Smirnov test between the 1525 feature values of
the original and perturbed packet (population-level pooling available as
a config option).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .env import PerturbEnv
from .errors import ConfigError, UndefinedMetricError
from .features import FeatureVector, featurize
from .labeling import LabeledPacket
from .nets import FeedForward
from .packet import RawPacket

# Classic two-sample K-S critical coefficients: reject iff
# D > c(alpha) * sqrt((n + m) / (n * m)).
KS_COEFFICIENTS = {0.10: 1.22, 0.05: 1.36, 0.01: 1.63}


def asr(tp: int, fn_original: int, fn_p: int) -> float:
    """(FN_p - FN_original) / TP; packets fooling the model before
    perturbation do not count toward the agent."""
    if tp <= 0:
        raise UndefinedMetricError("ASR undefined: no true positives")
    if fn_p < fn_original:
        raise ValueError("fn_p must be >= fn_original")
    return (fn_p - fn_original) / tp


def ecdf(sample: np.ndarray, at: np.ndarray) -> np.ndarray:
    """Empirical CDF of ``sample`` evaluated at each point of ``at``."""
    s = np.sort(np.asarray(sample, dtype=np.float64))
    return np.searchsorted(s, at, side="right") / s.size


def ks_statistic(x, y) -> float:
    """D = sup |eCDF_x - eCDF_y|, exact via the pooled sample points."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size == 0 or y.size == 0:
        raise ValueError("K-S test needs non-empty samples")
    grid = np.concatenate([x, y])
    return float(np.max(np.abs(ecdf(x, grid) - ecdf(y, grid))))


def ks_critical(n: int, m: int, alpha: float = 0.05) -> float:
    try:
        c = KS_COEFFICIENTS[alpha]
    except KeyError:
        raise ConfigError(
            f"unsupported alpha {alpha}; choose from "
            f"{sorted(KS_COEFFICIENTS)}") from None
    return c * np.sqrt((n + m) / (n * m))


def ks_two_sample(x, y, alpha: float = 0.05) -> tuple[float, bool]:
    """(D, reject at the given significance level)."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    d = ks_statistic(x, y)
    return d, d > ks_critical(x.size, y.size, alpha)


@dataclass
class EvalRow:
    agent: str
    model: str
    tp: int
    fn_original: int
    fn_p: int
    asr: float  # NaN when undefined (tp = 0)
    note: str = ""


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([vars(r) for r in self.rows])

    def recomputed_consistent(self) -> bool:
        """Every stored ASR reproduces from its own TP/FN fields."""
        for r in self.rows:
            if r.tp == 0:
                continue
            if asr(r.tp, r.fn_original, r.fn_p) != r.asr:
                return False
        return True


@dataclass
class OODRow:
    agent: str
    model: str
    n_success: int
    n_ood: int
    fraction: float
    alpha: float
    statistics: list[float] = field(default_factory=list)  # D per sample pair


@dataclass
class OODReport:
    rows: list[OODRow] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{k: v for k, v in vars(r).items()
                              if k != "statistics"} for r in self.rows])


def greedy_rollout(env: PerturbEnv, policy: FeedForward,
                   index: int) -> tuple[RawPacket, FeatureVector]:
    """Roll one pool sample under the learned policy (no exploration).

    Stops on full surrogate evasion or after the step budget; returns the
    final mutated packet and its features.
    """
    state = env.reset(index=index)
    done = False
    while not done:
        q = policy.forward(state.vector())[0]
        state, _, done, _ = env.step(int(np.argmax(q)))
    return state.packet, state.features


def evaluate_agent(policy: FeedForward, agent_name: str,
                   models: list[tuple[str, object]],
                   env: PerturbEnv, *, alpha: float = 0.05,
                   ks_mode: str = "per_packet",
                   train_ids: set | None = None
                   ) -> tuple[EvalReport, OODReport, list[RawPacket]]:
    """Greedy rollouts over the whole pool, then per-model Eq.-8 accounting.

    ``models`` are (name, classifier) pairs — held-out test models and,
    when wanted, surrogate members. ``train_ids`` enables the
    split-overlap hard error.
    """
    pool = env.pool
    if train_ids is not None:
        overlap = train_ids & {featurize(lp).provenance for lp in pool}
        if overlap:
            raise ConfigError(
                f"evaluation pool overlaps agent training data: "
                f"{sorted(overlap)[:5]}...")
    if ks_mode not in ("per_packet", "population"):
        raise ConfigError(f"unknown ks_mode {ks_mode!r}")

    originals = [featurize(lp) for lp in pool]
    adversarial: list[RawPacket] = []
    perturbed: list[FeatureVector] = []
    for i in range(len(pool)):
        packet, feats = greedy_rollout(env, policy, i)
        adversarial.append(packet)
        perturbed.append(feats)

    X_orig = np.stack([v.values for v in originals])
    X_adv = np.stack([v.values for v in perturbed])

    eval_report = EvalReport()
    ood_report = OODReport()
    for name, model in models:
        orig_labels = model.predict(X_orig)
        adv_labels = model.predict(X_adv)
        tp = int((orig_labels == 1).sum())
        fn_original = int((orig_labels == 0).sum())
        success = (orig_labels == 1) & (adv_labels == 0)
        fn_p = fn_original + int(success.sum())
        if tp == 0:
            eval_report.rows.append(EvalRow(
                agent_name, name, tp, fn_original, fn_p, float("nan"),
                note="undefined: model has no true positives"))
        else:
            eval_report.rows.append(EvalRow(
                agent_name, name, tp, fn_original, fn_p,
                asr(tp, fn_original, fn_p)))
        ood_report.rows.append(_ood_row(
            agent_name, name, X_orig[success], X_adv[success], alpha,
            ks_mode))
    return eval_report, ood_report, adversarial


def _ood_row(agent: str, model: str, orig: np.ndarray, adv: np.ndarray,
             alpha: float, mode: str) -> OODRow:
    n = len(orig)
    if n == 0:
        return OODRow(agent, model, 0, 0, 0.0, alpha)
    if mode == "population":
        d, reject = ks_two_sample(orig.ravel(), adv.ravel(), alpha)
        return OODRow(agent, model, n, n if reject else 0,
                      1.0 if reject else 0.0, alpha, [d])
    stats = []
    n_ood = 0
    for i in range(n):
        d, reject = ks_two_sample(orig[i], adv[i], alpha)
        stats.append(d)
        n_ood += int(reject)
    return OODRow(agent, model, n, n_ood, n_ood / n, alpha, stats)


def permutation_importance(model, dataset, rng: np.random.Generator,
                           top_k: int | None = None
                           ) -> list[tuple[int, float]]:
    """Features ranked by accuracy drop when their column is shuffled.

    Stand-in for attribution analysis: cheap, model-agnostic, and enough
    to see which bytes a classifier leans on.
    """
    if isinstance(dataset, tuple):
        X, y = dataset
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y)
    else:
        from .features import dataset_matrix
        X, y = dataset_matrix(list(dataset))
    base = float(np.mean(model.predict(X) == y))
    drops = np.zeros(X.shape[1])
    work = X.copy()
    for j in range(X.shape[1]):
        if np.all(X[:, j] == X[0, j]):
            continue  # constant column cannot matter
        work[:, j] = X[rng.permutation(len(y)), j]
        drops[j] = base - float(np.mean(model.predict(work) == y))
        work[:, j] = X[:, j]
    order = np.lexsort((np.arange(X.shape[1]), -drops))
    ranked = [(int(j), float(drops[j])) for j in order]
    return ranked[:top_k] if top_k else ranked


def write_eval_report(path, report: EvalReport) -> None:
    report.to_frame().to_csv(path, index=False)


def write_ood_report(path, report: OODReport) -> None:
    report.to_frame().to_csv(path, index=False)
