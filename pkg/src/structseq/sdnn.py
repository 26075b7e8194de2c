"""Structured DNN: utterance-level losses, negative sampling, training and rescoring."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .core import ConfigError, PairingError, StructureError, as_frames, as_labels
from .features import psi_dim, psi_first_order
from .lattice import Lattice, nbest, random_lattice_path, random_sequence
from .metrics import DistanceKind, accuracy, corpus_per, delta
from .neural import MlpParams, SgdConfig, halve_if_stalled, mlp_backward, mlp_forward, sgd_momentum_step

log = logging.getLogger(__name__)


class LossKind(str, Enum):
    APPROX_ACC = "approx_acc"
    MAX_MARGIN = "max_margin"


class Source(str, Enum):
    RANDOM = "random"
    LATTICE_RANDOM = "lattice_random"
    LATTICE_NBEST = "lattice_nbest"


class Negative(NamedTuple):
    labels: np.ndarray
    delta: float
    source: Source


@dataclass
class TrainingExampleSet:
    y_ref: np.ndarray
    negatives: list


@dataclass
class SdnnTrainConfig:
    loss: LossKind = LossKind.MAX_MARGIN
    n_negative: int = 1
    epochs: int = 20
    sgd: SgdConfig = field(default_factory=SgdConfig)
    rescore_n: int = 10
    batch_size: int = 1
    seed: int = 0
    resample_each_epoch: bool = False

    def __post_init__(self):
        self.loss = LossKind(self.loss)
        if self.n_negative < 1:
            raise ConfigError("n_negative must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.rescore_n < 1:
            raise ConfigError("rescore_n must be >= 1")


@dataclass
class EpochLog:
    epoch: int
    loss: float
    learning_rate: float
    dev_per: float = float("nan")


# --- losses -----------------------------------------------------------------


def loss_approx_acc(score: float, target: float) -> tuple[float, float]:
    """Squared error between the score and a phone accuracy target; returns (loss, dloss/dscore)."""
    diff = target - score
    return diff * diff, -2.0 * diff


def loss_max_margin(pos_score: float, negatives) -> tuple[float, list[bool]]:
    """Sum of margin-rescaled hinges ``max(0, neg + delta - pos)``.

    Returns the loss and, per negative, whether its hinge is active (strictly
    positive argument).  The subgradient is +1 on each active negative score
    and minus the number of active terms on the positive score.
    """
    loss = 0.0
    active = []
    for neg_score, d in negatives:
        arg = d - (pos_score - neg_score)  # arg > 0 exactly when pos - neg >= d fails
        active.append(arg > 0)
        if arg > 0:
            loss += arg
    return loss, active


def example_loss_and_grad(scores: np.ndarray, deltas: np.ndarray, targets: np.ndarray, kind: LossKind):
    """Loss of one example set and its gradient w.r.t. all scores.

    ``scores[0]`` is the positive; the rest are negatives with distances
    ``deltas`` and accuracy ``targets`` (used by approx_acc, positive target 1).
    """
    upstream = np.zeros_like(scores)
    if kind is LossKind.MAX_MARGIN:
        loss, active = loss_max_margin(scores[0], zip(scores[1:], deltas))
        act = np.asarray(active, dtype=np.float64)
        upstream[1:] = act
        upstream[0] = -act.sum()
        return loss, upstream
    loss = 0.0
    for i, (s, c) in enumerate(zip(scores, np.concatenate([[1.0], targets]))):
        l, g = loss_approx_acc(s, c)
        loss += l
        upstream[i] = g
    return loss, upstream


# --- examples ---------------------------------------------------------------


def build_examples(y_ref, lattice: Lattice, n_negative: int, rng: np.random.Generator) -> TrainingExampleSet:
    """Draw negatives from the three sources and drop any equal to the reference.

    Per source: ``n_negative`` uniformly random sequences, ``n_negative``
    random lattice paths and the lattice's ``n_negative``-best paths.
    """
    y_ref = as_labels(y_ref, lattice.K)
    M = len(y_ref)
    if lattice.M != M:
        raise PairingError(f"lattice has {lattice.M} frames, utterance has {M}")
    drawn = []
    for _ in range(n_negative):
        drawn.append((random_sequence(lattice.K, M, rng), Source.RANDOM))
    for _ in range(n_negative):
        drawn.append((random_lattice_path(lattice, rng).as_array(), Source.LATTICE_RANDOM))
    for p in nbest(lattice, n_negative):
        drawn.append((p.as_array(), Source.LATTICE_NBEST))
    negatives = [
        Negative(y, delta(y_ref, y, DistanceKind.PHONE_EDIT), src) for y, src in drawn if not np.array_equal(y, y_ref)
    ]
    return TrainingExampleSet(y_ref, negatives)


def example_features(x, examples: TrainingExampleSet, K: int):
    """Stack the feature vectors of the positive and every negative (positive first)."""
    feats = [psi_first_order(x, examples.y_ref, K)]
    feats += [psi_first_order(x, n.labels, K) for n in examples.negatives]
    deltas = np.array([n.delta for n in examples.negatives])
    targets = np.array([accuracy(examples.y_ref, n.labels) for n in examples.negatives])
    return np.vstack(feats), deltas, targets


def feature_set_gradient(scorer: MlpParams, feats, deltas, targets, kind: LossKind):
    """Loss, weight gradients and feature gradients for one stacked example set."""
    scores, trace = mlp_forward(feats, scorer)
    loss, upstream = example_loss_and_grad(scores, deltas, targets, kind)
    grads, dfeats = mlp_backward(trace, scorer, upstream)
    return loss, grads, dfeats


# --- training ---------------------------------------------------------------


def _check_scorer(scorer: MlpParams, D: int, K: int):
    if scorer.layer_sizes[0] != psi_dim(D, K):
        raise ConfigError(f"scorer input size {scorer.layer_sizes[0]} != feature size {psi_dim(D, K)} (D={D}, K={K})")
    if scorer.output != "sigmoid":
        raise ConfigError("the structured scorer must have a single sigmoid output")


def utterance_rng(seed: int, epoch: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, epoch, index])


def example_cache(corpus, lattices, config: SdnnTrainConfig):
    """Per-utterance example sets, drawn once or per epoch depending on the config."""
    cache = {}

    def get(i, epoch):
        ep = epoch if config.resample_each_epoch else 0
        key = (i, ep)
        if key not in cache:
            if config.resample_each_epoch:
                cache.clear()
            rng = utterance_rng(config.seed, ep, int(i))
            cache[key] = build_examples(corpus[i].y_ref, lattices[i], config.n_negative, rng)
        return cache[key]

    return get


def run_epochs(n_items: int, config: SdnnTrainConfig, step: Callable, evaluate: Callable | None = None):
    """Shared epoch loop: shuffle, mini-batch, log, halve the learning rate on stalls.

    ``step(batch_indices, epoch, lr)`` performs one update and returns its loss.
    """
    lr = config.sgd.learning_rate
    prev = None
    history = []
    order_rng = np.random.default_rng([config.seed, 7919])
    for epoch in range(config.epochs):
        order = order_rng.permutation(n_items)
        total = 0.0
        for start in range(0, n_items, config.batch_size):
            total += step(order[start : start + config.batch_size], epoch, lr)
        dev = evaluate() if evaluate is not None else float("nan")
        history.append(EpochLog(epoch, total, lr, dev))
        log.info("epoch %d loss %.6g lr %.3g dev_per %.4f", epoch, total, lr, dev)
        lr = halve_if_stalled(prev, total, lr, config.sgd.halving_threshold)
        prev = total
    return history


def train_sdnn(corpus, lattices: Sequence[Lattice], params: MlpParams, config: SdnnTrainConfig | None = None, dev=None):
    """Train the structured scorer on sampled negatives.

    ``corpus`` is a list of utterances (their ``x`` used as the frame
    features), ``lattices`` the matching training lattices.  ``dev`` is an
    optional ``(utterances, lattices)`` pair scored by rescoring after each
    epoch.  Returns ``(params, history)``; ``params`` is a trained copy.
    """
    config = config or SdnnTrainConfig()
    corpus = list(corpus)
    if len(corpus) != len(lattices):
        raise ConfigError(f"{len(corpus)} utterances but {len(lattices)} lattices")
    if not corpus:
        raise ConfigError("empty training corpus")
    K = lattices[0].K
    _check_scorer(params, corpus[0].D, K)
    scorer = params.copy()
    velocity = scorer.zeros_like()
    examples = example_cache(corpus, lattices, config)
    feature_cache = {}

    def step(batch, epoch, lr):
        grads = scorer.zeros_like()
        total = 0.0
        for i in batch:
            u = corpus[i]
            key = (int(i), epoch if config.resample_each_epoch else 0)
            if key not in feature_cache:
                if config.resample_each_epoch:
                    feature_cache.clear()
                feature_cache[key] = example_features(u.x, examples(i, epoch), K)
            feats, deltas, targets = feature_cache[key]
            loss, g, _ = feature_set_gradient(scorer, feats, deltas, targets, config.loss)
            total += loss
            for acc, gi in zip(grads, g):
                acc += gi
        sgd_momentum_step(scorer, grads, velocity, config.sgd, lr)
        return total

    evaluate = None
    if dev is not None:
        dev_utts, dev_lats = dev

        def evaluate():
            hyps = [rescore_decode(u.x, lat, scorer, config.rescore_n) for u, lat in zip(dev_utts, dev_lats)]
            return corpus_per([u.y_ref for u in dev_utts], hyps)

    history = run_epochs(len(corpus), config, step, evaluate)
    return scorer, history


def fit_feature_sets(sets, params: MlpParams, config: SdnnTrainConfig):
    """Train on fixed, precomputed example sets ``(feats, deltas, targets)``.

    Returns ``(params, history)``.
    """
    scorer = params.copy()
    velocity = scorer.zeros_like()

    def step(batch, epoch, lr):
        grads = scorer.zeros_like()
        total = 0.0
        for i in batch:
            loss, g, _ = feature_set_gradient(scorer, *sets[i], config.loss)
            total += loss
            for acc, gi in zip(grads, g):
                acc += gi
        sgd_momentum_step(scorer, grads, velocity, config.sgd, lr)
        return total

    history = run_epochs(len(sets), config, step)
    return scorer, history


def feature_set_loss(scorer: MlpParams, feats, deltas, targets, kind: LossKind) -> float:
    scores, _ = mlp_forward(feats, scorer)
    return example_loss_and_grad(scores, deltas, targets, LossKind(kind))[0]


# --- inference --------------------------------------------------------------


def score_sequences(x, labels_list, scorer: MlpParams, K: int) -> np.ndarray:
    feats = np.vstack([psi_first_order(x, y, K) for y in labels_list])
    return mlp_forward(feats, scorer)[0]


def rescore_nbest(x, lattice: Lattice, scorer: MlpParams, n: int):
    """The lattice's n-best paths with their scorer outputs, in lattice rank order."""
    if not lattice.arcs:
        raise StructureError("empty lattice")
    x = as_frames(x)
    paths = nbest(lattice, n)
    scores = score_sequences(x, [p.labels for p in paths], scorer, lattice.K)
    return paths, scores


def rescore_decode(x, lattice: Lattice, scorer: MlpParams, n: int = 10) -> np.ndarray:
    """Best of the lattice's n-best paths under the structured scorer.

    Ties go to the higher lattice score, then the lexicographically smaller
    sequence.
    """
    paths, scores = rescore_nbest(x, lattice, scorer, n)
    best = min(range(len(paths)), key=lambda i: (-scores[i], -paths[i].path_score, paths[i].labels))
    return paths[best].as_array()


def exhaustive_decode(x, scorer: MlpParams, K: int, budget: int = 10**6, chunk: int = 4096) -> np.ndarray:
    """Exact argmax of the scorer over all ``K**M`` sequences (first maximiser in lexicographic order)."""
    x = as_frames(x)
    M = x.shape[0]
    if K ** M > budget:
        raise ConfigError(f"K**M = {K}**{M} exceeds the exhaustive budget {budget}")
    best_score, best_seq = -np.inf, None
    seqs = itertools.product(range(K), repeat=M)
    while True:
        block = list(itertools.islice(seqs, chunk))
        if not block:
            break
        scores = score_sequences(x, block, scorer, K)
        i = int(np.argmax(scores))
        if scores[i] > best_score:
            best_score, best_seq = scores[i], block[i]
    return np.asarray(best_seq, dtype=np.int64)
