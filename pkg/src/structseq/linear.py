"""Linear utterance scorer: Viterbi decoding and max-margin subgradient training."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import ConfigError, DimensionError, PairingError, Utterance, as_frames, as_labels
from .features import psi_dim, psi_first_order
from .lattice import Lattice
from .metrics import DistanceKind, delta

log = logging.getLogger(__name__)


@dataclass
class LinearParams:
    """Weight vector laid out like the first-order feature vector."""

    theta: np.ndarray
    D: int
    K: int

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.shape != (psi_dim(self.D, self.K),):
            raise DimensionError(
                f"theta has shape {self.theta.shape}, expected ({psi_dim(self.D, self.K)},) for D={self.D}, K={self.K}"
            )
        if not np.all(np.isfinite(self.theta)):
            raise DimensionError("theta contains non-finite values")

    @classmethod
    def zeros(cls, D: int, K: int) -> "LinearParams":
        return cls(np.zeros(psi_dim(D, K)), D, K)

    @property
    def observation(self) -> np.ndarray:
        """(K, D) view; row k scores frames labelled k."""
        return self.theta[: self.D * self.K].reshape(self.K, self.D)

    @property
    def transition(self) -> np.ndarray:
        """(K, K) view; entry [a, b] scores the transition a -> b."""
        return self.theta[self.D * self.K :].reshape(self.K, self.K).T

    def copy(self) -> "LinearParams":
        return LinearParams(self.theta.copy(), self.D, self.K)


@dataclass
class LinearTrainConfig:
    cost_C: float = 1.0
    epochs: int = 10
    learning_rate: float = 1e-3
    seed: int = 0
    delta_kind: DistanceKind = DistanceKind.FRAME_ERROR

    def __post_init__(self):
        if self.cost_C <= 0:
            raise ConfigError("cost_C must be positive")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be non-negative")
        self.delta_kind = DistanceKind(self.delta_kind)
        if self.delta_kind is not DistanceKind.FRAME_ERROR:
            raise ConfigError("loss-augmented decoding needs the frame_error distance")


def _check(x, params: LinearParams) -> np.ndarray:
    x = as_frames(x)
    if x.shape[1] != params.D:
        raise DimensionError(f"frames have width {x.shape[1]}, model expects D={params.D}")
    return x


def emission_scores(x, params: LinearParams) -> np.ndarray:
    """(M, K) matrix of per-frame label scores."""
    return _check(x, params) @ params.observation.T


def score_linear(x, y, params: LinearParams) -> float:
    x = _check(x, params)
    return float(params.theta @ psi_first_order(x, y, params.K))


def viterbi_decode(x, params: LinearParams) -> np.ndarray:
    """Highest-scoring label sequence; ties go to the lexicographically smallest."""
    path, _ = kernels.viterbi(emission_scores(x, params), params.transition)
    return path


def loss_augmented_decode(x, y_ref, params: LinearParams) -> np.ndarray:
    """argmax of score + frame error against ``y_ref``."""
    emit = emission_scores(x, params)
    y_ref = as_labels(y_ref, params.K)
    M = emit.shape[0]
    if len(y_ref) != M:
        raise PairingError(f"{M} frames but {len(y_ref)} reference labels")
    bonus = np.full_like(emit, 1.0 / M)
    bonus[np.arange(M), y_ref] = 0.0
    path, _ = kernels.viterbi(emit + bonus, params.transition)
    return path


def hinge_loss(utt: Utterance, params: LinearParams) -> tuple[float, np.ndarray]:
    """Structured hinge loss of one utterance and its most violating sequence."""
    y_hat = loss_augmented_decode(utt.x, utt.y_ref, params)
    value = (
        score_linear(utt.x, y_hat, params)
        + delta(utt.y_ref, y_hat, DistanceKind.FRAME_ERROR)
        - score_linear(utt.x, utt.y_ref, params)
    )
    return max(0.0, value), y_hat


def objective(corpus, params: LinearParams, cost_C: float) -> float:
    return float(params.theta @ params.theta) + cost_C * sum(hinge_loss(u, params)[0] for u in corpus)


def train_linear(corpus, config: LinearTrainConfig | None = None, K: int | None = None, init: LinearParams | None = None):
    """Stochastic subgradient descent on ``|theta|^2 + C * sum_i hinge_i``.

    Each step visits one utterance, finds its most violating sequence by
    loss-augmented Viterbi and moves against the subgradient.  The regulariser
    gradient is divided by the corpus size so that one epoch of steps sums to
    the full objective's gradient.  The step size decays as ``lr / (1 + epoch)``.

    Returns ``(params, history)`` where history holds the training objective
    after each epoch.
    """
    config = config or LinearTrainConfig()
    corpus = list(corpus)
    if not corpus:
        raise ConfigError("empty training corpus")
    D = corpus[0].D
    if init is not None:
        K = init.K
    elif K is None:
        K = max(2, max(int(u.y_ref.max()) for u in corpus) + 1)
    for u in corpus:
        if u.D != D:
            raise ConfigError("utterances disagree on feature width")
        as_labels(u.y_ref, K)
    params = init.copy() if init is not None else LinearParams.zeros(D, K)
    N = len(corpus)
    rng = np.random.default_rng(config.seed)
    history = []
    for epoch in range(config.epochs):
        lr = config.learning_rate / (1.0 + epoch)
        for i in rng.permutation(N):
            u = corpus[i]
            grad = (2.0 / N) * params.theta
            loss, y_hat = hinge_loss(u, params)
            if loss > 0:
                grad = grad + config.cost_C * (psi_first_order(u.x, y_hat, K) - psi_first_order(u.x, u.y_ref, K))
            params.theta -= lr * grad
        obj = objective(corpus, params, config.cost_C)
        history.append(obj)
        log.info("linear epoch %d objective %.6g", epoch, obj)
    return params, history


def beam_lattice(x, params: LinearParams, beam_width: int) -> Lattice:
    """Frame-synchronous beam search, recorded as a lattice.

    At each frame the ``beam_width`` labels with the best partial Viterbi
    score survive (ties to the smaller label).  Every surviving label of frame
    ``j`` is linked to every survivor of frame ``j + 1``, the arc scoring
    transition plus emission, so a path's score equals its linear score.
    With ``beam_width >= K`` nothing is pruned and the Viterbi path is kept.
    """
    if beam_width < 1:
        raise ConfigError("beam_width must be >= 1")
    emit = emission_scores(x, params)
    trans = params.transition
    M, K = emit.shape

    def keep(scores):
        order = np.lexsort((np.arange(K), -scores))
        return np.sort(order[:beam_width])

    active = keep(emit[0])
    best = emit[0, active]
    arcs = [(0, 0, 0 if M == 1 else n, int(k), emit[0, k]) for n, k in enumerate(active)]
    for j in range(1, M):
        cand = (best[:, None] + trans[active]).max(axis=0) + emit[j]
        nxt = keep(cand)
        for s_node, s in enumerate(active):
            for d_node, k in enumerate(nxt):
                arcs.append((j, s_node, 0 if j == M - 1 else d_node, int(k), trans[s, k] + emit[j, k]))
        active, best = nxt, cand[nxt]
    return Lattice(K, M, arcs)
