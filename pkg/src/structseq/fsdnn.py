"""Full-scale structured DNN: a frame-wise front end feeding the structured scorer.

The front end maps raw frames to posteriorgrams (softmax over K phones); the
posteriorgrams take the place of ``x`` in the joint feature map and the
scorer's input gradient is routed back through the feature blocks, the
softmax and the front end.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import ConfigError, DimensionError, PairingError, as_frames, as_labels
from .features import psi_backward, psi_dim, psi_first_order, psi_gradient_blocks
from .neural import (
    SOFTMAX,
    ForwardTrace,
    MlpParams,
    SgdConfig,
    halve_if_stalled,
    init_weights,
    mlp_backward,
    mlp_forward,
    sgd_momentum_step,
)
from .sdnn import (
    SdnnTrainConfig,
    _check_scorer,
    example_cache,
    example_loss_and_grad,
    rescore_decode,
    run_epochs,
)
from .metrics import accuracy, corpus_per

log = logging.getLogger(__name__)


@dataclass
class FsdnnParams:
    frontend: MlpParams
    scorer: MlpParams

    def __post_init__(self):
        if self.frontend.output != SOFTMAX:
            raise ConfigError("the front end must have a softmax output")
        K = self.frontend.layer_sizes[-1]
        if self.scorer.layer_sizes[0] != psi_dim(K, K):
            raise DimensionError(
                f"scorer input {self.scorer.layer_sizes[0]} does not match posteriorgram width K={K} ({psi_dim(K, K)})"
            )

    @property
    def K(self) -> int:
        return self.frontend.layer_sizes[-1]

    def copy(self) -> "FsdnnParams":
        return FsdnnParams(self.frontend.copy(), self.scorer.copy())


@dataclass
class JointTrace:
    frontend: ForwardTrace
    scorer: ForwardTrace
    blocks: np.ndarray
    K: int


def frontend_forward(x_raw, frontend: MlpParams) -> np.ndarray:
    """Frame-wise posteriorgrams, shape (M, K); each row sums to 1."""
    x = as_frames(x_raw)
    return mlp_forward(x, frontend)[0]


def fsdnn_forward(x_raw, y, params: FsdnnParams):
    x = as_frames(x_raw)
    K = params.K
    y = as_labels(y, K)
    if len(y) != x.shape[0]:
        raise PairingError(f"{x.shape[0]} frames but {len(y)} labels")
    post, ftrace = mlp_forward(x, params.frontend)
    score, strace = mlp_forward(psi_first_order(post, y, K), params.scorer)
    return score, JointTrace(ftrace, strace, psi_gradient_blocks(y, K, K), K)


def fsdnn_backward(trace: JointTrace, params: FsdnnParams, upstream: float):
    """Gradients of ``upstream * score`` for ``(frontend_grads, scorer_grads)``."""
    sgrads, dpsi = mlp_backward(trace.scorer, params.scorer, upstream)
    dpost = psi_backward(dpsi, trace.blocks, trace.K)
    fgrads, _ = mlp_backward(trace.frontend, params.frontend, dpost)
    return fgrads, sgrads


def joint_example_gradient(x_raw, seqs, deltas, targets, params: FsdnnParams, kind, frontend: bool = True):
    """Loss of one example set (``seqs[0]`` the reference) and its gradients.

    Returns ``(loss, frontend_grads, scorer_grads)``; the front-end
    gradients are ``None`` when ``frontend`` is false.
    """
    K = params.K
    post, ftrace = mlp_forward(as_frames(x_raw), params.frontend)
    feats = np.vstack([psi_first_order(post, y, K) for y in seqs])
    scores, strace = mlp_forward(feats, params.scorer)
    loss, upstream = example_loss_and_grad(scores, deltas, targets, kind)
    sgrads, dfeats = mlp_backward(strace, params.scorer, upstream)
    if not frontend:
        return loss, None, sgrads
    dpost = np.zeros_like(post)
    for y, df in zip(seqs, dfeats):
        dpost += psi_backward(df, psi_gradient_blocks(y, K, K), K)
    fgrads, _ = mlp_backward(ftrace, params.frontend, dpost)
    return loss, fgrads, sgrads


def posteriorgram_corpus(corpus, frontend: MlpParams):
    """Copies of the utterances with ``x`` replaced by front-end posteriorgrams."""
    from .core import Utterance

    return [Utterance(frontend_forward(u.x, frontend), u.y_ref) for u in corpus]


def pretrain_frontend(raw_corpus, layer_sizes, sgd: SgdConfig, epochs: int = 10, batch_frames: int = 64, seed: int = 0):
    """Frame-wise cross-entropy training of a softmax front end.

    Returns ``(frontend, history)`` with the mean cross-entropy per epoch.
    """
    X = np.vstack([u.x for u in raw_corpus])
    Y = np.concatenate([u.y_ref for u in raw_corpus])
    K = layer_sizes[-1]
    if layer_sizes[0] != X.shape[1]:
        raise ConfigError(f"front-end input size {layer_sizes[0]} != frame width {X.shape[1]}")
    as_labels(Y, K)
    params = init_weights(layer_sizes, seed, output=SOFTMAX)
    velocity = params.zeros_like()
    rng = np.random.default_rng([seed, 104729])
    lr = sgd.learning_rate
    prev = None
    history = []
    n = len(Y)
    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_frames):
            idx = order[start : start + batch_frames]
            p, trace = mlp_forward(X[idx], params)
            onehot = np.zeros_like(p)
            onehot[np.arange(len(idx)), Y[idx]] = 1.0
            total += -np.log(np.maximum(p[np.arange(len(idx)), Y[idx]], 1e-300)).sum()
            grads, _ = mlp_backward(trace, params, p - onehot, wrt_logits=True)
            sgd_momentum_step(params, grads, velocity, sgd, lr)
        mean = total / n
        history.append(mean)
        log.info("frontend epoch %d cross-entropy %.5f", epoch, mean)
        lr = halve_if_stalled(prev, mean, lr, sgd.halving_threshold)
        prev = mean
    return params, history


def frame_accuracy(raw_corpus, frontend: MlpParams) -> float:
    hits = total = 0
    for u in raw_corpus:
        pred = frontend_forward(u.x, frontend).argmax(axis=1)
        hits += int((pred == u.y_ref).sum())
        total += len(pred)
    return hits / total


def train_fsdnn(
    raw_corpus,
    lattices,
    params: FsdnnParams,
    config: SdnnTrainConfig | None = None,
    frontend_lr: float | None = None,
    dev=None,
):
    """Joint training of front end and scorer with the structured losses.

    Same epoch loop, negative sampling and seeds as :func:`train_sdnn`; the
    scorer's input gradients additionally flow into the front end, stepped
    with ``frontend_lr`` (default: the scorer's learning rate, halved in
    step with it).  With ``frontend_lr=0`` the scorer follows exactly the
    trajectory ``train_sdnn`` takes on the frozen posteriorgrams.

    Returns ``(params, history)``.
    """
    config = config or SdnnTrainConfig()
    raw_corpus = list(raw_corpus)
    if len(raw_corpus) != len(lattices):
        raise ConfigError(f"{len(raw_corpus)} utterances but {len(lattices)} lattices")
    if not raw_corpus:
        raise ConfigError("empty training corpus")
    K = params.K
    if raw_corpus[0].D != params.frontend.layer_sizes[0]:
        raise ConfigError("front-end input size does not match the raw frame width")
    _check_scorer(params.scorer, K, K)
    model = params.copy()
    svel = model.scorer.zeros_like()
    fvel = model.frontend.zeros_like()
    examples = example_cache(raw_corpus, lattices, config)
    base_lr = config.sgd.learning_rate
    f_base = base_lr if frontend_lr is None else frontend_lr

    def step(batch, epoch, lr):
        sgrads = model.scorer.zeros_like()
        fgrads = model.frontend.zeros_like()
        total = 0.0
        for i in batch:
            ex = examples(i, epoch)
            seqs = [ex.y_ref] + [n.labels for n in ex.negatives]
            deltas = np.array([n.delta for n in ex.negatives])
            targets = np.array([accuracy(ex.y_ref, n.labels) for n in ex.negatives])
            loss, fg, g = joint_example_gradient(raw_corpus[i].x, seqs, deltas, targets, model, config.loss, f_base != 0.0)
            total += loss
            for acc, gi in zip(sgrads, g):
                acc += gi
            if fg is not None:
                for acc, gi in zip(fgrads, fg):
                    acc += gi
        sgd_momentum_step(model.scorer, sgrads, svel, config.sgd, lr)
        if f_base != 0.0:
            sgd_momentum_step(model.frontend, fgrads, fvel, config.sgd, f_base * lr / base_lr if base_lr else f_base)
        return total

    evaluate = None
    if dev is not None:
        dev_utts, dev_lats = dev

        def evaluate():
            return corpus_per([u.y_ref for u in dev_utts], decode_fsdnn(dev_utts, dev_lats, model, config.rescore_n))

    history = run_epochs(len(raw_corpus), config, step, evaluate)
    return model, history


def decode_fsdnn(raw_utts, lattices, params: FsdnnParams, n: int = 10):
    return [rescore_decode(frontend_forward(u.x, params.frontend), lat, params.scorer, n) for u, lat in zip(raw_utts, lattices)]
