import numpy as np
import pytest

from structseq.core import Utterance
from structseq.features import psi_dim, psi_first_order
from structseq.fsdnn import (
    FsdnnParams,
    frame_accuracy,
    frontend_forward,
    fsdnn_backward,
    fsdnn_forward,
    posteriorgram_corpus,
    pretrain_frontend,
    train_fsdnn,
)
from structseq.gradcheck import check_fsdnn
from structseq.lattice import full_lattice
from structseq.neural import SOFTMAX, MlpParams, SgdConfig, init_weights, mlp_forward
from structseq.sdnn import SdnnTrainConfig, train_sdnn

K, D = 3, 2


def make_params(seed=0, hidden=4):
    return FsdnnParams(init_weights([D, hidden, K], seed, SOFTMAX), init_weights([psi_dim(K, K), hidden, 1], seed + 1))


def toy_corpus(rng, n=6, M=5):
    return [Utterance(rng.normal(size=(M, D)), rng.integers(0, K, M)) for _ in range(n)]


def test_frontend_examples(rng):
    zero = MlpParams([np.zeros((4, D + 1)), np.zeros((K, 5))], SOFTMAX)
    assert np.allclose(frontend_forward(rng.normal(size=(3, D)), zero), 1 / K)
    two = MlpParams([np.array([[0.0, 0.7], [0.0, 0.7]])], SOFTMAX)
    assert frontend_forward([[2.0]], two).tolist() == [[0.5, 0.5]]
    post = frontend_forward(rng.normal(size=(9, D)) * 10, make_params().frontend)
    assert np.allclose(post.sum(axis=1), 1.0, atol=1e-12)


def test_forward_equals_scoring_on_posteriorgrams(rng):
    p = make_params()
    x, y = rng.normal(size=(5, D)), rng.integers(0, K, 5)
    score, _ = fsdnn_forward(x, y, p)
    post = frontend_forward(x, p.frontend)
    assert score == mlp_forward(psi_first_order(post, y, K), p.scorer)[0]
    assert 0.0 < score < 1.0


def test_zero_scorer_gives_half(rng):
    p = make_params()
    p.scorer.weights = [np.zeros_like(w) for w in p.scorer.weights]
    assert fsdnn_forward(rng.normal(size=(4, D)), [0, 1, 2, 0], p)[0] == 0.5


def test_full_composition_gradients():
    assert check_fsdnn(20, seed=2).passed


def test_transition_only_scorer_gives_zero_frontend_gradient(rng):
    p = make_params()
    p.scorer.weights[0][:, : K * K] = 0.0
    _, trace = fsdnn_forward(rng.normal(size=(5, D)), rng.integers(0, K, 5), p)
    fgrads, sgrads = fsdnn_backward(trace, p, 1.0)
    assert all(not g.any() for g in fgrads)
    assert any(g.any() for g in sgrads)


def test_zero_upstream(rng):
    p = make_params()
    _, trace = fsdnn_forward(rng.normal(size=(5, D)), rng.integers(0, K, 5), p)
    fgrads, sgrads = fsdnn_backward(trace, p, 0.0)
    assert all(not g.any() for g in fgrads + sgrads)


def test_frozen_frontend_is_bit_identical_to_sdnn(rng):
    utts = toy_corpus(rng)
    lats = [full_lattice(K, u.M, rng.normal(size=(u.M, K))) for u in utts]
    p = make_params()
    cfg = SdnnTrainConfig(epochs=4, sgd=SgdConfig(learning_rate=0.05))
    joint, jh = train_fsdnn(utts, lats, p, cfg, frontend_lr=0.0)
    alone, ah = train_sdnn(posteriorgram_corpus(utts, p.frontend), lats, p.scorer, cfg)
    assert all(np.array_equal(a, b) for a, b in zip(joint.scorer.weights, alone.weights))
    assert [h.loss for h in jh] == [h.loss for h in ah]
    assert all(np.array_equal(a, b) for a, b in zip(joint.frontend.weights, p.frontend.weights))


def test_joint_training_moves_frontend_deterministically(rng):
    utts = toy_corpus(rng)
    lats = [full_lattice(K, u.M, rng.normal(size=(u.M, K))) for u in utts]
    cfg = SdnnTrainConfig(epochs=2, sgd=SgdConfig(learning_rate=0.05))
    a, _ = train_fsdnn(utts, lats, make_params(), cfg)
    b, _ = train_fsdnn(utts, lats, make_params(), cfg)
    assert not np.array_equal(a.frontend.weights[0], make_params().frontend.weights[0])
    assert all(np.array_equal(x, y) for x, y in zip(a.frontend.weights, b.frontend.weights))


def test_pretrain_separable_frames(rng):
    means = np.array([[4.0, 0.0], [-4.0, 0.0], [0.0, 4.0]])
    utts = []
    for _ in range(20):
        y = rng.integers(0, K, 10)
        utts.append(Utterance(means[y] + rng.normal(scale=0.3, size=(10, D)), y))
    fe, history = pretrain_frontend(utts, [D, 8, K], SgdConfig(learning_rate=0.05), epochs=10)
    assert frame_accuracy(utts, fe) > 0.9
    assert history[4] < history[0]


def test_pretrain_lr_zero(rng):
    utts = toy_corpus(rng)
    fe, _ = pretrain_frontend(utts, [D, 4, K], SgdConfig(learning_rate=0.0), epochs=2, seed=5)
    init = init_weights([D, 4, K], 5, SOFTMAX)
    assert all(np.array_equal(a, b) for a, b in zip(fe.weights, init.weights))


def test_scorer_width_must_match():
    with pytest.raises(ValueError):
        FsdnnParams(init_weights([D, 4, K], 0, SOFTMAX), init_weights([psi_dim(2, K), 4, 1], 0))
