import itertools

import numpy as np
import pytest

from structseq.core import Utterance
from structseq.features import psi_dim, psi_first_order
from structseq.gradcheck import check_loss
from structseq.lattice import full_lattice, linear_chain_lattice, nbest
from structseq.neural import MlpParams, SgdConfig, init_weights, mlp_forward
from structseq.sdnn import (
    LossKind,
    SdnnTrainConfig,
    Source,
    build_examples,
    exhaustive_decode,
    fit_feature_sets,
    loss_approx_acc,
    loss_max_margin,
    rescore_decode,
    score_sequences,
    train_sdnn,
)


def test_approx_acc_arithmetic():
    assert loss_approx_acc(0.7, 0.7) == (0.0, -0.0)
    loss, g = loss_approx_acc(0.5, 1.0)
    assert loss == pytest.approx(0.25) and g == pytest.approx(-1.0)
    loss, g = loss_approx_acc(0.9, 0.0)
    assert loss == pytest.approx(0.81) and g == pytest.approx(1.8)


def test_max_margin_arithmetic():
    assert loss_max_margin(0.9, [(0.3, 0.5)]) == (0.0, [False])
    loss, active = loss_max_margin(0.9, [(0.6, 0.5)])
    assert loss == pytest.approx(0.2) and active == [True]
    assert loss_max_margin(0.9, []) == (0.0, [])


@pytest.mark.parametrize("kind", list(LossKind))
def test_loss_gradients(kind):
    assert check_loss(kind, 20, seed=5).passed


def test_build_examples_sources(rng):
    y_ref = np.array([0, 1, 1, 2])
    lat = full_lattice(3, 4, rng.normal(size=(4, 3)), rng.normal(size=(3, 3)))
    ex = build_examples(y_ref, lat, 1, np.random.default_rng(0))
    assert len(ex.negatives) <= 3
    assert all(not np.array_equal(n.labels, y_ref) for n in ex.negatives)
    again = build_examples(y_ref, lat, 1, np.random.default_rng(0))
    assert [n.labels.tolist() for n in ex.negatives] == [n.labels.tolist() for n in again.negatives]


def test_single_path_lattice_equal_to_reference():
    y_ref = np.array([0, 1, 1, 2, 0, 1])
    ex = build_examples(y_ref, linear_chain_lattice(y_ref, 3), 1, np.random.default_rng(1))
    assert [n.source for n in ex.negatives] == [Source.RANDOM]


def test_rescore_n1_is_lattice_best(rng):
    lat = full_lattice(3, 4, rng.normal(size=(4, 3)), rng.normal(size=(3, 3)))
    x = rng.normal(size=(4, 2))
    scorer = init_weights([psi_dim(2, 3), 4, 1], 0)
    top = nbest(lat, 1)[0].as_array()
    assert rescore_decode(x, lat, scorer, 1).tolist() == top.tolist()
    zero = MlpParams([np.zeros((4, psi_dim(2, 3) + 1)), np.zeros((1, 5))])
    assert rescore_decode(x, lat, zero, 10).tolist() == top.tolist()


def test_rescore_full_lattice_brute_force(rng):
    for _ in range(10):
        x = rng.normal(size=(3, 2))
        lat = full_lattice(2, 3, rng.normal(size=(3, 2)), rng.normal(size=(2, 2)))
        scorer = init_weights([psi_dim(2, 2), 3, 1], int(rng.integers(1000)))
        seqs = list(itertools.product(range(2), repeat=3))
        scores = score_sequences(x, seqs, scorer, 2)
        assert rescore_decode(x, lat, scorer, 8).tolist() == list(seqs[int(np.argmax(scores))])
        assert exhaustive_decode(x, scorer, 2).tolist() == list(seqs[int(np.argmax(scores))])


def test_larger_n_never_worse(rng):
    x = rng.normal(size=(4, 2))
    lat = full_lattice(3, 4, rng.normal(size=(4, 3)), rng.normal(size=(3, 3)))
    scorer = init_weights([psi_dim(2, 3), 5, 1], 3)
    prev = -np.inf
    for n in (1, 2, 5, 10, 40, 81):
        y = rescore_decode(x, lat, scorer, n)
        s = mlp_forward(psi_first_order(x, y, 3), scorer)[0]
        assert s >= prev
        prev = s


def test_exhaustive_single_label():
    scorer = init_weights([psi_dim(2, 1), 2, 1], 0)
    assert exhaustive_decode(np.ones((3, 2)), scorer, 1).tolist() == [0, 0, 0]


def test_lr_zero_leaves_scorer_unchanged(rng):
    utts = [Utterance(rng.normal(size=(5, 2)), rng.integers(0, 3, 5)) for _ in range(4)]
    lats = [full_lattice(3, 5, rng.normal(size=(5, 3))) for _ in utts]
    p0 = init_weights([psi_dim(2, 3), 4, 1], 0)
    p, _ = train_sdnn(utts, lats, p0, SdnnTrainConfig(epochs=2, sgd=SgdConfig(learning_rate=0.0)))
    assert all(np.array_equal(a, b) for a, b in zip(p0.weights, p.weights))


def test_separable_max_margin_reaches_zero(rng):
    sets = []
    for _ in range(8):
        pos = rng.normal(1.0, 0.1, size=(1, 4))
        neg = rng.normal(-1.0, 0.1, size=(3, 4))
        sets.append((np.vstack([pos, neg]), np.full(3, 0.3), np.zeros(3)))
    cfg = SdnnTrainConfig(loss=LossKind.MAX_MARGIN, epochs=200, sgd=SgdConfig(learning_rate=0.05, l2_weight=0.0))
    _, history = fit_feature_sets(sets, init_weights([4, 4, 1], 0), cfg)
    assert history[-1].loss == 0.0


def test_approx_acc_curve_non_increasing(rng):
    sets = [(rng.normal(size=(4, 5)), rng.uniform(0, 1, 3), rng.uniform(0, 1, 3)) for _ in range(10)]
    cfg = SdnnTrainConfig(loss=LossKind.APPROX_ACC, epochs=10, sgd=SgdConfig(learning_rate=0.01))
    _, history = fit_feature_sets(sets, init_weights([5, 4, 1], 0), cfg)
    losses = [h.loss for h in history]
    assert all(b <= a * 1.05 for a, b in zip(losses, losses[1:]))


def test_training_is_deterministic(rng):
    utts = [Utterance(rng.normal(size=(5, 2)), rng.integers(0, 3, 5)) for _ in range(4)]
    lats = [full_lattice(3, 5, rng.normal(size=(5, 3))) for _ in utts]
    p0 = init_weights([psi_dim(2, 3), 4, 1], 0)
    cfg = SdnnTrainConfig(epochs=3, sgd=SgdConfig(learning_rate=0.05))
    a, ha = train_sdnn(utts, lats, p0, cfg)
    b, hb = train_sdnn(utts, lats, p0, cfg)
    assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))
    assert [h.loss for h in ha] == [h.loss for h in hb]


def test_max_margin_tiny_delta_not_absorbed():
    # 1.0 + 1e-91 == 1.0, so neg + delta - pos would lose the violation
    loss, active = loss_max_margin(1.0, [(1.0, 1e-91)])
    assert active == [True] and loss == 1e-91
