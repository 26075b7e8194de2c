"""End-to-end pipelines shared by the command line and the acceptance suite.

The lattices every structured-DNN system rescores come from a separate
baseline: a softmax front end pretrained frame-wise, followed by a linear
structured scorer on its posteriorgrams, searched with a frame beam.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import spearmanr

from .features import psi_dim, psi_first_order
from .fsdnn import FsdnnParams, decode_fsdnn, posteriorgram_corpus, pretrain_frontend, train_fsdnn
from .lattice import oracle_errors
from .linear import LinearParams, LinearTrainConfig, beam_lattice, train_linear, viterbi_decode
from .metrics import accuracy, collapse_runs, corpus_per, edit_distance
from .neural import MlpParams, SgdConfig, init_weights
from .sdnn import LossKind, SdnnTrainConfig, rescore_decode, rescore_nbest, train_sdnn

log = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    frontend_width: int = 64
    frontend_epochs: int = 20
    frontend_lr: float = 0.01
    baseline_epochs: int = 20
    baseline_lr: float = 1e-2
    raw_linear_lr: float = 1e-3
    beam: int = 6
    hidden: list = field(default_factory=lambda: [64, 64])
    sdnn_lr: float = 0.01
    epochs: int = 20
    n_negative: int = 1
    n_best: int = 10


@dataclass
class Baseline:
    frontend: MlpParams
    linear: LinearParams

    def posteriorgrams(self, utts):
        return posteriorgram_corpus(utts, self.frontend)

    def lattices(self, utts, beam: int):
        return [beam_lattice(u.x, self.linear, beam) for u in self.posteriorgrams(utts)]

    def decode(self, utts):
        return [viterbi_decode(u.x, self.linear) for u in self.posteriorgrams(utts)]


def train_baseline(train, K: int, seed: int, cfg: PipelineConfig | None = None) -> Baseline:
    cfg = cfg or PipelineConfig()
    D = train[0].D
    frontend, _ = pretrain_frontend(
        train, [D, cfg.frontend_width, K], SgdConfig(learning_rate=cfg.frontend_lr), epochs=cfg.frontend_epochs, seed=seed
    )
    post = posteriorgram_corpus(train, frontend)
    linear, _ = train_linear(post, LinearTrainConfig(epochs=cfg.baseline_epochs, learning_rate=cfg.baseline_lr, seed=seed), K=K)
    return Baseline(frontend, linear)


def standardized_scorer(train, K: int, hidden, seed: int) -> MlpParams:
    """Fresh scorer over Psi of ``train``'s frames, input standardised on the reference features."""
    D = train[0].D
    p = init_weights([psi_dim(D, K), *hidden, 1], seed)
    return p.with_standardization(np.vstack([psi_first_order(u.x, u.y_ref, K) for u in train]))


def sdnn_config(loss, seed: int, cfg: PipelineConfig) -> SdnnTrainConfig:
    return SdnnTrainConfig(
        loss=LossKind(loss),
        epochs=cfg.epochs,
        n_negative=cfg.n_negative,
        rescore_n=cfg.n_best,
        sgd=SgdConfig(learning_rate=cfg.sdnn_lr),
        seed=seed,
    )


@dataclass
class TableRun:
    """PER per system plus what is needed to inspect the decodes."""

    per: dict
    eval_utts: list
    eval_lattices: list
    hyps: dict
    dev_utts: list
    dev_lattices: list
    scorers: dict


def table_columns(corpus, seed: int, columns=("A", "B", "C", "C_frozen", "D"), cfg: PipelineConfig | None = None) -> TableRun:
    """Evaluation PER (dev + test) of the comparison systems on one corpus.

    A: linear scorer on raw frames, Viterbi.  B / C: structured DNN on raw
    frames with approx_acc / max_margin, rescoring baseline lattices.
    C_frozen / D: max_margin scorer on posteriorgrams with the front end
    frozen / trained jointly.  ``base`` (the lattice source's 1-best) is
    always reported.  Scorers are kept for the DNN systems; ``dev_utts``
    holds raw frames, so FSDNN scorers need the front end applied first.
    """
    cfg = cfg or PipelineConfig()
    K = corpus.K
    train = corpus.split("train")
    ev = corpus.split("dev") + corpus.split("test")
    refs = [u.y_ref for u in ev]
    baseline = train_baseline(train, K, seed, cfg)
    ltr, lev = baseline.lattices(train, cfg.beam), baseline.lattices(ev, cfg.beam)
    hyps = {"base": baseline.decode(ev)}
    scorers = {}
    if "A" in columns:
        lin, _ = train_linear(train, LinearTrainConfig(epochs=cfg.baseline_epochs, learning_rate=cfg.raw_linear_lr, seed=seed), K=K)
        hyps["A"] = [viterbi_decode(u.x, lin) for u in ev]
    init = standardized_scorer(train, K, cfg.hidden, seed)
    for name, loss in (("B", LossKind.APPROX_ACC), ("C", LossKind.MAX_MARGIN)):
        if name in columns:
            scorers[name], _ = train_sdnn(train, ltr, init, sdnn_config(loss, seed, cfg))
            hyps[name] = [rescore_decode(u.x, lat, scorers[name], cfg.n_best) for u, lat in zip(ev, lev)]
    post_init = standardized_scorer(baseline.posteriorgrams(train), K, cfg.hidden, seed)
    for name, flr in (("C_frozen", 0.0), ("D", None)):
        if name in columns:
            scorers[name], _ = train_fsdnn(
                train, ltr, FsdnnParams(baseline.frontend, post_init), sdnn_config(LossKind.MAX_MARGIN, seed, cfg), frontend_lr=flr
            )
            hyps[name] = decode_fsdnn(ev, lev, scorers[name], cfg.n_best)
    per = {name: corpus_per(refs, h) for name, h in hyps.items()}
    log.info("seed %d columns %s", seed, per)
    dev = corpus.split("dev")
    return TableRun(per, ev, lev, hyps, dev, lev[: len(dev)], scorers)


def score_accuracy_rows(utts, lattices, scorer: MlpParams, n: int):
    """``(utterance_id, path_rank, score, accuracy)`` for each n-best path."""
    rows = []
    for uid, (u, lat) in enumerate(zip(utts, lattices)):
        paths, scores = rescore_nbest(u.x, lat, scorer, n)
        for rank, (p, s) in enumerate(zip(paths, scores)):
            rows.append((uid, rank, float(s), accuracy(u.y_ref, p.as_array())))
    return rows


def write_score_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["utterance_id", "path_rank", "score", "accuracy"])
        w.writerows((u, r, f"{s:.17g}", f"{a:.17g}") for u, r, s, a in rows)


def read_score_csv(path) -> list:
    with open(path, newline="") as fh:
        return [(int(r["utterance_id"]), int(r["path_rank"]), float(r["score"]), float(r["accuracy"])) for r in csv.DictReader(fh)]


def score_accuracy_correlation(rows) -> float:
    """Spearman correlation between score and phone accuracy over all rows."""
    scores = [r[2] for r in rows]
    accs = [r[3] for r in rows]
    return float(spearmanr(scores, accs).statistic)


def lattice_bound_violations(utts, lattices, hyps) -> list[int]:
    """Indices where a hypothesis beats its lattice's oracle path (must be empty)."""
    bad = []
    for i, (u, lat, h) in enumerate(zip(utts, lattices, hyps)):
        if edit_distance(collapse_runs(u.y_ref), collapse_runs(h)) < oracle_errors(lat, u.y_ref):
            bad.append(i)
    return bad
