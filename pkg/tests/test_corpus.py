import numpy as np
import pytest

from structseq.core import ConfigError
from structseq.corpus import (
    FormatVersionError,
    ModelKindError,
    ParseError,
    SyntheticSpec,
    TruncatedFileError,
    default_spec,
    format_model,
    generate_corpus,
    load_corpus,
    load_hypotheses,
    load_model,
    parse_model,
    parse_utterances,
    save_corpus,
    save_hypotheses,
    save_model,
)
from structseq.features import psi_dim
from structseq.fsdnn import FsdnnParams
from structseq.linear import LinearParams
from structseq.neural import SOFTMAX, init_weights


def test_reproducible_and_split():
    a = generate_corpus(default_spec(seed=4), 50)
    b = generate_corpus(default_spec(seed=4), 50)
    assert all(np.array_equal(u.x, v.x) and np.array_equal(u.y_ref, v.y_ref) for u, v in zip(a.utterances, b.utterances))
    assert [len(a.split(s)) for s in ("train", "dev", "test")] == [40, 5, 5]


def test_zero_variance_frames_are_means():
    spec = default_spec(seed=1)
    spec = SyntheticSpec(spec.transition, spec.means, 0.0, spec.duration_bias, seed=2)
    for u in generate_corpus(spec, 5).utterances:
        assert np.array_equal(u.x, spec.means[u.y_ref, 0])
        d = ((u.x[:, None, :] - spec.means[None, :, 0, :]) ** 2).sum(axis=2)
        assert np.array_equal(d.argmin(axis=1), u.y_ref)


def test_self_loops_give_constant_sequences():
    spec = default_spec(seed=1)
    spec = SyntheticSpec(np.eye(6), spec.means, 1.0, seed=3)
    assert all(len(set(u.y_ref.tolist())) == 1 for u in generate_corpus(spec, 10).utterances)


def test_transition_frequencies_within_3_sigma():
    spec = default_spec(K=4, seed=5, M_min=1000, M_max=1000)
    corpus = generate_corpus(spec, 100)
    counts = np.zeros((4, 4))
    for u in corpus.utterances:
        np.add.at(counts, (u.y_ref[:-1], u.y_ref[1:]), 1)
    P = spec.effective_transition()
    n = counts.sum(axis=1, keepdims=True)
    assert np.all(np.abs(counts - n * P) <= 3 * np.sqrt(n * P * (1 - P)) + 1e-9)


def test_invalid_spec():
    with pytest.raises(ConfigError):
        default_spec(K=1)
    with pytest.raises(ConfigError):
        SyntheticSpec(np.full((2, 2), 0.6), np.zeros((2, 1)), 1.0)
    with pytest.raises(ConfigError):
        SyntheticSpec(np.eye(2), np.zeros((2, 1)), -1.0)


def test_corpus_round_trip(tmp_path):
    utts = generate_corpus(default_spec(seed=9), 10).utterances
    save_corpus(tmp_path / "c.txt", utts, 6)
    back = load_corpus(tmp_path / "c.txt")
    assert all(np.array_equal(u.x, v.x) and np.array_equal(u.y_ref, v.y_ref) for u, v in zip(utts, back))
    assert parse_utterances("") == ([], None)


def test_corpus_parse_errors():
    with pytest.raises(ParseError, match="line 5"):
        parse_utterances("# structseq-corpus 1 K=2\n2 1\n0.5\n1.0\n0 2\n")
    with pytest.raises(ParseError, match="line 2"):
        parse_utterances("2 1\nabc\n1.0\n0 1\n")
    with pytest.raises(ParseError, match="truncated"):
        parse_utterances("3 1\n1.0\n2.0\n")


def models():
    return [
        LinearParams(np.random.default_rng(0).normal(size=psi_dim(2, 3)), 2, 3),
        init_weights([5, 3, 1], 0),
        init_weights([5, 3, 1], 0).with_standardization(np.random.default_rng(1).normal(size=(20, 5))),
        FsdnnParams(init_weights([2, 4, 3], 1, SOFTMAX), init_weights([psi_dim(3, 3), 4, 1], 2)),
    ]


def _equal(a, b):
    if isinstance(a, LinearParams):
        return np.array_equal(a.theta, b.theta) and (a.D, a.K) == (b.D, b.K)
    if isinstance(a, FsdnnParams):
        return _equal(a.frontend, b.frontend) and _equal(a.scorer, b.scorer)
    same_norm = (a.input_shift is None) == (b.input_shift is None)
    if a.input_shift is not None:
        same_norm = np.array_equal(a.input_shift, b.input_shift) and np.array_equal(a.input_scale, b.input_scale)
    return a.output == b.output and same_norm and all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))


@pytest.mark.parametrize("params", models(), ids=["linear", "mlp", "mlp-normalized", "fsdnn"])
def test_model_round_trip(tmp_path, params):
    save_model(tmp_path / "m.txt", params)
    assert _equal(params, load_model(tmp_path / "m.txt"))


def test_model_errors():
    text = format_model(models()[0])
    with pytest.raises(FormatVersionError):
        parse_model(text.replace("structseq-model 1", "structseq-model 9"))
    with pytest.raises(FormatVersionError):
        parse_model("garbage\n" + text)
    with pytest.raises(ModelKindError):
        parse_model(text, "mlp")
    mlp_text = format_model(models()[1])
    with pytest.raises(TruncatedFileError):
        parse_model("\n".join(mlp_text.splitlines()[:5]))


def test_hypotheses_round_trip(tmp_path):
    hyps = [np.array([0, 1, 1]), np.array([2])]
    save_hypotheses(tmp_path / "h.txt", hyps)
    assert [h.tolist() for h in load_hypotheses(tmp_path / "h.txt")] == [[0, 1, 1], [2]]
    (tmp_path / "bad.txt").write_text("0 x\n")
    with pytest.raises(ParseError):
        load_hypotheses(tmp_path / "bad.txt")
