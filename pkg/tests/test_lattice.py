import itertools

import numpy as np
import pytest

from structseq.core import ConfigError, StructureError
from structseq.lattice import (
    Lattice,
    full_lattice,
    linear_chain_lattice,
    nbest,
    oracle_errors,
    parse_lattices,
    format_lattice,
    random_lattice_path,
    random_sequence,
    read_lattices,
    write_lattices,
)
from structseq.kernels import viterbi
from structseq.metrics import collapse_runs, edit_distance


def enumerate_paths(lat):
    """All (labels, score) over arc paths, brute force."""
    out = {}

    def walk(j, node, labels, score):
        if j == lat.M:
            out[labels] = max(out.get(labels, -np.inf), score)
            return
        for a in lat.out_arcs[j][node]:
            walk(j + 1, a.dst, labels + (a.label,), score + a.score)

    walk(0, 0, (), 0.0)
    return out


def test_single_path_lattice():
    lat = linear_chain_lattice([1, 0, 2], 3, [0.5, 1.0, -1.0])
    paths = nbest(lat, 5)
    assert len(paths) == 1
    assert paths[0].labels == (1, 0, 2) and paths[0].path_score == pytest.approx(0.5)
    rng = np.random.default_rng(0)
    assert all(random_lattice_path(lat, rng).labels == (1, 0, 2) for _ in range(5))


def test_full_lattice_nbest_matches_enumeration(rng):
    emit, trans = rng.normal(size=(3, 2)), rng.normal(size=(2, 2))
    lat = full_lattice(2, 3, emit, trans)
    brute = sorted(enumerate_paths(lat).items(), key=lambda kv: -kv[1])
    got = nbest(lat, None)
    assert len(got) == 8
    assert [p.labels for p in got] == [k for k, _ in brute]
    assert np.allclose([p.path_score for p in got], [v for _, v in brute])


def test_nbest_one_is_viterbi(rng):
    for _ in range(10):
        emit, trans = rng.normal(size=(5, 3)), rng.normal(size=(3, 3))
        best = nbest(full_lattice(3, 5, emit, trans), 1)[0]
        path, total = viterbi(emit, trans)
        assert best.labels == tuple(path.tolist())
        assert best.path_score == pytest.approx(total)


def test_nbest_merges_duplicate_label_paths():
    arcs = [(0, 0, 0, 1, 1.0), (0, 0, 1, 1, 2.0), (1, 0, 0, 0, 0.0), (1, 1, 0, 0, 0.0), (1, 1, 0, 2, -1.0)]
    paths = nbest(Lattice(3, 2, arcs), None)
    assert [p.labels for p in paths] == [(1, 0), (1, 2)]
    assert paths[0].path_score == 2.0


def test_nbest_rejects_zero():
    with pytest.raises(ConfigError):
        nbest(linear_chain_lattice([0], 2), 0)


def test_random_path_branch_frequency():
    lat = Lattice(2, 1, [(0, 0, 0, 0, 0.0), (0, 0, 0, 1, 0.0)])
    rng = np.random.default_rng(7)
    n = 10_000
    ones = sum(random_lattice_path(lat, rng).labels[0] for _ in range(n))
    assert abs(ones - n / 2) <= 3 * np.sqrt(n / 4)


def test_random_sequence():
    with pytest.raises(ConfigError):
        random_sequence(1, 3, np.random.default_rng(0))
    a = random_sequence(4, 10, np.random.default_rng(3))
    b = random_sequence(4, 10, np.random.default_rng(3))
    assert np.array_equal(a, b)
    K, n = 4, 100_000
    counts = np.bincount(random_sequence(K, n, np.random.default_rng(1)), minlength=K)
    assert np.all(np.abs(counts - n / K) <= 3 * np.sqrt(n * (1 / K) * (1 - 1 / K)))


def test_structure_validation():
    with pytest.raises(StructureError):
        Lattice(2, 2, [(0, 0, 0, 0, 0.0), (1, 0, 1, 0, 0.0)])  # end layer has two nodes
    with pytest.raises(StructureError):
        Lattice(2, 2, [(0, 0, 0, 0, 0.0), (0, 0, 1, 1, 0.0), (1, 0, 0, 0, 0.0)])  # dead end node
    with pytest.raises(StructureError):
        Lattice(2, 1, [(0, 0, 0, 2, 0.0)])


def test_oracle_errors_brute_force(rng):
    for _ in range(20):
        K, M = 3, int(rng.integers(1, 6))
        lat = full_lattice(K, M) if rng.random() < 0.3 else _random_lattice(rng, K, M)
        ref = rng.integers(0, K, int(rng.integers(1, 7)))
        want = min(edit_distance(collapse_runs(ref), collapse_runs(p)) for p in enumerate_paths(lat))
        assert oracle_errors(lat, ref) == want


def _random_lattice(rng, K, M):
    arcs, width = [], [1] + [int(rng.integers(1, 3)) for _ in range(M - 1)] + [1]
    for j in range(M):
        for s in range(width[j]):
            for d in range(width[j + 1]):
                for k in rng.choice(K, size=int(rng.integers(1, K + 1)), replace=False):
                    arcs.append((j, s, d, int(k), float(rng.normal())))
    return Lattice(K, M, arcs)


def test_text_round_trip(tmp_path, rng):
    lats = [_random_lattice(rng, 3, int(rng.integers(1, 5))) for _ in range(4)]
    write_lattices(tmp_path / "l.txt", lats)
    back = read_lattices(tmp_path / "l.txt")
    assert back == lats
    assert parse_lattices(format_lattice(lats[0]))[0] == lats[0]


def test_parse_errors():
    with pytest.raises(StructureError, match="line 2"):
        parse_lattices("2 1\n0 0 0 x 1.0\n")
