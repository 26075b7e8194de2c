import itertools
import subprocess
import sys

import numpy as np
import pytest

from structseq import kernels

py = kernels.get_backend("python")
try:
    cy = kernels.get_backend("cython")
except ImportError:  # extension not built
    cy = None

needs_ext = pytest.mark.skipif(cy is None, reason="compiled extension not built")


def brute_viterbi(emit, trans):
    M, K = emit.shape
    best, arg = -np.inf, None
    for seq in itertools.product(range(K), repeat=M):
        s = emit[0, seq[0]] + sum(trans[seq[j - 1], seq[j]] + emit[j, seq[j]] for j in range(1, M))
        if s > best + 1e-12:
            best, arg = s, seq
    return list(arg), best


@pytest.mark.parametrize("backend", [py, pytest.param(cy, marks=needs_ext)], ids=["python", "cython"])
def test_viterbi_against_brute_force(rng, backend):
    for _ in range(30):
        K, M = int(rng.integers(2, 4)), int(rng.integers(1, 5))
        emit, trans = rng.normal(size=(M, K)), rng.normal(size=(K, K))
        path, total = backend.viterbi(emit, trans)
        want, best = brute_viterbi(emit, trans)
        assert path.tolist() == want
        assert total == pytest.approx(best, abs=1e-12)


@pytest.mark.parametrize("backend", [py, pytest.param(cy, marks=needs_ext)], ids=["python", "cython"])
def test_viterbi_ties_pick_smallest(backend):
    path, _ = backend.viterbi(np.zeros((4, 3)), np.zeros((3, 3)))
    assert path.tolist() == [0, 0, 0, 0]
    emit = np.array([[0.0, 1.0, 1.0], [0.0, 0.0, 0.0]])
    assert backend.viterbi(emit, np.zeros((3, 3)))[0].tolist() == [1, 0]


@needs_ext
def test_backends_agree_bitwise(rng):
    for _ in range(200):
        K, M, D = int(rng.integers(2, 7)), int(rng.integers(1, 30)), int(rng.integers(1, 5))
        emit, trans = rng.normal(size=(M, K)), rng.normal(size=(K, K))
        if rng.random() < 0.3:
            emit = np.round(emit)
            trans = np.round(trans)
        p1, t1 = py.viterbi(emit, trans)
        p2, t2 = cy.viterbi(emit, trans)
        assert np.array_equal(p1, p2) and t1 == t2
        a = rng.integers(0, K, int(rng.integers(0, 12))).astype(np.int64)
        b = rng.integers(0, K, int(rng.integers(0, 12))).astype(np.int64)
        assert py.edit_distance(a, b) == cy.edit_distance(a, b)
        x = rng.normal(size=(M, D))
        y = rng.integers(0, K, M).astype(np.int64)
        assert np.array_equal(py.psi_first_order(x, y, K), cy.psi_first_order(x, y, K))


def test_pure_python_switch():
    code = "from structseq import kernels; print(kernels.BACKEND)"
    out = subprocess.run(
        [sys.executable, "-c", code], capture_output=True, text=True, env={"STRUCTSEQ_PURE_PYTHON": "1", "PATH": ""}, check=True
    )
    assert out.stdout.strip() == "python"


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")
