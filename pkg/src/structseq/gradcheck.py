"""Backprop against central finite differences on random small configurations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import psi_dim, psi_first_order
from .fsdnn import FsdnnParams, joint_example_gradient
from .neural import SIGMOID, SOFTMAX, init_weights, mlp_backward, mlp_forward, numerical_gradient, relative_error
from .sdnn import LossKind, feature_set_gradient

TOLERANCE = 1e-4
EPS = 1e-5


@dataclass
class CheckResult:
    name: str
    max_error: float
    worst: tuple  # (weight index, coordinate)
    n_configs: int

    @property
    def passed(self) -> bool:
        return self.max_error <= TOLERANCE

    def report(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: max relative error {self.max_error:.3e} over {self.n_configs} configs (worst weight {self.worst[0]} at {self.worst[1]})"


def _compare(analytic, weights, f):
    worst_err, worst_at = 0.0, (0, ())
    for l, (g, w) in enumerate(zip(analytic, weights)):
        num = numerical_gradient(f, w, EPS)
        err = relative_error(g, num)
        idx = np.unravel_index(int(np.argmax(err)), err.shape)
        if err[idx] > worst_err:
            worst_err, worst_at = float(err[idx]), (l, tuple(int(i) for i in idx))
    return worst_err, worst_at


def _random_weights(rng, sizes, output):
    p = init_weights(sizes, int(rng.integers(2**31)), output)
    for w in p.weights:
        w += rng.normal(0, 0.3, size=w.shape)
    return p


def check_mlp(n_configs: int = 20, seed: int = 0) -> CheckResult:
    """Weighted sum of outputs, sigmoid and softmax heads, one to three hidden layers."""
    rng = np.random.default_rng(seed)
    worst = (0.0, (0, ()))
    for c in range(n_configs):
        output = SOFTMAX if c % 2 else SIGMOID
        sizes = [int(rng.integers(2, 6))] + [int(rng.integers(2, 6)) for _ in range(1 + c % 3)]
        sizes.append(int(rng.integers(2, 5)) if output == SOFTMAX else 1)
        p = _random_weights(rng, sizes, output)
        x = rng.normal(size=(3, sizes[0]))
        up = rng.normal(size=(3, sizes[-1])) if output == SOFTMAX else rng.normal(size=3)
        out, trace = mlp_forward(x, p)
        grads, _ = mlp_backward(trace, p, up)

        def f():
            return float(np.sum(up * mlp_forward(x, p)[0]))

        worst = max(worst, _compare(grads, p.weights, f), key=lambda t: t[0])
    return CheckResult("mlp", worst[0], worst[1], n_configs)


def _example_set(rng, D, K, M, n_neg):
    x = rng.normal(size=(M, D))
    seqs = [rng.integers(0, K, size=M) for _ in range(n_neg + 1)]
    deltas = rng.uniform(0.05, 0.9, size=n_neg)
    targets = rng.uniform(0.0, 1.0, size=n_neg)
    return x, seqs, deltas, targets


def _away_from_kinks(scores, deltas, kind) -> bool:
    if kind is not LossKind.MAX_MARGIN:
        return True
    return bool(np.all(np.abs(scores[1:] + deltas - scores[0]) > 1e-3))


def check_loss(kind: LossKind, n_configs: int = 20, seed: int = 0) -> CheckResult:
    """Scorer weights through one of the structured losses on a random example set."""
    kind = LossKind(kind)
    rng = np.random.default_rng([seed, 1 if kind is LossKind.MAX_MARGIN else 2])
    worst = (0.0, (0, ()))
    done = 0
    while done < n_configs:
        D, K, M = int(rng.integers(1, 4)), int(rng.integers(2, 4)), int(rng.integers(2, 5))
        x, seqs, deltas, targets = _example_set(rng, D, K, M, int(rng.integers(1, 4)))
        feats = np.vstack([psi_first_order(x, y, K) for y in seqs])
        p = _random_weights(rng, [psi_dim(D, K), int(rng.integers(2, 6)), 1], SIGMOID)
        if not _away_from_kinks(mlp_forward(feats, p)[0], deltas, kind):
            continue
        _, grads, _ = feature_set_gradient(p, feats, deltas, targets, kind)

        def f():
            return feature_set_gradient(p, feats, deltas, targets, kind)[0]

        worst = max(worst, _compare(grads, p.weights, f), key=lambda t: t[0])
        done += 1
    return CheckResult(f"loss:{kind.value}", worst[0], worst[1], n_configs)


def check_fsdnn(n_configs: int = 20, seed: int = 0) -> CheckResult:
    """Front end and scorer weights through softmax, feature-block routing and the loss."""
    rng = np.random.default_rng([seed, 3])
    worst = (0.0, (0, ()))
    done = 0
    while done < n_configs:
        kind = LossKind.MAX_MARGIN if done % 2 else LossKind.APPROX_ACC
        D, K, M = int(rng.integers(1, 4)), int(rng.integers(2, 4)), int(rng.integers(2, 5))
        x, seqs, deltas, targets = _example_set(rng, D, K, M, int(rng.integers(1, 3)))
        n_hidden = 1 + done % 2
        front = _random_weights(rng, [D] + [int(rng.integers(2, 5))] * n_hidden + [K], SOFTMAX)
        scorer = _random_weights(rng, [psi_dim(K, K)] + [int(rng.integers(2, 5))] * n_hidden + [1], SIGMOID)
        params = FsdnnParams(front, scorer)
        post = mlp_forward(x, front)[0]
        scores = mlp_forward(np.vstack([psi_first_order(post, y, K) for y in seqs]), scorer)[0]
        if not _away_from_kinks(scores, deltas, kind):
            continue
        _, fgrads, sgrads = joint_example_gradient(x, seqs, deltas, targets, params, kind)

        def f():
            return joint_example_gradient(x, seqs, deltas, targets, params, kind, frontend=False)[0]

        res_f = _compare(fgrads, front.weights, f)
        res_s = _compare(sgrads, scorer.weights, f)
        res_s = (res_s[0], (res_s[1][0] + len(front.weights), res_s[1][1]))
        worst = max(worst, res_f, res_s, key=lambda t: t[0])
        done += 1
    return CheckResult("fsdnn", worst[0], worst[1], n_configs)


def run_all(n_configs: int = 20, seed: int = 0) -> list[CheckResult]:
    return [
        check_mlp(n_configs, seed),
        check_loss(LossKind.APPROX_ACC, n_configs, seed),
        check_loss(LossKind.MAX_MARGIN, n_configs, seed),
        check_fsdnn(n_configs, seed),
    ]
