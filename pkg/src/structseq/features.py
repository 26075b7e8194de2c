"""Joint feature map between an acoustic sequence and a label sequence.

Layout of the first-order vector (zero-based, D feature dims, K labels)::

    [ observation block | transition block ]
      length D*K          length K*K

Frame ``j`` with label ``k`` is added into ``[k*D, (k+1)*D)``; a transition
``a -> b`` increments slot ``D*K + a + b*K``.  Both follow the tensor-product
convention of :func:`structseq.core.tensor_product` (first factor fastest).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import PairingError, as_frames, as_labels

FIRST = "first"
SECOND = "second"


@dataclass
class StructuredFeature:
    values: np.ndarray
    order: str
    D: int
    K: int

    @property
    def observation(self) -> np.ndarray:
        width = self.D * self.K * (self.K if self.order == SECOND else 1)
        return self.values[:width]

    @property
    def transitions(self) -> np.ndarray:
        width = self.D * self.K * (self.K if self.order == SECOND else 1)
        return self.values[width:]


def psi_dim(D: int, K: int, order: str = FIRST) -> int:
    if order == FIRST:
        return D * K + K * K
    if order == SECOND:
        return D * K * K + K ** 3
    raise ValueError(f"unknown order {order!r}")


def _pair(x, y, K):
    x = as_frames(x)
    y = as_labels(y, K)
    if len(y) != x.shape[0]:
        raise PairingError(f"{x.shape[0]} frames but {len(y)} labels")
    return x, y


def psi_first_order(x, y, K: int) -> np.ndarray:
    """Dense first-order feature vector of length ``D*K + K*K``."""
    x, y = _pair(x, y, K)
    return kernels.psi_first_order(x, y, K)


def psi_second_order(x, y, K: int) -> np.ndarray:
    """Second-order extension of length ``D*K**2 + K**3``.

    The observation half accumulates ``x[n] (x) e(y[n]) (x) e(y[n+1])`` for
    ``n < M-1`` and the transition half counts label trigrams, so an
    utterance with ``M < 3`` has an all-zero transition half.
    """
    x, y = _pair(x, y, K)
    M, D = x.shape
    out = np.zeros(psi_dim(D, K, SECOND))
    if M >= 2:
        obs = out[: D * K * K].reshape(K * K, D)
        np.add.at(obs, y[:-1] + y[1:] * K, x[:-1])
    if M >= 3:
        np.add.at(out, D * K * K + y[:-2] + y[1:-1] * K + y[2:] * K * K, 1.0)
    return out


def psi(x, y, K: int, order: str = FIRST) -> StructuredFeature:
    x = as_frames(x)
    fn = psi_first_order if order == FIRST else psi_second_order
    return StructuredFeature(fn(x, y, K), order, x.shape[1], K)


def psi_gradient_blocks(y, K: int, D: int, order: str = FIRST) -> np.ndarray:
    """Start offset of the observation block each frame was added into.

    Since the feature map is linear in ``x`` with 0/1 coefficients, the
    gradient w.r.t. frame ``j`` is the upstream gradient sliced at
    ``[start_j, start_j + D)``.  Under second order the last frame does not
    enter the observation half; its entry is ``-1``.
    """
    y = as_labels(y, K)
    if order == FIRST:
        return y * D
    starts = np.full(len(y), -1, dtype=np.int64)
    starts[:-1] = (y[:-1] + y[1:] * K) * D
    return starts


def psi_backward(upstream, blocks, D: int) -> np.ndarray:
    """Route a gradient on the feature vector back to the (M, D) frames."""
    upstream = np.asarray(upstream, dtype=np.float64)
    blocks = np.asarray(blocks)
    grad = np.zeros((len(blocks), D))
    valid = blocks >= 0
    idx = blocks[valid][:, None] + np.arange(D)
    grad[valid] = upstream[idx]
    return grad
