"""Frame-synchronous lattices and the negative-example samplers drawn from them.

A lattice over ``M`` frames has node layers ``0..M``.  Layer 0 holds only the
start node and layer ``M`` only the end node (both id 0).  An arc at frame
``j`` goes from a node of layer ``j`` to a node of layer ``j + 1`` and emits
the label of frame ``j``, so every complete path carries exactly ``M`` labels.
"""

from __future__ import annotations

import heapq
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .core import ConfigError, StructureError, as_labels
from .metrics import collapse_runs


class Arc(NamedTuple):
    frame: int
    src: int
    dst: int
    label: int
    score: float


@dataclass(frozen=True)
class ScoredPath:
    labels: tuple[int, ...]
    path_score: float

    def as_array(self) -> np.ndarray:
        return np.asarray(self.labels, dtype=np.int64)


class Lattice:
    def __init__(self, K: int, M: int, arcs: Iterable):
        if K < 1 or M < 1:
            raise StructureError(f"lattice needs K >= 1 and M >= 1, got K={K}, M={M}")
        self.K = int(K)
        self.M = int(M)
        self.arcs = tuple(Arc(int(a[0]), int(a[1]), int(a[2]), int(a[3]), float(a[4])) for a in arcs)
        self._index()

    def _index(self):
        K, M = self.K, self.M
        sizes = [1] + [0] * M
        for a in self.arcs:
            if not 0 <= a.frame < M:
                raise StructureError(f"arc frame {a.frame} outside [0, {M})")
            if not 0 <= a.label < K:
                raise StructureError(f"arc label {a.label} outside [0, {K})")
            if a.src < 0 or a.dst < 0:
                raise StructureError("negative node id")
            sizes[a.frame + 1] = max(sizes[a.frame + 1], a.dst + 1)
        if sizes[M] != 1:
            raise StructureError("the last layer must contain only the end node 0")
        out = [[[] for _ in range(sizes[j])] for j in range(M)]
        for a in self.arcs:
            if a.src >= sizes[a.frame]:
                raise StructureError(f"arc at frame {a.frame} leaves unknown node {a.src}")
            out[a.frame][a.src].append(a)
        self.layer_sizes = tuple(sizes)
        self.out_arcs = out

        # every node must lie on a start-to-end path
        reach = [np.zeros(s, dtype=bool) for s in sizes]
        reach[0][0] = True
        for j in range(M):
            for node, arcs in enumerate(out[j]):
                if reach[j][node]:
                    for a in arcs:
                        reach[j + 1][a.dst] = True
        coreach = [np.zeros(s, dtype=bool) for s in sizes]
        coreach[M][0] = True
        for j in range(M - 1, -1, -1):
            for node, arcs in enumerate(out[j]):
                coreach[j][node] = any(coreach[j + 1][a.dst] for a in arcs)
        for j in range(M + 1):
            if not np.all(reach[j] & coreach[j]):
                bad = int(np.flatnonzero(~(reach[j] & coreach[j]))[0])
                raise StructureError(f"node {bad} in layer {j} is not on a start-to-end path")

    def __eq__(self, other):
        return (
            isinstance(other, Lattice)
            and (self.K, self.M) == (other.K, other.M)
            and sorted(self.arcs) == sorted(other.arcs)
        )

    def __repr__(self):
        return f"Lattice(K={self.K}, M={self.M}, arcs={len(self.arcs)})"

    def best_completion(self) -> list[np.ndarray]:
        """Best score from each node to the end node, per layer."""
        h = [np.full(s, -np.inf) for s in self.layer_sizes]
        h[self.M][0] = 0.0
        for j in range(self.M - 1, -1, -1):
            for node, arcs in enumerate(self.out_arcs[j]):
                h[j][node] = max(a.score + h[j + 1][a.dst] for a in arcs)
        return h

    def path_score(self, labels) -> float | None:
        """Best score of a path emitting ``labels``, or None if no such path exists."""
        labels = as_labels(labels)
        if len(labels) != self.M:
            return None
        states = {0: 0.0}
        for j in range(self.M):
            nxt: dict[int, float] = {}
            for node, g in states.items():
                for a in self.out_arcs[j][node]:
                    if a.label == labels[j]:
                        s = g + a.score
                        if s > nxt.get(a.dst, -np.inf):
                            nxt[a.dst] = s
            if not nxt:
                return None
            states = nxt
        return states[0]


def full_lattice(K: int, M: int, emit=None, trans=None) -> Lattice:
    """Lattice containing all ``K**M`` sequences, one node per label per frame.

    Arc scores are ``trans[prev, k] + emit[j, k]`` when scores are given, else 0.
    """
    emit = np.zeros((M, K)) if emit is None else np.asarray(emit, dtype=np.float64)
    trans = np.zeros((K, K)) if trans is None else np.asarray(trans, dtype=np.float64)
    arcs = []
    for j in range(M):
        srcs = [0] if j == 0 else range(K)
        for s in srcs:
            for k in range(K):
                sc = emit[j, k] + (trans[s, k] if j > 0 else 0.0)
                arcs.append((j, s, 0 if j == M - 1 else k, k, sc))
    return Lattice(K, M, arcs)


def linear_chain_lattice(labels, K: int, scores=None) -> Lattice:
    labels = as_labels(labels, K)
    M = len(labels)
    scores = np.zeros(M) if scores is None else np.asarray(scores, dtype=np.float64)
    return Lattice(K, M, [(j, 0, 0, int(labels[j]), scores[j]) for j in range(M)])


def nbest(lattice: Lattice, n: int | None) -> list[ScoredPath]:
    """The ``n`` highest-scoring distinct label sequences, best first.

    A* search with the exact best-completion heuristic, so complete paths
    leave the queue in non-increasing score order.  Several arc paths with the
    same labels count once, with the best score.  ``n=None`` enumerates all.
    """
    if n is not None and n < 1:
        raise ConfigError("n must be >= 1")
    h = lattice.best_completion()
    M = lattice.M
    heap = [(-h[0][0], (), 0, 0, 0.0)]
    seen: set[tuple[int, ...]] = set()
    out: list[ScoredPath] = []
    while heap and (n is None or len(out) < n):
        negf, labels, frame, node, g = heapq.heappop(heap)
        if frame == M:
            if labels not in seen:
                seen.add(labels)
                out.append(ScoredPath(labels, g))
            continue
        for a in lattice.out_arcs[frame][node]:
            g2 = g + a.score
            heapq.heappush(heap, (-(g2 + h[frame + 1][a.dst]), labels + (a.label,), frame + 1, a.dst, g2))
    return out


def random_lattice_path(lattice: Lattice, rng: np.random.Generator) -> ScoredPath:
    """Walk from start to end choosing uniformly among outgoing arcs."""
    node, g, labels = 0, 0.0, []
    for j in range(lattice.M):
        arcs = lattice.out_arcs[j][node]
        a = arcs[int(rng.integers(len(arcs)))]
        labels.append(a.label)
        g += a.score
        node = a.dst
    return ScoredPath(tuple(labels), g)


def random_sequence(K: int, M: int, rng: np.random.Generator) -> np.ndarray:
    if K < 2:
        raise ConfigError("random_sequence needs K >= 2")
    if M < 1:
        raise ConfigError("random_sequence needs M >= 1")
    return rng.integers(0, K, size=M).astype(np.int64)


def oracle_errors(lattice: Lattice, y_ref) -> int:
    """Smallest phone edit distance between the reference and any lattice path.

    Dynamic programme over (node, last label, reference position); a path's
    repeated labels collapse, so an arc whose label equals the previous one
    emits nothing.
    """
    ref = collapse_runs(y_ref)
    R = len(ref)

    def close(states):
        # reference deletions
        out = dict(states)
        for (node, last, i), c in sorted(states.items(), key=lambda kv: kv[0][2]):
            for i2 in range(i + 1, R + 1):
                key = (node, last, i2)
                c2 = c + (i2 - i)
                if c2 < out.get(key, np.inf):
                    out[key] = c2
        return out

    states = close({(0, -1, 0): 0})
    for j in range(lattice.M):
        nxt: dict[tuple[int, int, int], int] = {}

        def relax(key, c):
            if c < nxt.get(key, np.inf):
                nxt[key] = c

        for (node, last, i), c in states.items():
            for a in lattice.out_arcs[j][node]:
                if a.label == last:
                    relax((a.dst, last, i), c)
                    continue
                relax((a.dst, a.label, i), c + 1)  # insertion
                if i < R:
                    relax((a.dst, a.label, i + 1), c + (a.label != ref[i]))
        states = close(nxt)
    return int(min(c + (R - i) for (_, _, i), c in states.items()))


def oracle_delta(lattice: Lattice, y_ref) -> float:
    return oracle_errors(lattice, y_ref) / len(collapse_runs(y_ref))


# --- text serialization -----------------------------------------------------
#
# One lattice per record: a header line "K M" followed by one arc per line,
# "frame src_node dst_node label score".  Records are separated by a blank
# line.  Scores use 17 significant digits so a round trip is exact.


def format_lattice(lattice: Lattice) -> str:
    lines = [f"{lattice.K} {lattice.M}"]
    lines += [f"{a.frame} {a.src} {a.dst} {a.label} {a.score:.17g}" for a in lattice.arcs]
    return "\n".join(lines) + "\n"


def write_lattices(path, lattices: Iterable[Lattice]) -> None:
    with open(path, "w") as f:
        f.write("\n".join(format_lattice(lat) for lat in lattices))


def parse_lattices(text: str) -> list[Lattice]:
    lattices: list[Lattice] = []
    header = None
    arcs: list = []

    def flush():
        if header is not None:
            lattices.append(Lattice(header[0], header[1], arcs))

    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.strip()
        if not line:
            flush()
            header, arcs = None, []
            continue
        parts = line.split()
        try:
            if header is None:
                if len(parts) != 2:
                    raise ValueError("expected header 'K M'")
                header = (int(parts[0]), int(parts[1]))
            else:
                if len(parts) != 5:
                    raise ValueError("expected 'frame src dst label score'")
                arcs.append((int(parts[0]), int(parts[1]), int(parts[2]), int(parts[3]), float(parts[4])))
        except ValueError as exc:
            raise StructureError(f"line {lineno}: {exc}") from None
    flush()
    return lattices


def read_lattices(path) -> list[Lattice]:
    return parse_lattices(Path(path).read_text())
