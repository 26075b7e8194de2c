"""Synthetic HMM-style corpora and the text formats for corpora and models."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ConfigError, DimensionError, StructSeqError, Utterance
from .neural import MlpParams

FORMAT_VERSION = "1"
SPLITS = ("train", "dev", "test")


class ParseError(StructSeqError, ValueError):
    pass


class ModelFormatError(StructSeqError, ValueError):
    pass


class FormatVersionError(ModelFormatError):
    pass


class TruncatedFileError(ModelFormatError):
    pass


class ModelKindError(ModelFormatError):
    pass


@dataclass
class SyntheticSpec:
    """Generator settings.

    ``means`` has shape (K, C, D): C emission components per phone (C=1 for
    plain Gaussians).  With ``component_per_segment`` one component is drawn
    per run of a phone rather than per frame.  ``duration_bias`` mixes the
    transition matrix with the identity, lengthening phone runs.
    """

    transition: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    duration_bias: float = 0.0
    M_min: int = 20
    M_max: int = 40
    seed: int = 0
    component_per_segment: bool = True

    def __post_init__(self):
        self.transition = np.asarray(self.transition, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        if self.means.ndim == 2:
            self.means = self.means[:, None, :]
        self.variances = np.broadcast_to(np.asarray(self.variances, dtype=np.float64), (self.K, self.D)).copy()
        K = self.K
        if K < 2:
            raise ConfigError("need K >= 2 phones")
        if self.transition.shape != (K, K):
            raise ConfigError(f"transition must be {K}x{K}")
        if np.any(self.transition < 0) or not np.allclose(self.transition.sum(axis=1), 1.0):
            raise ConfigError("transition rows must be probability vectors")
        if np.any(self.variances < 0):
            raise ConfigError("variances must be non-negative")
        if not 0.0 <= self.duration_bias <= 1.0:
            raise ConfigError("duration_bias must lie in [0, 1]")
        if self.M_min < 2 or self.M_max < self.M_min:
            raise ConfigError("need 2 <= M_min <= M_max")

    @property
    def K(self) -> int:
        return self.means.shape[0]

    @property
    def D(self) -> int:
        return self.means.shape[2]

    def effective_transition(self) -> np.ndarray:
        return (1.0 - self.duration_bias) * self.transition + self.duration_bias * np.eye(self.K)


def default_spec(K: int = 6, D: int = 8, seed: int = 0, mixture: bool = False, noise: float = 1.0,
                 M_min: int = 20, M_max: int = 40, duration_bias: float = 0.7) -> SyntheticSpec:
    """Desk-scale generator settings.

    Plain mode: one Gaussian per phone with unit-scale random means.  Mixture
    mode: each phone emits around ``+mu`` or ``-mu`` (one sign per run), so
    no linear function of a frame separates the phones.
    """
    if K < 2:
        raise ConfigError("need K >= 2 phones")
    rng = np.random.default_rng([seed, 31337])
    trans = rng.dirichlet(np.ones(K), size=K)
    if mixture:
        mu = rng.normal(size=(K, D))
        mu /= np.linalg.norm(mu, axis=1, keepdims=True)
        means = np.stack([2.0 * mu, -2.0 * mu], axis=1)
    else:
        means = rng.normal(size=(K, 1, D))
    return SyntheticSpec(trans, means, np.full((K, D), noise ** 2), duration_bias, M_min, M_max, seed)


@dataclass
class Corpus:
    utterances: list
    K: int
    splits: list = field(default_factory=list)

    def __post_init__(self):
        if not self.splits:
            self.splits = ["train"] * len(self.utterances)
        if len(self.splits) != len(self.utterances):
            raise ConfigError("one split tag per utterance")
        if self.utterances:
            D = self.utterances[0].D
            for u in self.utterances:
                if u.D != D:
                    raise ConfigError("utterances disagree on feature width")
                if len(u.y_ref) and u.y_ref.max() >= self.K:
                    raise ConfigError("label outside the alphabet")

    def split(self, name: str) -> list:
        return [u for u, s in zip(self.utterances, self.splits) if s == name]

    @property
    def D(self) -> int:
        return self.utterances[0].D


def generate_corpus(spec: SyntheticSpec, n_utterances: int) -> Corpus:
    """Sample utterances from the Markov chain; split 80/10/10 in order."""
    if n_utterances < 0:
        raise ConfigError("n_utterances must be >= 0")
    rng = np.random.default_rng(spec.seed)
    P = spec.effective_transition()
    cum = np.cumsum(P, axis=1)
    std = np.sqrt(spec.variances)
    C = spec.means.shape[1]
    utts = []
    for _ in range(n_utterances):
        M = int(rng.integers(spec.M_min, spec.M_max + 1))
        y = np.empty(M, dtype=np.int64)
        y[0] = rng.integers(spec.K)
        u = rng.random(M)
        for j in range(1, M):
            y[j] = min(int(np.searchsorted(cum[y[j - 1]], u[j], side="right")), spec.K - 1)
        if spec.component_per_segment:
            comp = np.empty(M, dtype=np.int64)
            draws = rng.integers(C, size=M)
            for j in range(M):
                comp[j] = draws[j] if j == 0 or y[j] != y[j - 1] else comp[j - 1]
        else:
            comp = rng.integers(C, size=M)
        z = rng.normal(size=(M, spec.D))
        x = spec.means[y, comp] + std[y] * z
        utts.append(Utterance(x, y))
    n_train = int(round(0.8 * n_utterances))
    n_dev = int(round(0.1 * n_utterances))
    splits = ["train"] * n_train + ["dev"] * n_dev + ["test"] * (n_utterances - n_train - n_dev)
    return Corpus(utts, spec.K, splits)


# --- corpus text format -------------------------------------------------------
#
# Optional comment line "# structseq-corpus <version> K=<K>", then per
# utterance: a header "M D", M lines of D features, one line of M labels.


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def format_utterances(utts, K: int | None = None) -> str:
    lines = [f"# structseq-corpus {FORMAT_VERSION}" + (f" K={K}" if K is not None else "")]
    for u in utts:
        lines.append(f"{u.M} {u.D}")
        lines.extend(" ".join(_fmt(v) for v in row) for row in u.x)
        lines.append(" ".join(str(int(k)) for k in u.y_ref))
    return "\n".join(lines) + "\n"


def save_corpus(path, utts, K: int | None = None) -> None:
    Path(path).write_text(format_utterances(utts, K))


def parse_utterances(text: str, K: int | None = None) -> tuple[list, int | None]:
    lines = text.splitlines()
    utts = []
    i = 0
    n = len(lines)

    def fail(lineno, msg):
        raise ParseError(f"line {lineno}: {msg}")

    while i < n:
        line = lines[i].strip()
        if not line:
            i += 1
            continue
        if line.startswith("#"):
            for tok in line.split():
                if tok.startswith("K="):
                    try:
                        K = int(tok[2:]) if K is None else K
                    except ValueError:
                        fail(i + 1, f"bad alphabet size {tok!r}")
            i += 1
            continue
        parts = line.split()
        try:
            M, D = int(parts[0]), int(parts[1])
            if len(parts) != 2 or M < 1 or D < 1:
                raise ValueError
        except (ValueError, IndexError):
            fail(i + 1, f"expected header 'M D', got {line!r}")
        if i + M + 1 > n - 1:
            fail(n, f"record starting at line {i + 1} is truncated")
        x = np.empty((M, D))
        for j in range(M):
            row = lines[i + 1 + j].split()
            if len(row) != D:
                fail(i + 2 + j, f"expected {D} features, got {len(row)}")
            try:
                x[j] = [float(v) for v in row]
            except ValueError:
                fail(i + 2 + j, "non-numeric feature")
        lab_line = i + 1 + M
        toks = lines[lab_line].split()
        if len(toks) != M:
            fail(lab_line + 1, f"expected {M} labels, got {len(toks)}")
        try:
            y = np.array([int(t) for t in toks], dtype=np.int64)
        except ValueError:
            fail(lab_line + 1, "non-integer label")
        if np.any(y < 0) or (K is not None and np.any(y >= K)):
            fail(lab_line + 1, f"label out of range (K={K})")
        if not np.all(np.isfinite(x)):
            fail(i + 1, "non-finite feature")
        utts.append(Utterance(x, y))
        i = lab_line + 1
    return utts, K


def load_corpus(path, K: int | None = None) -> list:
    return parse_utterances(Path(path).read_text(), K)[0]


def read_corpus(path, K: int | None = None) -> tuple[list, int | None]:
    """Utterances and the alphabet size recorded in the header (if any)."""
    return parse_utterances(Path(path).read_text(), K)


def save_hypotheses(path, hyps) -> None:
    """One label sequence per line."""
    Path(path).write_text("".join(" ".join(str(int(k)) for k in h) + "\n" for h in hyps))


def load_hypotheses(path) -> list:
    hyps = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        try:
            y = np.array([int(t) for t in line.split()], dtype=np.int64)
        except ValueError:
            raise ParseError(f"line {lineno}: non-integer label") from None
        if len(y) == 0 or np.any(y < 0):
            raise ParseError(f"line {lineno}: empty or negative label sequence")
        hyps.append(y)
    return hyps


# --- model text format --------------------------------------------------------


def _mlp_lines(p: MlpParams) -> list[str]:
    lines = [f"output {p.output}", "layers " + " ".join(str(s) for s in p.layer_sizes)]
    for l, w in enumerate(p.weights):
        lines.append(f"weight {l} {w.shape[0]} {w.shape[1]}")
        lines.extend(" ".join(_fmt(v) for v in row) for row in w)
    if p.normalized:
        lines += ["normalize", "shift " + " ".join(_fmt(v) for v in p.input_shift)]
        lines += ["scale " + " ".join(_fmt(v) for v in p.input_scale)]
    return lines


def format_model(params) -> str:
    from .fsdnn import FsdnnParams
    from .linear import LinearParams

    lines = [f"structseq-model {FORMAT_VERSION}"]
    if isinstance(params, LinearParams):
        lines += ["kind linear", f"dims {params.D} {params.K}", " ".join(_fmt(v) for v in params.theta)]
    elif isinstance(params, MlpParams):
        lines += ["kind mlp"] + _mlp_lines(params)
    elif isinstance(params, FsdnnParams):
        lines += ["kind fsdnn", "frontend"] + _mlp_lines(params.frontend) + ["scorer"] + _mlp_lines(params.scorer)
    else:
        raise TypeError(f"cannot serialize {type(params).__name__}")
    lines.append("end")
    return "\n".join(lines) + "\n"


def save_model(path, params) -> None:
    Path(path).write_text(format_model(params))


class _Lines:
    def __init__(self, text):
        self.lines = text.splitlines()
        self.pos = 0

    def next(self) -> list[str]:
        if self.pos >= len(self.lines):
            raise TruncatedFileError(f"unexpected end of model file after line {self.pos}")
        self.pos += 1
        return self.lines[self.pos - 1].split()

    def peek(self) -> str | None:
        if self.pos >= len(self.lines):
            return None
        toks = self.lines[self.pos].split()
        return toks[0] if toks else None

    def expect(self, key: str) -> list[str]:
        toks = self.next()
        if not toks or toks[0] != key:
            if not toks and self.pos >= len(self.lines):
                raise TruncatedFileError(f"unexpected end of model file at line {self.pos}")
            raise ModelFormatError(f"line {self.pos}: expected {key!r}")
        return toks[1:]


def _floats(toks, count, lines: _Lines) -> np.ndarray:
    if len(toks) != count:
        if len(toks) < count and lines.pos >= len(lines.lines):
            raise TruncatedFileError(f"line {lines.pos}: expected {count} values, got {len(toks)}")
        raise DimensionError(f"line {lines.pos}: expected {count} values, got {len(toks)}")
    try:
        return np.array([float(t) for t in toks])
    except ValueError:
        raise ModelFormatError(f"line {lines.pos}: non-numeric value") from None


def _read_mlp(lines: _Lines) -> MlpParams:
    output = lines.expect("output")[0]
    sizes = [int(t) for t in lines.expect("layers")]
    weights = []
    for l in range(len(sizes) - 1):
        hdr = [int(t) for t in lines.expect("weight")]
        if hdr != [l, sizes[l + 1], sizes[l] + 1]:
            raise DimensionError(f"line {lines.pos}: weight {l} header {hdr} inconsistent with layers {sizes}")
        rows, cols = hdr[1], hdr[2]
        w = np.empty((rows, cols))
        for r in range(rows):
            w[r] = _floats(lines.next(), cols, lines)
        weights.append(w)
    shift = scale = None
    if lines.peek() == "normalize":
        lines.next()
        shift = _floats(lines.expect("shift"), sizes[0], lines)
        scale = _floats(lines.expect("scale"), sizes[0], lines)
    return MlpParams(weights, output, shift, scale)


def parse_model(text: str, kind: str | None = None):
    """Parse a model file; ``kind`` ('linear', 'mlp', 'fsdnn') asserts what is expected."""
    from .fsdnn import FsdnnParams
    from .linear import LinearParams

    lines = _Lines(text)
    if not lines.lines:
        raise TruncatedFileError("empty model file")
    head = lines.next()
    if len(head) != 2 or head[0] != "structseq-model":
        raise FormatVersionError("not a structseq model file (bad header)")
    if head[1] != FORMAT_VERSION:
        raise FormatVersionError(f"unsupported model format version {head[1]!r}")
    found = lines.expect("kind")[0]
    if kind is not None and found != kind:
        raise ModelKindError(f"file holds a {found!r} model, expected {kind!r}")
    if found == "linear":
        D, K = (int(t) for t in lines.expect("dims"))
        from .features import psi_dim

        params = LinearParams(_floats(lines.next(), psi_dim(D, K), lines), D, K)
    elif found == "mlp":
        params = _read_mlp(lines)
    elif found == "fsdnn":
        lines.expect("frontend")
        front = _read_mlp(lines)
        lines.expect("scorer")
        params = FsdnnParams(front, _read_mlp(lines))
    else:
        raise ModelKindError(f"unknown model kind {found!r}")
    lines.expect("end")
    return params


def load_model(path, kind: str | None = None):
    return parse_model(Path(path).read_text(), kind)
