"""Command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 bad or missing
data, 3 numeric failure (non-finite loss, failed gradient check, failed
sweep cell).
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .core import ConfigError, StructSeqError
from .corpus import (
    SPLITS,
    default_spec,
    generate_corpus,
    load_hypotheses,
    load_model,
    read_corpus,
    save_corpus,
    save_hypotheses,
    save_model,
)
from .experiments import (
    PipelineConfig,
    score_accuracy_correlation,
    score_accuracy_rows,
    standardized_scorer,
    train_baseline,
    write_score_csv,
)
from .fsdnn import FsdnnParams, decode_fsdnn, posteriorgram_corpus, pretrain_frontend, train_fsdnn
from .lattice import read_lattices, write_lattices
from .linear import LinearParams, LinearTrainConfig, beam_lattice, train_linear, viterbi_decode
from .metrics import corpus_per
from .neural import SOFTMAX, MlpParams, SgdConfig
from .sdnn import LossKind, SdnnTrainConfig, rescore_decode, train_sdnn

log = logging.getLogger("structseq")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class NumericFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --- shared helpers ------------------------------------------------------------


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _loss(text: str) -> LossKind:
    try:
        return LossKind(str(text).replace("-", "_"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"unknown loss {text!r}") from None


def _load_corpus(path, K=None):
    utts, found = read_corpus(path, K)
    if not utts:
        raise ConfigError(f"{path}: corpus is empty")
    if found is None:
        found = max(2, max(int(u.y_ref.max()) for u in utts) + 1)
    return utts, found


def _sgd(args) -> SgdConfig:
    return SgdConfig(learning_rate=args.lr, momentum=args.momentum, l2_weight=args.l2)


def _check_finite(history, what):
    losses = [h if isinstance(h, float) else h.loss for h in history]
    if not all(math.isfinite(v) for v in losses):
        raise NumericFailure(f"{what}: training loss became non-finite")


def _read_log(path: Path):
    if not path.exists():
        return []
    with path.open() as fh:
        return list(csv.DictReader(fh))


def _write_log(path, history, resume: bool):
    path = Path(path)
    previous = _read_log(path) if resume else []
    offset = int(previous[-1]["epoch"]) + 1 if previous else 0
    with path.open("a" if previous else "w", newline="") as fh:
        w = csv.writer(fh)
        if not previous:
            w.writerow(["epoch", "loss", "learning_rate", "dev_per"])
        for h in history:
            w.writerow([h.epoch + offset, f"{h.loss:.10g}", f"{h.learning_rate:.10g}", f"{h.dev_per:.6g}"])


def _resume_lr(args):
    """Continue from the last logged learning rate when resuming."""
    if args.init and args.log:
        previous = _read_log(Path(args.log))
        if previous:
            return float(previous[-1]["learning_rate"])
    return args.lr


def _dev(args, K):
    if args.dev_corpus is None:
        return None
    if args.dev_lattices is None:
        raise ConfigError("--dev-corpus needs --dev-lattices")
    utts, _ = _load_corpus(args.dev_corpus, K)
    return utts, read_lattices(args.dev_lattices)


# --- commands ------------------------------------------------------------------


def cmd_gen_data(args):
    if args.K < 2:
        raise ConfigError("K must be at least 2")
    if args.n_utt < 1:
        raise ConfigError("--n-utt must be positive")
    spec = default_spec(K=args.K, D=args.D, seed=args.seed, mixture=args.mixture, noise=args.noise)
    corpus = generate_corpus(spec, args.n_utt)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in SPLITS:
        save_corpus(out / f"{name}.txt", corpus.split(name), args.K)
    sizes = " ".join(f"{n}={len(corpus.split(n))}" for n in SPLITS)
    print(f"{len(corpus.utterances)} utterances, K={args.K}, D={args.D}, {sizes} -> {out}")


def cmd_frontend(args):
    utts, K = _load_corpus(args.corpus)
    sizes = [utts[0].D] + [args.width] * args.layers + [K]
    fe, history = pretrain_frontend(utts, sizes, _sgd(args), epochs=args.epochs, seed=args.seed)
    _check_finite(history, "front end")
    save_model(args.out, fe)
    print(f"front end {sizes}: cross-entropy {history[-1]:.4f} -> {args.out}")


def _frontend_of(path):
    model = load_model(path)
    if isinstance(model, FsdnnParams):
        return model.frontend
    if isinstance(model, MlpParams) and model.output == SOFTMAX:
        return model
    raise ConfigError(f"{path} holds no softmax front end")


def cmd_posteriors(args):
    utts, K = _load_corpus(args.corpus)
    post = posteriorgram_corpus(utts, _frontend_of(args.model))
    save_corpus(args.out, post, K)
    print(f"{len(post)} posteriorgram sequences -> {args.out}")


def cmd_lattice(args):
    utts, K = _load_corpus(args.corpus)
    if args.frontend:
        utts = posteriorgram_corpus(utts, _frontend_of(args.frontend))
    model = load_model(args.model, "linear")
    lats = [beam_lattice(u.x, model, args.beam) for u in utts]
    write_lattices(args.out, lats)
    print(f"{len(lats)} lattices (beam {args.beam}) -> {args.out}")


def cmd_train(args):
    utts, K = _load_corpus(args.corpus)
    if args.model_kind == "linear":
        init = load_model(args.init, "linear") if args.init else None
        cfg = LinearTrainConfig(cost_C=args.cost_c, epochs=args.epochs, learning_rate=args.lr, seed=args.seed)
        params, history = train_linear(utts, cfg, K=K, init=init)
        _check_finite(history, "linear")
        save_model(args.out, params)
        print(f"linear: objective {history[-1]:.6g} -> {args.out}")
        return
    if args.lattices is None:
        raise ConfigError(f"training a {args.model_kind} model needs --lattices")
    lats = read_lattices(args.lattices)
    cfg = SdnnTrainConfig(
        loss=args.loss,
        n_negative=args.n_neg,
        epochs=args.epochs,
        sgd=SgdConfig(learning_rate=_resume_lr(args), momentum=args.momentum, l2_weight=args.l2),
        rescore_n=args.n_best,
        batch_size=args.batch_size,
        seed=args.seed,
    )
    hidden = [args.width] * args.layers
    dev = _dev(args, K)
    if args.model_kind == "sdnn":
        init = load_model(args.init, "mlp") if args.init else standardized_scorer(utts, K, hidden, args.seed)
        params, history = train_sdnn(utts, lats, init, cfg, dev=dev)
    else:
        if args.init:
            init = load_model(args.init, "fsdnn")
        elif args.frontend:
            fe = _frontend_of(args.frontend)
            init = FsdnnParams(fe, standardized_scorer(posteriorgram_corpus(utts, fe), K, hidden, args.seed))
        else:
            raise ConfigError("training an fsdnn model needs --frontend or --init")
        params, history = train_fsdnn(utts, lats, init, cfg, frontend_lr=args.frontend_lr, dev=dev)
    _check_finite(history, args.model_kind)
    save_model(args.out, params)
    if args.log:
        _write_log(args.log, history, resume=bool(args.init))
    last = history[-1] if history else None
    summary = f"loss {last.loss:.6g}" if last else "no epochs run"
    print(f"{args.model_kind} ({cfg.loss.value}): {summary} -> {args.out}")


def _decode(model, utts, lattices, n_best):
    if isinstance(model, LinearParams):
        return [viterbi_decode(u.x, model) for u in utts]
    if lattices is None:
        raise ConfigError("rescoring models need --lattices")
    if len(lattices) != len(utts):
        raise ConfigError(f"{len(utts)} utterances but {len(lattices)} lattices")
    if isinstance(model, FsdnnParams):
        return decode_fsdnn(utts, lattices, model, n_best)
    return [rescore_decode(u.x, lat, model, n_best) for u, lat in zip(utts, lattices)]


def cmd_decode(args):
    utts, _ = _load_corpus(args.corpus)
    if args.frontend:
        utts = posteriorgram_corpus(utts, _frontend_of(args.frontend))
    lats = read_lattices(args.lattices) if args.lattices else None
    hyps = _decode(load_model(args.model), utts, lats, args.n_best)
    save_hypotheses(args.out, hyps)
    print(f"{len(hyps)} hypotheses -> {args.out}")


def _label_file(path):
    """Label sequences from a hypothesis file or from a corpus file's reference labels."""
    with open(path) as fh:
        head = fh.readline()
    if head.startswith("# structseq-corpus"):
        return [u.y_ref for u in read_corpus(path)[0]]
    return load_hypotheses(path)


def cmd_eval(args):
    refs, hyps = _label_file(args.refs), _label_file(args.hyps)
    if len(hyps) != len(refs):
        raise ConfigError(f"{len(refs)} references but {len(hyps)} hypotheses")
    per = corpus_per(refs, hyps)
    print(f"PER {100 * per:.2f}")
    if args.scores_csv:
        utts, _ = _load_corpus(args.refs)
        if not (args.model and args.lattices):
            raise ConfigError("--scores-csv needs --model and --lattices")
        model = load_model(args.model)
        if isinstance(model, FsdnnParams):
            utts, model = posteriorgram_corpus(utts, model.frontend), model.scorer
        elif not isinstance(model, MlpParams):
            raise ConfigError("--scores-csv needs a structured DNN model")
        rows = score_accuracy_rows(utts, read_lattices(args.lattices), model, args.n_best)
        write_score_csv(args.scores_csv, rows)
        print(f"score/accuracy spearman {score_accuracy_correlation(rows):.4f} ({len(rows)} rows) -> {args.scores_csv}")


def _sweep_inputs(args, cell_dir: Path):
    """Front end and baseline lattices shared by all cells, cached in the cell directory."""
    data = Path(args.data)
    train, K = _load_corpus(data / "train.txt")
    dev, _ = _load_corpus(data / "dev.txt", K)
    fe_path, tr_path, dv_path = cell_dir / "frontend.model", cell_dir / "train.lat", cell_dir / "dev.lat"
    if fe_path.exists() and tr_path.exists() and dv_path.exists():
        return train, dev, K, load_model(fe_path, "mlp"), read_lattices(tr_path), read_lattices(dv_path)
    base = train_baseline(train, K, args.seed, PipelineConfig(beam=args.beam))
    ltr, ldv = base.lattices(train, args.beam), base.lattices(dev, args.beam)
    write_lattices(tr_path, ltr)
    write_lattices(dv_path, ldv)
    save_model(cell_dir / "baseline.model", base.linear)
    save_model(fe_path, base.frontend)
    return train, dev, K, base.frontend, ltr, ldv


def _read_cell(path: Path):
    if not path.exists():
        return None
    toks = path.read_text().split()
    if len(toks) >= 2 and toks[0] == "per":
        return float(toks[1])
    return None


def cmd_sweep(args):
    Ls, Ms = args.L, args.M
    if not Ls or not Ms or min(Ls) < 1 or min(Ms) < 1:
        raise ConfigError("--L and --M need positive integers")
    cell_dir = Path(args.cell_dir or f"{args.out}.cells")
    cell_dir.mkdir(parents=True, exist_ok=True)
    train, dev, K, fe, ltr, ldv = _sweep_inputs(args, cell_dir)
    cfg = SdnnTrainConfig(
        loss=args.loss, n_negative=args.n_neg, epochs=args.epochs, sgd=_sgd(args), rescore_n=args.n_best, seed=args.seed
    )
    post = posteriorgram_corpus(train, fe)
    grid = {}
    for L in Ls:
        for M in Ms:
            path = cell_dir / f"L{L}_M{M}.txt"
            value = _read_cell(path)
            if value is not None and math.isfinite(value):
                grid[L, M] = value
                continue
            try:
                init = FsdnnParams(fe, standardized_scorer(post, K, [M] * L, args.seed))
                model, history = train_fsdnn(train, ltr, init, cfg)
                _check_finite(history, f"cell L={L} M={M}")
                value = corpus_per([u.y_ref for u in dev], decode_fsdnn(dev, ldv, model, args.n_best))
                path.write_text(f"per {value!r}\n")
            except (StructSeqError, NumericFailure, FloatingPointError, ValueError) as exc:
                value = float("nan")
                path.write_text(f"failed {type(exc).__name__}: {exc}\n")
                log.error("cell L=%d M=%d failed: %s", L, M, exc)
            grid[L, M] = value
            print(f"L={L} M={M} dev PER {100 * value:.2f}", flush=True)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["L\\M", *Ms])
        for L in Ls:
            w.writerow([L, *(f"{grid[L, M]:.6g}" for M in Ms)])
    failed = [k for k, v in grid.items() if not math.isfinite(v)]
    print(f"{len(Ls)}x{len(Ms)} grid -> {args.out}" + (f" ({len(failed)} failed cells)" if failed else ""))
    if failed:
        raise NumericFailure(f"{len(failed)} sweep cells failed")


def cmd_gradcheck(args):
    from . import gradcheck
    from .neural import broken_sigmoid_derivative

    np.seterr(all="ignore")
    if args.broken_sigmoid:
        with broken_sigmoid_derivative():
            results = gradcheck.run_all(args.configs, args.seed)
    else:
        results = gradcheck.run_all(args.configs, args.seed)
    for r in results:
        print(r.report())
    if not all(r.passed for r in results):
        raise NumericFailure("gradient check failed")


# --- parser --------------------------------------------------------------------


def build_parser():
    """Return ``(parser, leaf_parsers)``; config-file defaults are applied to the leaves."""
    parser = _Parser(prog="structseq", description="Structured DNN phone recognition on synthetic corpora.")
    parser.add_argument("--config", help="key=value file of defaults (flags take precedence)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    leaves = []

    def leaf(p, func):
        p.set_defaults(func=func)
        p.add_argument("--seed", type=int, default=0)
        leaves.append(p)
        return p

    def sgd_flags(p, lr):
        p.add_argument("--lr", type=float, default=lr)
        p.add_argument("--momentum", type=float, default=0.9)
        p.add_argument("--l2", type=float, default=1e-4)

    def net_flags(p, layers, width):
        p.add_argument("--layers", type=int, default=layers, help="hidden layers")
        p.add_argument("--width", type=int, default=width, help="units per hidden layer")

    p = leaf(sub.add_parser("gen-data", help="generate a synthetic corpus"), cmd_gen_data)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--K", type=int, default=6)
    p.add_argument("--D", type=int, default=8)
    p.add_argument("--n-utt", type=int, default=200)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--mixture", action="store_true", help="two-component emissions (nonlinear boundaries)")

    p = leaf(sub.add_parser("frontend", help="pretrain a softmax front end frame-wise"), cmd_frontend)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=20)
    net_flags(p, 1, 64)
    sgd_flags(p, 0.01)

    p = leaf(sub.add_parser("posteriors", help="export front-end posteriorgrams as a corpus"), cmd_posteriors)
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)

    p = leaf(sub.add_parser("lattice", help="beam lattices from a linear model"), cmd_lattice)
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--frontend", help="apply this front end to the frames first")
    p.add_argument("--beam", type=int, default=6)
    p.add_argument("--out", required=True)

    train = sub.add_parser("train", help="train a model")
    tsub = train.add_subparsers(dest="model_kind", required=True, parser_class=_Parser)
    for kind in ("linear", "sdnn", "fsdnn"):
        p = leaf(tsub.add_parser(kind), cmd_train)
        p.add_argument("--corpus", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--init", help="resume from this model file")
        p.add_argument("--epochs", type=int, default=20)
        if kind == "linear":
            p.add_argument("--lr", type=float, default=1e-3)
            p.add_argument("--cost-c", type=float, default=1.0)
            continue
        p.add_argument("--lattices")
        p.add_argument("--loss", type=_loss, default="max-margin", help="approx-acc or max-margin")
        net_flags(p, 2, 64)
        sgd_flags(p, 0.01)
        p.add_argument("--n-neg", type=int, default=1)
        p.add_argument("--n-best", type=int, default=10)
        p.add_argument("--batch-size", type=int, default=1)
        p.add_argument("--dev-corpus")
        p.add_argument("--dev-lattices")
        p.add_argument("--log", help="training log CSV")
        if kind == "fsdnn":
            p.add_argument("--frontend", help="pretrained front end")
            p.add_argument("--frontend-lr", type=float, default=None)

    p = leaf(sub.add_parser("decode", help="decode a corpus"), cmd_decode)
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--lattices")
    p.add_argument("--frontend", help="apply this front end to the frames first")
    p.add_argument("--n-best", type=int, default=10)
    p.add_argument("--out", required=True)

    p = leaf(sub.add_parser("eval", help="phone error rate and score/accuracy export"), cmd_eval)
    p.add_argument("--refs", "--corpus", required=True, help="reference corpus or label file")
    p.add_argument("--hyps", required=True, help="hypothesis label file (or a corpus)")
    p.add_argument("--model")
    p.add_argument("--lattices")
    p.add_argument("--n-best", type=int, default=10)
    p.add_argument("--scores-csv")

    p = leaf(sub.add_parser("sweep", help="FSDNN dev PER over hidden layers x width"), cmd_sweep)
    p.add_argument("--data", required=True, help="directory with train.txt and dev.txt")
    p.add_argument("--L", type=_int_list, default=[1, 2])
    p.add_argument("--M", type=_int_list, default=[16, 32, 64])
    p.add_argument("--out", required=True, help="grid CSV")
    p.add_argument("--cell-dir")
    p.add_argument("--loss", type=_loss, default="max-margin")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--n-neg", type=int, default=1)
    p.add_argument("--n-best", type=int, default=10)
    p.add_argument("--beam", type=int, default=6)
    sgd_flags(p, 0.01)

    p = leaf(sub.add_parser("gradcheck", help="backprop vs finite differences"), cmd_gradcheck)
    p.add_argument("--configs", type=int, default=20)
    p.add_argument("--broken-sigmoid", action="store_true", help="negative control")
    return parser, leaves


def read_config(path) -> dict:
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (t.strip() for t in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _apply_config(leaves, config: dict):
    known = set()
    for p in leaves:
        by_dest = {a.dest: a for a in p._actions}
        values = {}
        for key, value in config.items():
            action = by_dest.get(key)
            if action is None:
                continue
            known.add(key)
            if isinstance(action, argparse._StoreTrueAction):
                values[key] = value.lower() in ("1", "true", "yes", "on")
            else:
                values[key] = value  # argparse runs string defaults through ``type``
            action.required = False
        p.set_defaults(**values)
    unknown = set(config) - known
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")


def _setup_logging():
    level = os.environ.get("STRUCTSEQ_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _setup_logging()
    try:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config")
        known, _ = pre.parse_known_args(argv)
        parser, leaves = build_parser()
        if known.config:
            _apply_config(leaves, read_config(known.config))
            argv = [a for i, a in enumerate(argv) if a != "--config" and (i == 0 or argv[i - 1] != "--config")]
            argv = [a for a in argv if not a.startswith("--config=")]
        args = parser.parse_args(argv)
        with np.errstate(over="raise", invalid="raise", divide="raise"):
            args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FloatingPointError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (StructSeqError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
