"""Command-line entry points.

Exit codes: 0 success, 2 usage or unreadable input, 3 numerical failure,
4 data mismatch.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import tempfile
from contextlib import contextmanager

import numpy as np

from . import persist
from .classify import EMMonotonicityError, SingularCovarianceError, glc_train, glcu_train, predict
from .core import PosteriorSet
from .corpus import (CorpusFormatError, build_vocab, label_ids, read_bow, read_labels,
                     read_raw_documents, read_vocab, vectorize, write_bow,
                     BowCorpus)
from .evaluate import classification_report, perplexity, uncertainty_summary
from .optim import NumericalError
from .trainer import TrainConfig, infer_posteriors, train

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_MISMATCH = 0, 2, 3, 4

log = logging.getLogger("baysmm")


class UsageError(Exception):
    pass


class DataMismatch(Exception):
    pass


@contextmanager
def atomic_file(path):
    """Open a temp file next to ``path``; move it into place on success."""
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=parent)
    try:
        with os.fdopen(fd, "w") as fh:
            yield fh
    except BaseException:
        os.unlink(tmp)
        raise
    os.replace(tmp, path)


def _require(path, what):
    if not os.path.exists(path):
        raise UsageError(f"{what} not found: {path}")
    return path


def _model_dir(path):
    """Accept either a model archive or a ``train --out`` directory."""
    _require(path, "model")
    if os.path.exists(os.path.join(path, "meta.txt")):
        return path
    sub = os.path.join(path, "model")
    if os.path.exists(os.path.join(sub, "meta.txt")):
        return sub
    raise UsageError(f"no model archive in {path}")


def _posterior_dir(path):
    _require(path, "posteriors")
    if os.path.exists(os.path.join(path, "docs.txt")):
        return path
    sub = os.path.join(path, "posteriors")
    if os.path.exists(os.path.join(sub, "docs.txt")):
        return sub
    raise UsageError(f"no posterior archive in {path}")


def _load_bow(path, vocab_path=None):
    _require(path, "BoW file")
    vocab = read_vocab(_require(vocab_path, "vocabulary")) if vocab_path else None
    return read_bow(path, vocab)


def _config(args, **extra) -> TrainConfig:
    fields = dict(
        K=getattr(args, "k", 100), omega=getattr(args, "omega", 1.0),
        lam=args.lam, R_train=args.r_train, R_eval=getattr(args, "r_eval", 32),
        max_iters=getattr(args, "iters", 500), infer_iters=args.infer_iters,
        seed=args.seed, eta_post=args.eta_post, eta_T=getattr(args, "eta_t", 0.02),
        beta1=args.beta1, beta2=args.beta2, eps_hat=args.eps_hat,
        deterministic=args.deterministic, freeze_eps=args.freeze_eps,
        trace_every=getattr(args, "trace_every", 1), threads=args.threads,
        tol=getattr(args, "tol", 1e-5))
    fields.update(extra)
    try:
        return TrainConfig(**fields)
    except ValueError as err:
        raise UsageError(str(err)) from None


# --------------------------------------------------------------------------
# subcommands


def cmd_build_vocab(args):
    _require(args.input, "input")
    _, docs = read_raw_documents(args.input)
    if not docs:
        raise UsageError(f"no documents found in {args.input}")
    try:
        vocab = build_vocab(docs, args.min_doc_freq, args.max_size)
    except ValueError as err:
        raise UsageError(str(err)) from None
    with atomic_file(args.out) as fh:
        for tok in vocab.tokens:
            fh.write(tok + "\n")
    print(vocab.V)


def cmd_vectorize(args):
    _require(args.input, "input")
    vocab = read_vocab(_require(args.vocab, "vocabulary"))
    names, docs = read_raw_documents(args.input)
    corpus = BowCorpus(vocab, [vectorize(d, vocab, str(i + 1)) for i, d in enumerate(docs)])
    parent = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(parent, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=parent)
    os.close(fd)
    try:
        write_bow(tmp, corpus)
    except BaseException:
        os.unlink(tmp)
        raise
    os.replace(tmp, args.out)
    if args.names_out:
        with atomic_file(args.names_out) as fh:
            for i, n in enumerate(names):
                fh.write(f"{i + 1}\t{n}\n")
    print(len(corpus))


def cmd_train(args):
    corpus = _load_bow(args.bow, args.vocab)
    if len(corpus) == 0:
        raise UsageError("training corpus is empty")
    cfg = _config(args)
    with persist._atomic_dir(args.out) as tmp:
        with open(os.path.join(tmp, "train.log"), "w") as log_fh:
            state = train(corpus, cfg, log_file=log_fh)
        persist.save_model(os.path.join(tmp, "model"), state.model, corpus.vocab,
                           omega=cfg.omega, seed=cfg.seed,
                           iteration=len(state.elbo_trace))
        persist.save_posteriors(os.path.join(tmp, "posteriors"), state.posteriors)
    print(f"iterations={len(state.elbo_trace)}")
    print(f"elbo_start={state.elbo_trace[0]!r}")
    print(f"elbo_end={state.elbo_trace[-1]!r}")


def cmd_infer(args):
    mdir = _model_dir(args.model)
    model = persist.load_model(mdir)
    corpus = _load_bow(args.bow, args.vocab)
    if corpus.V != model.V:
        raise DataMismatch(f"corpus has V={corpus.V} but the model has V={model.V}")
    cfg = _config(args, K=model.K, lam=model.lam)
    post = infer_posteriors(model, corpus, cfg)
    persist.save_posteriors(args.out, post)
    print(len(post))


def _labels_for(post: PosteriorSet, labels_path, class_names=None):
    label_map = read_labels(_require(labels_path, "labels file"))
    try:
        return label_ids(post.doc_ids, label_map, class_names)
    except KeyError as err:
        raise DataMismatch(str(err.args[0])) from None


def cmd_classify_train(args):
    post = persist.load_posteriors(_posterior_dir(args.posteriors))
    labels, names = _labels_for(post, args.labels)
    try:
        if args.classifier == "glc":
            model = glc_train(post.nu, labels, len(names), args.reg, args.priors)
        else:
            model = glcu_train(post.nu, post.precision, labels, args.em_iters,
                               len(names), args.reg, args.priors)
    except SingularCovarianceError as err:
        raise NumericalError(str(err)) from None
    except EMMonotonicityError as err:
        raise NumericalError(str(err)) from None
    except ValueError as err:
        raise DataMismatch(str(err)) from None
    persist.save_classifier(args.out, model, names)
    if args.classifier == "glcu":
        print(f"em_loglik={model.ll_trace[-1]!r}")
    print(f"classes={len(names)}")


def cmd_classify(args):
    model, names = persist.load_classifier(_require(args.classifier_model, "classifier"))
    post = persist.load_posteriors(_posterior_dir(args.posteriors))
    if len(post) and post.K != model.K:
        raise DataMismatch(f"posteriors have K={post.K} but the classifier has K={model.K}")
    if args.labels:
        _labels_for(post, args.labels, names)
    use_unc = model.kind == "glcu" if args.uncertainty == "auto" else args.uncertainty == "yes"
    log_priors = None
    if args.priors == "uniform":
        log_priors = np.full(model.L, -np.log(model.L))
    if len(post):
        pred, P = predict(model, post.nu, post.precision if use_unc else None, log_priors)
    else:
        pred, P = np.zeros(0, dtype=int), np.zeros((0, model.L))
    with atomic_file(args.out) as fh:
        fh.write("doc_id\tpredicted\t" + "\t".join(names) + "\n")
        for d, k, row in zip(post.doc_ids, pred, P):
            fh.write(f"{d}\t{names[k]}\t" + "\t".join(repr(float(p)) for p in row) + "\n")
    if args.labels:
        labels, _ = _labels_for(post, args.labels, names)
        rep = classification_report(P, labels, model.L)
        for line in rep.summary_lines():
            print(line)
    else:
        print(len(pred))


def read_predictions(path):
    with open(_require(path, "predictions")) as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header[:2] != ["doc_id", "predicted"]:
            raise CorpusFormatError("predictions file lacks the doc_id/predicted header", path, 1)
        names = header[2:]
        ids, rows = [], []
        for lineno, line in enumerate(fh, 2):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != len(header):
                raise CorpusFormatError("wrong number of columns", path, lineno)
            ids.append(parts[0])
            rows.append([float(p) for p in parts[2:]])
    return ids, names, np.array(rows).reshape(len(ids), len(names))


def cmd_eval(args):
    ids, names, P = read_predictions(args.predictions)
    label_map = read_labels(_require(args.labels, "labels file"))
    try:
        labels, _ = label_ids(ids, label_map, names)
    except KeyError as err:
        raise DataMismatch(str(err.args[0])) from None
    rep = classification_report(P, labels, len(names))
    lines = rep.summary_lines()
    if args.out:
        with atomic_file(args.out + ".summary") as fh:
            fh.write("\n".join(lines) + "\n")
        with atomic_file(args.out + ".confusion.tsv") as fh:
            fh.write("true\\pred\t" + "\t".join(names) + "\n")
            for n, row in zip(names, rep.confusion):
                fh.write(n + "\t" + "\t".join(str(int(c)) for c in row) + "\n")
    for line in lines:
        print(line)


def cmd_ppl(args):
    mdir = _model_dir(args.model)
    model = persist.load_model(mdir)
    corpus = _load_bow(args.bow, args.vocab)
    if corpus.V != model.V:
        raise DataMismatch(f"corpus has V={corpus.V} but the model has V={model.V}")
    cfg = _config(args, K=model.K, lam=model.lam)
    post = None
    if args.posteriors:
        post = persist.load_posteriors(_posterior_dir(args.posteriors))
        if post.doc_ids != corpus.doc_ids:
            raise DataMismatch("posterior doc ids are not aligned with the BoW file")
    try:
        rep = perplexity(model, corpus, cfg, post)
    except ValueError as err:
        raise DataMismatch(str(err)) from None
    lines = rep.summary_lines()
    if args.out:
        with atomic_file(args.out + ".tsv") as fh:
            fh.write("doc_id\telbo\tN_d\n")
            for d, b, n in rep.per_doc_bound:
                fh.write(f"{d}\t{b!r}\t{n}\n")
        with atomic_file(args.out + ".summary") as fh:
            fh.write("\n".join(lines) + "\n")
    for line in lines:
        print(line)


def cmd_uncertainty(args):
    post = persist.load_posteriors(_posterior_dir(args.posteriors))
    corpus = _load_bow(args.bow, args.vocab)
    if post.doc_ids != corpus.doc_ids:
        raise DataMismatch("posterior doc ids are not aligned with the BoW file")
    rows = uncertainty_summary(post, corpus)
    with atomic_file(args.out) as fh:
        fh.write("doc_id\tN_d\ttrace_cov\n")
        for d, n, t in rows:
            fh.write(f"{d}\t{n}\t{t!r}\n")
    print(len(rows))


# --------------------------------------------------------------------------
# argument parsing


def _add_common(p, train_flags=False):
    p.add_argument("--lambda", dest="lam", type=float, default=1.0,
                   help="prior precision (ignored when a model archive supplies it)")
    p.add_argument("--r-train", type=int, default=1, help="MC samples per update")
    p.add_argument("--infer-iters", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eta-post", type=float, default=0.05)
    p.add_argument("--beta1", type=float, default=0.9)
    p.add_argument("--beta2", type=float, default=0.999)
    p.add_argument("--eps-hat", type=float, default=1e-8)
    p.add_argument("--deterministic", action="store_true",
                   help="ordered reductions regardless of --threads")
    p.add_argument("--freeze-eps", action="store_true",
                   help="reuse the same noise samples every iteration")
    p.add_argument("--threads", type=int, default=1)
    if train_flags:
        p.add_argument("--k", type=int, default=100)
        p.add_argument("--omega", type=float, default=1.0)
        p.add_argument("--iters", type=int, default=500)
        p.add_argument("--eta-t", type=float, default=0.02)
        p.add_argument("--trace-every", type=int, default=1)
        p.add_argument("--tol", type=float, default=1e-5)


def build_parser():
    ap = argparse.ArgumentParser(prog="baysmm", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-vocab", help="build a vocabulary from raw text")
    p.add_argument("--input", required=True, help="directory (file per doc) or file (line per doc)")
    p.add_argument("--min-doc-freq", type=int, default=2)
    p.add_argument("--max-size", type=int, help="keep only the most frequent tokens")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("vectorize", help="turn raw text into a BoW file")
    p.add_argument("--input", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--names-out", help="write 'docID<TAB>source name' lines")
    p.set_defaults(func=cmd_vectorize)

    p = sub.add_parser("train", help="train a model and training posteriors")
    p.add_argument("--bow", required=True)
    p.add_argument("--vocab")
    p.add_argument("--out", required=True)
    _add_common(p, train_flags=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="infer posteriors for new documents")
    p.add_argument("--model", required=True)
    p.add_argument("--bow", required=True)
    p.add_argument("--vocab")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("classify-train", help="train a GLC or GLCU classifier")
    p.add_argument("--posteriors", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--classifier", choices=["glc", "glcu"], default="glcu")
    p.add_argument("--priors", choices=["empirical", "uniform"], default="empirical")
    p.add_argument("--em-iters", type=int, default=10)
    p.add_argument("--reg", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_classify_train)

    p = sub.add_parser("classify", help="predict class posteriors")
    p.add_argument("--classifier-model", required=True)
    p.add_argument("--posteriors", required=True)
    p.add_argument("--labels", help="optional; reports accuracy and rejects unseen classes")
    p.add_argument("--priors", choices=["model", "uniform"], default="model")
    p.add_argument("--uncertainty", choices=["auto", "yes", "no"], default="auto")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("ppl", help="perplexity of a BoW corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--bow", required=True)
    p.add_argument("--vocab")
    p.add_argument("--posteriors")
    p.add_argument("--r-eval", type=int, default=32)
    p.add_argument("--out", help="report prefix (.tsv and .summary)")
    _add_common(p)
    p.set_defaults(func=cmd_ppl)

    p = sub.add_parser("eval", help="accuracy and cross-entropy of predictions")
    p.add_argument("--predictions", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", help="report prefix (.summary and .confusion.tsv)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("uncertainty", help="posterior covariance trace per document")
    p.add_argument("--posteriors", required=True)
    p.add_argument("--bow", required=True)
    p.add_argument("--vocab")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_uncertainty)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as err:
        print(f"baysmm {args.command}: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, IsADirectoryError, PermissionError) as err:
        print(f"baysmm {args.command}: {err}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as err:
        print(f"baysmm {args.command}: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataMismatch, CorpusFormatError, persist.ArchiveError) as err:
        print(f"baysmm {args.command}: {err}", file=sys.stderr)
        return EXIT_MISMATCH
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
