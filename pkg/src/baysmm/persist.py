"""Directory archives of raw little-endian float64 tensors plus text metadata.

Model archive:      meta.txt  m.f64  T.f64  vocab.txt
Posterior archive:  meta.txt  docs.txt  nu.f64  lsd.f64
Classifier archive: meta.txt  M.f64  D.f64  priors.f64  classes.txt
"""

from __future__ import annotations

import os
import shutil
import tempfile
from contextlib import contextmanager

import numpy as np

from .classify import GlcModel, GlcuModel
from .core import PosteriorSet, SmmModel
from .corpus import Vocabulary, read_vocab, write_vocab

FORMAT_VERSION = 1
_F64 = np.dtype("<f8")


class ArchiveError(ValueError):
    pass


@contextmanager
def _atomic_dir(path):
    """Yield a scratch directory that replaces ``path`` only on success."""
    path = os.path.abspath(path)
    parent = os.path.dirname(path)
    os.makedirs(parent, exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=".tmp-", dir=parent)
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    if os.path.isdir(path):
        shutil.rmtree(path)
    elif os.path.exists(path):
        os.remove(path)
    os.replace(tmp, path)


def _write_tensor(path, arr):
    with open(path, "wb") as fh:
        fh.write(np.ascontiguousarray(arr, dtype=_F64).tobytes())


def _read_tensor(path, shape, name):
    try:
        raw = open(path, "rb").read()
    except FileNotFoundError:
        raise ArchiveError(f"missing tensor file {os.path.basename(path)}") from None
    expected = int(np.prod(shape)) * _F64.itemsize
    if len(raw) != expected:
        raise ArchiveError(f"{name}: expected {expected} bytes for shape {shape}, "
                           f"found {len(raw)}")
    return np.frombuffer(raw, dtype=_F64).astype(np.float64).reshape(shape)


def write_meta(path, meta: dict):
    with open(path, "w") as fh:
        for k, v in meta.items():
            fh.write(f"{k}={v!r}\n" if isinstance(v, float) else f"{k}={v}\n")


def read_meta(path) -> dict:
    if os.path.isdir(path):
        path = os.path.join(path, "meta.txt")
    meta = {}
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ArchiveError(f"meta.txt:{lineno}: expected key=value")
                k, v = line.split("=", 1)
                meta[k.strip()] = v.strip()
    except FileNotFoundError:
        raise ArchiveError(f"missing {path}") from None
    return meta


def _meta_int(meta, key, minimum=None):
    try:
        val = int(meta[key])
    except KeyError:
        raise ArchiveError(f"meta field {key!r} missing") from None
    except ValueError:
        raise ArchiveError(f"meta field {key!r} is not an integer: {meta[key]!r}") from None
    if minimum is not None and val < minimum:
        raise ArchiveError(f"meta field {key!r} must be >= {minimum}, got {val}")
    return val


def _meta_float(meta, key):
    try:
        return float(meta[key])
    except KeyError:
        raise ArchiveError(f"meta field {key!r} missing") from None
    except ValueError:
        raise ArchiveError(f"meta field {key!r} is not a number: {meta[key]!r}") from None


def _check_version(meta, kind):
    version = _meta_int(meta, "format_version")
    if version != FORMAT_VERSION:
        raise ArchiveError(f"unsupported format_version {version} "
                           f"(expected {FORMAT_VERSION})")
    if meta.get("kind", kind) != kind:
        raise ArchiveError(f"archive kind {meta.get('kind')!r} is not {kind!r}")


def save_model(path, model: SmmModel, vocab: Vocabulary | None = None,
               omega: float = 0.0, seed: int = 0, iteration: int = 0) -> None:
    if vocab is not None and vocab.V != model.V:
        raise ArchiveError("vocabulary size does not match the model")
    with _atomic_dir(path) as tmp:
        write_meta(os.path.join(tmp, "meta.txt"), {
            "format_version": FORMAT_VERSION, "kind": "smm",
            "V": model.V, "K": model.K, "lambda": float(model.lam),
            "omega": float(omega), "seed": int(seed), "iteration": int(iteration)})
        _write_tensor(os.path.join(tmp, "m.f64"), model.m)
        _write_tensor(os.path.join(tmp, "T.f64"), model.T)
        if vocab is None:
            vocab = Vocabulary([f"w{i + 1}" for i in range(model.V)])
        write_vocab(os.path.join(tmp, "vocab.txt"), vocab)


def load_model(path) -> SmmModel:
    meta = read_meta(path)
    _check_version(meta, "smm")
    V = _meta_int(meta, "V", 1)
    K = _meta_int(meta, "K", 1)
    lam = _meta_float(meta, "lambda")
    if not lam > 0:
        raise ArchiveError(f"meta field 'lambda' must be positive, got {lam}")
    m = _read_tensor(os.path.join(path, "m.f64"), (V,), "m")
    T = _read_tensor(os.path.join(path, "T.f64"), (V, K), "T")
    return SmmModel(m, T, lam)


def load_model_vocab(path) -> Vocabulary:
    vocab = read_vocab(os.path.join(path, "vocab.txt"))
    V = _meta_int(read_meta(path), "V", 1)
    if vocab.V != V:
        raise ArchiveError(f"vocab.txt has {vocab.V} tokens but meta V={V}")
    return vocab


def save_posteriors(path, posteriors: PosteriorSet) -> None:
    for d in posteriors.doc_ids:
        if not d or any(ch.isspace() for ch in d):
            raise ArchiveError(f"doc id {d!r} cannot be stored")
    D, K = posteriors.nu.shape
    with _atomic_dir(path) as tmp:
        write_meta(os.path.join(tmp, "meta.txt"), {
            "format_version": FORMAT_VERSION, "kind": "posteriors", "D": D, "K": K})
        with open(os.path.join(tmp, "docs.txt"), "w") as fh:
            for d in posteriors.doc_ids:
                fh.write(d + "\n")
        _write_tensor(os.path.join(tmp, "nu.f64"), posteriors.nu)
        _write_tensor(os.path.join(tmp, "lsd.f64"), posteriors.lsd)


def load_posteriors(path) -> PosteriorSet:
    meta = read_meta(path)
    _check_version(meta, "posteriors")
    D = _meta_int(meta, "D", 0)
    K = _meta_int(meta, "K", 0)
    try:
        with open(os.path.join(path, "docs.txt")) as fh:
            doc_ids = [line.rstrip("\n") for line in fh if line.strip()]
    except FileNotFoundError:
        raise ArchiveError(f"missing {os.path.join(path, 'docs.txt')}") from None
    if len(doc_ids) != D:
        raise ArchiveError(f"row count mismatch: docs.txt lists {len(doc_ids)} "
                           f"documents but meta D={D}")
    nu = _read_tensor(os.path.join(path, "nu.f64"), (D, K), "nu")
    lsd = _read_tensor(os.path.join(path, "lsd.f64"), (D, K), "lsd")
    return PosteriorSet(nu, lsd, doc_ids)


def save_classifier(path, model: GlcModel, class_names) -> None:
    if len(class_names) != model.L:
        raise ArchiveError("class name count does not match the model")
    with _atomic_dir(path) as tmp:
        write_meta(os.path.join(tmp, "meta.txt"), {
            "format_version": FORMAT_VERSION, "kind": model.kind,
            "K": model.K, "L": model.L})
        _write_tensor(os.path.join(tmp, "M.f64"), model.M)
        _write_tensor(os.path.join(tmp, "D.f64"), model.D_prec)
        _write_tensor(os.path.join(tmp, "priors.f64"), model.log_priors)
        with open(os.path.join(tmp, "classes.txt"), "w") as fh:
            for c in class_names:
                fh.write(f"{c}\n")


def load_classifier(path):
    """Returns ``(model, class_names)``."""
    meta = read_meta(path)
    kind = meta.get("kind")
    if kind not in ("glc", "glcu"):
        raise ArchiveError(f"unknown classifier kind {kind!r}")
    _check_version(meta, kind)
    K = _meta_int(meta, "K", 1)
    L = _meta_int(meta, "L", 1)
    M = _read_tensor(os.path.join(path, "M.f64"), (K, L), "M")
    D = _read_tensor(os.path.join(path, "D.f64"), (K, K), "D")
    lp = _read_tensor(os.path.join(path, "priors.f64"), (L,), "priors")
    with open(os.path.join(path, "classes.txt")) as fh:
        names = [line.rstrip("\n") for line in fh if line.strip()]
    if len(names) != L:
        raise ArchiveError(f"classes.txt lists {len(names)} classes but meta L={L}")
    cls = GlcuModel if kind == "glcu" else GlcModel
    return cls(M, D, lp), names
