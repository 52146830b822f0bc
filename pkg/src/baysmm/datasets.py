"""Locate and read the 20Newsgroups "bydate" split from local files.

Nothing is downloaded.  The corpus is read either from a directory holding
``20news-bydate-train`` and ``20news-bydate-test`` (one sub-directory per
newsgroup, one file per post) or from the ``20news-bydate.tar.gz`` archive.
"""

from __future__ import annotations

import os
import tarfile
from pathlib import Path

ENV_VAR = "BAYSMM_20NG"
SPLITS = ("train", "test")


class DatasetUnavailable(FileNotFoundError):
    pass


def _candidates(root):
    if root is not None:
        yield Path(root)
    if os.environ.get(ENV_VAR):
        yield Path(os.environ[ENV_VAR])
    sk_home = Path(os.environ.get("SCIKIT_LEARN_DATA", Path.home() / "scikit_learn_data"))
    yield sk_home / "20news_home"
    yield sk_home
    yield Path.cwd() / "data"


def _read_dir(base: Path):
    out = {}
    for split in SPLITS:
        top = base / f"20news-bydate-{split}"
        texts, labels = [], []
        for group in sorted(p for p in top.iterdir() if p.is_dir()):
            for post in sorted(group.iterdir(), key=lambda p: p.name):
                texts.append(post.read_text(encoding="latin-1"))
                labels.append(group.name)
        out[split] = (texts, labels)
    return out


def _read_tar(path: Path):
    found = {s: [] for s in SPLITS}
    with tarfile.open(path, "r:*") as tar:
        for member in tar:
            if not member.isfile():
                continue
            parts = Path(member.name).parts
            for split in SPLITS:
                top = f"20news-bydate-{split}"
                if top in parts and len(parts) - parts.index(top) == 3:
                    i = parts.index(top)
                    text = tar.extractfile(member).read().decode("latin-1")
                    found[split].append((parts[i + 1], parts[i + 2], text))
    out = {}
    for split, rows in found.items():
        rows.sort(key=lambda r: (r[0], r[1]))
        out[split] = ([r[2] for r in rows], [r[0] for r in rows])
    return out


def locate_20newsgroups(root=None) -> Path:
    """First directory or archive holding the bydate split, else raise."""
    tried = []
    for cand in _candidates(root):
        tried.append(str(cand))
        if cand.is_file() and cand.name.endswith((".tar.gz", ".tgz", ".tar")):
            return cand
        if (cand / "20news-bydate-train").is_dir() and (cand / "20news-bydate-test").is_dir():
            return cand
        tar = cand / "20news-bydate.tar.gz"
        if tar.is_file():
            return tar
    raise DatasetUnavailable(
        "20Newsgroups bydate split not found; set $%s to a directory with "
        "20news-bydate-train/ and 20news-bydate-test/ or to 20news-bydate.tar.gz "
        "(looked in: %s)" % (ENV_VAR, ", ".join(tried)))


def load_20newsgroups(root=None):
    """Returns ``{"train": (texts, group_names), "test": (texts, group_names)}``."""
    path = locate_20newsgroups(root)
    data = _read_tar(path) if path.is_file() else _read_dir(path)
    for split in SPLITS:
        if not data[split][0]:
            raise DatasetUnavailable(f"no {split} documents under {path}")
    return data
