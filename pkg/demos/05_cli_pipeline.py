"""
The command-line pipeline end to end
====================================

Raw text, one document per line, goes through every subcommand.  All files
land in a temporary directory.
"""

import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from baysmm.corpus import write_labels

work = Path(tempfile.mkdtemp(prefix="baysmm-demo-"))


def run(*args):
    cmd = [sys.executable, "-m", "baysmm", *args]
    print("$ baysmm", " ".join(args))
    out = subprocess.run(cmd, capture_output=True, text=True)
    print(out.stdout.strip() or out.stderr.strip(), f"(exit {out.returncode})\n")


#%%
# Two "topics" with their own preferred words on top of shared filler.
rng = np.random.default_rng(0)
topics = {"space": "orbit rocket launch moon planet", "cars": "engine wheel brake fuel road"}
lines, ids, labs = [], [], []
for i in range(80):
    name = "space" if i % 2 else "cars"
    words = rng.choice(topics[name].split() + "the a of and to is".split(), size=rng.integers(20, 60))
    lines.append(" ".join(words))
    ids.append(str(i + 1))
    labs.append(name)
(work / "raw.txt").write_text("\n".join(lines) + "\n")
write_labels(work / "labels.tsv", ids, labs)

#%%
run("build-vocab", "--input", str(work / "raw.txt"), "--out", str(work / "vocab.txt"))
run("vectorize", "--input", str(work / "raw.txt"), "--vocab", str(work / "vocab.txt"),
    "--out", str(work / "train.bow"))
run("train", "--bow", str(work / "train.bow"), "--vocab", str(work / "vocab.txt"), "--k", "3",
    "--omega", "1e-3", "--iters", "150", "--seed", "7", "--deterministic", "--out", str(work / "run"))
run("ppl", "--model", str(work / "run"), "--bow", str(work / "train.bow"))
run("classify-train", "--posteriors", str(work / "run"), "--labels", str(work / "labels.tsv"),
    "--classifier", "glcu", "--out", str(work / "glcu"))
run("classify", "--classifier-model", str(work / "glcu"), "--posteriors", str(work / "run"),
    "--out", str(work / "pred.tsv"))
run("eval", "--predictions", str(work / "pred.tsv"), "--labels", str(work / "labels.tsv"))
run("uncertainty", "--posteriors", str(work / "run"), "--bow", str(work / "train.bow"),
    "--out", str(work / "unc.tsv"))
print("outputs in", work)
