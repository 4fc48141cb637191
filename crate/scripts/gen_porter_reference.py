"""Regenerates crates/core/tests/data/porter_reference.txt.

Vocabulary: lowercase alphabetic words harvested from the Python standard
library sources. Stems: NLTK's PorterStemmer in MARTIN_EXTENSIONS mode, which
reproduces Martin Porter's reference implementation (voc.txt -> output.txt).
"""
import os, re, sys, sysconfig
from nltk.stem.porter import PorterStemmer

out = sys.argv[1] if len(sys.argv) > 1 else "porter_reference.txt"
root = sysconfig.get_paths()["stdlib"]
words = set()
for dirpath, _, files in os.walk(root):
    if "site-packages" in dirpath or "test" in dirpath:
        continue
    for f in files:
        if f.endswith(".py"):
            with open(os.path.join(dirpath, f), errors="ignore") as fh:
                words.update(w.lower() for w in re.findall(r"\b[A-Za-z]+\b", fh.read()))
words = sorted(w for w in words if len(w) <= 20)
stemmer = PorterStemmer(mode=PorterStemmer.MARTIN_EXTENSIONS)
with open(out, "w") as fh:
    for w in words:
        fh.write(f"{w} {stemmer.stem(w)}\n")
print(len(words), "entries")
