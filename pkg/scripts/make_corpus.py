#!/usr/bin/env python3
"""Build the text corpus the n-gram curriculum feeds on.

Uses an existing text file if you have one; otherwise synthesises a
deterministic English-like corpus from the embedded vocabulary.
"""

import argparse

from autocurriculum.textgen import ensure_corpus


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="runs/corpus.txt")
    p.add_argument("--chars", type=int, default=1_200_000)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    path = ensure_corpus(args.out, args.chars, args.seed)
    with open(path, encoding="utf-8") as f:
        text = f.read()
    print(f"{path}: {len(text)} chars, alphabet size {len(set(text))}")


if __name__ == "__main__":
    main()
