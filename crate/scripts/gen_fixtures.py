#!/usr/bin/env python3
"""Regenerate the files under fixtures/.

Writes a 50-dimensional word-vector file and scored sentence pairs built from
topic vocabularies. Sentences mention two nouns; a pair's score grows with the
number of topics the two sentences share, plus a little noise.

Usage: python3 scripts/gen_fixtures.py [output_dir]
"""

import sys
from pathlib import Path

import numpy as np

DIM = 50
SEED = 20240611

TOPICS = {
    "animals": "cat dog horse cow sheep bird fish mouse lion tiger".split(),
    "food": "bread cheese apple rice soup pizza cake salad meat fruit".split(),
    "sports": "football tennis soccer golf hockey baseball rugby cricket boxing skiing".split(),
    "music": "guitar piano violin drum song concert band singer melody jazz".split(),
    "weather": "rain snow wind storm sun cloud fog thunder frost heat".split(),
    "vehicles": "car bus train truck bicycle plane boat taxi tram motorcycle".split(),
}
VERBS = "likes watches holds carries finds wants sees loves near beside".split()
FUNCTION = "the a an is are of in on with and".split()


def vectors(rng):
    out = {}
    for words in TOPICS.values():
        center = rng.normal(0.0, 1.0, DIM)
        for w in words:
            out[w] = center + rng.normal(0.0, 0.7, DIM)
    for w in VERBS + FUNCTION:
        out[w] = rng.normal(0.0, 1.0, DIM)
    return out


def sentence(rng, topics):
    a, b = (TOPICS[t][rng.integers(10)] for t in topics)
    det = FUNCTION[rng.integers(3)]
    verb = VERBS[rng.integers(len(VERBS))]
    return f"{det.capitalize()} {a} {verb} the {b}."


def pairs(rng, n):
    names = list(TOPICS)
    rows = []
    for i in range(n):
        left = list(rng.choice(names, 2, replace=False))
        shared = i % 3
        others = [t for t in names if t not in left]
        if shared == 2:
            right = left[:]
        elif shared == 1:
            right = [left[rng.integers(2)], others[rng.integers(len(others))]]
        else:
            right = list(rng.choice(others, 2, replace=False))
        rng.shuffle(right)
        score = 2.5 * shared + rng.normal(0.0, 0.4)
        score = float(np.clip(round(score, 2), 0.0, 5.0))
        rows.append((score, sentence(rng, left), sentence(rng, right)))
    return rows


def write_pairs(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for score, a, b in rows:
            f.write(f"{score}\t{a}\t{b}\n")


def main():
    out = Path(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "fixtures")
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(SEED)
    vecs = vectors(rng)
    with open(out / "embeddings50.txt", "w", encoding="utf-8") as f:
        for word, v in vecs.items():
            f.write(word + " " + " ".join(f"{x:.5f}" for x in v) + "\n")
    write_pairs(out / "pairs200.tsv", pairs(rng, 200))
    toy = out / "toy"
    toy.mkdir(exist_ok=True)
    write_pairs(toy / "train.tsv", pairs(rng, 48))
    write_pairs(toy / "dev.tsv", pairs(rng, 18))
    write_pairs(toy / "test.tsv", pairs(rng, 18))


if __name__ == "__main__":
    main()
