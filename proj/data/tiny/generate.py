#!/usr/bin/env python3
"""Regenerates the tiny corpus and similarity file in this directory."""

import random
from pathlib import Path

CATEGORIES = {
    "animal": ["cat", "dog", "horse", "cow", "sheep", "goat"],
    "food": ["bread", "cheese", "apple", "soup", "rice", "cake"],
    "vehicle": ["car", "bus", "train", "truck", "bike", "boat"],
    "colour": ["red", "blue", "green", "yellow", "black", "white"],
}
TEMPLATES = {
    "animal": ["the {w} eats grass in the field", "a {w} sleeps near the barn",
               "the farmer feeds the {w}", "my {w} runs across the farm"],
    "food": ["we eat {w} for dinner", "the cook bakes {w} in the kitchen",
             "fresh {w} tastes good", "she buys {w} at the market"],
    "vehicle": ["the {w} drives down the road", "we take the {w} to town",
                "a {w} stops at the station", "the driver parks the {w}"],
    "colour": ["the wall is painted {w}", "she wears a {w} coat",
               "the sky looks {w} today", "he likes the colour {w}"],
}


def main():
    rng = random.Random(7)
    here = Path(__file__).resolve().parent
    lines, tokens = [], 0
    while tokens < 9000:
        cat = rng.choice(sorted(CATEGORIES))
        line = rng.choice(TEMPLATES[cat]).format(w=rng.choice(CATEGORIES[cat]))
        if rng.random() < 0.3:
            other = rng.choice(sorted(CATEGORIES))
            line += " and " + rng.choice(TEMPLATES[other]).format(w=rng.choice(CATEGORIES[other]))
        lines.append(line + ".")
        tokens += len(line.split())
    (here / "corpus.txt").write_text("\n".join(lines) + "\n")

    words = [(c, w) for c in sorted(CATEGORIES) for w in CATEGORIES[c]]
    pairs = set()
    rows = ["word1\tword2\tscore"]
    while len(rows) < 61:
        (c1, a), (c2, b) = rng.sample(words, 2)
        key = tuple(sorted((a, b)))
        if key in pairs:
            continue
        pairs.add(key)
        score = (7.0 if c1 == c2 else 2.0) + rng.randint(0, 20) / 10.0
        rows.append(f"{a}\t{b}\t{score:.1f}")
    (here / "similarity.tsv").write_text("\n".join(rows) + "\n")


if __name__ == "__main__":
    main()
