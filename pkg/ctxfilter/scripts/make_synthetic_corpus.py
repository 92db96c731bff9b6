"""
Synthetic corpora for desk-scale checks of the filtering pipeline.

decoy  - extractive QA; the top-1 passage holds one sentence with the answer
         year and four sentences with other years, in random order.
equal  - 5-sentence passages whose sentences all have the same token count;
         exactly one sentence carries the answer token.

Usage:
    python -m ctxfilter.scripts.make_synthetic_corpus decoy --n 500 --seed 0 --out decoy.jsonl
"""

import argparse
import random
import re
import sys
from typing import List

from ctxfilter.models import Example, Passage, TaskKind
from ctxfilter.services.dataset_io import DatasetItem, write_examples

NAMES = ["Aldric", "Brenna", "Corwin", "Delia", "Edmund", "Fiona", "Gareth", "Helena",
         "Ivor", "Juliet", "Kendric", "Lorna", "Merrick", "Nessa", "Osric", "Portia"]
DEEDS = ["founded the guild", "crossed the strait", "signed the charter", "built the mill",
         "mapped the coast", "opened the library", "won the regatta", "repaired the bridge"]
WORDS = ["amber", "basalt", "cedar", "dune", "ember", "fjord", "granite", "heath",
         "islet", "juniper", "kelp", "lichen", "marsh", "nettle", "oak", "pine"]

_YEAR_RE = re.compile(r"\b\d{4}\b")


def first_year_extractor(context: str) -> str:
    """Deterministic stand-in generator: the first 4-digit number in the context, or ""."""
    match = _YEAR_RE.search(context)
    return match.group(0) if match else ""


def _years(rng: random.Random, count: int) -> List[int]:
    return rng.sample(range(1200, 2000), count)


def decoy_year_corpus(n: int = 500, seed: int = 0, distractors: int = 4) -> List[DatasetItem]:
    rng = random.Random(seed)
    items = []
    for i in range(n):
        name, deed = rng.choice(NAMES), rng.choice(DEEDS)
        answer, *decoys = _years(rng, distractors + 1)

        sentences = [f"{name} {deed} in {answer}."]
        for year in decoys:
            other = rng.choice([x for x in NAMES if x != name])
            sentences.append(f"{other} {rng.choice(DEEDS)} in {year}.")
        support = sentences[0]
        rng.shuffle(sentences)

        other_years = _years(rng, 3)
        passages = [
            Passage(rank=1, title="", text=" ".join(sentences)),
            Passage(rank=2, title="", text=" ".join(
                f"{rng.choice(NAMES)} {rng.choice(DEEDS)} in {y}." for y in other_years if y != answer)),
        ]
        example = Example(id=f"decoy-{i:04d}", query=f"In which year did {name} {deed}?",
                          outputs=[str(answer)], task_kind=TaskKind.EXTRACTIVE_QA,
                          support_position=sentences.index(support))
        items.append((example, passages))
    return items


def equal_length_corpus(n: int = 100, seed: int = 0, sentences: int = 5, words: int = 6) -> List[DatasetItem]:
    rng = random.Random(seed)
    items = []
    for i in range(n):
        answer = f"code{i:05d}"
        target = rng.randrange(sentences)
        parts = []
        for s in range(sentences):
            tokens = [rng.choice(WORDS) for _ in range(words)]
            if s == target:
                tokens[words // 2] = answer
            parts.append(" ".join(tokens).capitalize() + ".")
        example = Example(id=f"equal-{i:04d}", query=f"what is the code of item {i}",
                          outputs=[answer], task_kind=TaskKind.EXTRACTIVE_QA)
        items.append((example, [Passage(rank=1, title="", text=" ".join(parts))]))
    return items


CORPORA = {
    "decoy": decoy_year_corpus,
    "equal": equal_length_corpus,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Write a synthetic dataset as JSONL")
    parser.add_argument("kind", choices=sorted(CORPORA))
    parser.add_argument("--n", type=int, default=500)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default=None, help="Output path (default: stdout)")
    args = parser.parse_args(argv)

    items = CORPORA[args.kind](n=args.n, seed=args.seed)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as f:
            write_examples(items, f)
        print(f"Wrote {len(items)} examples to {args.out}")
    else:
        write_examples(items, sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
