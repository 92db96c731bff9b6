import os
import sys
import tempfile

from ctxfilter.cli import main
from ctxfilter.scripts.make_synthetic_corpus import decoy_year_corpus, first_year_extractor
from ctxfilter.services.dataset_io import read_records, write_examples
from ctxfilter.services.evaluation_service import exact_match


def em_for(records, answers):
    hits = 0
    for record in records:
        context = record.input.split("\n")[0]
        hits += exact_match(first_year_extractor(context), answers[record.id])
    return 100.0 * hits / len(records)


def verify_pipeline():
    print("Test: Writing a synthetic decoy-year dataset...")
    items = decoy_year_corpus(n=200, seed=7)
    answers = {example.id: example.outputs for example, _ in items}

    with tempfile.TemporaryDirectory() as tmp:
        dataset = os.path.join(tmp, "decoy.jsonl")
        with open(dataset, "w", encoding="utf-8", newline="\n") as f:
            write_examples(items, f)

        scores = {}
        for mode in ("filco", "full"):
            print(f"\nTest: silver --mode {mode}...")
            out = os.path.join(tmp, mode)
            code = main(["silver", "--input", dataset, "--output", out, "--mode", mode])
            if code != 0:
                print(f"ERROR: silver --mode {mode} exited with {code}")
                return False
            with open(os.path.join(out, "gen_infer.jsonl"), "r", encoding="utf-8") as f:
                scores[mode] = em_for(read_records(f), answers)
            print(f"  EM with {mode} contexts: {scores[mode]:.1f}")

        if scores["filco"] >= 95.0 and scores["full"] <= 40.0:
            print("\nMATCH: filtered contexts beat full contexts on decoy questions")
            return True
        print(f"\nERROR: unexpected EM (filco={scores['filco']:.1f}, full={scores['full']:.1f})")
        return False


if __name__ == "__main__":
    sys.exit(0 if verify_pipeline() else 1)
