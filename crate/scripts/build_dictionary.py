#!/usr/bin/env python3
"""Regenerates data/dictionary.tsv.

Takes the 15000 most frequent lowercase ASCII English words from the
wordfreq package, drops single-token chat forms that appear as keys in
data/normalization.tsv, and appends local place names and domain terms.
Counts are word frequencies scaled to occurrences per billion tokens.
"""
import pathlib
import re

import wordfreq

ROOT = pathlib.Path(__file__).resolve().parent.parent
SIZE = 15000
EXTRA_COUNT = 2000

EXTRA = """
powai hiranandani lucene andheri bandra kurla dadar colaba worli juhu borivali
ghatkopar chembur malad goregaon vikhroli mulund sion matunga churchgate
parel santacruz vile parle kandivali bhandup thane vashi byculla mahim versova
pune lonavala nashik mumbai brigade ambulance tremors aftershock evacuate
evacuated trapped injured stranded collapsed landslide waterlogging quake
"""


def main():
    keys = set()
    for line in (ROOT / "data" / "normalization.tsv").read_text().splitlines():
        if not line or line.startswith("#"):
            continue
        source = line.split("\t")[0]
        if " " not in source:
            keys.add(source)

    words = []
    for w in wordfreq.iter_wordlist("en"):
        if re.fullmatch("[a-z]+", w) and w not in keys:
            words.append(w)
        if len(words) == SIZE:
            break

    counts = {w: max(1, round(wordfreq.word_frequency(w, "en") * 1e9)) for w in words}
    for w in EXTRA.split():
        counts.setdefault(w, EXTRA_COUNT)

    out = ROOT / "data" / "dictionary.tsv"
    with out.open("w") as f:
        for w, c in counts.items():
            f.write(f"{w}\t{c}\n")
    print(f"wrote {len(counts)} entries to {out}")


if __name__ == "__main__":
    main()
