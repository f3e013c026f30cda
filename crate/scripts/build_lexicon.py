#!/usr/bin/env python3
"""Build the part-of-speech word lists shipped in data/lexicon/.

Frequency ranks come from the `wordfreq` package (English). Part of speech
comes from the WordNet 3.0 index files (index.noun/verb/adj/adv) bundled in
the `wn==0.0.23` source distribution: a word joins a list when that part of
speech holds the majority of its tagged senses. Conjunctions are a
fixed list ranked by the same frequencies.

Output: one TSV per part of speech (word<TAB>rank, ascending rank) and a
manifest.toml recording the list sizes.

    pip install wordfreq
    pip download --no-deps wn==0.0.23 -d /tmp/wn
    python3 scripts/build_lexicon.py /tmp/wn/wn-0.0.23.tar.gz
"""

import os
import sys
import tarfile

import wordfreq

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
OUT = os.path.join(ROOT, "data", "lexicon")

SIZES = {
    "adjectives": 824,
    "adverbs": 331,
    "conjunctions": 40,
    "nouns": 2635,
    "verbs": 969,
    "top5050": 5050,
}

CONJUNCTIONS = [
    "and", "but", "or", "so", "if", "because", "as", "when", "than", "while",
    "though", "although", "since", "until", "unless", "whether", "nor", "yet",
    "once", "whereas", "till", "before", "after", "where", "whenever",
    "wherever", "either", "neither", "both", "lest", "provided", "suppose",
    "supposing", "though", "however", "therefore", "moreover", "furthermore",
    "otherwise", "nevertheless", "meanwhile", "also", "then", "whilst",
]

FUNCTION_WORDS = set(
    """
    a an the this that these those some any each every either neither no all both
    i me my mine you your yours he him his she her hers it its we us our ours they
    them their theirs who whom whose which what myself yourself himself herself
    itself ourselves themselves one ones
    in on at by for with about against between into through during before after
    above below to from up down of off over under again further then once upon
    within without toward towards among across behind beyond near onto per via
    and but or nor so yet if because as until while than though although since
    unless whether whereas
    can could may might must shall should will would
    am is are was were been being
    two three four five six seven eight nine ten hundred thousand million billion
    second third fourth fifth
    """.split()
)


def load_tag_counts(sdist):
    """word -> {pos: (tagged sense count, synset count)} from WordNet 3.0."""
    counts = {}
    with tarfile.open(sdist) as tar:
        for pos in ["noun", "verb", "adj", "adv"]:
            member = tar.getmember(f"wn-0.0.23/wn/data/wordnet-3.0/index.{pos}")
            for raw in tar.extractfile(member):
                line = raw.decode("utf-8")
                if line.startswith(" "):
                    continue
                fields = line.split()
                lemma, synsets, n_ptr = fields[0], int(fields[2]), int(fields[3])
                tagged = int(fields[5 + n_ptr])
                counts.setdefault(lemma, {})[pos] = (tagged, synsets)
    return counts


def dominant(entry, pos):
    if pos not in entry:
        return False
    total = sum(t for t, _ in entry.values())
    if total == 0:
        return len(entry) == 1
    return entry[pos][0] > 0 and entry[pos][0] * 2 >= total


def main():
    ranked = [w for w in wordfreq.top_n_list("en", 200_000) if w.isalpha() and w.isascii()]
    rank = {}
    for i, w in enumerate(ranked):
        rank.setdefault(w, i + 1)

    counts = load_tag_counts(sys.argv[1])
    lists = {}
    for pos, key in [("adjectives", "adj"), ("adverbs", "adv"), ("nouns", "noun"), ("verbs", "verb")]:
        words = [
            w
            for w in ranked
            if w in counts and dominant(counts[w], key) and w not in FUNCTION_WORDS and len(w) > 1
        ]
        lists[pos] = words[: SIZES[pos]]

    conj = []
    for w in sorted(set(CONJUNCTIONS), key=lambda w: rank.get(w, 10**9)):
        conj.append(w)
    lists["conjunctions"] = conj[: SIZES["conjunctions"]]
    lists["top5050"] = ranked[: SIZES["top5050"]]

    os.makedirs(OUT, exist_ok=True)
    for pos, words in lists.items():
        assert len(words) == SIZES[pos], (pos, len(words))
        with open(os.path.join(OUT, f"{pos}.tsv"), "w", encoding="utf-8") as f:
            for w in words:
                f.write(f"{w}\t{rank[w]}\n")

    with open(os.path.join(OUT, "manifest.toml"), "w", encoding="utf-8") as f:
        f.write("# Generated by scripts/build_lexicon.py\n")
        f.write("# Ranks: wordfreq (en). Part of speech: WordNet 3.0 tagged sense counts.\n\n")
        for pos in ["adjectives", "adverbs", "conjunctions", "nouns", "verbs", "top5050"]:
            f.write(f'[{pos}]\nfile = "{pos}.tsv"\ncount = {len(lists[pos])}\n\n')
    print({k: len(v) for k, v in lists.items()})


if __name__ == "__main__":
    main()
