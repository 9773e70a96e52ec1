"""Generate the bundled mini parallel corpus and static translation table.

English sentences are drawn from topical templates; the target side is a
word-by-word rendering into a made-up language (adjectives follow nouns,
some words become two-word phrases). The translation table lists the
English vocabulary with a few entries deliberately missing.

    python scripts/make_mini_corpus.py data/mini
"""

import argparse
import random
import unicodedata
from pathlib import Path

TOPICS = {
    "farming": (
        "farmer field crop harvest milk cattle grain tractor soil barn orchard seed".split(),
        "grows feeds sells plants waters ploughs".split(),
        "green rural fertile organic dry fresh".split(),
    ),
    "economy": (
        "bank market price budget tax euro debt loan trade investor profit wage".split(),
        "raises lowers pays borrows invests spends".split(),
        "fiscal monetary public private stable annual".split(),
    ),
    "health": (
        "doctor patient hospital medicine nurse vaccine disease clinic treatment virus surgeon drug".split(),
        "treats cures visits prescribes tests heals".split(),
        "sick healthy medical chronic rare safe".split(),
    ),
    "transport": (
        "train road bus airport railway driver ticket bridge truck port pilot ship".split(),
        "drives builds repairs crosses delays carries".split(),
        "fast slow busy modern heavy cheap".split(),
    ),
    "environment": (
        "forest river climate pollution energy emission ocean wind carbon waste species glacier".split(),
        "protects reduces damages measures cleans warms".split(),
        "clean toxic renewable polluted global natural".split(),
    ),
    "education": (
        "teacher student school lesson exam book university pupil classroom degree library course".split(),
        "teaches studies reads writes learns passes".split(),
        "young clever difficult academic primary bright".split(),
    ),
}
DETERMINERS = "the a every this".split()
PREPOSITIONS = "in near with for".split()
OPENERS = [["mr", "president"], ["commissioner"], ["ladies", "and", "gentlemen"]]
LINKERS = "and but because".split()
# English words that become two-word phrases on the target side
MULTIWORD = {"give", "support", "commissioner", "because"}
# English words left out of the translation table
UNLISTED = {"ladies", "gentlemen", "every"}

SYLLABLES = ("ka ko ma mi ne no pa pe ri ro ta te va vi sa su la lu ja jo "
             "kõ mä sü pö tä rü lä nõ ša že").split()


def make_lexicon(words, rng):
    used, lex = set(), {}
    for w in words:
        while True:
            n = rng.choice((2, 2, 3))
            cand = "".join(rng.choice(SYLLABLES) for _ in range(n))
            if w in MULTIWORD:
                cand = cand + " " + "".join(rng.choice(SYLLABLES) for _ in range(2))
            if cand not in used:
                used.add(cand)
                lex[w] = cand
                break
    return lex


def noun_phrase(topic, rng):
    nouns, _, adjs = TOPICS[topic]
    det = rng.choice(DETERMINERS)
    noun = rng.choice(nouns)
    if rng.random() < 0.5:
        return [(det, "det"), (rng.choice(adjs), "adj"), (noun, "noun")]
    return [(det, "det"), (noun, "noun")]


def clause(topic, rng):
    verbs = TOPICS[topic][1]
    words = noun_phrase(topic, rng) + [(rng.choice(verbs), "verb")] + noun_phrase(topic, rng)
    if rng.random() < 0.4:
        words += [(rng.choice(PREPOSITIONS), "prep")] + noun_phrase(topic, rng)
    if rng.random() < 0.15:
        words += [("give", "verb"), ("support", "noun")]
    return words


def sentence(rng):
    topic = rng.choice(sorted(TOPICS))
    words = []
    if rng.random() < 0.25:
        words += [(w, "open") for w in rng.choice(OPENERS)] + [(",", "punct")]
    words += clause(topic, rng)
    if rng.random() < 0.3:
        words += [(rng.choice(LINKERS), "link")] + clause(topic, rng)
    if rng.random() < 0.2:
        words += [("in", "prep"), (str(rng.randint(1990, 2009)), "num")]
    return words


def render_target(words, lex, rng):
    out = []
    i = 0
    while i < len(words):
        w, tag = words[i]
        # adjective follows its noun on the target side
        if tag == "adj" and i + 1 < len(words) and words[i + 1][1] == "noun":
            out += [lex[words[i + 1][0]], lex[w]]
            i += 2
            continue
        out.append(lex.get(w, w))
        i += 1
    text = " ".join(out)
    if rng.random() < 0.1:
        text = unicodedata.normalize("NFD", text)
    return text


def render(words, final="."):
    text = " ".join(w for w, _ in words).replace(" ,", ",") + final
    return text[0].upper() + text[1:]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("outdir")
    ap.add_argument("--sentences", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=2019)
    args = ap.parse_args()
    rng = random.Random(args.seed)

    vocab = set(DETERMINERS + PREPOSITIONS + LINKERS + ["give", "support"])
    for nouns, verbs, adjs in TOPICS.values():
        vocab.update(nouns + verbs + adjs)
    for opener in OPENERS:
        vocab.update(opener)
    lex = make_lexicon(sorted(vocab), rng)

    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "en.txt", "w", encoding="utf-8") as en, open(out / "xx.txt", "w", encoding="utf-8") as xx:
        for _ in range(args.sentences):
            words = sentence(rng)
            final = rng.choice([".", ".", ".", "!", "?"])
            en.write(render(words, final) + "\n")
            tgt = render_target([(w, t) for w, t in words if t != "punct"], lex, rng)
            xx.write(tgt[0].upper() + tgt[1:] + final + "\n")
    with open(out / "en-xx.table.tsv", "w", encoding="utf-8") as f:
        for w in sorted(vocab - UNLISTED):
            f.write(f"{w}\t{lex[w]}\n")


if __name__ == "__main__":
    main()
