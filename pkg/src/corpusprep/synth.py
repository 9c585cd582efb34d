"""Synthetic fixture corpora for tests and demos.

Two toy languages with distinct syllable inventories stand in for real
Romanian/English text, and the mixed corpus builder plants every kind of
casualty the pipeline stages are supposed to catch: duplicates, boilerplate,
blocklisted terms, PII and quality violations.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field

from .wet import WetRecord

RO_FUNCTION_WORDS = [
    "și", "de", "la", "cu", "pe", "în", "este", "care", "pentru", "din",
    "mai", "sau", "când", "după", "fără", "între", "peste", "până",
]
RO_SYLLABLES = [
    "șa", "ță", "mă", "re", "lui", "ește", "ară", "înt", "oa", "ea",
    "ului", "ilor", "ciu", "geam", "ște", "ân", "râ", "țio", "nea", "dă",
]
EN_FUNCTION_WORDS = [
    "the", "and", "of", "to", "in", "is", "that", "with", "for", "on",
    "as", "by", "at", "this", "from", "which", "their", "about",
]
EN_SYLLABLES = [
    "th", "ing", "er", "on", "an", "re", "ed", "es", "en", "ou",
    "wh", "ck", "tion", "ght", "sh", "ly", "st", "ward", "ness", "ble",
]

_INVENTORY = {
    "ro": (RO_FUNCTION_WORDS, RO_SYLLABLES),
    "en": (EN_FUNCTION_WORDS, EN_SYLLABLES),
}


def make_word(rng: random.Random, lang: str) -> str:
    function_words, syllables = _INVENTORY[lang]
    if rng.random() < 0.3:
        return rng.choice(function_words)
    return "".join(rng.choice(syllables) for _ in range(rng.randint(2, 3)))


def make_sentence(rng: random.Random, lang: str, min_words: int = 6, max_words: int = 14) -> str:
    words = [make_word(rng, lang) for _ in range(rng.randint(min_words, max_words))]
    return words[0].capitalize() + " " + " ".join(words[1:]) + "."


def make_paragraph(rng: random.Random, lang: str, sentences: int | None = None) -> str:
    count = sentences if sentences is not None else rng.randint(3, 5)
    return " ".join(make_sentence(rng, lang) for _ in range(count))


def language_lines(lang: str, n_lines: int, seed: int) -> list[str]:
    """Sentences of one toy language, e.g. for classifier training."""
    rng = random.Random(f"{seed}:{lang}")
    return [make_sentence(rng, lang) for _ in range(n_lines)]


def labeled_corpus(
    n_per_lang: int, seed: int, langs: tuple[str, ...] = ("ro", "en")
) -> list[tuple[str, str]]:
    corpus = []
    for lang in langs:
        corpus.extend((line, lang) for line in language_lines(lang, n_per_lang, seed))
    return corpus


@dataclass
class MixedCorpus:
    """Shards of WET records plus notes about what was planted where."""

    shards: list[list[WetRecord]]
    planted: dict[str, list[str]] = field(default_factory=dict)  # category -> urls

    def all_records(self) -> list[WetRecord]:
        return [rec for shard in self.shards for rec in shard]


def _record(url: str, text: str, stamp: int) -> WetRecord:
    date = f"2024-05-{(stamp % 28) + 1:02d}T{stamp % 24:02d}:00:00Z"
    return WetRecord(target_uri=url, warc_date=date, content_length=0, body=text)


def build_mixed_corpus(
    n_docs: int = 2000,
    n_shards: int = 8,
    seed: int = 1234,
) -> MixedCorpus:
    """A corpus where every pipeline stage has at least one planted casualty."""
    rng = random.Random(seed)
    boilerplate = make_paragraph(rng, "ro", sentences=2)
    records: list[WetRecord] = []
    planted: dict[str, list[str]] = {
        "english": [], "exact_dup": [], "digit_dup": [], "near_dup": [],
        "boilerplate_only": [], "blocklist_content": [], "blocklist_url": [],
        "pii": [], "too_short": [], "bullets": [], "repetition": [], "normal": [],
    }
    base_texts: list[str] = []  # duplication pool
    long_bases: list[str] = []  # big enough that a 1-word edit stays near-identical

    for i in range(n_docs):
        url = f"http://site{i % 97}.example.ro/pagina/{i}"
        roll = rng.random()
        category = "normal"
        if roll < 0.05:
            category = "english"
        elif roll < 0.08 and base_texts:
            category = "exact_dup"
        elif roll < 0.10 and base_texts:
            category = "digit_dup"
        elif roll < 0.13 and long_bases:
            category = "near_dup"
        elif roll < 0.15:
            category = "boilerplate_only"
        elif roll < 0.17:
            category = "blocklist_content"
        elif roll < 0.19:
            category = "blocklist_url"
        elif roll < 0.23:
            category = "pii"
        elif roll < 0.26:
            category = "too_short"
        elif roll < 0.28:
            category = "bullets"
        elif roll < 0.30:
            category = "repetition"

        if category == "english":
            text = "\n".join(make_paragraph(rng, "en") for _ in range(3))
        elif category == "exact_dup":
            text = rng.choice(base_texts)
        elif category == "digit_dup":
            # same page modulo a counter; digits normalize to 0 so this is
            # an exact duplicate of every other variant of the same base
            text = base_texts[0] + f"\nVizualizări: {rng.randint(100, 999)}."
        elif category == "near_dup":
            words = rng.choice(long_bases).split(" ")
            words[rng.randrange(len(words))] = make_word(rng, "ro")
            text = " ".join(words)
        elif category == "boilerplate_only":
            text = boilerplate
        elif category == "blocklist_content":
            paras = [make_paragraph(rng, "ro") for _ in range(4)]
            paras[1] = paras[1].replace(".", " interzis.", 1)
            text = "\n".join(paras)
        elif category == "blocklist_url":
            url = f"http://cazino-blocked{i}.example.ro/joc/{i}"
            text = "\n".join(make_paragraph(rng, "ro") for _ in range(4))
        elif category == "pii":
            paras = [make_paragraph(rng, "ro") for _ in range(4)]
            paras.insert(
                1,
                f"Contact: ion.popescu{i}@firma.ro sau 0722 {rng.randint(100, 999)} "
                f"{rng.randint(100, 999)}, detalii pe https://firma{i}.ro/contact.",
            )
            text = "\n".join(paras)
        elif category == "too_short":
            text = make_sentence(rng, "ro", min_words=8, max_words=20)
        elif category == "bullets":
            text = "\n".join(f"• {make_sentence(rng, 'ro')}" for _ in range(rng.randint(12, 20)))
        elif category == "repetition":
            gram = make_sentence(rng, "ro", min_words=6, max_words=6)
            text = "\n".join(" ".join([gram] * 10) for _ in range(4))
        else:
            paras = [make_paragraph(rng, "ro") for _ in range(rng.randint(4, 8))]
            if rng.random() < 0.25:
                paras.insert(0, boilerplate)
            if rng.random() < 0.15:
                paras.insert(0, "Acasă | Contact")
            text = "\n".join(paras)
            base_texts.append(text)
            if len(text.split()) >= 250:
                long_bases.append(text)

        planted[category].append(url)
        records.append(_record(url, text, stamp=i))

    shards: list[list[WetRecord]] = [[] for _ in range(n_shards)]
    for i, rec in enumerate(records):
        shards[i % n_shards].append(rec)
    return MixedCorpus(shards=shards, planted=planted)


DEMO_BLOCKLIST = """# demo blocklist
[content]
interzis
[url]
cazino
"""
