"""Deterministic synthetic corpora for benchmarks and demos.

Instances are generated from a shared vocabulary with per-document topic
mixes so that query terms appear with meaningfully different frequencies
across the candidate list, giving rankers something to disagree about.
"""
from __future__ import annotations

import numpy as np

from .core import Instance, Vocabulary
from .rankers import CorpusStats


def _vocabulary(size: int) -> list[str]:
    consonants = "bcdfghklmnprstvz"
    vowels = "aeiou"
    words = []
    i = 0
    while len(words) < size:
        c1 = consonants[i % len(consonants)]
        v1 = vowels[(i // len(consonants)) % len(vowels)]
        c2 = consonants[(i // (len(consonants) * len(vowels))) % len(consonants)]
        v2 = vowels[i % len(vowels)]
        words.append(f"{c1}{v1}{c2}{v2}{i:02d}")
        i += 1
    return words


def synth_instances(n_instances: int, n_docs: int = 10, seed: int = 0,
                    vocab_size: int = 60, n_query_terms: tuple[int, int] = (2, 4),
                    filler_len: tuple[int, int] = (20, 40),
                    mix: tuple[float, float] = (0.35, 0.75),
                    strong_mass: int = 14
                    ) -> tuple[list[Instance], CorpusStats]:
    """Instances plus corpus stats over the pooled documents.

    Candidate lists mirror real retrieval output: a few strongly relevant
    documents rich in query terms, several partially relevant ones built
    around a single query term, and some marginal documents with a lone
    occurrence. Filler text length is drawn independently of query-term
    mass so non-query word counts carry no relevance signal.
    """
    rng = np.random.default_rng(seed)
    words = _vocabulary(vocab_size)
    vocab = Vocabulary.build([" ".join(words)])
    # Zipf-like filler usage so document frequency (and idf) varies by word.
    zipf = 1.0 / np.arange(1, vocab_size + 1)
    zipf /= zipf.sum()
    instances: list[Instance] = []
    n_strong = max(1, round(mix[0] * n_docs))
    n_partial = max(1, round((mix[1] - mix[0]) * n_docs))
    for qi in range(n_instances):
        k = int(rng.integers(n_query_terms[0], n_query_terms[1] + 1))
        query_terms = [words[int(i)] for i in rng.choice(vocab_size, size=k, replace=False)]
        docs = []
        for di in range(n_docs):
            body_len = int(rng.integers(filler_len[0], filler_len[1] + 1))
            tokens = [words[int(i)] for i in rng.choice(vocab_size, size=body_len, p=zipf)]
            if di < 3 and k >= 3:
                # Three rival leaders covering disjoint thirds of the query:
                # close scores, different term mixes, so their order is only
                # decidable from perturbation evidence.
                third = k // 3
                chunk = query_terms[di * third: (di + 1) * third] or query_terms[:1]
                interest = rng.dirichlet(np.full(len(chunk), 1.2))
                for t, p in zip(chunk, interest):
                    tokens.extend([t] * (1 + int(rng.binomial(strong_mass, p))))
            elif di < n_strong:
                # Mid-tier: moderate mixed coverage of all query terms.
                interest = rng.dirichlet(np.full(k, 0.8))
                for t, p in zip(query_terms, interest):
                    tokens.extend([t] * int(rng.binomial(max(4, strong_mass // 2), p)))
                tokens.append(query_terms[int(rng.integers(k))])
            elif di < n_strong + n_partial:  # one dominant query term
                t = query_terms[int(rng.integers(k))]
                tokens.extend([t] * (1 + int(rng.binomial(8, 0.4))))
            else:  # marginal: a lone query-term occurrence
                tokens.append(query_terms[int(rng.integers(k))])
            rng.shuffle(tokens)
            docs.append((f"q{qi}-d{di}", " ".join(tokens)))
        instances.append(Instance.from_texts(
            f"q{qi}", " ".join(query_terms), docs, vocab=vocab))
    stats = CorpusStats.from_documents(
        doc for inst in instances for doc in inst.documents)
    return instances, stats




def bundle_study(n_instances: int = 10, n_docs: int = 8, seed: int = 0,
                 n_filler: int = 6) -> tuple[list[Instance], CorpusStats, list[str]]:
    """Word-space corpus where four query words are exactly collinear.

    The first four query words always travel together with identical counts
    (a bundle), so their word-space columns are exact copies; two further
    query words vary independently. Returns (instances, stats, study_words)
    where study_words lists the bundle, the independent words, and filler
    words, in explanation-feature order for a restricted study space.
    """
    rng = np.random.default_rng(seed)
    bundle = ["bundleape", "bundlebee", "bundlecat", "bundledog"]
    singles = ["solofox", "solohen"]
    fillers = [f"fill{chr(ord('a') + i)}" for i in range(max(n_filler, 6))]
    words = bundle + singles + fillers
    vocab = Vocabulary.build([" ".join(words)])
    instances = []
    for qi in range(n_instances):
        docs = []
        for di in range(n_docs):
            c = int(rng.integers(0, 7))       # bundle copies in this doc
            x = int(rng.integers(0, 4))       # first independent word
            y = int(rng.integers(0, 4))       # second independent word
            tokens = bundle * c + [singles[0]] * x + [singles[1]] * y
            for f in fillers:
                tokens.extend([f] * int(rng.integers(1, 3)))
            rng.shuffle(tokens)
            docs.append((f"q{qi}-d{di}", " ".join(tokens)))
        instances.append(Instance.from_texts(
            f"q{qi}", " ".join(bundle + singles), docs, vocab=vocab))
    stats = CorpusStats.from_documents(
        doc for inst in instances for doc in inst.documents)
    return instances, stats, bundle + singles + fillers[:n_filler]
