"""Regenerate the shipped 50-d fixture embedding table.

Vectors are built from a seeded orthonormal basis: the first ten axes are
topics (helpless, hopeless, ...), the rest carry word-specific noise. Concept
head words sit exactly on their topic axis; informal words mix a topic with
noise, so multi-word phrases average the noise away and score higher than
their parts.

    python3 scripts/build_fixture_embeddings.py src/cssrs/data/fixture_embeddings.txt
"""

import sys

import numpy as np

DIM = 50
TOPICS = ["helpless", "hopeless", "worthless", "depressed", "insomnia", "anxious",
          "ideation", "behavior", "attempt", "support"]

# token: (topic weights, noise norm)
WORDS = {
    # canonical concept surfaces
    "helpless": ({"helpless": 1.0}, 0.0),
    "hopeless": ({"hopeless": 1.0}, 0.0),
    "worthless": ({"worthless": 1.0}, 0.0),
    "depressed": ({"depressed": 1.0}, 0.0),
    "insomnia": ({"insomnia": 1.0}, 0.0),
    "anxious": ({"anxious": 1.0}, 0.0),
    # informal phrasings
    "sick": ({"helpless": 1.0}, 0.9),
    "loss": ({"helpless": 1.0}, 0.9),
    "tired": ({"helpless": 1.0}, 0.9),
    "losses": ({"helpless": 1.0}, 0.9),
    "need": ({"hopeless": 1.0}, 0.9),
    "way": ({"hopeless": 1.0}, 0.9),
    "out": ({"hopeless": 1.0}, 0.9),
    "no": ({"hopeless": 0.8}, 0.9),
    "trapped": ({"hopeless": 0.9}, 0.6),
    "useless": ({"worthless": 1.0}, 0.6),
    "failure": ({"worthless": 0.9}, 0.7),
    "sad": ({"depressed": 0.9}, 0.6),
    "empty": ({"depressed": 0.8}, 0.7),
    "awake": ({"insomnia": 0.9}, 0.7),
    "night": ({"insomnia": 0.5}, 0.8),
    "sleep": ({"insomnia": 0.6, "ideation": 0.3}, 0.7),
    "panic": ({"anxious": 1.0}, 0.6),
    "nervous": ({"anxious": 0.9}, 0.5),
    # severity vocabulary
    "suicidal": ({"ideation": 1.0}, 0.5),
    "thoughts": ({"ideation": 0.6}, 0.6),
    "want": ({"ideation": 0.5}, 0.7),
    "die": ({"ideation": 1.0, "attempt": 0.3}, 0.5),
    "cut": ({"behavior": 1.0}, 0.5),
    "harm": ({"behavior": 1.0}, 0.5),
    "self": ({"behavior": 0.5}, 0.7),
    "rope": ({"behavior": 0.8, "attempt": 0.4}, 0.5),
    "bridge": ({"behavior": 0.6, "attempt": 0.3}, 0.7),
    "kill": ({"ideation": 0.5, "attempt": 0.7}, 0.5),
    "myself": ({"behavior": 0.3}, 0.6),
    "tried": ({"attempt": 0.8}, 0.6),
    "overdose": ({"attempt": 1.0}, 0.4),
    "pills": ({"attempt": 0.8}, 0.6),
    "stay": ({"support": 0.7}, 0.6),
    "strong": ({"support": 1.0}, 0.5),
    "better": ({"support": 0.9}, 0.6),
    "help": ({"support": 0.6}, 0.7),
    # function and everyday words
    "i": ({}, 0.5), "am": ({}, 0.5), "of": ({}, 0.5), "and": ({}, 0.5), "my": ({}, 0.5),
    "a": ({}, 0.5), "to": ({}, 0.5), "you": ({}, 0.5), "are": ({}, 0.5), "not": ({}, 0.5),
    "never": ({}, 0.5), "but": ({}, 0.5), "feel": ({"depressed": 0.2}, 0.6), "the": ({}, 0.5),
    "exams": ({}, 0.8), "family": ({}, 0.8), "parents": ({}, 0.8), "job": ({}, 0.8), "today": ({}, 0.7),
}
# words whose noise gets a private axis so the documented P1/P2 behaviour is exact
PRIVATE = ["sick", "loss", "tired", "losses", "need", "way", "out", "no", "i", "am", "of", "and", "my", "a"]


def build(seed: int = 2020) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.normal(size=(DIM, DIM)))
    topic_axis = {t: basis[:, i] for i, t in enumerate(TOPICS)}
    private_axis = {w: basis[:, len(TOPICS) + i] for i, w in enumerate(PRIVATE)}
    shared = basis[:, len(TOPICS) + len(PRIVATE):]
    out = {}
    for word, (weights, noise) in WORDS.items():
        v = sum((w * topic_axis[t] for t, w in weights.items()), np.zeros(DIM))
        if noise:
            if word in private_axis:
                direction = private_axis[word]
            else:
                direction = shared @ rng.normal(size=shared.shape[1])
                direction /= np.linalg.norm(direction)
            v = v + noise * direction
        out[word] = v
    return out


def main(path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for word, vec in build().items():
            fh.write(word + " " + " ".join(f"{x:.6f}" for x in vec) + "\n")


if __name__ == "__main__":
    main(sys.argv[1])
