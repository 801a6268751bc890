"""Regenerate keyword40.jsonl: 40 users whose class is given away by keywords.

Every risk post of a user carries one keyword of the user's class; each user
also has one filler-only Uninformative post. Every fifth user is a throwaway
account. All words are in the shipped fixture embedding table.
"""

import random
from pathlib import Path

from cssrs.corpus import PostLabel, PostRecord, SeverityLabel, UserRecord, save_dataset

KEYWORDS = {
    SeverityLabel.SUPPORTIVE: ["stay", "strong", "better"],
    SeverityLabel.IDEATION: ["suicidal", "thoughts", "die"],
    SeverityLabel.BEHAVIOR: ["cut", "harm", "rope"],
    SeverityLabel.ATTEMPT: ["overdose", "pills", "tried"],
}
FILLER = ["i", "am", "my", "the", "family", "job", "today", "exams", "parents", "and"]


def build(n_users: int = 40, seed: int = 40) -> list[UserRecord]:
    rng = random.Random(seed)
    users = []
    for u in range(n_users):
        label = SeverityLabel(u % 4)
        uid = f"k{u:02d}"
        posts = []
        n_risk = rng.randint(2, 4)
        for k in range(n_risk):
            words = rng.choices(FILLER, k=5) + [rng.choice(KEYWORDS[label])]
            rng.shuffle(words)
            posts.append(PostRecord(f"{uid}-{k}", uid, 1_600_000_000 + 3600 * k, "SuicideWatch",
                                    " ".join(words).capitalize() + ".", PostLabel(int(label))))
        filler = " ".join(rng.choices(FILLER, k=4)).capitalize() + "."
        posts.append(PostRecord(f"{uid}-x", uid, 1_600_000_000 + 3600 * n_risk, "depression", filler,
                                PostLabel.UNINFORMATIVE))
        username = f"throwaway{u}" if u % 5 == 0 else f"user{u}"
        users.append(UserRecord(uid, tuple(posts), label, username))
    return users


if __name__ == "__main__":
    save_dataset(build(), Path(__file__).with_name("keyword40.jsonl"), "jsonl")
