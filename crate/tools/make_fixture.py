"""Generate the small CEBaB-format fixture corpus used by the test suites.

The fixture mimics the public release layout: one JSON array per split
(train_exclusive, train_inclusive, validation, test), records with the
published field names, five aspect votes and five star votes per text.
Texts are assembled from templated aspect sentences so that edits are
exact sentence substitutions, insertions or removals.

Usage: python3 tools/make_fixture.py [OUT_DIR] [--originals N] [--seed S]
"""

import argparse
import json
import math
import random
from pathlib import Path

ASPECTS = ["food", "service", "ambiance", "noise"]
VALUES = ["Negative", "unknown", "Positive"]
SCORE = {"Negative": -1.0, "unknown": 0.0, "Positive": 1.0}

LEXICON = {
    "food": {
        "nouns": ["pasta", "steak", "salmon", "risotto", "salad", "burger", "soup", "dessert", "tacos", "curry"],
        "Positive": ["delicious", "perfectly cooked", "flavorful", "fresh", "excellent", "tasty"],
        "Negative": ["bland", "overcooked", "cold", "greasy", "stale", "tasteless"],
        "templates": ["The {noun} was {adj}.", "We ordered the {noun} and it was {adj}.", "Their {noun} is {adj}."],
    },
    "service": {
        "nouns": ["waiter", "server", "staff", "hostess", "bartender"],
        "Positive": ["attentive", "friendly", "helpful", "quick", "welcoming"],
        "Negative": ["rude", "slow", "inattentive", "dismissive", "forgetful"],
        "templates": ["Our {noun} was {adj}.", "The {noun} seemed {adj} all night.", "We found the {noun} {adj}."],
    },
    "ambiance": {
        "nouns": ["decor", "atmosphere", "dining room", "patio", "lighting"],
        "Positive": ["charming", "cozy", "elegant", "lovely", "inviting"],
        "Negative": ["drab", "cramped", "tacky", "dingy", "gloomy"],
        "templates": ["The {noun} felt {adj}.", "I thought the {noun} was {adj}.", "What a {adj} {noun}."],
    },
    "noise": {
        "nouns": ["room", "place", "bar area", "dining area"],
        "Positive": ["quiet", "calm", "peaceful"],
        "Negative": ["loud", "noisy", "deafening"],
        "templates": ["The {noun} was {adj}.", "It was {adj} in the {noun}.", "A {adj} {noun} overall."],
    },
}

FILLERS = [
    "We came here for a birthday dinner.",
    "I visited on a Friday night.",
    "We had a reservation at seven.",
    "My partner picked this place.",
    "It was our first time here.",
    "Parking was easy to find.",
    "We stopped by after a movie.",
    "I came with two coworkers.",
]

# Unconfounded priors over (Negative, unknown, Positive) per aspect.
PRIORS = {
    "food": [0.38, 0.20, 0.42],
    "service": [0.33, 0.33, 0.34],
    "ambiance": [0.25, 0.48, 0.27],
    "noise": [0.22, 0.64, 0.14],
}
WEIGHTS = {"food": 1.0, "service": 0.6, "ambiance": 0.4, "noise": 0.3}
CONFOUNDING = 0.8
VOTE_NOISE = 0.55
ASPECT_VOTE_ACCURACY = 0.88


def draw_value(rng, aspect, u):
    w = [p * math.exp(CONFOUNDING * u * SCORE[v]) for p, v in zip(PRIORS[aspect], VALUES)]
    r = rng.random() * sum(w)
    for v, x in zip(VALUES, w):
        r -= x
        if r <= 0:
            return v
    return VALUES[-1]


def sentence(rng, aspect, value):
    lex = LEXICON[aspect]
    return {
        "template": rng.choice(lex["templates"]),
        "noun": rng.choice(lex["nouns"]),
        "adj": rng.choice(lex[value]),
    }


def render(fillers, slots):
    parts = [fillers[0]]
    for a in ASPECTS:
        s = slots.get(a)
        if s is not None:
            text = s["template"].format(noun=s["noun"], adj=s["adj"])
            parts.append(text[0].upper() + text[1:])
    parts.extend(fillers[1:])
    return " ".join(parts)


def star_votes(rng, values, u):
    score = 3.0 + u + sum(WEIGHTS[a] * SCORE[values[a]] for a in ASPECTS)
    return [min(5, max(1, round(score + rng.gauss(0.0, VOTE_NOISE)))) for _ in range(5)]


def aspect_votes(rng, value):
    votes = []
    for _ in range(5):
        if rng.random() < ASPECT_VOTE_ACCURACY:
            votes.append(value)
        else:
            votes.append(rng.choice([v for v in VALUES if v != value]))
    return votes


def majority(votes):
    for v in sorted(set(votes), key=str):
        if votes.count(v) >= 3:
            return v
    return None


def distribution(votes):
    out = {}
    for v in votes:
        out[str(v)] = out.get(str(v), 0) + 1
    return dict(sorted(out.items()))


def record(rng, oid, k, values, slots, fillers, u, goal):
    stars = star_votes(rng, values, u)
    rec = {
        "id": f"{oid:06d}_{k:06d}",
        "original_id": f"{oid:06d}",
        "edit_id": f"{k:06d}",
        "is_original": k == 0,
        "edit_goal": goal[1] if goal else None,
        "edit_type": goal[0] if goal else None,
        "description": render(fillers, slots),
    }
    m = majority(stars)
    rec["review_majority"] = str(m) if m is not None else "no majority"
    rec["review_label_distribution"] = distribution(stars)
    for a in ASPECTS:
        votes = aspect_votes(rng, values[a])
        m = majority(votes)
        rec[f"{a}_aspect_majority"] = m if m is not None else "no majority"
        rec[f"{a}_aspect_label_distribution"] = distribution(votes)
    return rec


def make_group(rng, oid, edit_rate):
    u = rng.gauss(0.0, 0.6)
    values = {a: draw_value(rng, a, u) for a in ASPECTS}
    slots = {a: (sentence(rng, a, v) if v != "unknown" else None) for a, v in values.items()}
    fillers = rng.sample(FILLERS, rng.choice([1, 2]))
    group = [record(rng, oid, 0, values, slots, fillers, u, None)]
    k = 1
    for a in ASPECTS:
        if rng.random() >= edit_rate:
            continue
        target = rng.choice([v for v in VALUES if v != values[a]])
        new_values = dict(values, **{a: target})
        new_slots = dict(slots)
        if target == "unknown":
            new_slots[a] = None
        elif slots[a] is None:
            new_slots[a] = sentence(rng, a, target)
        else:
            new_slots[a] = dict(slots[a], adj=rng.choice(LEXICON[a][target]))
        group.append(record(rng, oid, k, new_values, new_slots, fillers, u, (a, target)))
        k += 1
    return group


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("out", nargs="?", default="crates/core/tests/fixtures/cebab_mini")
    parser.add_argument("--originals", type=int, default=800)
    parser.add_argument("--seed", type=int, default=20220603)
    parser.add_argument("--edit-rate", type=float, default=0.5)
    args = parser.parse_args()

    rng = random.Random(args.seed)
    groups = [make_group(rng, oid, args.edit_rate) for oid in range(args.originals)]
    order = list(range(len(groups)))
    rng.shuffle(order)
    n_test = round(0.3 * len(order))
    n_dev = round(0.15 * len(order))
    test = sorted(order[:n_test])
    dev = sorted(order[n_test:n_test + n_dev])
    train = sorted(order[n_test + n_dev:])

    splits = {
        "test": [r for g in test for r in groups[g]],
        "validation": [r for g in dev for r in groups[g]],
        "train_inclusive": [r for g in train for r in groups[g]],
        "train_exclusive": [rng.choice(groups[g]) for g in train],
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, records in splits.items():
        with open(out / f"{name}.json", "w") as f:
            json.dump(records, f, indent=None, separators=(",", ":"))
            f.write("\n")
        print(f"{name}: {len(records)} texts")


if __name__ == "__main__":
    main()
