"""Regenerates the small synthetic corpus used by the CLI tests.

Run from this directory: python3 generate.py
Output is deterministic.
"""

import csv
import json
import random
from datetime import datetime, timedelta, timezone

rng = random.Random(2020)

EPOCH = datetime(2020, 1, 21, tzinfo=timezone.utc)
DAYS = 108

THEORIES = {
    "5G": ["5g towers", "the 5G network", "#5G masts", "5g radiation"],
    "Gates": ["bill gates", "the gates foundation", "#BillGates", "event 201"],
    "Lab": ["the wuhan lab", "a lab-made virus", "the wuhan institute", "a bioweapon"],
    "Vax": ["the vaccine", "vaccines", "a microchip in the vax", "mandatory vaccination"],
}

MISINFO = ["hoax", "exposed", "cover up", "they lie", "wake up", "plandemic", "poison", "truth hidden", "depopulation", "share before deleted"]
FACTUAL = ["debunked", "fact check", "scientists say", "evidence shows", "study finds", "no link", "experts explain", "misleading claim", "official guidance", "peer reviewed"]
FILLER = ["today", "again", "people", "news", "really", "world", "read this", "thread", "look", "everyone", "now", "week", "video", "report", "city"]
MOOD = ["angry", "afraid", "terrible", "good", "happy", "sad", "trust", "hate", "love", "worry", "hope", "panic", "safe", "danger", "shocking"]

BAD_DOMAINS = ["truthwire.example", "hiddenfacts.example"]
GOOD_DOMAINS = ["health.example.org", "newsdesk.example.com"]


def sentence(theory, misinfo, extra_theory=None):
    topic = rng.choice(THEORIES[theory])
    words = rng.sample(MISINFO if misinfo else FACTUAL, 2)
    parts = [topic, words[0], rng.choice(FILLER), rng.choice(MOOD), words[1], rng.choice(FILLER)]
    if extra_theory:
        parts.insert(2, rng.choice(THEORIES[extra_theory]))
    rng.shuffle(parts)
    return " ".join(parts)


def stamp(day_weight):
    # misinformation volume drifts later in the window
    day = min(DAYS - 1, int(rng.betavariate(2 + 2 * day_weight, 2) * DAYS))
    return EPOCH + timedelta(days=day, seconds=rng.randrange(86400))


records = []
truth = {t: {} for t in THEORIES}
n = 0


def new_id():
    global n
    n += 1
    return f"{1250000000000000000 + n * 7919}"


def add(text, created, lang="en", urls=(), reply=None, retweet=None, source=None):
    tid = new_id()
    records.append({
        "id": tid,
        "text": text,
        "created_at": created.strftime("%Y-%m-%dT%H:%M:%SZ"),
        "lang": lang,
        "author_id": f"u{rng.randrange(400)}",
        "reply_to_id": reply,
        "retweet_of_id": retweet,
        "urls": list(urls),
        "source_domain": source,
    })
    return tid


for theory in THEORIES:
    others = [t for t in THEORIES if t != theory]
    for i in range(260):
        misinfo = rng.random() < (0.35 if theory == "Vax" else 0.5)
        extra = rng.choice(others) if rng.random() < 0.12 else None
        text = sentence(theory, misinfo, extra)
        urls, source = (), None
        if rng.random() < 0.25:
            domain = rng.choice(BAD_DOMAINS if misinfo else GOOD_DOMAINS)
            urls = [f"https://{domain}/story/{rng.randrange(10000)}"]
            source = domain
            text += " " + urls[0]
        created = stamp(1.0 if misinfo else 0.0)
        tid = add(text, created, urls=urls, source=source)
        truth[theory][tid] = "misinfo" if misinfo else "not_misinfo"
        if extra:
            truth[extra][tid] = truth[theory][tid]
        if rng.random() < 0.08:
            # a retweet of the same text
            rt = add(f"RT @u{rng.randrange(400)}: {text}", created + timedelta(hours=3), retweet=tid)
            truth[theory][rt] = truth[theory][tid]
            if extra:
                truth[extra][rt] = truth[theory][tid]

# unrelated chatter
for i in range(150):
    add(" ".join(rng.sample(FILLER + MOOD, 6)), EPOCH + timedelta(days=rng.randrange(DAYS), seconds=rng.randrange(86400)))

# other languages
for i in range(40):
    add("la vacuna y las torres 5g " + rng.choice(["hoy", "ahora", "mañana"]), stamp(0.5), lang="es")

rng.shuffle(records)
lines = [json.dumps(r, ensure_ascii=False) for r in records]
# an exact duplicate record and two damaged lines
lines.insert(100, lines[10])
lines.insert(300, '{"id": "broken", "text": "truncated')
lines.insert(500, '{"text": "no id field", "created_at": "2020-02-01T00:00:00Z"}')
with open("corpus.jsonl", "w", encoding="utf-8") as f:
    f.write("\n".join(lines) + "\n")

with open("domains.csv", "w", newline="") as f:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["domain", "flag"])
    for d in BAD_DOMAINS:
        w.writerow([d, "not_credible"])
    for d in GOOD_DOMAINS:
        w.writerow([d, "credible"])

for theory, labels in truth.items():
    ids = sorted(labels)
    with open(f"truth_{theory}.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["tweet_id", "label"])
        for tid in ids:
            w.writerow([tid, labels[tid]])
    # hand labels for an initial sample, a few left undecided
    sample = rng.sample(ids, 120)
    with open(f"labels_{theory}.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["tweet_id", "label", "annotator_id"])
        for tid in sorted(sample):
            label = "uncertain" if rng.random() < 0.04 else labels[tid]
            w.writerow([tid, label, "a1"])
