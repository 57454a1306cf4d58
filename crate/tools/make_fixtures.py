#!/usr/bin/env python3
"""Generates the synthetic fixture corpora under crates/core/fixtures.

Usage: python3 tools/make_fixtures.py

Output is a pure function of the constants below.
"""

import csv
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "crates" / "core" / "fixtures"

TOPIC_WORDS = [
    # street-level action
    ["arrow", "bow", "rooftop", "fight", "vigilante", "hood", "mask", "team",
     "gun", "alley", "warehouse", "target", "mission", "suit", "patrol",
     "bunker", "quiver", "punch", "chase", "rescue", "street", "bullet",
     "training", "glades", "police"],
    # family and relationships
    ["mother", "sister", "father", "family", "love", "dinner", "wedding",
     "heart", "promise", "trust", "friend", "truth", "kiss", "apartment",
     "secret", "forgive", "birthday", "hospital", "parent", "brother",
     "feeling", "girlfriend", "memory", "home", "letter"],
    # city politics and villains
    ["mayor", "city", "council", "league", "island", "assassin", "bratva",
     "election", "company", "board", "money", "deal", "power", "weapon",
     "virus", "bomb", "prison", "lawyer", "judge", "campaign", "office",
     "senate", "contract", "mansion", "empire"],
]

CHARACTERS = ["OLIVER", "FELICITY", "DIGGLE", "THEA", "LAUREL", "QUENTIN", "ROY", "MOIRA"]
FILLER = ["the", "and", "you", "we", "it", "is", "to", "of", "that", "this", "oh", "yeah", "hey", "okay"]
INFLECT = {"fight": "fighting", "rescue": "rescued", "promise": "promised", "trust": "trusted",
           "weapon": "weapons", "friend": "friends", "mission": "missions", "deal": "deals"}

FIRST = ["Glen", "James", "John", "Michael", "Wendey", "Rob", "Antonio", "Nick", "Guy",
         "Ken", "Dermott", "Vikram", "Eric", "Laura", "Kevin", "Gregory", "Jesse",
         "Salli", "Larry", "Lexi", "Tara", "Mairzee", "Sarah", "Thor", "Doug"]
LAST = ["Winter", "Bamford", "Behring", "Schultz", "Stanzler", "Seidenglanz", "Negret",
        "Copus", "Norris", "Fink", "Downs", "Jayanti", "Laneuville", "Belcher", "Smith",
        "Prange", "Warn", "Richardson", "Teng", "Alexander", "Nicholson", "Boylan"]


def dirichlet(rng, alpha, k):
    draws = [rng.gammavariate(alpha, 1.0) for _ in range(k)]
    total = sum(draws)
    return [d / total for d in draws]


def pick(rng, weights):
    x = rng.random() * sum(weights)
    acc = 0.0
    for i, w in enumerate(weights):
        acc += w
        if x < acc:
            return i
    return len(weights) - 1


def director_names(rng, n):
    names = set()
    while len(names) < n:
        names.add(f"{rng.choice(FIRST)} {rng.choice(LAST)}")
    return sorted(names)


def script(rng, theta, length, recap):
    lines = []
    if recap:
        lines.append("PREVIOUSLY ON ARROW")
        lines.append("OLIVER: My name is Oliver Queen.")
        lines.append("")
    words_left = length
    while words_left > 0:
        speaker = rng.choice(CHARACTERS)
        n = min(words_left, rng.randint(6, 14))
        words = []
        for _ in range(n):
            if rng.random() < 0.25:
                words.append(rng.choice(FILLER))
                continue
            topic = pick(rng, theta)
            w = rng.choice(TOPIC_WORDS[topic])
            if w in INFLECT and rng.random() < 0.3:
                w = INFLECT[w]
            words.append(w)
        words_left -= n
        text = " ".join(words)
        lines.append(f"{speaker}: {text[0].upper()}{text[1:]}.")
    return "\n".join(lines) + "\n"


def html_snapshot(season, rows):
    out = [
        "<html><head><title>Season %d</title></head><body>" % season,
        '<table class="wikitable plainrowheaders">',
        "<tr><th>No. overall</th><th>No. in season</th><th>Title</th><th>Directed by</th>"
        "<th>Written by</th><th>Original air date</th><th>U.S. viewers<br/>(millions)</th></tr>",
    ]
    for r in rows:
        out.append(
            f"<tr><th>{r['overall']}</th><td>{r['episode']}</td><td>\"{r['title']}\"</td>"
            f"<td>{r['director']}</td><td>Staff Writer</td><td>2013</td>"
            f"<td>{r['viewers_millions']}<sup>[{r['overall']}]</sup></td></tr>"
        )
        out.append(f'<tr><td colspan="7">Summary of episode {r["episode"]}.</td></tr>')
    out.append("</table></body></html>")
    return "\n".join(out) + "\n"


def generate(name, seed, season_lengths, n_directors, length_range, html):
    rng = random.Random(seed)
    out = ROOT / name
    (out / "scripts").mkdir(parents=True, exist_ok=True)
    directors = director_names(rng, n_directors)
    effects = {d: rng.gauss(0.0, 0.15) for d in directors}
    rows = []
    overall = 0
    for s, count in enumerate(season_lengths, start=1):
        for e in range(1, count + 1):
            overall += 1
            # every director appears at least once
            if overall <= n_directors:
                director = directors[(overall * 7) % n_directors]
            else:
                director = rng.choice(directors)
            theta = dirichlet(rng, 0.4, 3)
            viewers = 3.9 - 0.45 * (s - 1) + rng.gauss(0.0, 0.15)
            viewers = round(min(4.14, max(0.62, viewers)), 2)
            rating = (8.25 + 0.9 * (theta[0] - 1 / 3) - 0.6 * (theta[2] - 1 / 3)
                      + effects[director] + 0.12 * (viewers - 2.5) + rng.gauss(0.0, 0.45))
            if rng.random() < 0.03:
                rating -= 1.6
            rating = round(min(9.7, max(5.5, rating)), 1)
            reviews = int(max(800, 4200 - 380 * s + 250 * (rating - 8.2) + rng.gauss(0, 250)))
            title = f"{rng.choice(TOPIC_WORDS[pick(rng, theta)]).title()} {rng.choice(['Rising', 'Falls', 'Returns', 'Lost', 'Unmasked', 'Reborn'])}"
            length = rng.randint(*length_range)
            text = script(rng, theta, length, recap=rng.random() < 0.5)
            (out / "scripts" / f"s{s:02d}e{e:02d}.txt").write_text(text, encoding="utf-8")
            rows.append({
                "episode_id": f"S{s:02d}E{e:02d}",
                "season": s,
                "episode": e,
                "title": title,
                "director": director,
                "viewers_millions": viewers,
                "imdb_rating": rating,
                "review_count": reviews,
                "overall": overall,
            })
    with open(out / "metadata.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=["episode_id", "season", "episode", "title", "director",
                                          "viewers_millions", "imdb_rating", "review_count"],
                           extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    if html:
        (out / "html").mkdir(exist_ok=True)
        for s in range(1, len(season_lengths) + 1):
            season_rows = [r for r in rows if r["season"] == s]
            (out / "html" / f"season_{s}.html").write_text(html_snapshot(s, season_rows), encoding="utf-8")
    (out / "pipeline.toml").write_text(f"seed = {seed}\n", encoding="utf-8")
    return rows


def main():
    generate("mini", 7, [20, 20], 8, (150, 260), html=False)
    generate("arrow_schema", 2012, [23, 23, 23, 23, 23, 23, 22, 5], 51, (500, 800), html=True)


if __name__ == "__main__":
    main()
