#!/usr/bin/env python3
# Copyright 2026 The freshrec Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Regenerates the small data files under fixtures/.

Everything is drawn from fixed seeds, so rerunning rewrites identical files.
Usage: tools/make_fixtures.py [fixtures_dir]
"""

import math
import pathlib
import random
import sys


def zipf_cdf(n, s):
    weights = [k ** -s for k in range(1, n + 1)]
    total = sum(weights)
    cdf, acc = [], 0.0
    for w in weights:
        acc += w / total
        cdf.append(acc)
    return cdf


def draw(cdf, rng):
    u = rng.random()
    lo, hi = 0, len(cdf) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if cdf[mid] < u:
            lo = mid + 1
        else:
            hi = mid
    return lo


def criteo(path, rows=3000, seed=7):
    """Criteo-format TSV: label, 13 integer columns, 26 hex categoricals.

    Clicks depend on a few categorical columns through per-token effects
    whose sign flips halfway through the file, so later rows reward fresh
    training.
    """
    rng = random.Random(seed)
    vocab = [rng.choice([5, 20, 100, 500, 2000]) for _ in range(26)]
    cdfs = [zipf_cdf(v, 1.1) for v in vocab]
    tokens = [[f"{rng.getrandbits(32):08x}" for _ in range(v)] for v in vocab]
    effect = {c: [rng.gauss(0, 1.2) for _ in range(vocab[c])] for c in (0, 3, 7)}
    lines = []
    for i in range(rows):
        drift = 1.0 if i < rows // 2 else -1.0
        ints = []
        for _ in range(13):
            ints.append("" if rng.random() < 0.2 else str(int(rng.expovariate(1 / 8))))
        cats, logit = [], -1.2
        for c in range(26):
            if rng.random() < 0.1:
                cats.append("")
                continue
            k = draw(cdfs[c], rng)
            cats.append(tokens[c][k])
            if c in effect:
                logit += effect[c][k] * (drift if c == 0 else 1.0)
        label = 1 if rng.random() < 1 / (1 + math.exp(-logit)) else 0
        lines.append("\t".join([str(label)] + ints + cats))
    path.write_text("\n".join(lines) + "\n")


def movielens(path, ratings=20000, users=400, movies=300, seed=11):
    """userId,movieId,rating,timestamp from a small latent-factor model,
    with two malformed rows and one out-of-scale rating."""
    rng = random.Random(seed)
    user_ids = rng.sample(range(1, 162542), users)
    movie_ids = rng.sample(range(1, 209172), movies)
    uf = [[rng.gauss(0, 0.5) for _ in range(4)] for _ in range(users)]
    mf = [[rng.gauss(0, 0.5) for _ in range(4)] for _ in range(movies)]
    ub = [rng.gauss(0, 0.6) for _ in range(users)]
    mb = [rng.gauss(0, 0.6) for _ in range(movies)]
    cdf = zipf_cdf(movies, 0.8)
    rows = ["userId,movieId,rating,timestamp"]
    ts = 1_500_000_000
    for _ in range(ratings):
        u = rng.randrange(users)
        m = draw(cdf, rng)
        score = 3.5 + ub[u] + mb[m] + sum(a * b for a, b in zip(uf[u], mf[m])) + rng.gauss(0, 0.5)
        r = min(5.0, max(0.5, round(score * 2) / 2))
        ts += rng.randrange(1, 120)
        rows.append(f"{user_ids[u]},{movie_ids[m]},{r:.1f},{ts}")
    rows.insert(500, "17,not-a-movie,4.0,1500000000")
    rows.insert(900, "3,4,5")
    rows.insert(1300, f"{user_ids[0]},{movie_ids[0]},7.0,{ts}")
    path.write_text("\n".join(rows) + "\n")


def user_ids(path, count=20000, seed=13):
    rng = random.Random(seed)
    ids = rng.sample(range(1, 1 << 40), count)
    path.write_text("\n".join(str(i) for i in ids) + "\n")


def joiner_stream(path, requests=600, seed=17):
    """F/A records in arrival order: late actions, early actions, duplicate
    features and actions, and requests that never get an action."""
    rng = random.Random(seed)
    events = []
    for i in range(requests):
        key = 1000 + i
        ts = i * 2
        feats = ",".join(f"{s}:{rng.randrange(1, 50) if s == 0 else rng.randrange(1, 10)}" for s in range(3))
        arrive = ts + rng.randrange(0, 20)
        events.append((arrive, f"F\t{key}\t{ts}\t{feats}"))
        if rng.random() < 0.05:
            events.append((arrive + 5, f"F\t{key}\t{ts}\t{feats}"))
        if rng.random() < 0.08:
            continue
        delay = rng.randrange(0, 60) if rng.random() < 0.9 else rng.randrange(400, 900)
        label = 1 if rng.random() < 0.3 else 0
        a_ts = ts + delay
        a_arrive = a_ts - 15 if rng.random() < 0.05 else a_ts + rng.randrange(0, 20)
        events.append((a_arrive, f"A\t{key}\t{a_ts}\t{label}"))
        if rng.random() < 0.03:
            events.append((a_arrive + 3, f"A\t{key}\t{a_ts}\t{label}"))
    events.sort(key=lambda e: e[0])
    path.write_text("# F <key> <ts> <slot:id,...> | A <key> <ts> <label>, in arrival order\n" +
                    "\n".join(line for _, line in events) + "\n")


def main():
    out = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else pathlib.Path(__file__).parent.parent / "fixtures")
    out.mkdir(parents=True, exist_ok=True)
    criteo(out / "criteo_small.tsv")
    movielens(out / "movielens_small.csv")
    user_ids(out / "user_ids.txt")
    joiner_stream(out / "joiner_stream.txt")


if __name__ == "__main__":
    main()
