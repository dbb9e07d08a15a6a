"""Generates the synthetic surrogate fixture used by the acceptance suite.

The published raw data could not be obtained, so this script builds a
stand-in with the same headline shape: 853 sessions started, 501 completed,
44,765 guesses, 17,023 correct, 30 sessions with improbably high accuracy.
Expected values are then computed by reference.py from the written files.

    python3 tools/surrogate/make_surrogate.py crates/apptool/tests/fixtures/surrogate
"""

import datetime as dt
import hashlib
import json
import os
import sys

import numpy as np
from scipy import stats

import reference as ref

SEED = 20260124
N_SENTENCES = 136
N_REGISTERED = 256
N_ACTIVE = 184
N_SESSIONS = 853
N_COMPLETED = 501
N_ABANDONED_OBS = 192
TOTAL_GUESSES = 44_765
TOTAL_CORRECT = 17_023
COMPLETED_GUESSES = 38_977
N_CHEATERS = 30

rng = np.random.default_rng(SEED)

LOWER = "абвгґдеєжзиіїйклмнопрстуфхцчшщьюя"
VOWELS = "аеєиіїоуюя"
CONSONANTS = "бвгґджзйклмнпрстфхцчшщ"


def word():
    n = int(rng.integers(1, 5))
    w = ""
    for _ in range(n):
        w += rng.choice(list(CONSONANTS)) + rng.choice(list(VOWELS))
        if rng.random() < 0.3:
            w += rng.choice(list(CONSONANTS + "ь"))
    if rng.random() < 0.04 and len(w) > 3:
        w = w[:2] + "’" + w[2:]
    return w


def sentence(lo, hi):
    """Raw sentence whose normalized length lies in [lo, hi]."""
    while True:
        words = []
        target = int(rng.integers(lo, hi + 1))
        while len(ref.normalize(" ".join(words))) < target:
            w = word()
            r = rng.random()
            if r < 0.08:
                w += ","
            elif r < 0.11:
                w = "«" + w + "»"
            elif r < 0.13:
                w += " -"
            words.append(w)
        words[0] = words[0][:1].upper() + words[0][1:]
        s = " ".join(words)
        if rng.random() < 0.05:
            # decomposed short i, composed back by NFC
            s = s.replace("\u0439", "\u0438\u0306", 1)
        if rng.random() < 0.05:
            s = s.replace(" ", "\u00a0", 1)
        n = len(ref.normalize(s))
        if lo <= n <= hi:
            return s


def valid_length():
    # skewed towards short sentences, as in news text
    return int(min(200, 120 + rng.gamma(1.6, 18.0)))


def articles():
    per_article = [31, 24, 29, 22, 30]
    assert sum(per_article) == N_SENTENCES
    dates = ["2023-11-02", "2024-05-17", "2025-02-09", "2025-09-30", "2026-01-12"]
    out = []
    for a, (n_valid, date) in enumerate(zip(per_article, dates)):
        kinds = ["ok"] * n_valid + ["short"] * 4 + ["long"] * 3 + ["latin", "digit"]
        rng.shuffle(kinds)
        parts = []
        for k in kinds:
            if k == "ok":
                L = valid_length()
                s = sentence(L, L)
            elif k == "short":
                s = sentence(30, 110)
            elif k == "long":
                s = sentence(215, 320)
            elif k == "latin":
                s = sentence(130, 180).replace(" ", " Telegram ", 1)
            else:
                s = sentence(130, 180).replace(" ", " 2026 ", 1)
            parts.append(s + rng.choice([".", ".", ".", "!", "?", "..."]))
        text = ""
        for i, p in enumerate(parts):
            text += p + ("\n\n" if i % 5 == 4 else " ")
        out.append((f"surr-{a + 1}", f"article_{a + 1}.txt", date, text.strip() + "\n"))
    return out


# guessers

def draw_rank(skill):
    a, b, t = skill
    u = rng.random()
    if u < a:
        return 1
    if u < a + b:
        return int(min(4, 2 + rng.geometric(0.55) - 1))
    return int(rng.integers(5, 35))


def simulate(text, budget, skill, n_guesses):
    """Ranks of solved positions and trailing wrong guesses after
    `n_guesses` guesses (or the full budget)."""
    ranks, left = [], min(n_guesses, budget)
    cursor = ref.PREFIX
    while left > 0 and cursor < len(text):
        r = draw_rank(skill)
        if r <= left:
            ranks.append(r)
            left -= r
            cursor += 1
        else:
            return ranks, left
    return ranks, 0


def honest_skill():
    a = rng.uniform(0.45, 0.82)
    t = rng.uniform(0.06, 0.16)
    return (a, 1 - a - t, t)


CHEATER = (0.97, 0.03, 0.0)


def main(out_dir):
    os.makedirs(os.path.join(out_dir, "articles"), exist_ok=True)
    arts = articles()
    manifest = {}
    for art_id, fname, date, text in arts:
        with open(os.path.join(out_dir, "articles", fname), "w", encoding="utf-8") as f:
            f.write(text)
        manifest[fname] = {"id": art_id, "published_date": date}
    with open(os.path.join(out_dir, "articles", "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, ensure_ascii=False, indent=2)
        f.write("\n")
    pool = ref.build_pool([(manifest[fn]["id"], text) for fn, text in
                           sorted((a[1], a[3]) for a in arts)])
    assert len(pool) == N_SENTENCES, len(pool)
    with open(os.path.join(out_dir, "pool.jsonl"), "w", encoding="utf-8") as f:
        for s in pool:
            f.write(json.dumps(s, ensure_ascii=False) + "\n")
    budgets = np.array([s["length"] - ref.PREFIX for s in pool])

    # participants and their session counts
    counts = np.minimum(60, 1 + np.floor(rng.lognormal(0.6, 1.1, N_ACTIVE))).astype(int)
    while counts.sum() != N_SESSIONS:
        i = rng.integers(N_ACTIVE)
        if counts.sum() > N_SESSIONS and counts[i] > 1:
            counts[i] -= 1
        elif counts.sum() < N_SESSIONS and counts[i] < 60:
            counts[i] += 1
    owner = np.repeat(np.arange(N_ACTIVE), counts)

    # sentence assignment, no repeats per participant
    sentence_of = np.empty(N_SESSIONS, dtype=int)
    for p in range(N_ACTIVE):
        idx = np.where(owner == p)[0]
        sentence_of[idx] = rng.choice(N_SENTENCES, size=len(idx), replace=False)

    kind = np.array(["completed"] * N_COMPLETED + ["abandoned_obs"] * N_ABANDONED_OBS
                    + ["abandoned_empty"] * (N_SESSIONS - N_COMPLETED - N_ABANDONED_OBS))
    rng.shuffle(kind)
    # completed budgets must sum exactly: reassign sentences within owners
    comp = np.where(kind == "completed")[0]
    while True:
        diff = budgets[sentence_of[comp]].sum() - COMPLETED_GUESSES
        if diff == 0:
            break
        i = rng.choice(comp)
        used = set(sentence_of[owner == owner[i]])
        free = [s for s in range(N_SENTENCES) if s not in used]
        if not free:
            continue
        s = rng.choice(free)
        new = budgets[s] - budgets[sentence_of[i]]
        if abs(diff + new) < abs(diff) or (abs(diff + new) == abs(diff) and rng.random() < 0.3):
            sentence_of[i] = s

    # abandoned guess counts
    n_guesses = budgets[sentence_of].copy()
    emp = np.where(kind == "abandoned_empty")[0]
    obs_ab = np.where(kind == "abandoned_obs")[0]
    n_guesses[emp] = rng.integers(0, 3, size=len(emp))
    target_ab = TOTAL_GUESSES - COMPLETED_GUESSES - n_guesses[emp].sum()
    g = np.maximum(3, (budgets[sentence_of[obs_ab]] * rng.beta(1.2, 2.5, len(obs_ab))).astype(int))
    g = np.minimum(g, budgets[sentence_of[obs_ab]] - 1)
    while g.sum() != target_ab:
        j = rng.integers(len(obs_ab))
        cap = budgets[sentence_of[obs_ab[j]]] - 1
        if g.sum() < target_ab and g[j] < cap:
            g[j] += 1
        elif g.sum() > target_ab and g[j] > 3:
            g[j] -= 1
    n_guesses[obs_ab] = g

    analysed_guesses = TOTAL_GUESSES - n_guesses[emp].sum()
    p_star = TOTAL_CORRECT / analysed_guesses

    def tail(correct, total):
        return stats.binom.sf(correct - 1, total, p_star)

    cheaters = set(rng.choice(comp, size=N_CHEATERS, replace=False).tolist())
    skill = {}
    result = {}

    def generate(i):
        text = pool[sentence_of[i]]["normalized_text"]
        budget = budgets[sentence_of[i]]
        while True:
            if i in cheaters:
                sk = CHEATER
            else:
                sk = honest_skill()
            ranks, trailing = simulate(text, budget, sk, n_guesses[i])
            if not ranks:
                continue
            t = tail(len(ranks), n_guesses[i])
            if (i in cheaters and t < 1e-4) or (i not in cheaters and t > 0.03):
                skill[i] = sk
                result[i] = (ranks, trailing)
                return

    with_obs = [i for i in range(N_SESSIONS) if kind[i] != "abandoned_empty"]
    for i in with_obs:
        generate(i)
    honest = [i for i in with_obs if i not in cheaters]
    total = sum(len(result[i][0]) for i in with_obs)
    while total != TOTAL_CORRECT:
        i = honest[rng.integers(len(honest))]
        before = len(result[i][0])
        saved = (skill[i], result[i])
        generate(i)
        after = total - before + len(result[i][0])
        if abs(after - TOTAL_CORRECT) <= abs(total - TOTAL_CORRECT):
            total = after
        else:
            skill[i], result[i] = saved
    print("correct total reached", total, "p*", p_star, file=sys.stderr)

    # ids, timeline, records
    pids = [f"p{int(x):012x}" for x in rng.integers(0, 2**48, N_REGISTERED)]
    assert len(set(pids)) == N_REGISTERED
    sids = [f"s{int(x):012x}" for x in rng.integers(0, 2**48, N_SESSIONS)]
    assert len(set(sids)) == N_SESSIONS
    t0 = dt.datetime(2026, 1, 24, 9, 0, tzinfo=dt.timezone.utc)
    records = []  # (time, order, record)
    order = 0

    def emit(t, rec):
        nonlocal order
        records.append((t, order, rec))
        order += 1

    def ts(t):
        return t.strftime("%Y-%m-%dT%H:%M:%S.") + f"{t.microsecond // 1000:03d}Z"

    active = set(rng.choice(N_REGISTERED, size=N_ACTIVE, replace=False).tolist())
    active_list = sorted(active)
    for j, pid in enumerate(pids):
        t = t0 + dt.timedelta(seconds=float(rng.uniform(0, 6.5 * 86400)))
        if j not in active:
            emit(t, {"type": "participant_registered", "participant_id": pid, "at": ts(t)})
            continue
        p = active_list.index(j)
        emit(t, {"type": "participant_registered", "participant_id": pid, "at": ts(t)})
        mine = np.where(owner == p)[0]
        for n, i in enumerate(mine):
            t += dt.timedelta(seconds=float(rng.uniform(20, 1800)))
            sent = pool[sentence_of[i]]
            text = sent["normalized_text"]
            budget = int(budgets[sentence_of[i]])
            emit(t, {"type": "session_started", "session_id": sids[i], "participant_id": pid,
                     "sentence_id": sent["id"], "prefix_len": ref.PREFIX, "budget": budget,
                     "at": ts(t)})
            if kind[i] == "abandoned_empty":
                ranks, trailing = [], int(n_guesses[i])
            else:
                ranks, trailing = result[i]
            cursor, seq = ref.PREFIX, 0
            symbols = list(ref.LETTERS + " ")

            def guess(sym, correct):
                nonlocal t, seq
                t += dt.timedelta(milliseconds=int(rng.integers(700, 6000)))
                emit(t, {"type": "guess", "session_id": sids[i], "position": cursor,
                         "guessed_symbol": sym, "correct": correct, "timestamp": ts(t),
                         "seq": seq})
                seq += 1

            for r in ranks:
                truth = text[cursor]
                wrong = rng.choice([c for c in symbols if c != truth], size=r - 1, replace=False)
                for w in wrong:
                    guess(str(w), False)
                guess(truth, True)
                cursor += 1
            if trailing:
                truth = text[cursor]
                for w in rng.choice([c for c in symbols if c != truth], size=trailing, replace=False):
                    guess(str(w), False)
            if kind[i] != "completed":
                last = n == len(mine) - 1
                if last and rng.random() < 0.4:
                    at = t + dt.timedelta(hours=24, seconds=float(rng.uniform(0, 60)))
                    reason = "timeout"
                else:
                    at = t + dt.timedelta(seconds=float(rng.uniform(1, 30)))
                    reason = "participant"
                emit(at, {"type": "session_abandoned", "session_id": sids[i],
                          "reason": reason, "at": ts(at)})
                t = max(t, at) if reason == "participant" else t

    records.sort(key=lambda x: (x[0], x[1]))
    with open(os.path.join(out_dir, "events.jsonl"), "w", encoding="utf-8") as f:
        for _, _, rec in records:
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")


if __name__ == "__main__":
    main(sys.argv[1])
