"""Independent reference implementation of the analysis pipeline.

Reads the surrogate articles and event log and computes the values the
acceptance suite checks. Written from the method description only; it
shares no code with the Rust crates.
"""

import json
import math
import re
import unicodedata
from collections import defaultdict

import numpy as np
from scipy import stats

LETTERS = "АБВГҐДЕЄЖЗИІЇЙКЛМНОПРСТУФХЦЧШЩЬЮЯ"
K = len(LETTERS) + 1
PREFIX = 70
WINDOW = (70, 110)
ALPHA = 0.01
TABLE_TRIMS = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.55, 0.6, 0.65, 0.7, 0.8, 0.9]


# corpus

def split_sentences(text):
    return [p.strip() for p in re.split(r"[.!?]", text) if p.strip()]


def script_ok(s):
    return not re.search(r"[A-Za-z0-9]", s)


def normalize(s):
    s = unicodedata.normalize("NFC", s).upper()
    out = []
    pending = False
    for c in s:
        if c in LETTERS:
            if pending and out:
                out.append(" ")
            pending = False
            out.append(c)
        else:
            pending = True
    return "".join(out)


def build_pool(articles, lo=120, hi=200):
    """articles: list of (article_id, text) in manifest filename order."""
    pool = []
    for art_id, text in articles:
        for i, raw in enumerate(split_sentences(text)):
            if not script_ok(raw):
                continue
            norm = normalize(raw)
            if lo <= len(norm) <= hi:
                pool.append({
                    "id": f"{art_id}-{i:03}",
                    "normalized_text": norm,
                    "raw_text": raw,
                    "length": len(norm),
                    "source_article": art_id,
                })
    return pool


# log replay

def replay(events_path, pool):
    text = {s["id"]: s["normalized_text"] for s in pool}
    sessions = {}
    participants = set()
    obs = []
    for line in open(events_path, encoding="utf-8"):
        r = json.loads(line)
        t = r["type"]
        if t == "participant_registered":
            participants.add(r["participant_id"])
        elif t == "session_started":
            sessions[r["session_id"]] = {
                "text": text[r["sentence_id"]],
                "budget": r["budget"],
                "cursor": r["prefix_len"],
                "tries": 0,
                "guesses": 0,
                "correct": 0,
                "status": "active",
            }
        elif t == "guess":
            s = sessions[r["session_id"]]
            assert s["status"] == "active"
            assert r["position"] == s["cursor"]
            hit = s["text"][s["cursor"]] == r["guessed_symbol"]
            assert hit == r["correct"]
            s["tries"] += 1
            s["guesses"] += 1
            s["budget"] -= 1
            if hit:
                obs.append((r["session_id"], s["cursor"], s["tries"]))
                s["cursor"] += 1
                s["tries"] = 0
                s["correct"] += 1
            if s["budget"] == 0 or s["cursor"] == len(s["text"]):
                s["status"] = "completed"
        elif t == "session_abandoned":
            sessions[r["session_id"]]["status"] = "abandoned"
    stats_ = {
        "participants": len(participants),
        "sessions_started": len(sessions),
        "sessions_completed": sum(s["status"] == "completed" for s in sessions.values()),
        "sessions_abandoned": sum(s["status"] == "abandoned" for s in sessions.values()),
        "total_guesses": sum(s["guesses"] for s in sessions.values()),
        "correct_guesses": sum(s["correct"] for s in sessions.values()),
        "observations": len(obs),
    }
    return sessions, obs, stats_


# estimator

def entropy_of_counts(counts):
    n = 0
    for c in counts:
        n += c
    h = 0.0
    for c in counts:
        if c > 0:
            p = c / n
            h += -p * math.log2(p)
    return max(h, 0.0)


def lower_of_counts(counts):
    n = sum(counts)
    h = 0.0
    for i, c in enumerate(counts):
        if i >= 1 and c > 0:
            h += (c / n) * math.log2(i + 1)
    return h


def window_table(session_obs, ids):
    lo, hi = WINDOW
    table = np.zeros((hi - lo + 1, K), dtype=np.int64)
    for sid in ids:
        for pos, a in session_obs[sid]:
            if lo <= pos <= hi:
                table[pos - lo, a - 1] += 1
    return table


def pooled(table):
    n_pos = table.sum(axis=1)
    total = int(n_pos.sum())
    hu = hl = 0.0
    for row, n in zip(table, n_pos):
        if n == 0:
            continue
        w = n / total
        hu += w * entropy_of_counts(row.tolist())
        hl += w * lower_of_counts(row.tolist())
    return hu, hl, total


def pooled_upper_fast(table):
    """Vectorized upper bound for bootstrap replicates."""
    n = table.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(table > 0, table / np.maximum(n, 1), 1.0)
        h = -(np.where(table > 0, p * np.log2(p), 0.0)).sum(axis=-1)
    n = n[..., 0]
    return (n * h).sum(axis=-1) / n.sum(axis=-1)


# robustness

def retained(n, f):
    return min(n, max(0, math.ceil((1 - f) * n - 1e-9)))


def analyse(sessions, obs, replicates=20000, seed=12345):
    session_obs = defaultdict(list)
    for sid, pos, a in obs:
        session_obs[sid].append((pos, a))
    ids = sorted(session_obs)
    summary = {}
    for sid in ids:
        counts = [0] * K
        for _, a in session_obs[sid]:
            counts[a - 1] += 1
        summary[sid] = {
            "score": entropy_of_counts(counts),
            "total": sessions[sid]["guesses"],
            "correct": sessions[sid]["correct"],
        }
    tot = sum(summary[s]["total"] for s in ids)
    cor = sum(summary[s]["correct"] for s in ids)
    p = cor / tot
    discarded = [s for s in ids
                 if stats.binom.sf(summary[s]["correct"] - 1, summary[s]["total"], p) < ALPHA]
    kept = [s for s in ids if s not in set(discarded)]
    ranked = sorted(kept, key=lambda s: (summary[s]["score"], -summary[s]["total"], s))

    # per-session cell tables; a replicate is a multinomial weighting
    flat = {s: window_table(session_obs, [s]).ravel() for s in ranked}
    rng = np.random.default_rng(seed)

    rows = []
    for f in TABLE_TRIMS:
        pool = ranked[:retained(len(ranked), f)]
        hu, hl, n = pooled(window_table(session_obs, pool))
        stack = np.stack([flat[s] for s in pool]).astype(np.float64)
        reps = replicates if f == 0.65 else 2000
        ests = np.empty(reps)
        for b0 in range(0, reps, 1000):
            b1 = min(reps, b0 + 1000)
            draw = rng.integers(0, len(pool), size=(b1 - b0, len(pool)))
            weights = np.zeros((b1 - b0, len(pool)))
            np.add.at(weights, (np.arange(b1 - b0)[:, None], draw), 1.0)
            tables = (weights @ stack).reshape(b1 - b0, WINDOW[1] - WINDOW[0] + 1, K)
            ests[b0:b1] = pooled_upper_fast(tables)
        lo, med, hi = np.percentile(ests, [2.5, 50, 97.5])
        rows.append({
            "trim_fraction": f,
            "pool_size": len(pool),
            "point_estimate": hu,
            "point_lower": hl,
            "n_obs": n,
            "bootstrap_median": med,
            "ci95": [lo, hi],
            "ci_width": hi - lo,
        })
    main = next(r for r in rows if r["trim_fraction"] == 0.65)
    return {
        "sessions_analysed": len(ids),
        "mean_accuracy": p,
        "discarded": discarded,
        "after_filter": len(kept),
        "h_upper": main["point_estimate"],
        "h_lower": main["point_lower"],
        "n_obs": main["n_obs"],
        "redundancy": 1 - main["point_estimate"] / math.log2(K),
        "ci95": main["ci95"],
        "ci_width": main["ci_width"],
        "trim_table": rows,
        "ranked_kept": ranked,
    }
