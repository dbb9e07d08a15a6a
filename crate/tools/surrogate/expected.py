"""Writes expected.json for a surrogate fixture directory.

    python3 tools/surrogate/expected.py crates/apptool/tests/fixtures/surrogate
"""

import json
import os
import sys

import reference as ref


def main(d):
    manifest = json.load(open(os.path.join(d, "articles", "manifest.json"), encoding="utf-8"))
    articles = [(manifest[fn]["id"], open(os.path.join(d, "articles", fn), encoding="utf-8").read())
                for fn in sorted(manifest)]
    pool = ref.build_pool(articles)
    on_disk = [json.loads(l) for l in open(os.path.join(d, "pool.jsonl"), encoding="utf-8")]
    assert pool == on_disk, "pool.jsonl is stale"
    sessions, obs, st = ref.replay(os.path.join(d, "events.jsonl"), pool)
    a = ref.analyse(sessions, obs)
    expected = {
        "corpus": {"sentences": len(pool)},
        "stats": st,
        "analysis": {k: v for k, v in a.items() if k != "ranked_kept"},
        "retained_65": a["ranked_kept"][: a["trim_table"][8]["pool_size"]],
    }
    with open(os.path.join(d, "expected.json"), "w", encoding="utf-8") as f:
        json.dump(expected, f, ensure_ascii=False, indent=1)
        f.write("\n")
    print(json.dumps({k: v for k, v in expected["analysis"].items() if k not in ("trim_table", "discarded")}, indent=1))
    for r in a["trim_table"]:
        print(f'{r["trim_fraction"]:.2f} {r["pool_size"]:4d} {r["point_estimate"]:.4f} '
              f'{r["bootstrap_median"]:.4f} [{r["ci95"][0]:.4f}, {r["ci95"][1]:.4f}] {r["n_obs"]}')
    print(json.dumps(st))


if __name__ == "__main__":
    main(sys.argv[1])
