#!/usr/bin/env python3
"""Writes a synthetic review session whose counts follow the published
per-level tallies: 52 gold relations, 14 found by the model, 39 candidates
the experts accepted and 30 they declined.

Labels are placeholders; only membership and relation type matter for the
difficulty level, so each level gets its own concept pair pattern.
"""
import pathlib

HERE = pathlib.Path(__file__).resolve().parent.parent
OTHER = ["treats", "affects", "uses", "result-of", "contains", "manages",
         "disrupts", "complicates", "interacts-with", "prevents", "part-of"]

# level: (gold found, gold missed, accepted, declined)
PLAN = {1: (0, 10, 1, 11), 2: (1, 14, 10, 1), 3: (12, 5, 24, 14), 4: (1, 9, 4, 4)}

members, gold, extracted = set(), [], []
expected = {}
for level, (found, missed, accepted, declined) in PLAN.items():
    rows = []
    for k in range(found + missed + accepted + declined):
        s, o = f"level {level} subject {k:02d}", f"level {level} object {k:02d}"
        members.add(s)
        if level in (1, 3):
            members.add(o)
        rel = "is-a" if level in (1, 2) else OTHER[k % len(OTHER)]
        rows.append((s, rel, o))
    g_found, g_missed = rows[:found], rows[found:found + missed]
    acc = rows[found + missed:found + missed + accepted]
    dec = rows[found + missed + accepted:]
    for r in g_found:
        gold.append((*r, level, "Yes")); extracted.append((*r, "Yes", level))
    for r in g_missed:
        gold.append((*r, level, "No"))
    for r in acc:
        extracted.append((*r, "Yes", level))
    for r in dec:
        extracted.append((*r, "No", level))
    expected[f"level_{level}_tp"] = found + accepted
    expected[f"level_{level}_fn"] = missed
    expected[f"level_{level}_fp"] = declined

expected["overall_tp"] = sum(expected[f"level_{l}_tp"] for l in PLAN)
expected["overall_fn"] = sum(expected[f"level_{l}_fn"] for l in PLAN)
expected["overall_fp"] = sum(expected[f"level_{l}_fp"] for l in PLAN)
expected["gold_rows_initial"] = len(gold)
expected["gold_rows_extended"] = len(gold) + sum(p[2] for p in PLAN.values())
expected["candidates"] = sum(p[2] + p[3] for p in PLAN.values())
expected["accepted"] = sum(p[2] for p in PLAN.values())
expected["declined"] = sum(p[3] for p in PLAN.values())

(HERE / "session_gold.tsv").write_text(
    "concept_a\trelation\tconcept_b\tclassification\tin_gpt\n"
    + "".join("\t".join(map(str, r)) + "\n" for r in gold))
(HERE / "session_extracted.tsv").write_text(
    "subject\trelation\tobject\tin_gold\ttype\n"
    + "".join("\t".join(map(str, r)) + "\n" for r in extracted))
(HERE / "session_lexicon.tsv").write_text("".join(m + "\n" for m in sorted(members)))
(HERE / "session_expected.tsv").write_text(
    "key\tvalue\n" + "".join(f"{k}\t{v}\n" for k, v in expected.items()))
print(expected)
