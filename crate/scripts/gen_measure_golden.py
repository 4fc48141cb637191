"""Writes the measure fixture (run + qrels) and its golden values.

Values come from pytrec_eval (a binding of trec_eval) and are checked
against a plain-Python evaluator before anything is written.

    pip install pytrec_eval_terrier
    python3 scripts/gen_measure_golden.py
"""

import math
import random
from pathlib import Path

import pytrec_eval

OUT = Path(__file__).resolve().parent.parent / "crates/core/tests/data/measures"
TOPICS = ["401", "402", "403"]
DOCS = [f"D{i:02d}" for i in range(1, 21)]
TREC_MEASURES = {"map", "ndcg", "ndcg_cut.10", "P.5", "P.10", "Rprec", "recip_rank"}
# trec_eval name -> name used by the Rust crate
NAMES = {
    "map": "ap",
    "ndcg": "ndcg",
    "ndcg_cut_10": "ndcg_cut_10",
    "P_5": "p_5",
    "P_10": "p_10",
    "Rprec": "rprec",
    "recip_rank": "recip_rank",
}


def build_fixture():
    rng = random.Random(20240917)
    qrels, run = {}, {}
    for t in TOPICS:
        judged = rng.sample(DOCS, 12)
        grades = {d: rng.choice([0, 0, 1, 1, 2]) for d in judged}
        if not any(grades.values()):
            grades[judged[0]] = 1
        qrels[t] = grades
        retrieved = rng.sample(DOCS, rng.randint(10, 16))
        # Distinct, strictly decreasing scores.
        run[t] = {d: round(30.0 - 1.37 * i - rng.random() * 0.5, 4) for i, d in enumerate(retrieved)}
    return qrels, run


def ranked(run_t):
    return [d for d, _ in sorted(run_t.items(), key=lambda kv: -kv[1])]


def brute(qrels_t, run_t):
    order = ranked(run_t)
    rel = {d for d, g in qrels_t.items() if g > 0}
    r = len(rel)
    hits, ap = 0, 0.0
    for i, d in enumerate(order, 1):
        if d in rel:
            hits += 1
            ap += hits / i
    ap /= r

    def dcg(gains):
        return sum(g / math.log2(i + 2) for i, g in enumerate(gains))

    gains = [qrels_t.get(d, 0) for d in order]
    ideal = sorted(qrels_t.values(), reverse=True)
    out = {
        "ap": ap,
        "ndcg": dcg(gains) / dcg(ideal),
        "ndcg_cut_10": dcg(gains[:10]) / dcg(ideal[:10]),
        "p_5": sum(d in rel for d in order[:5]) / 5,
        "p_10": sum(d in rel for d in order[:10]) / 10,
        "rprec": sum(d in rel for d in order[:r]) / r,
        "recip_rank": next((1 / i for i, d in enumerate(order, 1) if d in rel), 0.0),
    }
    return out


def main():
    qrels, run = build_fixture()
    evaluator = pytrec_eval.RelevanceEvaluator(qrels, TREC_MEASURES)
    results = evaluator.evaluate(run)

    lines = []
    for t in TOPICS:
        reference = brute(qrels[t], run[t])
        for trec_name, ours in NAMES.items():
            value = results[t][trec_name]
            assert abs(value - reference[ours]) < 1e-9, (t, ours, value, reference[ours])
            lines.append(f"{ours} {t} {value!r}")

    OUT.mkdir(parents=True, exist_ok=True)
    with open(OUT / "qrels.txt", "w") as f:
        for t in TOPICS:
            for d in sorted(qrels[t]):
                f.write(f"{t} 0 {d} {qrels[t][d]}\n")
    with open(OUT / "run.txt", "w") as f:
        for t in TOPICS:
            for rank, d in enumerate(ranked(run[t]), 1):
                f.write(f"{t} Q0 {d} {rank} {run[t][d]:.4f} fixture\n")
    with open(OUT / "golden.txt", "w") as f:
        f.write("# measure topic value (trec_eval via pytrec_eval)\n")
        f.write("\n".join(lines) + "\n")
    print(f"wrote {len(lines)} golden values to {OUT}")


if __name__ == "__main__":
    main()
