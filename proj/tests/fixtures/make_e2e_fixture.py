#!/usr/bin/env python3
"""Regenerates the 50-query end-to-end fixture and its hand-derivable expectations.

Outputs (next to this script):
  e2e_queries.jsonl   QueryRecord JSONL
  e2e_llm.json        mock LLM script
  e2e_expected.json   vce_single metrics computed here, independently of the C++ code
"""
import json
import pathlib

HERE = pathlib.Path(__file__).resolve().parent
N = 50


def group(i):
    # (correct?, verbalized confidence or None)
    if i < 30:
        return True, 90
    if i < 35:
        return True, 80  # exactly at the 0.8 threshold: dropped by the strict filter
    if i < 40:
        return True, 70
    if i < 45:
        return False, 95
    if i < 48:
        return False, 60
    return True, None  # no confidence: filtered as unparseable for VCE


def logprobs(nll, tokens=4):
    # Equal split keeps the hand sum exact enough; the last token absorbs the remainder.
    part = round(nll / tokens, 6)
    lps = [-part] * (tokens - 1)
    lps.append(-round(nll - part * (tokens - 1), 6))
    return lps


def build():
    queries, scripts = [], []
    for i in range(N):
        tag = f"q{i:02d}"
        gold = f"city{i:02d}"
        queries.append({
            "id": tag,
            "dataset": "triviaqa",
            "question": f"[{tag}] Which city is listed as number {i}?",
            "gold_answers": [gold],
        })
        correct, conf = group(i)
        primary = gold if correct else f"wrong{i:02d}"
        nll = 0.2 + 0.01 * i if correct else 1.5 + 0.02 * i
        text = f"Answer: {primary}" + (f"\nConfidence: {conf}" if conf is not None else "")
        responses = [{"content": text, "logprobs": logprobs(nll)}]
        for k in range(1, 10):
            if correct:
                alt = gold if k < 8 else f"other city {i:02d}"
            else:
                alt = [f"maybe {i:02d}", primary, gold][k % 3]
            alt_conf = 85 if alt == primary else 40
            responses.append({
                "content": f"Answer: {alt}\nConfidence: {alt_conf}",
                "logprobs": logprobs(0.5 + 0.05 * k),
            })
        scripts.append({"match": f"[{tag}]", "responses": responses, "greedy": responses[0]})
    llm = {"scripts": scripts, "fallback": {"content": "Answer: unknown", "logprobs": [-5.0]}}
    return queries, llm


def vce_single_expectations():
    preds = []
    filtered = 0
    for i in range(N):
        correct, conf = group(i)
        if conf is None:
            filtered += 1
            continue
        preds.append((conf / 100.0, correct))
    n = len(preds)
    bins = {}
    for c, ok in preds:
        b = min(int(c * 10 + 1e-9), 9)
        bins.setdefault(b, []).append((c, ok))
    ece = 0.0
    for members in bins.values():
        acc = sum(ok for _, ok in members) / len(members)
        mc = sum(c for c, _ in members) / len(members)
        ece += len(members) / n * abs(acc - mc)
    kept = [(c, ok) for c, ok in preds if c > 0.8]
    pos = [c for c, ok in preds if ok]
    neg = [c for c, ok in preds if not ok]
    wins = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg)
    return {
        "method": "vce_single",
        "n_requested": N,
        "n_effective": n,
        "excluded": {"unparseable_confidence": filtered},
        "accuracy": sum(ok for _, ok in preds) / n,
        "avg_confidence": sum(c for c, _ in preds) / n,
        "ece": ece,
        "auroc": wins / (len(pos) * len(neg)),
        "threshold": 0.8,
        "kept": len(kept),
        "coverage": len(kept) / n,
        "filtered_accuracy": sum(ok for _, ok in kept) / len(kept),
    }


def main():
    queries, llm = build()
    with open(HERE / "e2e_queries.jsonl", "w") as f:
        for q in queries:
            f.write(json.dumps(q) + "\n")
    with open(HERE / "e2e_llm.json", "w") as f:
        json.dump(llm, f, indent=1)
        f.write("\n")
    with open(HERE / "e2e_expected.json", "w") as f:
        json.dump(vce_single_expectations(), f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
