"""Writes a run store whose single group has ECE 0.066, BS 0.032, PS 0.086.

One incorrect answer at confidence 0.96, twelve correct at 1.00 and
eighteen correct at 0.94.

    python3 fixtures/golden_report/generate.py
"""
import json
import os
from fractions import Fraction

HERE = os.path.dirname(os.path.abspath(__file__))

GROUP = [(Fraction(96, 100), 0)] + [(Fraction(1), 1)] * 12 + [(Fraction(94, 100), 1)] * 18


def oracle(rows):
    n = len(rows)
    ece = sum(abs(d - p) for p, d in rows) / n
    bs = sum((d - p) ** 2 for p, d in rows) / n
    p_bar = sum(p for p, _ in rows) / n
    b0 = p_bar * (1 - p_bar)
    return ece, bs, (b0 - bs) / b0


def record(i, p, d):
    point = {"benchmark": "golden", "subtask": "CCP", "id": f"g{i:02d}"}
    return {
        "record_id": f"golden/CCP/g{i:02d}/intrinsic",
        "model": "golden-model",
        "strategy": "intrinsic",
        "point": point,
        "raw_response": json.dumps({"answer": True, "confidence": int(p * 100)}),
        "parsed_answer": "true",
        "confidence": float(p),
        "delta": d,
        "parse_status": "OK",
        "grade_method": "NORMALIZED",
        "reasked": False,
        "responded_at": "2026-01-01T00:00:00.000Z",
    }


def main():
    ece, bs, ps = oracle(GROUP)
    assert (round(float(ece), 3), round(float(bs), 3), round(float(ps), 3)) == (0.066, 0.032, 0.086)
    header = {
        "schema_version": "1",
        "run_id": "golden",
        "config": {
            "benchmarks": ["golden.json"],
            "model": "golden-model",
            "api_key_env": "OPENAI_API_KEY",
            "strategies": ["intrinsic"],
            "temperature": 0.0,
            "seed": 0,
            "mode": "replay",
            "cassette": "golden.jsonl",
            "workers": 1,
            "prompt_version": "v1",
        },
        "provenance": {"benchmark_digests": {}, "grading_table_version": "1"},
    }
    with open(os.path.join(HERE, "run.jsonl"), "w") as out:
        out.write(json.dumps(header, separators=(",", ":")) + "\n")
        for i, (p, d) in enumerate(GROUP):
            out.write(json.dumps(record(i, p, d), separators=(",", ":")) + "\n")
    print(f"ece={float(ece):.6f} brier={float(bs):.6f} ps={float(ps):.6f}")


if __name__ == "__main__":
    main()
