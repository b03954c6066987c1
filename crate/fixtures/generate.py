"""Builds the fixture benchmark, execution table and scripted answers.

Golds come from running and tracing the functions below, so every CCP,
EPP and PSP answer matches what the interpreter actually does.

    python3 fixtures/generate.py
"""
import ast
import json
import os
import sys

HERE = os.path.dirname(os.path.abspath(__file__))

FUNCTIONS = [
    ("def f(x):\n    y = x * 2\n    if y > 10:\n        y -= 3\n    return y", ["3", "8"]),
    ("def f(s):\n    out = ''\n    for ch in s:\n        if ch.isupper():\n            out += ch.lower()\n        else:\n            out += ch\n    return out", ["'aBc'", "'Xyz'"]),
    ("def f(nums):\n    total = 0\n    for n in nums:\n        if n % 2 == 0:\n            total += n\n    return total", ["[1, 2, 3, 4]", "[5, 7]"]),
    ("def f(a, b):\n    if a > b:\n        a, b = b, a\n    return list(range(a, b))", ["5, 2", "1, 4"]),
    ("def f(text):\n    words = text.split()\n    counts = {}\n    for w in words:\n        counts[w] = counts.get(w, 0) + 1\n    return counts", ["'a b a'", "'hi'"]),
    ("def f(n):\n    result = 1\n    while n > 1:\n        result *= n\n        n -= 1\n    return result", ["4", "3"]),
    ("def f(xs):\n    xs = sorted(xs)\n    mid = len(xs) // 2\n    return xs[mid]", ["[3, 1, 2]", "[9, 4, 7, 1]"]),
    ("def f(s, k):\n    k = k % len(s)\n    if k == 0:\n        return s\n    return s[k:] + s[:k]", ["'abcde', 2", "'abc', 3"]),
    ("def f(d):\n    keys = sorted(d)\n    vals = [d[k] for k in keys]\n    return tuple(vals)", ["{'b': 2, 'a': 1}", "{'z': 0}"]),
    ("def f(x):\n    label = 'pos'\n    if x < 0:\n        label = 'neg'\n    elif x == 0:\n        label = 'zero'\n    return label", ["-3", "0"]),
    ("def f(items):\n    seen = set()\n    out = []\n    for it in items:\n        if it not in seen:\n            seen.add(it)\n            out.append(it)\n    return out", ["[1, 2, 1, 3]", "['a', 'a']"]),
    ("def f(n):\n    bits = []\n    while n:\n        bits.append(n % 2)\n        n //= 2\n    return bits[::-1]", ["6", "1"]),
]

KINDS = ["CCP", "PSP", "EPP", "OP", "CRUX_I", "CRUX_O"]


def compile_f(src):
    env = {}
    exec(src, env)
    return env["f"]


def call(src, input_expr):
    return eval("__f(%s)" % input_expr, {"__f": compile_f(src)})


def trace(src, input_expr):
    """Line events of f as (line, locals-after-previous-line) pairs."""
    fn = compile_f(src)
    events = []

    def tracer(frame, event, arg):
        if frame.f_code is not fn.__code__:
            return None
        if event in ("line", "return"):
            events.append((event, frame.f_lineno, dict(frame.f_locals)))
        return tracer

    sys.settrace(tracer)
    try:
        eval("__f(%s)" % input_expr, {"__f": fn})
    finally:
        sys.settrace(None)
    return events


def line_text(src, n):
    return src.splitlines()[n - 1].strip()


def assigned_names(src):
    out = []
    for node in ast.walk(ast.parse(src)):
        if isinstance(node, (ast.Assign, ast.AugAssign)):
            targets = node.targets if isinstance(node, ast.Assign) else [node.target]
            for t in targets:
                for name in ast.walk(t):
                    if isinstance(name, ast.Name):
                        out.append((node.lineno, name.id))
    return sorted(set(out))


def ccp(i, src, inp):
    executed = {ln for ev, ln, _ in trace(src, inp) if ev == "line"}
    body = range(2, len(src.splitlines()) + 1)
    want = i % 2 == 0
    candidates = [n for n in body if (n in executed) == want] or list(body)
    n = candidates[len(candidates) // 2]
    q = "When f(%s) is called, is line %d (`%s`) executed?" % (inp, n, line_text(src, n))
    gold = "yes" if n in executed else "no"
    return q, gold, "no" if gold == "yes" else "yes"


def epp(i, src, inp):
    events = [e for e in trace(src, inp) if e[0] == "line"]
    pairs = [(a[1], b[1]) for a, b in zip(events, events[1:])]
    firsts = {}
    for a, b in pairs:
        firsts.setdefault(a, b)
    lines = sorted(firsts)
    n = lines[i % len(lines)]
    q = "f(%s) is paused at line %d (`%s`) the first time it reaches it. Which statement runs next?" % (
        inp, n, line_text(src, n))
    gold = line_text(src, firsts[n])
    others = [line_text(src, ln) for ln in sorted(set(firsts.values()) | {n}) if line_text(src, ln) != gold]
    return q, gold, others[0]


def psp(i, src, inp):
    events = trace(src, inp)
    candidates = []
    for ln, name in assigned_names(src):
        for k, (ev, line, _) in enumerate(events):
            if ev == "line" and line == ln and k + 1 < len(events):
                value = events[k + 1][2].get(name)
                candidates.append((ln, name, value))
                break
    ln, name, value = candidates[i % len(candidates)]
    q = "When f(%s) is called, what is the value of `%s` right after line %d (`%s`) runs for the first time?" % (
        inp, name, ln, line_text(src, ln))
    return q, repr(value), repr(wrong_value(value))


def wrong_value(v):
    if isinstance(v, bool):
        return not v
    if isinstance(v, int):
        return v + 1
    if isinstance(v, str):
        return v + "x"
    if isinstance(v, list):
        return v + [0]
    if isinstance(v, tuple):
        return v + (0,)
    if isinstance(v, dict):
        return dict(v, extra=0)
    if isinstance(v, set):
        return v | {0}
    return "wrong"


def op(i, src, inp):
    out = call(src, inp)
    q = "What does f(%s) return?" % inp
    return q, repr(out), repr(wrong_value(out))


def crux_o(i, src, inp):
    out = call(src, inp)
    return inp, repr(out), repr(wrong_value(out))


def crux_i(i, src, inp, others):
    target = call(src, inp)
    for cand in others:
        if cand == inp:
            continue
        try:
            if call(src, cand) != target:
                return repr(target), inp, cand
        except Exception:
            continue
    raise SystemExit("no wrong input for %r" % src)


def execution(src, inp):
    try:
        out = call(src, inp)
        return {"function_source": src, "input_expr": inp, "status": "PASS", "observed": repr(out), "detail": ""}
    except Exception as e:
        return {"function_source": src, "input_expr": inp, "status": "ERROR", "observed": None, "detail": type(e).__name__}


def main():
    points = []
    answers = {}
    executions = {}
    for kind_index, kind in enumerate(KINDS):
        for i, (src, inputs) in enumerate(FUNCTIONS):
            inp = inputs[(i + kind_index) % 2]
            if kind == "CCP":
                q, gold, wrong = ccp(i, src, inp)
            elif kind == "EPP":
                q, gold, wrong = epp(i, src, inp)
            elif kind == "PSP":
                try:
                    q, gold, wrong = psp(i, src, inp)
                except ZeroDivisionError:
                    inp = inputs[(i + kind_index + 1) % 2]
                    q, gold, wrong = psp(i, src, inp)
            elif kind == "OP":
                q, gold, wrong = op(i, src, inp)
            elif kind == "CRUX_O":
                q, gold, wrong = crux_o(i, src, inp)
                executions[(src, q)] = execution(src, q)
            else:
                q, gold, wrong = crux_i(i, src, inp, inputs + [s for _, ss in FUNCTIONS for s in ss])
                executions[(src, gold)] = execution(src, gold)
                executions[(src, wrong)] = execution(src, wrong)
            pid = "%s-%02d" % (kind.lower().replace("_", ""), i)
            points.append({"id": pid, "subtask": kind, "code": src, "question": q, "gold": gold})
            answers["%s/%s" % (kind, pid)] = {"right": gold, "wrong": wrong}

    with open(os.path.join(HERE, "benchmark.json"), "w") as fh:
        json.dump(points, fh, indent=1)
        fh.write("\n")
    with open(os.path.join(HERE, "answers.json"), "w") as fh:
        json.dump(answers, fh, indent=1, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(HERE, "executions.jsonl"), "w") as fh:
        for key in sorted(executions):
            fh.write(json.dumps(executions[key], sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
