"""Protocol-conformant stand-in for the exec-grader, used by tests.

Runs tasks in-process without a sandbox. Flags:
  --protocol V   announce protocol V instead of "1"
  --exit-after N exit after answering N requests
  --wrong-ids    answer with an id that does not match the request
"""
import ast
import json
import signal
import sys

ALLOWED_IMPORTS = {"math", "collections", "itertools", "functools", "string", "re"}


class Timeout(Exception):
    pass


def on_alarm(signum, frame):
    raise Timeout()


def function_name(tree):
    defs = [n.name for n in tree.body if isinstance(n, ast.FunctionDef)]
    if len(defs) != 1:
        raise ValueError("expected exactly one top-level function")
    return defs[0]


def banned(tree):
    for node in ast.walk(tree):
        if isinstance(node, ast.Import):
            names = [a.name.split(".")[0] for a in node.names]
        elif isinstance(node, ast.ImportFrom):
            names = [(node.module or "").split(".")[0]]
        else:
            continue
        for name in names:
            if name not in ALLOWED_IMPORTS:
                return name
    return None


def evaluate(task):
    src = task["function_source"]
    try:
        tree = ast.parse(src)
        name = function_name(tree)
    except (SyntaxError, ValueError) as e:
        return "ERROR", None, type(e).__name__
    bad = banned(tree)
    if bad:
        return "UNSAFE_REJECTED", None, "import " + bad
    env = {}
    signal.signal(signal.SIGALRM, on_alarm)
    signal.setitimer(signal.ITIMER_REAL, float(task.get("cpu_timeout", 5)))
    try:
        exec(src, env)
        result = eval("__f(%s)" % task["input_expr"], {"__f": env[name]})
    except Timeout:
        return "TIMEOUT", None, ""
    except Exception as e:
        return "ERROR", None, type(e).__name__
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0)
    observed = repr(result)
    try:
        expected = ast.literal_eval(task["expected_output"])
    except Exception:
        return "FAIL", observed, "expected output is not a literal"
    return ("PASS" if result == expected else "FAIL"), observed, ""


def main(argv):
    protocol = "1"
    exit_after = None
    wrong_ids = False
    args = list(argv)
    while args:
        flag = args.pop(0)
        if flag == "--protocol":
            protocol = args.pop(0)
        elif flag == "--exit-after":
            exit_after = int(args.pop(0))
        elif flag == "--wrong-ids":
            wrong_ids = True
    print(json.dumps({"protocol": protocol}), flush=True)
    answered = 0
    for line in sys.stdin:
        if not line.strip():
            continue
        try:
            task = json.loads(line)
            rid = task.get("id")
        except ValueError:
            print(json.dumps({"id": None, "status": "ERROR", "observed": None, "detail": "malformed"}), flush=True)
            continue
        status, observed, detail = evaluate(task)
        if wrong_ids:
            rid = -1
        print(json.dumps({"id": rid, "status": status, "observed": observed, "detail": detail}), flush=True)
        answered += 1
        if exit_after is not None and answered >= exit_after:
            return


if __name__ == "__main__":
    main(sys.argv[1:])
