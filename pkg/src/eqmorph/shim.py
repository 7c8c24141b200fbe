"""Line-protocol server exposing the reference engine as a child process.

    python -m eqmorph.shim [--fault NAME]

Reads one JSON request per stdin line and answers one JSON response per
line; see adapter.py for the message shapes.  Used to exercise the
external-endpoint plumbing end to end.
"""

from __future__ import annotations

import argparse
import json
import sys

from .parser import parse
from .refdb import ExecError, Executor, ScriptError, UnknownFault, \
    load_script
from .sqlast import SqlSyntaxError


def handle(executor: Executor, state: dict, req: dict) -> dict:
    rid = req.get("id")
    op = req.get("op")
    sql = req.get("sql", "")
    try:
        if op == "reset":
            state["db"] = load_script(sql)
            return {"id": rid, "ok": True, "rows": []}
        if op == "exec":
            q = parse(sql)
            rel = executor.execute(state.get("db", {}), q)
            rows = [list(r) for r in executor.rendered_rows(rel, q)]
            return {"id": rid, "ok": True, "rows": rows}
        return {"id": rid, "ok": False, "code": "PROTOCOL",
                "message": f"unknown op {op!r}"}
    except SqlSyntaxError as e:
        return {"id": rid, "ok": False, "code": "SYNTAX", "message": str(e)}
    except ScriptError as e:
        return {"id": rid, "ok": False, "code": "SCRIPT", "message": str(e)}
    except ExecError as e:
        return {"id": rid, "ok": False, "code": e.code, "message": e.message}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="eqmorph-shim")
    ap.add_argument("--fault", default=None,
                    help="enable a named engine fault")
    args = ap.parse_args(argv)
    try:
        executor = Executor(args.fault)
    except UnknownFault as e:
        print(str(e), file=sys.stderr)
        return 1
    state: dict = {}
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
        except json.JSONDecodeError as e:
            resp = {"id": None, "ok": False, "code": "PROTOCOL",
                    "message": f"bad request line: {e}"}
        else:
            resp = handle(executor, state, req)
        sys.stdout.write(json.dumps(resp) + "\n")
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
