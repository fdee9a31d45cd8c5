"""Stand-in for an external planner backend: reads one request frame on stdin and answers by mode."""

from __future__ import annotations

import json
import sys

VALID = {
    "nodes": [
        {"id": "n000", "action": "open_close", "params": {"object": "cab", "state": "open"}, "req_skills": ["MoveStep", "Open"], "r_pref": None},
        {"id": "n001", "action": "fetch_and_place", "params": {"object": "apple", "receptacle": "fridge"}, "req_skills": ["MoveStep", "Pickup", "Put"], "r_pref": None},
    ],
    "edges": [["n000", "n001"]],
    "usage": {"prompt_tokens": 900, "completion_tokens": 100},
}

CYCLIC = {
    "nodes": VALID["nodes"],
    "edges": [["n000", "n001"], ["n001", "n000"]],
}


def main() -> int:
    mode = sys.argv[1]
    request = json.loads(sys.stdin.readline())
    assert {"task", "goal", "state", "fleet", "schema", "max_nodes"} <= set(request)
    if mode == "valid":
        print(json.dumps(VALID))
    elif mode == "cyclic":
        print(json.dumps(CYCLIC))
    elif mode == "malformed":
        print('{"nodes": [{"id": "n000"}]')
    elif mode == "down":
        print("connection refused", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
