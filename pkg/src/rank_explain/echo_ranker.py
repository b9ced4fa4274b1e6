"""Reference external ranker speaking the line-delimited JSON protocol.

Run as `python -m rank_explain.echo_ranker`. Intended as a test double and
as a template for wiring real rankers behind the external protocol.

Scoring behaviours (pick with --behaviour):
  index    score of document i is i + 1 (text mode) / row sum (tabular mode)
  overlap  count of query tokens present in each document
"""
from __future__ import annotations

import argparse
import json
import sys

from .core import tokenize


def _score(payload: dict, behaviour: str) -> list[float]:
    if payload.get("mode") == "tabular":
        return [float(sum(row)) for row in payload["features"]]
    docs = payload["documents"]
    if behaviour == "overlap":
        q = set(tokenize(payload.get("query", "")))
        return [float(sum(1 for t in tokenize(d["text"]) if t in q)) for d in docs]
    return [float(i + 1) for i in range(len(docs))]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--behaviour", choices=["index", "overlap"], default="index")
    args = parser.parse_args(argv)
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        payload = json.loads(line)
        reply = {"id": payload["id"], "scores": _score(payload, args.behaviour)}
        sys.stdout.write(json.dumps(reply, separators=(",", ":")) + "\n")
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
