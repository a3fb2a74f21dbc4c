#!/usr/bin/env python3
"""Minimal external tagging backend speaking protocol version 1 over stdio.

Answers the handshake with the exact local tagset for the requested mode and
tags every token O. Start it through the CLI:

    avdkit predict --in tasks.jsonl --backend-cmd "python scripts/stub_backend.py" --tag-mode Base7

Replace the `tag` function to plug in a real model from any ecosystem.
"""

import json
import sys

from avdkit.labels import TagMode, tagset


def tag(tokens: list[str]) -> list[str]:
    return ["O"] * len(tokens)


def main() -> None:
    handshake = json.loads(sys.stdin.readline())
    mode = TagMode(handshake["tag_mode"])
    print(
        json.dumps(
            {
                "protocol_version": "1",
                "tag_mode": mode.value,
                "tagset": list(tagset(mode)),
            }
        ),
        flush=True,
    )
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        request = json.loads(line)
        if request.get("op") == "tag":
            print(json.dumps({"tags": tag(request["tokens"])}), flush=True)


if __name__ == "__main__":
    main()
