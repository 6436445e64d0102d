"""Append-only JSON-lines metrics stream with line-atomic writes."""

from __future__ import annotations

import json


class MetricsWriter:
    def __init__(self, path: str):
        self.path = path
        self._fh = open(path, "a")

    def write(self, record: dict) -> None:
        line = json.dumps(record, sort_keys=True, separators=(",", ":"))
        self._fh.write(line + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_metrics(path: str) -> tuple[list[dict], int]:
    """Parse a metrics file; returns (records, skipped-line count)."""
    records: list[dict] = []
    skipped = 0
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError:
                skipped += 1
    return records, skipped
