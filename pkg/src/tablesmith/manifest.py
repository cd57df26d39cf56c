"""Line-delimited JSON run manifest.

Every per-document event (scan result, render outcome, drop, completion)
becomes one record, so corpus yield is auditable and interrupted runs can
resume. Appends are serialized through a single writer lock.
"""

import json
import threading
from pathlib import Path


class RunManifest:
    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def record(self, **fields) -> None:
        line = json.dumps(fields, sort_keys=True, ensure_ascii=False)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")

    def load(self) -> list[dict]:
        if not self.path.exists():
            return []
        records = []
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    records.append(json.loads(line))
        return records

    def completed_doc_ids(self, stage: str = "done") -> set[str]:
        """Documents that already finished ``stage`` with status ok."""
        return {r["doc_id"] for r in self.load()
                if r.get("stage") == stage and r.get("status") == "ok" and r.get("doc_id")}

    def drop_counts(self) -> dict[str, int]:
        """Dropped documents per stage, for the stats report.

        Tool-level "failed" records are telemetry; a document counts as
        dropped once per stage regardless of retries.
        """
        seen = set()
        counts: dict[str, int] = {}
        for r in self.load():
            if r.get("status") != "dropped":
                continue
            key = (r.get("doc_id"), r.get("stage", "unknown"))
            if key in seen:
                continue
            seen.add(key)
            counts[key[1]] = counts.get(key[1], 0) + 1
        return counts
