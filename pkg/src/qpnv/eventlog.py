"""Append-only structured event log and the summary report derived from it.

Records are plain dicts with stable field names, serialized as one JSON
object per line (sorted keys), so two runs of the same seeded scenario
produce byte-identical logs and external tools can diff them. The summary
report is a pure function of the log: replaying a log file rebuilds the
identical report without re-simulating any quantum state.

Detail levels: "full" keeps every record including per-message network
traffic; "summary" keeps only protocol-level records (tallies, blocks,
verdicts, elections, detections), which bulk statistical runs use to keep
logs small.
"""

from __future__ import annotations

import enum
import json
from typing import Any

import numpy as np


def _jsonable(value: Any):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, bytes):
        return value.hex()
    return value


class EventLog:
    def __init__(self, detail: str = "full"):
        if detail not in ("full", "summary"):
            raise ValueError(f"unknown log detail {detail!r}")
        self.detail = detail
        self.entries: list[dict] = []
        self.time = 0

    def tick(self):
        self.time += 1

    def emit(self, kind: str, actor: str, *, level: str = "full", **payload):
        if level == "full" and self.detail == "summary":
            return
        self.entries.append(
            {"time": self.time, "kind": kind, "actor": actor, "payload": _jsonable(payload)}
        )

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps(e, sort_keys=True, separators=(",", ":")) + "\n" for e in self.entries
        )

    def write_jsonl(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_jsonl())


def parse_jsonl(text: str) -> list[dict]:
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def build_report(entries: list[dict]) -> dict:
    """Pure fold of an event stream into the scenario summary report."""
    meta: dict = {}
    tallies = []
    blocks = {"ordinary": 0, "special": 0, "rejected": 0}
    chain: dict[str, dict] = {}
    qrng = {"issued": 0, "verified": 0, "flagged": 0}
    elections = []
    aborts = 0
    trials = {"count": 0, "detected": 0}
    adversary = []
    extra: dict = {}
    for e in entries:
        kind = e["kind"]
        p = e.get("payload", {})
        if kind == "scenario.start":
            meta = dict(p)
        elif kind == "session.tally":
            tallies.append(
                {
                    "context": p.get("context", "standalone"),
                    "row_sums": p["row_sums"],
                    "counts": p["counts"],
                    "accepted": p["accepted"],
                }
            )
        elif kind == "block.finalized":
            key = "special" if p.get("block_kind") == "special" else "ordinary"
            blocks[key] += 1
        elif kind == "block.rejected":
            blocks["rejected"] += 1
        elif kind == "chain.verify":
            chain[e["actor"]] = {"fidelity": p["fidelity"], "ok": p["ok"]}
        elif kind == "qrng.issue":
            qrng["issued"] += 1
        elif kind == "qrng.verify":
            qrng["verified" if p["ok"] else "flagged"] += 1
        elif kind == "election.result":
            elections.append({"ranking": p["ranking"], "winners": p["winners"]})
        elif kind == "session.abort":
            aborts += 1
        elif kind == "trial.result":
            trials["count"] += 1
            trials["detected"] += 1 if p.get("detected") else 0
        elif kind == "adversary.action":
            adversary.append({"action": p.get("action"), "cycle": p.get("cycle")})
        elif kind == "scenario.stat":
            extra[p["name"]] = p["value"]
    return {
        "scenario": meta,
        "tallies": tallies,
        "blocks": blocks,
        "chain": chain,
        "qrng": qrng,
        "elections": elections,
        "aborts": aborts,
        "trials": trials,
        "adversary": adversary,
        "stats": extra,
    }
