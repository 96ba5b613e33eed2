# Append-only training trace

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List

from core.utils.errors import StateError


@dataclass
class TrainTrace:
    """
    Records in append order. Step, checkpoint and event records each keep
    strictly increasing iterations. Wall times stay in memory only.
    """

    records: List[dict] = field(default_factory=list)
    wall_times: List[float] = field(default_factory=list)
    _last: Dict[str, int] = field(default_factory=dict)

    def _append(self, kind: str, iteration: int, wall_time: float, **values):
        last = self._last.get(kind)
        if last is not None and iteration <= last:
            raise StateError(f"{kind} record for iteration {iteration} after iteration {last}")
        self._last[kind] = iteration
        self.records.append({"kind": kind, "iteration": int(iteration), **values})
        self.wall_times.append(float(wall_time))

    def append_step(self, iteration, l1, l2, dsm_loss, wall_time=0.0):
        self._append("step", iteration, wall_time, l1=float(l1), l2=float(l2), score_loss=float(dsm_loss))

    def append_checkpoint(self, iteration, metric, mean, std, wall_time=0.0):
        self._append("checkpoint", iteration, wall_time, metric=metric, mean=float(mean), std=float(std))

    def append_event(self, iteration, event, message="", wall_time=0.0):
        self._append("event", iteration, wall_time, event=event, message=message)

    def __len__(self):
        return len(self.records)

    def steps(self):
        return [r for r in self.records if r["kind"] == "step"]

    def checkpoints(self):
        return [r for r in self.records if r["kind"] == "checkpoint"]

    def events(self):
        return [r for r in self.records if r["kind"] == "event"]

    def running_minimum(self):
        """Running minimum of checkpoint means, in checkpoint order."""
        out, best = [], float("inf")
        for record in self.checkpoints():
            best = min(best, record["mean"])
            out.append(best)
        return out

    def to_jsonl(self, path) -> Path:
        path = Path(path)
        with path.open("w") as handle:
            for record in self.records:
                handle.write(json.dumps(record, sort_keys=False) + "\n")
        return path
