from __future__ import annotations

from collections import deque
from contextlib import contextmanager
import time
from typing import Any, Deque, Dict, Iterator, List, Optional


class Telemetry:
    """Keeps the metrics of the last ``buffer_size`` runs of one process."""

    def __init__(self, buffer_size: int = 100):
        self._runs: Deque[Metrics] = deque(maxlen=buffer_size)

    def start(self, command: str) -> Metrics:
        metrics = Metrics().start(command)
        self._runs.append(metrics)
        return metrics

    def metrics(self) -> List[Metrics]:
        return list(self._runs)

    def last(self) -> Optional[Metrics]:
        return self._runs[-1] if self._runs else None


class Metrics:
    """Counters, attributes and solver timers of one command run.

    ``record()`` renders the run as

      {
        "operation": "exponent",
        "status": "ok",
        "startTime": 1712937515.393,
        "endTime": 1712937517.442,
        "duration": 2.049,
        "counters": {"grid.points": 297, "ok": 1, "solver.calls": 3},
        "attributes": {"channel": ["bsc011.json"], "method": ["oh", "ar", "dk"]},
        "timers": {"exponent": {"duration": 2.049, "laps": 1}, "solve.oh": {"duration": 0.512, "laps": 1}}
      }
    """

    def __init__(self):
        self.operation: Optional[str] = None
        self.status: Optional[str] = None
        self.start_time: Optional[float] = None
        self.end_time: Optional[float] = None
        self.duration: Optional[float] = None
        self.counters: Dict[str, int] = {}
        self.attributes: Dict[str, List[str]] = {}
        self.timers: Dict[str, Timer] = {}

    def start(self, operation: str) -> Metrics:
        self.operation = operation
        self.start_time = time.time()
        return self.start_timer(operation)

    def inc(self, counter: str, count: int = 1) -> Metrics:
        self.counters[counter] = self.counters.get(counter, 0) + count
        return self

    def append(self, key: str, value: str) -> Metrics:
        self.attributes.setdefault(key, []).append(value)
        return self

    def start_timer(self, name: str) -> Metrics:
        self.timers.setdefault(name, Timer(name)).start()
        return self

    def finish_timer(self, name: str) -> Metrics:
        if name not in self.timers:
            raise ValueError(f"Timer not started: {name}.")
        self.timers[name].finish()
        return self

    @contextmanager
    def timed(self, name: str) -> Iterator[Metrics]:
        """Time one solver call; repeated calls under the same name accumulate laps."""
        self.start_timer(name)
        try:
            yield self
        finally:
            self.finish_timer(name)

    def finish_ok(self):
        self.inc("ok")
        self.finish("ok")

    def finish_error(self, reason: str):
        self.inc("error")
        self.append("error.reason", reason)
        self.finish("error")

    def finish(self, status: str):
        self.status = status
        self.end_time = time.time()
        if self.start_time is None:
            self.start_time = self.end_time
        self.duration = self.end_time - self.start_time
        for timer in self.timers.values():
            timer.finish()

    def record(self) -> Dict[str, Any]:
        return {
            "operation": self.operation,
            "status": self.status,
            "startTime": self.start_time,
            "endTime": self.end_time,
            "duration": self.duration,
            "counters": dict(sorted(self.counters.items())),
            "attributes": dict(sorted(self.attributes.items())),
            "timers": {name: self.timers[name].record() for name in sorted(self.timers)},
        }

    def __repr__(self):
        return repr(self.record())


class Timer:
    def __init__(self, name: str):
        self.name = name
        self.duration = 0.0
        self.laps = 0
        self.last_start: Optional[float] = None

    def start(self):
        self.last_start = time.perf_counter()

    def finish(self):
        # idempotent: the closing sweep in Metrics.finish may hit stopped timers
        if self.last_start is None:
            return
        self.duration += time.perf_counter() - self.last_start
        self.laps += 1
        self.last_start = None

    def record(self) -> Dict[str, Any]:
        return {"duration": self.duration, "laps": self.laps}

    def __str__(self) -> str:
        return f"{self.name}:{self.duration:.3f}s/{self.laps}"
