"""Counters, histograms and gauges for task runs and solver progress.

Solvers run in worker threads, so every update goes through one lock.
"""

import bisect
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Deque, Dict, List, Optional

import numpy as np

ITERATION_BUCKETS = [1, 2, 3, 5, 8, 13, 21, 50, 100, 500, 2000]
DURATION_BUCKETS = [0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0, 30.0, 60.0, 300.0]
MAX_SAMPLES = 10_000


@dataclass
class Counter:
    name: str
    description: str
    value: float = 0.0

    def inc(self, value: float = 1.0) -> None:
        if value < 0:
            raise ValueError(f"counter {self.name} cannot decrease (got {value})")
        self.value += value


@dataclass
class Histogram:
    """Exact count, sum and bucket counts; percentiles over the last ``max_samples``."""

    name: str
    description: str
    buckets: List[float] = field(default_factory=lambda: list(DURATION_BUCKETS))
    max_samples: int = MAX_SAMPLES
    values: Deque[float] = field(init=False)
    count: int = field(init=False, default=0)
    total: float = field(init=False, default=0.0)
    _bins: List[int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.values = deque(maxlen=self.max_samples)
        self._bins = [0] * (len(self.buckets) + 1)

    def observe(self, value: float) -> None:
        value = float(value)
        self.values.append(value)
        self.count += 1
        self.total += value
        edges = [*self.buckets, float("inf")]
        index = min(bisect.bisect_left(edges, value), len(edges) - 1)
        self._bins[index] += 1

    def percentile(self, q: float) -> Optional[float]:
        if not 0 <= q <= 100:
            raise ValueError(f"percentile must lie in [0, 100], got {q}")
        if not self.values:
            return None
        return float(np.percentile(list(self.values), q))

    def bucket_counts(self) -> Dict[float, int]:
        edges = [*self.buckets, float("inf")]
        return dict(zip(edges, self._bins))

    def clear(self) -> None:
        self.values.clear()
        self.count = 0
        self.total = 0.0
        self._bins = [0] * (len(self.buckets) + 1)


@dataclass
class Gauge:
    name: str
    description: str
    value: float = 0.0

    def set(self, value: float) -> None:
        self.value = value


class MetricsCollector:
    """Process-wide registry of run metrics."""

    def __init__(self) -> None:
        self._counters: Dict[str, Counter] = {}
        self._histograms: Dict[str, Histogram] = {}
        self._gauges: Dict[str, Gauge] = {}
        self._lock = threading.Lock()
        self._init_standard_metrics()

    def _init_standard_metrics(self) -> None:
        self.register_counter("commands_sent_total", "Commands sent to the bus")
        self.register_counter("commands_processed_total", "Commands that succeeded")
        self.register_counter("commands_failed_total", "Commands that failed")
        self.register_counter("events_published_total", "Events published")
        self.register_counter(
            "path_states_accepted_total", "Continuation states accepted"
        )
        self.register_counter(
            "path_steps_rejected_total", "Continuation steps rejected and retried"
        )
        self.register_histogram("task_duration_seconds", "Wall time per task")
        self.register_histogram(
            "newton_iterations", "Newton iterations per accepted state", ITERATION_BUCKETS
        )
        self.register_histogram(
            "descent_iterations", "Descent steps per quotient minimization", ITERATION_BUCKETS
        )
        self.register_gauge("path_lambda", "Lambda of the latest accepted state")

    def register_counter(self, name: str, description: str) -> Counter:
        return self._counters.setdefault(name, Counter(name, description))

    def register_histogram(
        self, name: str, description: str, buckets: Optional[List[float]] = None
    ) -> Histogram:
        if buckets:
            histogram = Histogram(name, description, [float(b) for b in buckets])
        else:
            histogram = Histogram(name, description)
        return self._histograms.setdefault(name, histogram)

    def register_gauge(self, name: str, description: str) -> Gauge:
        return self._gauges.setdefault(name, Gauge(name, description))

    def inc_counter(self, name: str, value: float = 1.0) -> None:
        with self._lock:
            if name in self._counters:
                self._counters[name].inc(value)

    def observe_histogram(self, name: str, value: float) -> None:
        with self._lock:
            if name in self._histograms:
                self._histograms[name].observe(value)

    def set_gauge(self, name: str, value: float) -> None:
        with self._lock:
            if name in self._gauges:
                self._gauges[name].set(value)

    def snapshot(self) -> Dict[str, Any]:
        with self._lock:
            return {
                "counters": {n: c.value for n, c in self._counters.items()},
                "histograms": {
                    n: {
                        "count": h.count,
                        "sum": h.total,
                        "p50": h.percentile(50),
                        "p95": h.percentile(95),
                    }
                    for n, h in self._histograms.items()
                },
                "gauges": {n: g.value for n, g in self._gauges.items()},
            }

    def reset(self) -> None:
        with self._lock:
            for counter in self._counters.values():
                counter.value = 0.0
            for histogram in self._histograms.values():
                histogram.clear()
            for gauge in self._gauges.values():
                gauge.value = 0.0


class Timer:
    """Context manager recording the elapsed wall time into a histogram."""

    def __init__(self, collector: MetricsCollector, metric_name: str):
        self.collector = collector
        self.metric_name = metric_name
        self.start_time: Optional[float] = None
        self.elapsed = 0.0

    def __enter__(self) -> "Timer":
        self.start_time = time.perf_counter()
        return self

    def __exit__(self, *exc: Any) -> None:
        if self.start_time is not None:
            self.elapsed = time.perf_counter() - self.start_time
            self.collector.observe_histogram(self.metric_name, self.elapsed)


_metrics_collector: Optional[MetricsCollector] = None


def get_metrics_collector() -> MetricsCollector:
    global _metrics_collector
    if _metrics_collector is None:
        _metrics_collector = MetricsCollector()
    return _metrics_collector


def reset_metrics_collector() -> None:
    if _metrics_collector is not None:
        _metrics_collector.reset()
