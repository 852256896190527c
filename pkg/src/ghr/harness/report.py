"""Latency aggregation for load runs."""
from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class RequestSample:
    """One completed request as observed by the simulated client."""

    user: int
    role: str
    action: str
    send_t: float
    complete_t: float
    ok: bool
    error: str = ""

    @property
    def latency_s(self) -> float:
        return self.complete_t - self.send_t


@dataclass
class ActionStats:
    count: int
    avg_ms: float
    median_ms: float
    p95_ms: float
    max_ms: float

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "avg_ms": round(self.avg_ms, 3),
            "median_ms": round(self.median_ms, 3),
            "p95_ms": round(self.p95_ms, 3),
            "max_ms": round(self.max_ms, 3),
        }


@dataclass
class AggregateReport:
    overall: ActionStats
    per_action: dict[str, ActionStats]
    throughput_rps: float
    duration_s: float
    errors: int
    buckets: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "overall": self.overall.to_dict(),
            "per_action": {name: stats.to_dict() for name, stats in sorted(self.per_action.items())},
            "throughput_rps": round(self.throughput_rps, 3),
            "duration_s": round(self.duration_s, 3),
            "errors": self.errors,
            "buckets": self.buckets,
        }


def percentile(ordered: list[float], fraction: float) -> float:
    """Nearest-rank percentile over an already sorted series."""
    if not ordered:
        return 0.0
    rank = min(len(ordered) - 1, max(0, int(round(fraction * (len(ordered) - 1)))))
    return ordered[rank]


def _stats(latencies_ms: list[float]) -> ActionStats:
    ordered = sorted(latencies_ms)
    if not ordered:
        return ActionStats(0, 0.0, 0.0, 0.0, 0.0)
    return ActionStats(
        count=len(ordered),
        avg_ms=sum(ordered) / len(ordered),
        median_ms=percentile(ordered, 0.5),
        p95_ms=percentile(ordered, 0.95),
        max_ms=ordered[-1],
    )


def build_report(samples: list[RequestSample], bucket_count: int = 12) -> AggregateReport:
    """Roll request samples up into per-action and time-bucketed views."""
    if not samples:
        return AggregateReport(_stats([]), {}, 0.0, 0.0, 0)
    by_action: dict[str, list[float]] = {}
    all_ms: list[float] = []
    errors = 0
    start = min(s.send_t for s in samples)
    finish = max(s.complete_t for s in samples)
    for sample in samples:
        ms = sample.latency_s * 1000.0
        all_ms.append(ms)
        by_action.setdefault(sample.action, []).append(ms)
        if not sample.ok:
            errors += 1
    duration = max(finish - start, 1e-9)

    width = duration / max(1, bucket_count)
    buckets = []
    grouped: dict[int, list[float]] = {}
    for sample in samples:
        slot = min(bucket_count - 1, int((sample.complete_t - start) / width))
        grouped.setdefault(slot, []).append(sample.latency_s * 1000.0)
    for slot in range(bucket_count):
        values = grouped.get(slot, [])
        buckets.append(
            {
                "t0_s": round(slot * width, 3),
                "t1_s": round((slot + 1) * width, 3),
                "count": len(values),
                "avg_ms": round(sum(values) / len(values), 3) if values else 0.0,
            }
        )

    return AggregateReport(
        overall=_stats(all_ms),
        per_action={name: _stats(vals) for name, vals in by_action.items()},
        throughput_rps=len(samples) / duration,
        duration_s=duration,
        errors=errors,
        buckets=buckets,
    )


def warmup_curve(samples: list[RequestSample]) -> dict:
    """Compare latency spread at the start and end of a run.

    Cold starts make early requests slow and erratic; once every code
    path has warmed the spread settles.  Returns the latency variance of
    the first and final quartiles of samples in completion order.
    """
    ordered = sorted(samples, key=lambda s: s.complete_t)
    quarter = max(1, len(ordered) // 4)
    head = [s.latency_s * 1000.0 for s in ordered[:quarter]]
    tail = [s.latency_s * 1000.0 for s in ordered[-quarter:]]

    def variance(values: list[float]) -> float:
        if len(values) < 2:
            return 0.0
        mean = sum(values) / len(values)
        return sum((v - mean) ** 2 for v in values) / (len(values) - 1)

    first = variance(head)
    last = variance(tail)
    return {"first_quartile_var": first, "final_quartile_var": last, "settled": last < first}


def render_text(report: AggregateReport) -> str:
    lines = [
        f"requests {report.overall.count}  errors {report.errors}  "
        f"duration {report.duration_s:.1f}s  throughput {report.throughput_rps:.1f}/s",
        f"overall  avg {report.overall.avg_ms:.2f}ms  median {report.overall.median_ms:.2f}ms  "
        f"p95 {report.overall.p95_ms:.2f}ms  max {report.overall.max_ms:.2f}ms",
        "",
        f"{'action':<18}{'count':>7}{'avg':>9}{'median':>9}{'p95':>9}{'max':>9}",
    ]
    for name, stats in sorted(report.per_action.items()):
        lines.append(
            f"{name:<18}{stats.count:>7}{stats.avg_ms:>9.2f}{stats.median_ms:>9.2f}"
            f"{stats.p95_ms:>9.2f}{stats.max_ms:>9.2f}"
        )
    if report.buckets:
        lines.append("")
        lines.append(f"{'window':<18}{'count':>7}{'avg':>9}")
        for bucket in report.buckets:
            window = f"{bucket['t0_s']:.0f}-{bucket['t1_s']:.0f}s"
            lines.append(f"{window:<18}{bucket['count']:>7}{bucket['avg_ms']:>9.2f}")
    return "\n".join(lines)
