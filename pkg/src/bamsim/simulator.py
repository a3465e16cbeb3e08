"""Discrete-event driver over the allocation engine.

Replays a scenario's timed arrivals and departures against per-link
ledgers, invokes the configuration manager exactly once per exhaustion
denial (retrying the denied request once after the reconfiguration), and
produces a deterministic tab-separated trace plus aggregate metrics.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

from . import engine
from .engine import (
    Admission,
    AllocationLedger,
    BamPolicy,
    Denial,
    Grant,
    Request,
    ResourceClass,
)
from .manager import ManagerAction, RunCounts, StaticManager, apply_action, legal_actions
from .scenario import ARRIVE, DEPART, Scenario, ScenarioEvent, generate_workload

KIND_ARRIVAL = "arrival"
KIND_GRANT = "grant"
KIND_DENIAL = "denial"
KIND_PREEMPTION = "preemption"
KIND_DEPARTURE = "departure"
KIND_EXHAUSTION = "exhaustion"
KIND_RECONFIGURATION = "reconfiguration"

TRACE_FIELDS = ("time", "kind", "request_id", "class", "units", "breakdown", "victims", "usage")


@dataclass(frozen=True)
class TraceRecord:
    time: int
    kind: str
    request_id: str | None = None
    class_index: int | None = None
    units: int | None = None
    breakdown: str | None = None
    victims: str | None = None
    usage: str = ""

    def to_line(self) -> str:
        cols = (
            str(self.time),
            self.kind,
            self.request_id if self.request_id is not None else "-",
            str(self.class_index) if self.class_index is not None else "-",
            str(self.units) if self.units is not None else "-",
            self.breakdown if self.breakdown is not None else "-",
            self.victims if self.victims is not None else "-",
            self.usage,
        )
        return "\t".join(cols)

    @classmethod
    def from_line(cls, line: str) -> "TraceRecord":
        cols = line.rstrip("\n").split("\t")
        if len(cols) != len(TRACE_FIELDS):
            raise ValueError(f"trace line has {len(cols)} fields, expected {len(TRACE_FIELDS)}")
        time_s, kind, rid, cls_s, units_s, breakdown, victims, usage = cols
        return cls(
            time=int(time_s),
            kind=kind,
            request_id=None if rid == "-" else rid,
            class_index=None if cls_s == "-" else int(cls_s),
            units=None if units_s == "-" else int(units_s),
            breakdown=None if breakdown == "-" else breakdown,
            victims=None if victims == "-" else victims,
            usage=usage,
        )

    def get(self, field_name: str):
        if field_name == "class":
            return self.class_index
        return getattr(self, field_name)


@dataclass
class TraceLog:
    records: list[TraceRecord] = field(default_factory=list)

    def to_text(self) -> str:
        return "".join(r.to_line() + "\n" for r in self.records)

    @classmethod
    def from_text(cls, text: str) -> "TraceLog":
        return cls([TraceRecord.from_line(line) for line in text.splitlines() if line.strip()])

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())

    @classmethod
    def read(cls, path) -> "TraceLog":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())


@dataclass(frozen=True)
class TraceDivergence:
    """First point where two traces disagree."""

    index: int
    field: str
    actual: object
    expected: object

    def __str__(self) -> str:
        return (
            f"record {self.index}: field {self.field!r} differs "
            f"(got {self.actual!r}, expected {self.expected!r})"
        )


def verify_golden(trace: TraceLog, expected: TraceLog) -> TraceDivergence | None:
    """Record-by-record structural comparison; None when identical."""
    for i, (got, want) in enumerate(zip(trace.records, expected.records)):
        for name in TRACE_FIELDS:
            if got.get(name) != want.get(name):
                return TraceDivergence(index=i, field=name, actual=got.get(name), expected=want.get(name))
    if len(trace.records) != len(expected.records):
        return TraceDivergence(
            index=min(len(trace.records), len(expected.records)),
            field="length",
            actual=len(trace.records),
            expected=len(expected.records),
        )
    return None


@dataclass
class ClassMetrics:
    arrivals: int = 0
    offered_units: int = 0
    granted_units: int = 0
    grants: int = 0
    denials: int = 0
    blocking_ratio: float = 0.0
    mean_utilization: float = 0.0


@dataclass
class Metrics:
    per_class: dict[int, ClassMetrics] = field(default_factory=dict)
    arrivals: int = 0
    grants: int = 0
    denials: int = 0
    offered_units: int = 0
    granted_units: int = 0
    blocking_ratio: float = 0.0
    mean_utilization: float = 0.0
    preempted_requests: int = 0
    exhaustion_events: int = 0
    agent_invocations: int = 0
    offload_ratio: float = 0.0

    CSV_HEADER = (
        "scope,class,arrivals,offered_units,granted_units,grants,denials,"
        "blocking_ratio,mean_utilization,preempted_requests,exhaustion_events,"
        "agent_invocations,offload_ratio"
    )

    def to_csv(self) -> str:
        lines = [self.CSV_HEADER]
        for k in sorted(self.per_class):
            c = self.per_class[k]
            lines.append(
                f"class,{k},{c.arrivals},{c.offered_units},{c.granted_units},"
                f"{c.grants},{c.denials},{c.blocking_ratio:.6f},{c.mean_utilization:.6f},,,,"
            )
        lines.append(
            f"global,,{self.arrivals},{self.offered_units},{self.granted_units},"
            f"{self.grants},{self.denials},{self.blocking_ratio:.6f},{self.mean_utilization:.6f},"
            f"{self.preempted_requests},{self.exhaustion_events},{self.agent_invocations},"
            f"{self.offload_ratio:.6f}"
        )
        return "\n".join(lines) + "\n"


def _expand_explicit(events: Sequence[ScenarioEvent]) -> list[ScenarioEvent]:
    """Synthesize departures for explicit arrivals that carry a hold time.

    File events keep file order; a synthesized departure at time T runs
    before file events at T.
    """
    explicit_departures = {e.request_id for e in events if e.kind == DEPART}
    keyed: list[tuple[tuple, ScenarioEvent]] = []
    for i, ev in enumerate(events):
        keyed.append(((ev.time, 1, i), ev))
        if ev.kind == ARRIVE and ev.hold is not None and ev.request_id not in explicit_departures:
            keyed.append(
                ((ev.time + ev.hold, 0, i), ScenarioEvent(time=ev.time + ev.hold, kind=DEPART, request_id=ev.request_id))
            )
    keyed.sort(key=lambda pair: pair[0])
    return [ev for _k, ev in keyed]


class _UtilizationTracker:
    """Time-weighted mean of used/constraint per class, from time 0."""

    def __init__(self, class_indices: Sequence[int]):
        self.integrals = {k: 0.0 for k in class_indices}
        self.total_integral = 0.0
        self.last_time = 0

    def advance(self, now: int, ledgers, link_classes) -> None:
        dt = now - self.last_time
        if dt > 0:
            used_total = 0
            cap_total = 0
            for k in self.integrals:
                used = sum(led.attributed_used(k) for led in ledgers.values())
                cap = sum(
                    c.constraint for classes in link_classes.values() for c in classes if c.index == k
                )
                used_total += used
                cap_total += cap
                if cap > 0:
                    self.integrals[k] += dt * used / cap
            if cap_total > 0:
                self.total_integral += dt * used_total / cap_total
        self.last_time = now

    def mean(self, k: int) -> float:
        return self.integrals[k] / self.last_time if self.last_time > 0 else 0.0

    def mean_total(self) -> float:
        return self.total_integral / self.last_time if self.last_time > 0 else 0.0


def _usage_string(ledger: AllocationLedger, classes: Sequence[ResourceClass]) -> str:
    parts = [
        f"{c.index}:{ledger.attributed_used(c.index)}/{c.constraint}"
        for c in sorted(classes, key=lambda c: c.index)
    ]
    return ",".join(parts)


def run(
    scenario: Scenario,
    manager=None,
    seed: int | None = None,
    model_override: engine.Model | None = None,
    preemption_override: bool | None = None,
) -> tuple[TraceLog, Metrics]:
    """Replay a scenario and return its trace and metrics.

    Events are processed in time order. A denial that exhausts every
    admission path emits an exhaustion record, consults the manager once,
    applies the returned reconfiguration, and retries the request exactly
    once; the retry never re-invokes the manager. Identical inputs and
    seed produce byte-identical traces.
    """
    manager = manager if manager is not None else StaticManager()
    model = model_override if model_override is not None else scenario.policy.model
    preemption = (
        preemption_override
        if preemption_override is not None
        else scenario.policy.preemption_enabled
    )
    policy = BamPolicy(model=model, preemption_enabled=preemption)

    if scenario.workload is not None:
        events = generate_workload(scenario.workload, seed)
    else:
        events = _expand_explicit(scenario.events)

    ledgers: dict[tuple[str, str], AllocationLedger] = {}
    link_classes: dict[tuple[str, str], list[ResourceClass]] = {}
    for dlink in scenario.graph.directed_links():
        ledgers[dlink] = AllocationLedger(link=dlink)
        link_classes[dlink] = scenario.classes_for_link()

    class_indices = sorted(c.index for c in scenario.classes)
    class_pos = {k: i for i, k in enumerate(class_indices)}
    denial_flags = {dlink: [0] * len(class_indices) for dlink in ledgers}
    request_link: dict[str, tuple[str, str]] = {}

    records: list[TraceRecord] = []
    metrics = Metrics(per_class={k: ClassMetrics() for k in class_indices})
    util = _UtilizationTracker(class_indices)

    def emit(dlink, **kwargs) -> None:
        records.append(TraceRecord(usage=_usage_string(ledgers[dlink], link_classes[dlink]), **kwargs))

    def commit_grant(ev: ScenarioEvent, admission: Admission, dlink) -> None:
        if admission.preemption is not None:
            # victims were already released inside the engine
            metrics.preempted_requests += len(admission.preemption.victims)
            emit(
                dlink,
                time=ev.time,
                kind=KIND_PREEMPTION,
                request_id=ev.request_id,
                class_index=ev.class_index,
                units=admission.preemption.freed,
                victims=",".join(admission.preemption.victims),
            )
        grant = admission.grant
        breakdown = ",".join(f"{z}:{u}" for z, u in sorted(grant.donor_totals().items()))
        emit(
            dlink,
            time=ev.time,
            kind=KIND_GRANT,
            request_id=ev.request_id,
            class_index=ev.class_index,
            units=grant.demand,
            breakdown=breakdown,
        )
        metrics.grants += 1
        metrics.granted_units += grant.demand
        metrics.per_class[ev.class_index].grants += 1
        metrics.per_class[ev.class_index].granted_units += grant.demand

    def handle_arrival(ev: ScenarioEvent) -> None:
        dlink = ev.link
        classes = link_classes[dlink]
        request = Request(
            request_id=ev.request_id,
            class_index=ev.class_index,
            demand=ev.demand,
            link=dlink,
            hold=ev.hold,
        )
        request_link[ev.request_id] = dlink
        metrics.arrivals += 1
        metrics.offered_units += ev.demand
        metrics.per_class[ev.class_index].arrivals += 1
        metrics.per_class[ev.class_index].offered_units += ev.demand
        emit(
            dlink,
            time=ev.time,
            kind=KIND_ARRIVAL,
            request_id=ev.request_id,
            class_index=ev.class_index,
            units=ev.demand,
        )

        result = engine.admit_with_devolution(ledgers[dlink], classes, policy, request)
        if isinstance(result, Admission):
            commit_grant(ev, result, dlink)
            return

        # exhausted: one manager consultation, then one retry
        metrics.exhaustion_events += 1
        metrics.agent_invocations += 1
        emit(
            dlink,
            time=ev.time,
            kind=KIND_EXHAUSTION,
            request_id=ev.request_id,
            class_index=ev.class_index,
            units=ev.demand,
        )
        event = replace(result.event, recent_denials=tuple(denial_flags[dlink]))
        denial_flags[dlink] = [0] * len(class_indices)
        counts = RunCounts(grants=metrics.grants, denials=metrics.denials)
        nrc = scenario.graph.capacity[dlink]
        action = manager.on_exhaustion(event, classes, nrc, counts)
        used = {c.index: ledgers[dlink].attributed_used(c.index) for c in classes}
        if action not in legal_actions(classes, used, nrc, action.delta or 10):
            raise ValueError(f"manager returned an illegal action: {action}")
        apply_action(action, classes)
        emit(
            dlink,
            time=ev.time,
            kind=KIND_RECONFIGURATION,
            request_id=ev.request_id,
            class_index=ev.class_index,
            units=action.delta,
            breakdown=action.encode(),
        )

        retry = engine.admit_with_devolution(ledgers[dlink], classes, policy, request)
        if isinstance(retry, Admission):
            commit_grant(ev, retry, dlink)
            return
        metrics.denials += 1
        metrics.per_class[ev.class_index].denials += 1
        denial_flags[dlink][class_pos[ev.class_index]] = 1
        emit(
            dlink,
            time=ev.time,
            kind=KIND_DENIAL,
            request_id=ev.request_id,
            class_index=ev.class_index,
            units=ev.demand,
        )

    def handle_departure(ev: ScenarioEvent) -> None:
        dlink = request_link.get(ev.request_id)
        if dlink is None or ev.request_id not in ledgers[dlink]:
            return  # denied earlier or preempted; nothing to release
        grant = engine.release(ledgers[dlink], ev.request_id)
        breakdown = ",".join(f"{z}:{u}" for z, u in sorted(grant.donor_totals().items()))
        emit(
            dlink,
            time=ev.time,
            kind=KIND_DEPARTURE,
            request_id=ev.request_id,
            class_index=grant.class_index,
            units=grant.demand,
            breakdown=breakdown,
        )

    for ev in events:
        util.advance(ev.time, ledgers, link_classes)
        if ev.kind == ARRIVE:
            handle_arrival(ev)
        else:
            handle_departure(ev)

    for k in class_indices:
        c = metrics.per_class[k]
        c.blocking_ratio = c.denials / c.arrivals if c.arrivals else 0.0
        c.mean_utilization = util.mean(k)
    metrics.blocking_ratio = metrics.denials / metrics.arrivals if metrics.arrivals else 0.0
    metrics.mean_utilization = util.mean_total()
    metrics.offload_ratio = (
        (metrics.arrivals - metrics.agent_invocations) / metrics.arrivals if metrics.arrivals else 0.0
    )

    manager.on_run_end(RunCounts(grants=metrics.grants, denials=metrics.denials))
    return TraceLog(records), metrics
