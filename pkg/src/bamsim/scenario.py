"""Scenario files: parsing, semantic validation, and workload generation.

A scenario is line-oriented UTF-8 text with ``#`` comments and up to six
sections::

    [network]   node/link declarations
    [classes]   per-class priority, constraint, private reservation
    [policy]    sharing model and preemption flag
    [events]    explicit timed arrivals/departures
    [workload]  seeded random arrival streams (exclusive with [events])
    [manager]   optional learning hyperparameters

Timestamps are integers. Explicit events at the same timestamp run in file
order; generated departures run before generated arrivals at equal times.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field, replace

from .engine import BamPolicy, Model, ResourceClass, check_classes
from .errors import ParseError, SemanticError
from .manager import Hyperparams
from .topology import NetworkGraph, build_network, validate_capacity

ARRIVE = "arrive"
DEPART = "depart"


@dataclass(frozen=True)
class ScenarioEvent:
    time: int
    kind: str
    request_id: str
    class_index: int = -1
    demand: int = 0
    link: tuple[str, str] | None = None
    hold: int | None = None


@dataclass(frozen=True)
class Stream:
    """One seeded arrival process, active on [start, stop)."""

    class_index: int
    rate: float
    demand_lo: int
    demand_hi: int
    hold_lo: int
    hold_hi: int
    start: int
    stop: int


@dataclass(frozen=True)
class WorkloadSpec:
    link: tuple[str, str]
    horizon: int
    streams: tuple[Stream, ...]
    seed: int = 0


@dataclass
class Scenario:
    graph: NetworkGraph
    classes: list[ResourceClass]
    policy: BamPolicy
    events: list[ScenarioEvent] = field(default_factory=list)
    workload: WorkloadSpec | None = None
    manager_params: Hyperparams = field(default_factory=Hyperparams)
    name: str = "scenario"

    def classes_for_link(self) -> list[ResourceClass]:
        """Fresh mutable copies, one set per simulation link."""
        return [replace(c) for c in self.classes]


def _parse_kv(tokens: list[str], line_no: int) -> dict[str, str]:
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise ParseError(line_no, f"expected key=value, got {tok!r}")
        key, value = tok.split("=", 1)
        out[key] = value
    return out


def _parse_link_ref(text: str, line_no: int) -> tuple[str, str]:
    if ">" not in text:
        raise ParseError(line_no, f"directed link must look like a>b, got {text!r}")
    a, b = text.split(">", 1)
    return (a, b)


def _parse_range(text: str, line_no: int) -> tuple[int, int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
    else:
        lo = hi = text
    try:
        lo_i, hi_i = int(lo), int(hi)
    except ValueError:
        raise ParseError(line_no, f"bad integer range {text!r}") from None
    if lo_i > hi_i:
        raise ParseError(line_no, f"empty range {text!r}")
    return lo_i, hi_i


def _int(value: str, line_no: int, what: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ParseError(line_no, f"{what} must be an integer, got {value!r}") from None


def _float(value: str, line_no: int, what: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ParseError(line_no, f"{what} must be a number, got {value!r}") from None


_SECTIONS = ("network", "classes", "policy", "events", "workload", "manager")
_MANAGER_KEYS = {
    "alpha": float,
    "gamma": float,
    "epsilon": float,
    "delta": int,
    "buckets": int,
    "seed": int,
    "epsilon_min": float,
    "epsilon_decay": float,
}


def _parse_event(tokens: list[str], line_no: int) -> ScenarioEvent:
    kind = None
    kv_tokens = []
    for tok in tokens:
        if tok in (ARRIVE, DEPART):
            if kind is not None:
                raise ParseError(line_no, "event kind given twice")
            kind = tok
        else:
            kv_tokens.append(tok)
    if kind is None:
        raise ParseError(line_no, "event needs a kind: arrive or depart")
    kv = _parse_kv(kv_tokens, line_no)
    if "t" not in kv or "id" not in kv:
        raise ParseError(line_no, "event needs t=<time> and id=<request>")
    time = _int(kv["t"], line_no, "time")

    if kind == DEPART:
        unknown = set(kv) - {"t", "id"}
        if unknown:
            raise ParseError(line_no, f"unknown departure option {sorted(unknown)[0]!r}")
        return ScenarioEvent(time=time, kind=DEPART, request_id=kv["id"])

    needed = {"class", "demand", "link"}
    missing = needed - set(kv)
    if missing:
        raise ParseError(line_no, f"arrival missing {sorted(missing)[0]!r}")
    unknown = set(kv) - needed - {"t", "id", "hold"}
    if unknown:
        raise ParseError(line_no, f"unknown arrival option {sorted(unknown)[0]!r}")
    return ScenarioEvent(
        time=time,
        kind=ARRIVE,
        request_id=kv["id"],
        class_index=_int(kv["class"], line_no, "class"),
        demand=_int(kv["demand"], line_no, "demand"),
        link=_parse_link_ref(kv["link"], line_no),
        hold=_int(kv["hold"], line_no, "hold") if "hold" in kv else None,
    )


def load_scenario(text: str, name: str = "scenario") -> Scenario:
    """Parse and semantically validate a scenario.

    Raises:
        ParseError: a line does not match the grammar.
        SemanticError: the scenario is well-formed but inconsistent
            (class constraints exceed a link capacity, unknown class or
            link, decreasing timestamps, a departure without a prior
            arrival, or both [events] and [workload] present).
    """
    nodes: list[str] = []
    links: list[tuple[str, str, int, int]] = []
    class_rows: list[tuple[int, ResourceClass]] = []
    policy: BamPolicy | None = None
    raw_events: list[tuple[int, ScenarioEvent]] = []
    workload_link: tuple[str, str] | None = None
    horizon: int | None = None
    wl_seed = 0
    wl_link_line = 0
    streams: list[Stream] = []
    manager_kv: dict[str, tuple[int, str]] = {}
    saw_workload = False

    section = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in _SECTIONS:
                raise ParseError(line_no, f"unknown section {section!r}")
            if section == "workload":
                saw_workload = True
            continue
        if section is None:
            raise ParseError(line_no, "content before any section header")

        tokens = line.split()
        if section == "network":
            if tokens[0] == "node" and len(tokens) == 2:
                nodes.append(tokens[1])
            elif tokens[0] == "link" and len(tokens) in (4, 5):
                fwd = _int(tokens[3], line_no, "capacity")
                rev = _int(tokens[4], line_no, "capacity") if len(tokens) == 5 else fwd
                links.append((tokens[1], tokens[2], fwd, rev))
            else:
                raise ParseError(line_no, f"bad network line: {line!r}")
        elif section == "classes":
            # class <idx> priority <p> constraint <c> [private <r>]
            if tokens[0] != "class" or len(tokens) < 6 or len(tokens) % 2 != 0:
                raise ParseError(line_no, f"bad class line: {line!r}")
            idx = _int(tokens[1], line_no, "class index")
            fields = dict(zip(tokens[2::2], tokens[3::2]))
            unknown = set(fields) - {"priority", "constraint", "private"}
            if unknown or "priority" not in fields or "constraint" not in fields:
                raise ParseError(line_no, f"bad class line: {line!r}")
            try:
                cfg = ResourceClass(
                    index=idx,
                    priority=_int(fields["priority"], line_no, "priority"),
                    constraint=_int(fields["constraint"], line_no, "constraint"),
                    private=_int(fields.get("private", "0"), line_no, "private"),
                )
            except ValueError as exc:
                raise SemanticError(str(exc), line_no) from None
            class_rows.append((line_no, cfg))
        elif section == "policy":
            if policy is not None:
                raise ParseError(line_no, "policy declared twice")
            try:
                model = Model(tokens[0].lower())
            except ValueError:
                raise ParseError(line_no, f"unknown policy model {tokens[0]!r}") from None
            kv = _parse_kv(tokens[1:], line_no)
            unknown = set(kv) - {"preemption"}
            if unknown:
                raise ParseError(line_no, f"unknown policy option {sorted(unknown)[0]!r}")
            preempt = kv.get("preemption", "off").lower()
            if preempt not in ("on", "off"):
                raise ParseError(line_no, f"preemption must be on or off, got {preempt!r}")
            policy = BamPolicy(model=model, preemption_enabled=preempt == "on")
        elif section == "events":
            raw_events.append((line_no, _parse_event(tokens, line_no)))
        elif section == "workload":
            if tokens[0] == "link" and len(tokens) == 2:
                workload_link = _parse_link_ref(tokens[1], line_no)
                wl_link_line = line_no
            elif tokens[0] == "horizon" and len(tokens) == 2:
                horizon = _int(tokens[1], line_no, "horizon")
            elif tokens[0] == "seed" and len(tokens) == 2:
                wl_seed = _int(tokens[1], line_no, "seed")
            elif tokens[0] == "stream":
                kv = _parse_kv(tokens[1:], line_no)
                needed = {"class", "rate", "demand", "hold"}
                missing = needed - set(kv)
                if missing:
                    raise ParseError(line_no, f"stream missing {sorted(missing)[0]!r}")
                unknown = set(kv) - needed - {"from", "to"}
                if unknown:
                    raise ParseError(line_no, f"unknown stream option {sorted(unknown)[0]!r}")
                d_lo, d_hi = _parse_range(kv["demand"], line_no)
                h_lo, h_hi = _parse_range(kv["hold"], line_no)
                rate = _float(kv["rate"], line_no, "rate")
                if rate <= 0:
                    raise ParseError(line_no, "rate must be positive")
                if d_lo <= 0 or h_lo < 0:
                    raise ParseError(line_no, "demand must be positive and hold non-negative")
                streams.append(
                    Stream(
                        class_index=_int(kv["class"], line_no, "class"),
                        rate=rate,
                        demand_lo=d_lo,
                        demand_hi=d_hi,
                        hold_lo=h_lo,
                        hold_hi=h_hi,
                        start=_int(kv.get("from", "0"), line_no, "from"),
                        stop=_int(kv["to"], line_no, "to") if "to" in kv else -1,
                    )
                )
            else:
                raise ParseError(line_no, f"bad workload line: {line!r}")
        elif section == "manager":
            if len(tokens) != 2 or tokens[0] not in _MANAGER_KEYS:
                raise ParseError(line_no, f"bad manager line: {line!r}")
            manager_kv[tokens[0]] = (line_no, tokens[1])

    # -- structural minimums --------------------------------------------
    if not nodes:
        raise SemanticError("scenario declares no nodes")
    if not class_rows:
        raise SemanticError("scenario declares no classes")
    if policy is None:
        raise SemanticError("scenario declares no policy")

    from .errors import BamError  # narrow import to map builder errors

    try:
        graph = build_network(nodes, links)
    except (BamError, ValueError) as exc:
        raise SemanticError(str(exc)) from None

    classes = [cfg for _, cfg in class_rows]
    try:
        check_classes(classes)
    except ValueError as exc:
        raise SemanticError(str(exc)) from None

    class_index_set = {c.index for c in classes}
    for link in graph.directed_links():
        check = validate_capacity(graph, link, classes)
        if not check.ok:
            raise SemanticError(
                f"class constraints total {check.total_constraint} but link "
                f"{link[0]}>{link[1]} has capacity {check.capacity} "
                f"(deficit {check.deficit})"
            )

    # -- events vs workload ----------------------------------------------
    if raw_events and saw_workload:
        raise SemanticError("[events] and [workload] are mutually exclusive")

    events: list[ScenarioEvent] = []
    if raw_events:
        last_time = None
        arrivals_seen: set[str] = set()
        for line_no, ev in raw_events:
            if last_time is not None and ev.time < last_time:
                raise SemanticError("event timestamps must be non-decreasing", line_no)
            last_time = ev.time
            if ev.kind == ARRIVE:
                if ev.request_id in arrivals_seen:
                    raise SemanticError(f"duplicate request id {ev.request_id!r}", line_no)
                if ev.class_index not in class_index_set:
                    raise SemanticError(f"unknown class {ev.class_index}", line_no)
                if ev.demand <= 0:
                    raise SemanticError("demand must be positive", line_no)
                if ev.link not in graph.capacity:
                    raise SemanticError(f"unknown link {ev.link[0]}>{ev.link[1]}", line_no)
                if ev.hold is not None and ev.hold <= 0:
                    raise SemanticError("hold must be positive", line_no)
                arrivals_seen.add(ev.request_id)
            else:
                if ev.request_id not in arrivals_seen:
                    raise SemanticError(
                        f"departure references unknown request {ev.request_id!r}", line_no
                    )
            events.append(ev)

    workload: WorkloadSpec | None = None
    if saw_workload:
        if workload_link is None:
            raise SemanticError("[workload] needs a link line")
        if workload_link not in graph.capacity:
            raise SemanticError(
                f"unknown link {workload_link[0]}>{workload_link[1]}", wl_link_line
            )
        if horizon is None or horizon <= 0:
            raise SemanticError("[workload] needs a positive horizon")
        if not streams:
            raise SemanticError("[workload] declares no streams")
        fixed = []
        for s in streams:
            if s.class_index not in class_index_set:
                raise SemanticError(f"unknown class {s.class_index} in stream")
            stop = s.stop if s.stop >= 0 else horizon
            if not 0 <= s.start < stop <= horizon:
                raise SemanticError("stream window must satisfy 0 <= from < to <= horizon")
            fixed.append(replace(s, stop=stop))
        workload = WorkloadSpec(
            link=workload_link, horizon=horizon, streams=tuple(fixed), seed=wl_seed
        )

    params = {}
    for key, (line_no, value) in manager_kv.items():
        conv = _MANAGER_KEYS[key]
        try:
            params[key] = conv(value)
        except ValueError:
            raise ParseError(line_no, f"bad manager value for {key}: {value!r}") from None
    try:
        manager_params = Hyperparams(**params)
    except ValueError as exc:
        raise SemanticError(f"bad manager parameters: {exc}") from None

    return Scenario(
        graph=graph,
        classes=classes,
        policy=policy,
        events=events,
        workload=workload,
        manager_params=manager_params,
        name=name,
    )


def load_scenario_file(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return load_scenario(fh.read(), name=str(path))


def generate_workload(spec: WorkloadSpec, seed: int | None = None) -> list[ScenarioEvent]:
    """Expand a workload spec into a deterministic timed event list.

    Stream arrivals are Poisson processes truncated to the stream window.
    Request ids are assigned in global arrival order. Every arrival gets a
    departure at arrival time plus its hold time when that still falls
    inside the horizon.
    """
    rng = random.Random(spec.seed if seed is None else seed)
    pending: list[tuple[float, int, int, int, int]] = []  # (t, stream#, class, demand, hold)
    for s_idx, s in enumerate(spec.streams):
        t = float(s.start)
        while True:
            t += rng.expovariate(s.rate)
            if t >= s.stop:
                break
            demand = rng.randint(s.demand_lo, s.demand_hi)
            hold = rng.randint(s.hold_lo, s.hold_hi)
            pending.append((t, s_idx, s.class_index, demand, hold))

    pending.sort(key=lambda row: (row[0], row[1]))
    width = max(4, len(str(len(pending))))
    events: list[tuple[tuple, ScenarioEvent]] = []
    for n, (t, _s_idx, class_index, demand, hold) in enumerate(pending, start=1):
        arrive_t = int(t)
        rid = f"g{n:0{width}d}"
        events.append(
            (
                (arrive_t, 1, n),
                ScenarioEvent(
                    time=arrive_t,
                    kind=ARRIVE,
                    request_id=rid,
                    class_index=class_index,
                    demand=demand,
                    link=spec.link,
                    hold=hold,
                ),
            )
        )
        depart_t = arrive_t + hold
        if hold > 0 and depart_t <= spec.horizon:
            events.append(
                ((depart_t, 0, n), ScenarioEvent(time=depart_t, kind=DEPART, request_id=rid))
            )

    events.sort(key=lambda pair: pair[0])
    return [ev for _key, ev in events]
